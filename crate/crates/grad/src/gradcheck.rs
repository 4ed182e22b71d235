//! Central finite-difference gradient checker.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Finite-difference formula used as the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(L(w+h) - L(w-h)) / 2h`, error `O(h^2)`.
    #[default]
    ThreePoint,
    /// `(-L(w+2h) + 8L(w+h) - 8L(w-h) + L(w-2h)) / 12h`, error `O(h^4)`.
    FivePoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub stencil: Stencil,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Checks a seeded random subset of larger tensors; `None` checks all.
    pub max_entries_per_param: Option<usize>,
    pub seed: u64,
    /// Skips entries whose `+h` or `-h` perturbation moves a `relu`/`abs`
    /// input across zero, where the central difference is not a derivative.
    pub skip_kink_crossings: bool,
    /// Dropout mask seed for every evaluation; `None` disables dropout.
    pub dropout_seed: Option<u64>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-4, stencil: Stencil::ThreePoint, rel_tol: 1e-4, abs_tol: 1e-6, max_entries_per_param: None, seed: 0, skip_kink_crossings: true, dropout_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Entries left out because a perturbation crossed a kink.
    pub skipped: usize,
    /// Largest relative error among entries above the absolute floor.
    pub max_rel_error: f64,
    pub failures: Vec<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }
}

fn graph<'s>(store: &'s ParamStore, training: bool, cfg: &GradCheckConfig) -> Graph<'s> {
    let g = Graph::new(store).with_training(training).with_kink_tracking(true);
    match cfg.dropout_seed {
        Some(seed) => g.with_dropout_seed(seed),
        None => g,
    }
}

fn loss_value<F>(store: &ParamStore, training: bool, cfg: &GradCheckConfig, f: &F) -> Result<(f64, Vec<bool>)>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut g = graph(store, training, cfg);
    let l = f(&mut g)?;
    Ok((g.value(l).item(), g.kink_pattern().unwrap_or_default().to_vec()))
}

/// Compares the tape gradient of every trainable entry of `store` with a
/// central finite difference. `training` selects the batch-norm mode.
pub fn check_gradients<F>(store: &ParamStore, training: bool, cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let (grads, base) = {
        let mut g = graph(store, training, cfg);
        let l = f(&mut g)?;
        let pattern = g.kink_pattern().unwrap_or_default().to_vec();
        (g.backward(l)?, pattern)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = store.clone();
    let mut report = GradCheckReport::default();
    let names: Vec<String> = store.trainable_names().map(str::to_string).collect();
    for name in names {
        // Parameters the loss never touched have an exact zero gradient.
        let analytic = match grads.param(&name) {
            Some(t) => t.clone(),
            None => Tensor::zeros(store.get(&name)?.shape()),
        };
        let n = analytic.len();
        let indices: Vec<usize> = match cfg.max_entries_per_param {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for i in indices {
            let orig = work.get(&name)?.data()[i];
            let offsets: &[(f64, f64)] = match cfg.stencil {
                Stencil::ThreePoint => &[(1.0, 0.5), (-1.0, -0.5)],
                Stencil::FivePoint => &[(2.0, -1.0 / 12.0), (1.0, 8.0 / 12.0), (-1.0, -8.0 / 12.0), (-2.0, 1.0 / 12.0)],
            };
            let mut numeric = 0.0;
            let mut crossed = false;
            for &(k, c) in offsets {
                work.get_mut(&name)?.data_mut()[i] = orig + k * cfg.step;
                let (l, kinks) = loss_value(&work, training, cfg, &f)?;
                numeric += c * l;
                crossed |= kinks != base;
            }
            work.get_mut(&name)?.data_mut()[i] = orig;
            if cfg.skip_kink_crossings && crossed {
                report.skipped += 1;
                continue;
            }
            numeric /= cfg.step;
            let a = analytic.data()[i];
            let diff = (a - numeric).abs();
            report.checked += 1;
            if diff <= cfg.abs_tol {
                continue;
            }
            let rel = diff / a.abs().max(numeric.abs());
            report.max_rel_error = report.max_rel_error.max(rel);
            if rel >= cfg.rel_tol {
                report.failures.push(Mismatch { param: name.clone(), index: i, analytic: a, numeric });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_at_kink() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::row(vec![0.0, 1.5, -2.0])).unwrap();
        s
    }

    fn loss(g: &mut Graph) -> Result<Var> {
        let w = g.param("w")?;
        let r = g.relu(w)?;
        let a = g.abs(w)?;
        let y = g.add(r, a)?;
        g.sum(y)
    }

    #[test]
    fn kink_entries_are_skipped() {
        let report = check_gradients(&relu_at_kink(), true, &GradCheckConfig::default(), loss).unwrap();
        assert_eq!((report.checked, report.skipped), (2, 1));
        assert!(report.passed());
    }

    #[test]
    fn kink_entries_fail_without_skipping() {
        let cfg = GradCheckConfig { skip_kink_crossings: false, ..Default::default() };
        let report = check_gradients(&relu_at_kink(), true, &cfg, loss).unwrap();
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].index, 0);
    }

    #[test]
    fn five_point_is_exact_on_quartics() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::row(vec![0.7, -1.3])).unwrap();
        let quartic = |g: &mut Graph| -> Result<Var> {
            let w = g.param("w")?;
            let sq = g.square(w)?;
            let q = g.square(sq)?;
            g.sum(q)
        };
        let coarse = GradCheckConfig { step: 0.05, abs_tol: 0.0, rel_tol: 1.0, ..Default::default() };
        let three = check_gradients(&s, true, &coarse, quartic).unwrap();
        let five = check_gradients(&s, true, &GradCheckConfig { stencil: Stencil::FivePoint, ..coarse }, quartic).unwrap();
        assert!(three.max_rel_error > 1e-4, "{}", three.max_rel_error);
        assert!(five.max_rel_error < 1e-10, "{}", five.max_rel_error);
    }

    #[test]
    fn pattern_is_off_by_default() {
        let store = relu_at_kink();
        let mut g = Graph::new(&store);
        loss(&mut g).unwrap();
        assert!(g.kink_pattern().is_none());
    }
}
