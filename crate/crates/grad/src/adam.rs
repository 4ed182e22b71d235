use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::Gradients;
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Continuous exponential decay from `initial` to `final_lr` over
/// `decay_steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub final_lr: f64,
    pub decay_steps: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { initial: 1e-4, final_lr: 1e-5, decay_steps: 50_000 }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self { initial: lr, final_lr: lr, decay_steps: 1 }
    }

    pub fn lr(&self, step: u64) -> f64 {
        if self.initial == self.final_lr || self.initial == 0.0 {
            return self.initial;
        }
        let frac = step.min(self.decay_steps) as f64 / self.decay_steps.max(1) as f64;
        self.initial * (self.final_lr / self.initial).powf(frac)
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(schedule: LrSchedule) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-6, schedule, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update to every trainable parameter.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        let names: Vec<String> = store.trainable_names().map(str::to_string).collect();
        for name in &names {
            let g = grads.param(name).ok_or_else(|| Error::MissingGradient(name.clone()))?;
            if g.shape() != store.get(name)?.shape() {
                return Err(Error::Shape {
                    op: "adam_update",
                    left: store.get(name)?.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        let lr = self.schedule.lr(self.step);
        let t = (self.step + 1) as i32;
        let (c1, c2) = (1.0 - self.beta1.powi(t), 1.0 - self.beta2.powi(t));
        for name in names {
            let g = grads.param(&name).expect("checked above").data();
            let p = store.get_mut(&name)?;
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name).or_insert_with(|| vec![0.0; g.len()]);
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Writes recorded running-statistic updates back into the store.
pub fn apply_buffer_updates(store: &mut ParamStore, updates: Vec<(String, Tensor)>) -> Result<()> {
    for (name, t) in updates {
        store.set(&name, t)?;
    }
    Ok(())
}
