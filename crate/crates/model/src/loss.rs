use serde::{Deserialize, Serialize};
use tec_grad::{Graph, Tensor, Var};

use crate::error::{Error, Result};

/// Loss terms of one example or a batch average.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l2_pre: f64,
    pub l2_post: f64,
    pub l1_pre: f64,
    pub l1_post: f64,
    pub stop_ce: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(l2_pre: f64, l2_post: f64, l1_pre: f64, l1_post: f64, stop_ce: f64) -> Self {
        Self { l2_pre, l2_post, l1_pre, l1_post, stop_ce, total: l2_pre + l2_post + l1_pre + l1_post + stop_ce }
    }

    pub fn is_finite(&self) -> bool {
        [self.l2_pre, self.l2_post, self.l1_pre, self.l1_post, self.stop_ce, self.total].iter().all(|v| v.is_finite())
    }

    /// Component-wise mean.
    pub fn mean(items: &[LossBreakdown]) -> Self {
        let n = items.len().max(1) as f64;
        let s = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self::from_terms(s(|l| l.l2_pre), s(|l| l.l2_post), s(|l| l.l1_pre), s(|l| l.l1_post), s(|l| l.stop_ce))
    }
}

/// Stop targets for `frames` decoder steps: class 1 on the last frame only.
pub fn stop_targets(frames: usize) -> Vec<usize> {
    (0..frames).map(|t| usize::from(t + 1 == frames)).collect()
}

/// Graph nodes of each loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub l2_pre: Var,
    pub l2_post: Var,
    pub l1_pre: Var,
    pub l1_post: Var,
    pub stop_ce: Var,
    pub total: Var,
}

impl LossTerms {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        let v = |x: Var| g.value(x).item();
        LossBreakdown {
            l2_pre: v(self.l2_pre),
            l2_post: v(self.l2_post),
            l1_pre: v(self.l1_pre),
            l1_post: v(self.l1_post),
            stop_ce: v(self.stop_ce),
            total: v(self.total),
        }
    }
}

/// Squared and absolute errors summed over the whole `[T, D]` matrices, plus
/// the class-weighted stop cross-entropy averaged over frames.
pub fn compute_loss(
    g: &mut Graph,
    pre: Var,
    post: Var,
    target: Var,
    stop_logits: Var,
    stop_targets: &[usize],
    pos_weight: f64,
) -> Result<LossTerms> {
    let (t, _) = g.value(target).dims2();
    for (what, v) in [("pre-net output frames", pre), ("post-net output frames", post), ("stop logits", stop_logits)] {
        let rows = g.value(v).dims2().0;
        if rows != t {
            return Err(Error::Mismatch { what, expected: t, got: rows });
        }
    }
    if stop_targets.len() != t {
        return Err(Error::Mismatch { what: "stop targets", expected: t, got: stop_targets.len() });
    }
    let d_pre = g.sub(pre, target)?;
    let d_post = g.sub(post, target)?;
    let sq = g.square(d_pre)?;
    let l2_pre = g.sum(sq)?;
    let sq = g.square(d_post)?;
    let l2_post = g.sum(sq)?;
    let ab = g.abs(d_pre)?;
    let l1_pre = g.sum(ab)?;
    let ab = g.abs(d_post)?;
    let l1_post = g.sum(ab)?;

    let mut w = vec![0.0; 2 * t];
    for (i, &c) in stop_targets.iter().enumerate() {
        if c > 1 {
            return Err(Error::Mismatch { what: "stop target class", expected: 1, got: c });
        }
        w[2 * i + c] = if c == 1 { pos_weight } else { 1.0 };
    }
    let w = g.constant(Tensor::matrix(t, 2, w)?);
    let ls = g.log_softmax(stop_logits)?;
    let picked = g.mul(ls, w)?;
    let picked = g.sum(picked)?;
    let stop_ce = g.scale(picked, -1.0 / t as f64)?;

    let mut total = g.add(l2_pre, l2_post)?;
    for term in [l1_pre, l1_post, stop_ce] {
        total = g.add(total, term)?;
    }
    Ok(LossTerms { l2_pre, l2_post, l1_pre, l1_post, stop_ce, total })
}
