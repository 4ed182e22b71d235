//! Location-based Gaussian-mixture attention. Each step a dense layer on
//! `[q ; c_prev]` yields per-component logits `(w, b, k)`:
//!
//! ```text
//! alpha = softmax(w)   beta = softplus(b) + min_width   kappa' = kappa + softplus(k)
//! phi(j) = sum_k alpha_k * exp(-beta_k * (kappa'_k - j)^2)
//! context = projection(sum_j phi(j) * h_j)
//! ```

use tec_grad::nn::Dense;
use tec_grad::{Graph, ParamSpec, ParamStore, Tensor, Var};

use crate::error::Result;

/// Inverse of softplus, for initializing biases.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmAttention {
    pub name: String,
    pub components: usize,
    pub context_dim: usize,
    pub min_width: f64,
    query: Dense,
    projection: Dense,
}

/// Per-source attention state carried between decoder steps.
#[derive(Debug, Clone, Copy)]
pub struct GmmState {
    /// `[1, K]` component means.
    pub kappa: Var,
    /// `[1, context_dim]` previous context of this source.
    pub context: Var,
}

/// An encoded source prepared for attention.
#[derive(Debug, Clone, Copy)]
pub struct Source {
    /// `[T, context_dim]`: every encoder row already projected.
    pub projected: Var,
    /// `[1, T]` positions `0..T`.
    pub positions: Var,
    pub len: usize,
}

/// Quantities of one attention step, for inspection.
#[derive(Debug, Clone, Copy)]
pub struct AttentionStep {
    pub alpha: Var,
    pub beta: Var,
    pub kappa: Var,
    /// `[1, T]` weights over encoder positions.
    pub phi: Var,
    pub context: Var,
}

impl GmmAttention {
    pub fn new(name: &str, query_dim: usize, source_dim: usize, context_dim: usize, components: usize, min_width: f64) -> Self {
        Self {
            name: name.to_string(),
            components,
            context_dim,
            min_width,
            query: Dense::new(format!("{name}/query"), query_dim + context_dim, 3 * components),
            projection: Dense::new(format!("{name}/projection"), source_dim, context_dim).without_bias(),
        }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.query.specs();
        v.extend(self.projection.specs());
        v
    }

    /// Sets the query bias so a fresh model starts with width `width` and
    /// mean advance `step` per decoder step.
    pub fn init_bias(&self, store: &mut ParamStore, width: f64, step: f64) -> Result<()> {
        let k = self.components;
        let b_width = softplus_inverse(width - self.min_width);
        let b_step = softplus_inverse(step);
        let data = (0..3 * k).map(|i| match i / k {
            0 => 0.0,
            1 => b_width,
            _ => b_step,
        });
        store.set(&format!("{}/bias", self.query.name), Tensor::new(vec![3 * k], data.collect())?)?;
        Ok(())
    }

    pub fn query_weight_count(&self) -> u64 {
        (self.query.input * self.query.output) as u64
    }

    pub fn source_weight_count(&self) -> u64 {
        (self.projection.input * self.projection.output) as u64
    }

    /// Projects the encoder output once. Projection is linear, so projecting
    /// the weighted sum equals weighting the projected rows.
    pub fn prepare(&self, g: &mut Graph, h: Var) -> Result<Source> {
        let len = g.value(h).dims2().0;
        let projected = self.projection.forward(g, h)?;
        let positions = g.constant(Tensor::row((0..len).map(|j| j as f64).collect()));
        Ok(Source { projected, positions, len })
    }

    pub fn initial_state(&self, g: &mut Graph) -> GmmState {
        GmmState {
            kappa: g.constant(Tensor::zeros(&[1, self.components])),
            context: g.constant(Tensor::zeros(&[1, self.context_dim])),
        }
    }

    pub fn step(&self, g: &mut Graph, q: Var, state: &GmmState, src: &Source) -> Result<(GmmState, AttentionStep)> {
        let k = self.components;
        let input = g.concat(&[q, state.context], 1)?;
        let raw = self.query.forward(g, input)?;
        let w = g.slice(raw, 1, 0, k)?;
        let b = g.slice(raw, 1, k, 2 * k)?;
        let dk = g.slice(raw, 1, 2 * k, 3 * k)?;
        let alpha = g.softmax(w)?;
        let beta = g.softplus(b)?;
        let beta = g.add_scalar(beta, self.min_width)?;
        let delta = g.softplus(dk)?;
        let kappa = g.add(state.kappa, delta)?;
        let phi = self.weights(g, alpha, beta, kappa, src.positions)?;
        let context = g.matmul(phi, src.projected)?;
        Ok((GmmState { kappa, context }, AttentionStep { alpha, beta, kappa, phi, context }))
    }

    /// `phi = alpha . exp(-beta^T * (kappa^T - positions)^2)`, `[1, T]`.
    pub fn weights(&self, g: &mut Graph, alpha: Var, beta: Var, kappa: Var, positions: Var) -> Result<Var> {
        let kt = g.transpose(kappa)?;
        let bt = g.transpose(beta)?;
        let d = g.sub(kt, positions)?;
        let d2 = g.square(d)?;
        let e = g.mul(d2, bt)?;
        let e = g.neg(e)?;
        let e = g.exp(e)?;
        Ok(g.matmul(alpha, e)?)
    }
}
