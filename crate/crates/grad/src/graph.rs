//! The tape. Every op appends a node holding its value and, when any input
//! needs a gradient, a closure mapping the output gradient to input
//! gradients. Inputs always precede outputs, so walking the node list
//! backwards is a reverse topological order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    inputs: Vec<Var>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    training: bool,
    grad_enabled: bool,
    nan_guard: bool,
    backward_done: bool,
    buffer_updates: Vec<(String, Tensor)>,
    kinks: Option<Vec<bool>>,
    dropout: Option<ChaCha8Rng>,
}

impl<'s> Graph<'s> {
    /// Training-mode tape: batch statistics in batch norm, gradients tracked.
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            params: BTreeMap::new(),
            training: true,
            grad_enabled: true,
            nan_guard: true,
            backward_done: false,
            buffer_updates: Vec::new(),
            kinks: None,
            dropout: None,
        }
    }

    /// Inference-mode graph: running statistics, no gradient bookkeeping.
    pub fn inference(store: &'s ParamStore) -> Self {
        Self { training: false, grad_enabled: false, ..Self::new(store) }
    }

    pub fn with_training(mut self, training: bool) -> Self {
        self.training = training;
        self
    }

    pub fn with_nan_guard(mut self, on: bool) -> Self {
        self.nan_guard = on;
        self
    }

    /// Records which side of zero every `relu` and `abs` input falls on.
    pub fn with_kink_tracking(mut self, on: bool) -> Self {
        self.kinks = on.then(Vec::new);
        self
    }

    /// Enables [`Graph::dropout`]; masks are drawn in op order from `seed`,
    /// so rebuilding the same graph with the same seed repeats them.
    pub fn with_dropout_seed(mut self, seed: u64) -> Self {
        self.dropout = Some(ChaCha8Rng::seed_from_u64(seed));
        self
    }

    /// Inverted dropout with drop probability `p`. The identity unless a
    /// dropout seed was set.
    pub fn dropout(&mut self, a: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Invalid { op: "dropout", msg: format!("probability {p} outside [0, 1)") });
        }
        let Some(rng) = self.dropout.as_mut().filter(|_| p > 0.0) else {
            return Ok(a);
        };
        let keep = 1.0 / (1.0 - p);
        let shape = self.nodes[a.0].value.shape().to_vec();
        let n = shape.iter().product();
        let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let m = self.constant(Tensor::new(shape, mask)?);
        self.mul(a, m)
    }

    pub fn kink_pattern(&self) -> Option<&[bool]> {
        self.kinks.as_deref()
    }

    pub(crate) fn note_kinks(&mut self, v: Var) {
        if let Some(k) = self.kinks.as_mut() {
            k.extend(self.nodes[v.0].value.data().iter().map(|&x| x > 0.0));
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    /// A free leaf whose gradient is reported by [`Gradients::of`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        let rg = self.grad_enabled;
        self.leaf(t, rg)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, inputs: Vec::new(), backward: None, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// The parameter as a leaf; repeated lookups return the same node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = self.store.get(name)?.clone();
        let rg = self.grad_enabled && self.store.is_trainable(name)?;
        let v = self.leaf(t, rg);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Value of a store entry without putting it on the tape.
    pub fn buffer(&self, name: &str) -> Result<&'s Tensor> {
        self.store.get(name)
    }

    pub fn record_buffer_update(&mut self, name: &str, value: Tensor) {
        self.buffer_updates.push((name.to_string(), value));
    }

    pub fn take_buffer_updates(&mut self) -> Vec<(String, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    /// Appends an op result. `back` receives the output gradient, the input
    /// values and the output value.
    pub(crate) fn push<F>(&mut self, op: &'static str, value: Tensor, inputs: &[Var], back: F) -> Result<Var>
    where
        F: Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Option<Tensor>> + 'static,
    {
        if self.nan_guard && !value.is_finite() {
            return Err(Error::NonFinite { op });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let backward: Option<BackwardFn> = if requires_grad { Some(Box::new(back)) } else { None };
        self.nodes.push(Node { value, inputs: inputs.to_vec(), backward, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    /// Reverse pass from a scalar loss. A tape can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(&shape, 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(back) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = back(&g, &inputs, &node.value);
            for (v, ig) in node.inputs.iter().zip(input_grads) {
                let (Some(ig), true) = (ig, self.nodes[v.0].requires_grad) else { continue };
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        let mut by_param = BTreeMap::new();
        for (name, v) in &self.params {
            if !self.nodes[v.0].requires_grad {
                continue;
            }
            let g = grads[v.0].take().unwrap_or_else(|| Tensor::zeros(self.value(*v).shape()));
            by_param.insert(name.clone(), g);
        }
        let leaves = grads
            .into_iter()
            .enumerate()
            .filter(|(i, _)| self.nodes[*i].inputs.is_empty() && self.nodes[*i].requires_grad)
            .map(|(i, g)| (i, g.unwrap_or_else(|| Tensor::zeros(self.nodes[i].value.shape()))))
            .collect();
        Ok(Gradients { by_param, leaves })
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: BTreeMap<String, Tensor>,
    leaves: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.by_param.get(name)
    }

    /// Gradient of a leaf created with [`Graph::variable`] or [`Graph::param`].
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v.0)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.by_param.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_finite(&self) -> bool {
        self.by_param.values().all(Tensor::is_finite)
    }

    /// Name of the parameter with the largest gradient magnitude.
    pub fn worst(&self) -> Option<(&str, f64)> {
        self.by_param
            .iter()
            .map(|(k, t)| {
                let m = t.data().iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
                (k.as_str(), m)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Element-wise sum with another gradient set.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (k, g) in &other.by_param {
            match self.by_param.get_mut(k) {
                Some(acc) => acc.add_assign(g),
                None => {
                    self.by_param.insert(k.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.by_param.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![1.0, 2.0])).unwrap();
        let mut g = Graph::new(&store);
        let w = g.param("w").unwrap();
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.param("w").unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn detached_parameter_gets_exact_zero() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::row(vec![1.0, 2.0])).unwrap();
        store.insert("b", Tensor::row(vec![3.0, 4.0])).unwrap();
        let mut g = Graph::new(&store);
        let a = g.param("a").unwrap();
        let b = g.param("b").unwrap();
        let bd = g.detach(b);
        let p = g.mul(a, bd).unwrap();
        let loss = g.sum(p).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.param("b").unwrap().data(), &[0.0, 0.0]);
        assert_eq!(grads.param("a").unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn second_backward_is_rejected() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.variable(Tensor::scalar(2.0));
        let y = g.square(x).unwrap();
        let gx = g.backward(y).unwrap();
        assert_eq!(gx.of(x).unwrap().item(), 4.0);
        assert!(matches!(g.backward(y), Err(Error::BackwardTwice)));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.variable(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn nan_guard_names_the_op() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.variable(Tensor::row(vec![-1.0]));
        assert!(matches!(g.log(x), Err(Error::NonFinite { op: "log" })));
    }

    #[test]
    fn shared_node_accumulates() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.variable(Tensor::scalar(3.0));
        let a = g.scale(x, 2.0).unwrap();
        let b = g.mul(x, x).unwrap();
        let s = g.add(a, b).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.of(x).unwrap().item(), 8.0);
    }

    #[test]
    fn dropout_is_identity_without_seed() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::row(vec![1.0; 8]));
        assert_eq!(g.dropout(x, 0.5).unwrap(), x);
        assert!(g.dropout(x, 1.0).is_err());
    }

    #[test]
    fn dropout_masks_repeat_per_seed_and_scale_survivors() {
        let store = ParamStore::new();
        let run = |seed| {
            let mut g = Graph::new(&store).with_dropout_seed(seed);
            let x = g.variable(Tensor::row(vec![1.0; 400]));
            let y = g.dropout(x, 0.25).unwrap();
            let s = g.sum(y).unwrap();
            let grad = g.backward(s).unwrap().of(x).unwrap().data().to_vec();
            (g.value(y).data().to_vec(), grad)
        };
        let (a, ga) = run(3);
        assert_eq!(a, run(3).0);
        assert_ne!(a, run(4).0);
        assert_eq!(a, ga);
        assert!(a.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
        let dropped = a.iter().filter(|&&v| v == 0.0).count();
        assert!((60..140).contains(&dropped), "{dropped}");
    }
}
