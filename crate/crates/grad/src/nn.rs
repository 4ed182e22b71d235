//! Layers. Each layer is a plain description (name prefix and sizes) that
//! declares its parameters through [`ParamSpec`]s and reads them from the
//! graph's store during the forward pass.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamSpec};
use crate::tensor::Tensor;

fn join(prefix: &str, leaf: &str) -> String {
    format!("{prefix}/{leaf}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub name: String,
    pub input: usize,
    pub output: usize,
    pub bias: bool,
}

impl Dense {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Self { name: name.into(), input, output, bias: true }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = vec![ParamSpec::weight(
            join(&self.name, "kernel"),
            vec![self.input, self.output],
            Init::Glorot { fan_in: self.input, fan_out: self.output },
        )];
        if self.bias {
            v.push(ParamSpec::weight(join(&self.name, "bias"), vec![self.output], Init::Zeros));
        }
        v
    }

    /// `[n, input] -> [n, output]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&join(&self.name, "kernel"))?;
        let y = g.matmul(x, w)?;
        if self.bias {
            let b = g.param(&join(&self.name, "bias"))?;
            g.add(y, b)
        } else {
            Ok(y)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub name: String,
    pub input: usize,
    pub output: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(name: impl Into<String>, input: usize, output: usize, kernel: usize) -> Self {
        Self { name: name.into(), input, output, kernel, stride: 1 }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        vec![
            ParamSpec::weight(
                join(&self.name, "kernel"),
                vec![self.output, self.input, self.kernel],
                Init::Glorot { fan_in: self.input * self.kernel, fan_out: self.output * self.kernel },
            ),
            ParamSpec::weight(join(&self.name, "bias"), vec![self.output], Init::Zeros),
        ]
    }

    /// `[T, input] -> [ceil(T / stride), output]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&join(&self.name, "kernel"))?;
        let b = g.param(&join(&self.name, "bias"))?;
        g.conv1d(x, w, Some(b), self.stride)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub input: usize,
    pub output: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

impl Conv2d {
    pub fn new(name: impl Into<String>, input: usize, output: usize, kernel: (usize, usize), stride: (usize, usize)) -> Self {
        Self { name: name.into(), input, output, kernel, stride }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let area = self.kernel.0 * self.kernel.1;
        vec![
            ParamSpec::weight(
                join(&self.name, "kernel"),
                vec![self.output, self.input, self.kernel.0, self.kernel.1],
                Init::Glorot { fan_in: self.input * area, fan_out: self.output * area },
            ),
            ParamSpec::weight(join(&self.name, "bias"), vec![self.output], Init::Zeros),
        ]
    }

    /// `[H, W, input] -> [ceil(H / sh), ceil(W / sw), output]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(&join(&self.name, "kernel"))?;
        let b = g.param(&join(&self.name, "bias"))?;
        g.conv2d(x, w, Some(b), self.stride)
    }
}

/// Batch normalization over the rows of `[N, features]` inputs. Running
/// statistics are buffers updated through [`Graph::record_buffer_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub name: String,
    pub features: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(name: impl Into<String>, features: usize) -> Self {
        Self { name: name.into(), features, eps: 1e-5, momentum: 0.1 }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        vec![
            ParamSpec::weight(join(&self.name, "gamma"), vec![self.features], Init::Ones),
            ParamSpec::weight(join(&self.name, "beta"), vec![self.features], Init::Zeros),
            ParamSpec::buffer(join(&self.name, "running_mean"), vec![self.features], Init::Zeros),
            ParamSpec::buffer(join(&self.name, "running_var"), vec![self.features], Init::Ones),
        ]
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gamma = g.param(&join(&self.name, "gamma"))?;
        let beta = g.param(&join(&self.name, "beta"))?;
        let (mean_name, var_name) = (join(&self.name, "running_mean"), join(&self.name, "running_var"));
        if g.is_training() {
            let (y, stats) = g.batch_norm_train(x, gamma, beta, self.eps)?;
            let m = self.momentum;
            let blend = |old: &Tensor, new: &[f64]| {
                Tensor::new(old.shape().to_vec(), old.data().iter().zip(new).map(|(o, n)| (1.0 - m) * o + m * n).collect())
            };
            let new_mean = blend(g.buffer(&mean_name)?, &stats.mean)?;
            let new_var = blend(g.buffer(&var_name)?, &stats.var)?;
            g.record_buffer_update(&mean_name, new_mean);
            g.record_buffer_update(&var_name, new_var);
            Ok(y)
        } else {
            let mean = g.buffer(&mean_name)?.data();
            let var = g.buffer(&var_name)?.data();
            g.batch_norm_eval(x, gamma, beta, mean, var, self.eps)
        }
    }

    /// Normalizes several sequences with statistics pooled over all their
    /// rows, returning them split back apart.
    pub fn forward_batch(&self, g: &mut Graph, xs: &[Var]) -> Result<Vec<Var>> {
        let rows: Vec<usize> = xs.iter().map(|&x| g.value(x).dims2().0).collect();
        let cols = g.value(xs[0]).dims2().1;
        let flat: Vec<Var> =
            xs.iter().zip(&rows).map(|(&x, &r)| g.reshape(x, vec![r, cols])).collect::<Result<_>>()?;
        let joined = if flat.len() == 1 { flat[0] } else { g.concat(&flat, 0)? };
        let y = self.forward(g, joined)?;
        let mut out = Vec::with_capacity(xs.len());
        let mut start = 0;
        for (&x, &r) in xs.iter().zip(&rows) {
            let part = if xs.len() == 1 { y } else { g.slice(y, 0, start, start + r)? };
            let shape = g.shape(x).to_vec();
            out.push(if shape.len() == 2 { part } else { g.reshape(part, shape)? });
            start += r;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub name: String,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(name: impl Into<String>, vocab: usize, dim: usize) -> Self {
        Self { name: name.into(), vocab, dim }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        vec![ParamSpec::weight(
            join(&self.name, "table"),
            vec![self.vocab, self.dim],
            Init::Glorot { fan_in: 1, fan_out: self.dim },
        )]
    }

    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        let table = g.param(&join(&self.name, "table"))?;
        g.gather_rows(table, ids)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

fn gates(g: &mut Graph, pre: Var, units: usize, c: Var) -> Result<LstmState> {
    let i = g.slice(pre, 1, 0, units)?;
    let f = g.slice(pre, 1, units, 2 * units)?;
    let cand = g.slice(pre, 1, 2 * units, 3 * units)?;
    let o = g.slice(pre, 1, 3 * units, 4 * units)?;
    let (i, f, o) = (g.sigmoid(i)?, g.sigmoid(f)?, g.sigmoid(o)?);
    let cand = g.tanh(cand)?;
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// LSTM with gate order (input, forget, candidate, output).
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub name: String,
    pub input: usize,
    pub units: usize,
}

impl Lstm {
    pub fn new(name: impl Into<String>, input: usize, units: usize) -> Self {
        Self { name: name.into(), input, units }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let u4 = 4 * self.units;
        vec![
            ParamSpec::weight(
                join(&self.name, "input_kernel"),
                vec![self.input, u4],
                Init::Glorot { fan_in: self.input, fan_out: u4 },
            ),
            ParamSpec::weight(
                join(&self.name, "recurrent_kernel"),
                vec![self.units, u4],
                Init::Glorot { fan_in: self.units, fan_out: u4 },
            ),
            ParamSpec::weight(join(&self.name, "bias"), vec![u4], Init::ForgetBias),
        ]
    }

    pub fn zero_state(&self, g: &mut Graph, rows: usize) -> LstmState {
        let h = g.constant(Tensor::zeros(&[rows, self.units]));
        let c = g.constant(Tensor::zeros(&[rows, self.units]));
        LstmState { h, c }
    }

    /// One step on `x: [rows, input]`.
    pub fn cell(&self, g: &mut Graph, x: Var, state: LstmState) -> Result<LstmState> {
        let wx = g.param(&join(&self.name, "input_kernel"))?;
        let xw = g.matmul(x, wx)?;
        self.cell_projected(g, xw, state)
    }

    fn cell_projected(&self, g: &mut Graph, xw: Var, state: LstmState) -> Result<LstmState> {
        let wh = g.param(&join(&self.name, "recurrent_kernel"))?;
        let b = g.param(&join(&self.name, "bias"))?;
        let hw = g.matmul(state.h, wh)?;
        let pre = g.add(xw, hw)?;
        let pre = g.add(pre, b)?;
        gates(g, pre, self.units, state.c)
    }

    /// Runs over the rows of `x: [T, input]`, optionally right to left;
    /// returns `[T, units]` in input order.
    pub fn sequence(&self, g: &mut Graph, x: Var, reverse: bool) -> Result<Var> {
        let t_len = g.value(x).dims2().0;
        if t_len == 0 {
            return Err(Error::Invalid { op: "lstm", msg: "empty sequence".into() });
        }
        let wx = g.param(&join(&self.name, "input_kernel"))?;
        let xw = g.matmul(x, wx)?;
        let mut state = self.zero_state(g, 1);
        let mut outs = vec![state.h; t_len];
        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            let row = g.slice(xw, 0, t, t + 1)?;
            state = self.cell_projected(g, row, state)?;
            outs[t] = state.h;
        }
        g.concat(&outs, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl BiLstm {
    pub fn new(name: &str, input: usize, units: usize) -> Self {
        Self { forward: Lstm::new(join(name, "fw"), input, units), backward: Lstm::new(join(name, "bw"), input, units) }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.forward.specs();
        v.extend(self.backward.specs());
        v
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.units
    }

    /// `[T, input] -> [T, 2 * units]`.
    pub fn run(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let f = self.forward.sequence(g, x, false)?;
        let b = self.backward.sequence(g, x, true)?;
        g.concat(&[f, b], 1)
    }
}

/// LSTM over time whose gates are 1-D convolutions along the feature
/// (frequency) axis of each frame: gates = conv([X_t ; H_{t-1}]).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstm {
    pub name: String,
    pub channels: usize,
    pub units: usize,
    pub kernel: usize,
}

impl ConvLstm {
    pub fn new(name: impl Into<String>, channels: usize, units: usize, kernel: usize) -> Self {
        Self { name: name.into(), channels, units, kernel }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let u4 = 4 * self.units;
        let cin = self.channels + self.units;
        vec![
            ParamSpec::weight(
                join(&self.name, "kernel"),
                vec![u4, cin, self.kernel],
                Init::Glorot { fan_in: cin * self.kernel, fan_out: u4 * self.kernel },
            ),
            ParamSpec::weight(join(&self.name, "bias"), vec![u4], Init::ForgetBias),
        ]
    }

    /// `frames[t]: [F, channels]`; returns `H_t: [F, units]` in input order.
    pub fn sequence(&self, g: &mut Graph, frames: &[Var], reverse: bool) -> Result<Vec<Var>> {
        let Some(&first) = frames.first() else {
            return Err(Error::Invalid { op: "conv_lstm", msg: "empty sequence".into() });
        };
        let f = g.value(first).dims2().0;
        let w = g.param(&join(&self.name, "kernel"))?;
        let b = g.param(&join(&self.name, "bias"))?;
        let mut h = g.constant(Tensor::zeros(&[f, self.units]));
        let mut c = h;
        let mut outs = vec![h; frames.len()];
        for step in 0..frames.len() {
            let t = if reverse { frames.len() - 1 - step } else { step };
            let xh = g.concat(&[frames[t], h], 1)?;
            let pre = g.conv1d(xh, w, Some(b), 1)?;
            let s = gates(g, pre, self.units, c)?;
            h = s.h;
            c = s.c;
            outs[t] = h;
        }
        Ok(outs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiConvLstm {
    pub forward: ConvLstm,
    pub backward: ConvLstm,
}

impl BiConvLstm {
    pub fn new(name: &str, channels: usize, units: usize, kernel: usize) -> Self {
        Self {
            forward: ConvLstm::new(join(name, "fw"), channels, units, kernel),
            backward: ConvLstm::new(join(name, "bw"), channels, units, kernel),
        }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.forward.specs();
        v.extend(self.backward.specs());
        v
    }

    pub fn output_dim(&self, features: usize) -> usize {
        2 * features * self.forward.units
    }

    /// `x: [T, F, channels] -> [T, 2 * F * units]`, each row the flattened
    /// forward then backward hidden maps.
    pub fn run(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.forward.channels {
            return Err(Error::Shape { op: "conv_lstm", left: shape, right: vec![0, 0, self.forward.channels] });
        }
        let (t, f, ch) = (shape[0], shape[1], shape[2]);
        let flat = g.reshape(x, vec![t, f * ch])?;
        let frames: Vec<Var> = (0..t)
            .map(|i| {
                let row = g.slice(flat, 0, i, i + 1)?;
                g.reshape(row, vec![f, ch])
            })
            .collect::<Result<_>>()?;
        let fw = self.forward.sequence(g, &frames, false)?;
        let bw = self.backward.sequence(g, &frames, true)?;
        let units = self.forward.units;
        let rows: Vec<Var> = fw
            .into_iter()
            .zip(bw)
            .map(|(a, b)| {
                let a = g.reshape(a, vec![1, f * units])?;
                let b = g.reshape(b, vec![1, f * units])?;
                g.concat(&[a, b], 1)
            })
            .collect::<Result<_>>()?;
        g.concat(&rows, 0)
    }
}
