//! Element-wise, matrix, reduction and shape ops.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
enum Bin {
    Add,
    Sub,
    Mul,
    Div,
}

/// Broadcast-compatible output dims for two matrices; each dim must match or be 1.
fn broadcast_dims(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(usize, usize)> {
    let ((ar, ac), (br, bc)) = (a.dims2(), b.dims2());
    let fit = |x: usize, y: usize| if x == y || y == 1 { Some(x) } else if x == 1 { Some(y) } else { None };
    if a.rank() > 2 || b.rank() > 2 {
        if a.shape() == b.shape() {
            return Ok((ar, ac));
        }
        return Err(Error::Shape { op, left: a.shape().to_vec(), right: b.shape().to_vec() });
    }
    match (fit(ar, br), fit(ac, bc)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Shape { op, left: a.shape().to_vec(), right: b.shape().to_vec() }),
    }
}

/// Sums a full `(r, c)` gradient down to the broadcast source shape.
fn reduce_to(g: &[f64], (r, c): (usize, usize), like: &Tensor) -> Tensor {
    let (tr, tc) = like.dims2();
    if (tr, tc) == (r, c) {
        return Tensor::new(like.shape().to_vec(), g.to_vec()).expect("same size");
    }
    let mut out = vec![0.0; tr * tc];
    for i in 0..r {
        for j in 0..c {
            out[(i % tr) * tc + (j % tc)] += g[i * c + j];
        }
    }
    Tensor::new(like.shape().to_vec(), out).expect("same size")
}

fn out_shape(a: &Tensor, b: &Tensor, dims: (usize, usize)) -> Vec<usize> {
    if a.shape() == b.shape() || a.dims2() == dims {
        a.shape().to_vec()
    } else if b.dims2() == dims {
        b.shape().to_vec()
    } else {
        vec![dims.0, dims.1]
    }
}

fn at(t: &Tensor, i: usize, j: usize) -> f64 {
    let (r, c) = t.dims2();
    t.data()[(i % r) * c + (j % c)]
}

impl Graph<'_> {
    fn binary(&mut self, op: &'static str, kind: Bin, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let dims = broadcast_dims(op, ta, tb)?;
        let (r, c) = dims;
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                let (x, y) = (at(ta, i, j), at(tb, i, j));
                out.push(match kind {
                    Bin::Add => x + y,
                    Bin::Sub => x - y,
                    Bin::Mul => x * y,
                    Bin::Div => x / y,
                });
            }
        }
        let value = Tensor::new(out_shape(ta, tb, dims), out)?;
        self.push(op, value, &[a, b], move |g, ins, _| {
            let (x, y) = (ins[0], ins[1]);
            let gd = g.data();
            let mut ga = Vec::with_capacity(r * c);
            let mut gb = Vec::with_capacity(r * c);
            for i in 0..r {
                for j in 0..c {
                    let gv = gd[i * c + j];
                    let (xv, yv) = (at(x, i, j), at(y, i, j));
                    let (da, db) = match kind {
                        Bin::Add => (1.0, 1.0),
                        Bin::Sub => (1.0, -1.0),
                        Bin::Mul => (yv, xv),
                        Bin::Div => (1.0 / yv, -xv / (yv * yv)),
                    };
                    ga.push(gv * da);
                    gb.push(gv * db);
                }
            }
            vec![Some(reduce_to(&ga, (r, c), x)), Some(reduce_to(&gb, (r, c), y))]
        })
    }

    /// Element-wise sum; a dimension of size 1 broadcasts.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", Bin::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", Bin::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", Bin::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", Bin::Div, a, b)
    }

    fn unary(
        &mut self,
        op: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var> {
        let value = self.value(a).map(f);
        self.push(op, value, &[a], move |g, ins, out| {
            let d = g.data().iter().zip(ins[0].data()).zip(out.data()).map(|((g, &x), &y)| g * df(x, y)).collect();
            vec![Some(Tensor::new(g.shape().to_vec(), d).expect("same size"))]
        })
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, move |x| c * x, move |_, _| c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, move |x| x + c, |_, _| 1.0)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.note_kinks(a);
        self.unary("relu", a, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, |_, y| y)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, f64::ln, |x, _| 1.0 / x)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, softplus, |x, _| sigmoid(x))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.note_kinks(a);
        self.unary("abs", a, f64::abs, |x, _| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, |x, _| 2.0 * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary("sqrt", a, f64::sqrt, |_, y| 0.5 / y)
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::Shape { op: "matmul", left: ta.shape().to_vec(), right: tb.shape().to_vec() });
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let value = Tensor::new(vec![n, m], matmul_raw(ta.data(), tb.data(), n, k, m))?;
        self.push("matmul", value, &[a, b], move |g, ins, _| {
            let (ad, bd, gd) = (ins[0].data(), ins[1].data(), g.data());
            // dA = G B^T, dB = A^T G
            let mut ga = vec![0.0; n * k];
            for i in 0..n {
                let grow = &gd[i * m..(i + 1) * m];
                for p in 0..k {
                    let brow = &bd[p * m..(p + 1) * m];
                    ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                }
            }
            let mut gb = vec![0.0; k * m];
            for i in 0..n {
                let grow = &gd[i * m..(i + 1) * m];
                for p in 0..k {
                    let av = ad[i * k + p];
                    if av != 0.0 {
                        for (dst, gv) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                            *dst += av * gv;
                        }
                    }
                }
            }
            vec![Some(Tensor::new(vec![n, k], ga).unwrap()), Some(Tensor::new(vec![k, m], gb).unwrap())]
        })
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), &[a], |g, ins, _| {
            vec![Some(Tensor::filled(ins[0].shape(), g.item()))]
        })
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Sum of a matrix along `axis`: 0 gives `[1, cols]`, 1 gives `[rows, 1]`.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let d = t.data();
        let value = match axis {
            0 => Tensor::new(vec![1, c], (0..c).map(|j| (0..r).map(|i| d[i * c + j]).sum()).collect())?,
            1 => Tensor::new(vec![r, 1], (0..r).map(|i| d[i * c..(i + 1) * c].iter().sum()).collect())?,
            _ => return Err(Error::Invalid { op: "sum_axis", msg: format!("axis {axis} on a matrix") }),
        };
        self.push("sum_axis", value, &[a], move |g, ins, _| {
            let gd = g.data();
            let out = (0..r * c).map(|k| if axis == 0 { gd[k % c] } else { gd[k / c] }).collect();
            vec![Some(Tensor::new(ins[0].shape().to_vec(), out).unwrap())]
        })
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push("softmax", value, &[a], move |g, _, y| {
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                let (gr, yr) = (&g.data()[i * c..(i + 1) * c], &y.data()[i * c..(i + 1) * c]);
                let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                for j in 0..c {
                    out[i * c + j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![Some(Tensor::new(y.shape().to_vec(), out).unwrap())]
        })
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push("log_softmax", value, &[a], move |g, _, y| {
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                let (gr, yr) = (&g.data()[i * c..(i + 1) * c], &y.data()[i * c..(i + 1) * c]);
                let gs: f64 = gr.iter().sum();
                for j in 0..c {
                    out[i * c + j] = gr[j] - yr[j].exp() * gs;
                }
            }
            vec![Some(Tensor::new(y.shape().to_vec(), out).unwrap())]
        })
    }

    /// Joins matrices along `axis` (0: rows, 1: columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Invalid { op: "concat", msg: "no inputs".into() })?;
        let mats: Vec<(usize, usize)> = parts.iter().map(|&v| self.value(v).dims2()).collect();
        let (r0, c0) = mats[0];
        for (p, &(r, c)) in parts.iter().zip(&mats) {
            let ok = if axis == 0 { c == c0 } else { r == r0 };
            if !ok || self.value(*p).rank() > 2 {
                return Err(Error::Shape {
                    op: "concat",
                    left: self.value(first).shape().to_vec(),
                    right: self.value(*p).shape().to_vec(),
                });
            }
        }
        let (value, widths) = if axis == 0 {
            let rows: usize = mats.iter().map(|m| m.0).sum();
            let mut d = Vec::with_capacity(rows * c0);
            for &p in parts {
                d.extend_from_slice(self.value(p).data());
            }
            (Tensor::new(vec![rows, c0], d)?, mats.iter().map(|m| m.0).collect::<Vec<_>>())
        } else if axis == 1 {
            let cols: usize = mats.iter().map(|m| m.1).sum();
            let mut d = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for (&p, &(_, c)) in parts.iter().zip(&mats) {
                    d.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
                }
            }
            (Tensor::new(vec![r0, cols], d)?, mats.iter().map(|m| m.1).collect::<Vec<_>>())
        } else {
            return Err(Error::Invalid { op: "concat", msg: format!("axis {axis} on matrices") });
        };
        let total_cols = value.dims2().1;
        self.push("concat", value, parts, move |g, ins, _| {
            let gd = g.data();
            let mut out = Vec::with_capacity(ins.len());
            let mut offset = 0;
            for (t, &w) in ins.iter().zip(&widths) {
                let d: Vec<f64> = if axis == 0 {
                    gd[offset * total_cols..(offset + w) * total_cols].to_vec()
                } else {
                    let rows = t.dims2().0;
                    (0..rows).flat_map(|i| gd[i * total_cols + offset..i * total_cols + offset + w].iter().copied()).collect()
                };
                offset += w;
                out.push(Some(Tensor::new(t.shape().to_vec(), d).unwrap()));
            }
            out
        })
    }

    /// Rows or columns `[start, end)` of a matrix.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let limit = if axis == 0 { r } else { c };
        if t.rank() != 2 || start > end || end > limit || axis > 1 {
            return Err(Error::Invalid {
                op: "slice",
                msg: format!("range {start}..{end} on axis {axis} of shape {:?}", t.shape()),
            });
        }
        let d = t.data();
        let (shape, data) = if axis == 0 {
            (vec![end - start, c], d[start * c..end * c].to_vec())
        } else {
            (vec![r, end - start], (0..r).flat_map(|i| d[i * c + start..i * c + end].iter().copied()).collect())
        };
        self.push("slice", Tensor::new(shape, data)?, &[a], move |g, _, _| {
            let mut out = vec![0.0; r * c];
            let w = end - start;
            for (k, gv) in g.data().iter().enumerate() {
                let idx = if axis == 0 { start * c + k } else { (k / w) * c + start + k % w };
                out[idx] = *gv;
            }
            vec![Some(Tensor::new(vec![r, c], out).unwrap())]
        })
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", value, &[a], |g, ins, _| {
            vec![Some(g.clone().reshaped(ins[0].shape().to_vec()).unwrap())]
        })
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(Error::Invalid { op: "transpose", msg: format!("needs a matrix, got {:?}", t.shape()) });
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let value = Tensor::new(vec![c, r], transpose_raw(t.data(), r, c))?;
        self.push("transpose", value, &[a], move |g, _, _| {
            vec![Some(Tensor::new(vec![r, c], transpose_raw(g.data(), c, r)).unwrap())]
        })
    }

    /// Rows of `table` picked by `ids` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::Invalid { op: "gather_rows", msg: format!("table shape {:?}", t.shape()) });
        }
        let (v, d) = (t.shape()[0], t.shape()[1]);
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Invalid { op: "gather_rows", msg: format!("id {bad} outside table of {v} rows") });
        }
        let data = ids.iter().flat_map(|&i| t.data()[i * d..(i + 1) * d].iter().copied()).collect();
        let ids = ids.to_vec();
        self.push("gather_rows", Tensor::new(vec![ids.len(), d], data)?, &[table], move |g, _, _| {
            let mut out = vec![0.0; v * d];
            for (row, &i) in ids.iter().enumerate() {
                for j in 0..d {
                    out[i * d + j] += g.data()[row * d + j];
                }
            }
            vec![Some(Tensor::new(vec![v, d], out).unwrap())]
        })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av != 0.0 {
                for (o, bv) in orow.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

fn transpose_raw(d: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    out
}
