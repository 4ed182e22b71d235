//! Convolutions with "same" padding. Sequences are time-major: a 1-D input
//! is `[T, C]`, a 2-D input is `[H, W, C]` (channels last).

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Output length and left padding of a "same" convolution along one axis.
pub fn same_padding(len: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out.max(1) - 1) * stride + kernel).saturating_sub(len);
    (out, total / 2)
}

#[derive(Clone, Copy)]
struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    oh: usize,
    ow: usize,
    ph: usize,
    pw: usize,
}

impl Geometry {
    /// Input position for output `(i, j)` and tap `(a, b)`, if inside.
    #[inline]
    fn source(&self, i: usize, j: usize, a: usize, b: usize) -> Option<(usize, usize)> {
        let y = (i * self.sh + a).checked_sub(self.ph)?;
        let x = (j * self.sw + b).checked_sub(self.pw)?;
        (y < self.h && x < self.w).then_some((y, x))
    }
}

fn conv_forward(g: &Geometry, x: &[f64], w: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; g.oh * g.ow * g.cout];
    for i in 0..g.oh {
        for j in 0..g.ow {
            let o = &mut out[(i * g.ow + j) * g.cout..(i * g.ow + j + 1) * g.cout];
            if let Some(b) = bias {
                o.copy_from_slice(b);
            }
            for a in 0..g.kh {
                for bb in 0..g.kw {
                    let Some((y, xx)) = g.source(i, j, a, bb) else { continue };
                    let xin = &x[(y * g.w + xx) * g.cin..(y * g.w + xx + 1) * g.cin];
                    for (co, ov) in o.iter_mut().enumerate() {
                        let base = co * g.cin * g.kh * g.kw + a * g.kw + bb;
                        let mut s = 0.0;
                        for (ci, xv) in xin.iter().enumerate() {
                            s += w[base + ci * g.kh * g.kw] * xv;
                        }
                        *ov += s;
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(g: &Geometry, x: &[f64], w: &[f64], grad: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; g.cout];
    for i in 0..g.oh {
        for j in 0..g.ow {
            let go = &grad[(i * g.ow + j) * g.cout..(i * g.ow + j + 1) * g.cout];
            for (b, v) in gb.iter_mut().zip(go) {
                *b += v;
            }
            for a in 0..g.kh {
                for bb in 0..g.kw {
                    let Some((y, xx)) = g.source(i, j, a, bb) else { continue };
                    let off = (y * g.w + xx) * g.cin;
                    for (co, gv) in go.iter().enumerate() {
                        if *gv == 0.0 {
                            continue;
                        }
                        let base = co * g.cin * g.kh * g.kw + a * g.kw + bb;
                        for ci in 0..g.cin {
                            let wi = base + ci * g.kh * g.kw;
                            gw[wi] += gv * x[off + ci];
                            gx[off + ci] += gv * w[wi];
                        }
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

impl Graph<'_> {
    fn conv(
        &mut self,
        op: &'static str,
        x: Var,
        w: Var,
        bias: Option<Var>,
        geom: Geometry,
        out_shape: Vec<usize>,
    ) -> Result<Var> {
        if let Some(b) = bias {
            if self.value(b).len() != geom.cout {
                return Err(Error::Shape { op, left: self.shape(w).to_vec(), right: self.shape(b).to_vec() });
            }
        }
        let data = conv_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            bias.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(out_shape, data)?;
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        self.push(op, value, &inputs, move |g, ins, _| {
            let (gx, gw, gb) = conv_backward(&geom, ins[0].data(), ins[1].data(), g.data());
            let mut out = vec![
                Some(Tensor::new(ins[0].shape().to_vec(), gx).unwrap()),
                Some(Tensor::new(ins[1].shape().to_vec(), gw).unwrap()),
            ];
            if ins.len() == 3 {
                out.push(Some(Tensor::new(ins[2].shape().to_vec(), gb).unwrap()));
            }
            out
        })
    }

    /// `x: [T, C_in]`, `w: [C_out, C_in, K]`, optional `bias: [C_out]`;
    /// output `[ceil(T / stride), C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 2 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
            return Err(Error::Shape { op: "conv1d", left: xs, right: ws });
        }
        let (t, cin, cout, k) = (xs[0], xs[1], ws[0], ws[2]);
        let (ot, pad) = same_padding(t, k, stride);
        let geom = Geometry { h: t, w: 1, cin, cout, kh: k, kw: 1, sh: stride, sw: 1, oh: ot, ow: 1, ph: pad, pw: 0 };
        self.conv("conv1d", x, w, bias, geom, vec![ot, cout])
    }

    /// `x: [H, W, C_in]`, `w: [C_out, C_in, kh, kw]`, optional `bias: [C_out]`;
    /// output `[ceil(H / sh), ceil(W / sw), C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: (usize, usize)) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 3 || ws.len() != 4 || xs[2] != ws[1] || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape { op: "conv2d", left: xs, right: ws });
        }
        let (oh, ph) = same_padding(xs[0], ws[2], stride.0);
        let (ow, pw) = same_padding(xs[1], ws[3], stride.1);
        let geom = Geometry {
            h: xs[0],
            w: xs[1],
            cin: xs[2],
            cout: ws[0],
            kh: ws[2],
            kw: ws[3],
            sh: stride.0,
            sw: stride.1,
            oh,
            ow,
            ph,
            pw,
        };
        self.conv("conv2d", x, w, bias, geom, vec![oh, ow, ws[0]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;

    #[test]
    fn identity_kernel_conv1d() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
        let w = g.constant(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
        let y = g.conv1d(x, w, None, 1).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn same_padding_lengths() {
        assert_eq!(same_padding(40, 3, 2), (20, 0));
        assert_eq!(same_padding(7, 3, 2), (4, 1));
        assert_eq!(same_padding(5, 5, 1), (5, 2));
        assert_eq!(same_padding(1, 3, 2), (1, 1));
    }

    #[test]
    fn mismatched_channels_error() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::zeros(&[4, 2]));
        let w = g.constant(Tensor::zeros(&[1, 3, 3]));
        let e = g.conv1d(x, w, None, 1).unwrap_err().to_string();
        assert!(e.contains("conv1d") && e.contains("[4, 2]") && e.contains("[1, 3, 3]"));
    }
}
