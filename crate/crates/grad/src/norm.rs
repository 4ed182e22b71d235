use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Per-feature statistics of a batch-norm input.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased variance.
    pub var: Vec<f64>,
}

impl Graph<'_> {
    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize)> {
        let (n, f) = self.value(x).dims2();
        for p in [gamma, beta] {
            if self.value(p).len() != f {
                return Err(Error::Shape {
                    op: "batch_norm",
                    left: self.shape(x).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
        }
        Ok((n, f))
    }

    /// Normalizes each column of `x` with the batch statistics over its rows.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (n, f) = self.check_bn(x, gamma, beta)?;
        if n == 0 {
            return Err(Error::Invalid { op: "batch_norm", msg: "empty batch".into() });
        }
        let xd = self.value(x).data();
        let mut mean = vec![0.0; f];
        let mut var = vec![0.0; f];
        for row in xd.chunks(f) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for row in xd.chunks(f) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xhat: Vec<f64> = xd.iter().enumerate().map(|(k, v)| (v - mean[k % f]) * inv_std[k % f]).collect();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let out: Vec<f64> = xhat.iter().enumerate().map(|(k, h)| gd[k % f] * h + bd[k % f]).collect();
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        let stats = BatchStats { mean, var };
        let v = self.push("batch_norm", value, &[x, gamma, beta], move |g, ins, _| {
            let gv = g.data();
            let gamma = ins[1].data();
            let mut gbeta = vec![0.0; f];
            let mut ggamma = vec![0.0; f];
            let mut sum_gh = vec![0.0; f];
            let mut sum_gh_xh = vec![0.0; f];
            for k in 0..n * f {
                let j = k % f;
                gbeta[j] += gv[k];
                ggamma[j] += gv[k] * xhat[k];
                let gh = gv[k] * gamma[j];
                sum_gh[j] += gh;
                sum_gh_xh[j] += gh * xhat[k];
            }
            let nf = n as f64;
            let gx: Vec<f64> = (0..n * f)
                .map(|k| {
                    let j = k % f;
                    let gh = gv[k] * gamma[j];
                    inv_std[j] / nf * (nf * gh - sum_gh[j] - xhat[k] * sum_gh_xh[j])
                })
                .collect();
            vec![
                Some(Tensor::new(ins[0].shape().to_vec(), gx).unwrap()),
                Some(Tensor::new(ins[1].shape().to_vec(), ggamma).unwrap()),
                Some(Tensor::new(ins[2].shape().to_vec(), gbeta).unwrap()),
            ]
        })?;
        Ok((v, stats))
    }

    /// Normalizes with fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (_, f) = self.check_bn(x, gamma, beta)?;
        if mean.len() != f || var.len() != f {
            return Err(Error::Shape { op: "batch_norm", left: self.shape(x).to_vec(), right: vec![mean.len()] });
        }
        let mean = mean.to_vec();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let xd = self.value(x).data();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let out = xd
            .iter()
            .enumerate()
            .map(|(k, v)| (v - mean[k % f]) * inv_std[k % f] * gd[k % f] + bd[k % f])
            .collect();
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        self.push("batch_norm", value, &[x, gamma, beta], move |g, ins, _| {
            let gv = g.data();
            let (xd, gamma) = (ins[0].data(), ins[1].data());
            let mut gbeta = vec![0.0; f];
            let mut ggamma = vec![0.0; f];
            let mut gx = vec![0.0; gv.len()];
            for k in 0..gv.len() {
                let j = k % f;
                let xh = (xd[k] - mean[j]) * inv_std[j];
                gbeta[j] += gv[k];
                ggamma[j] += gv[k] * xh;
                gx[k] = gv[k] * gamma[j] * inv_std[j];
            }
            vec![
                Some(Tensor::new(ins[0].shape().to_vec(), gx).unwrap()),
                Some(Tensor::new(ins[1].shape().to_vec(), ggamma).unwrap()),
                Some(Tensor::new(ins[2].shape().to_vec(), gbeta).unwrap()),
            ]
        })
    }
}
