use wavehax_core::{Error, Result};

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-6;

impl Graph {
    /// Normalize `x: [B, C, ...]` across `C` at every position, then scale
    /// by `gamma[C]` and shift by `beta[C]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::invalid(format!(
                "layer_norm needs a channel axis, got shape {shape:?}"
            )));
        }
        let (b, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::invalid(format!(
                "layer_norm: scale/shift must have shape [{c}]"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid("layer_norm eps must be positive"));
        }
        let xv = self.data(x);
        let (gv, bv) = (self.data(gamma).to_vec(), self.data(beta).to_vec());
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; b * inner];
        for bi in 0..b {
            for p in 0..inner {
                let at = |ci: usize| (bi * c + ci) * inner + p;
                let mean = (0..c).map(|ci| xv[at(ci)]).sum::<f64>() / c as f64;
                let var = (0..c).map(|ci| (xv[at(ci)] - mean).powi(2)).sum::<f64>() / c as f64;
                let is = 1.0 / (var + eps).sqrt();
                inv_std[bi * inner + p] = is;
                for ci in 0..c {
                    xhat[at(ci)] = (xv[at(ci)] - mean) * is;
                }
            }
        }
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let ci = (i / inner) % c;
                gv[ci] * v + bv[ci]
            })
            .collect();
        Ok(self.push(
            Tensor::new(shape, out)?,
            &[x, gamma, beta],
            Box::new(move |g, need| {
                let gx = need[0].then(|| {
                    let mut gx = vec![0.0; g.len()];
                    for bi in 0..b {
                        for p in 0..inner {
                            let at = |ci: usize| (bi * c + ci) * inner + p;
                            let (mut m1, mut m2) = (0.0, 0.0);
                            for ci in 0..c {
                                let d = g[at(ci)] * gv[ci];
                                m1 += d;
                                m2 += d * xhat[at(ci)];
                            }
                            m1 /= c as f64;
                            m2 /= c as f64;
                            let is = inv_std[bi * inner + p];
                            for ci in 0..c {
                                let d = g[at(ci)] * gv[ci];
                                gx[at(ci)] = is * (d - m1 - xhat[at(ci)] * m2);
                            }
                        }
                    }
                    gx
                });
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                if need[1] || need[2] {
                    for (i, gi) in g.iter().enumerate() {
                        let ci = (i / inner) % c;
                        gg[ci] += gi * xhat[i];
                        gb[ci] += gi;
                    }
                }
                vec![gx, need[1].then_some(gg), need[2].then_some(gb)]
            }),
        ))
    }
}
