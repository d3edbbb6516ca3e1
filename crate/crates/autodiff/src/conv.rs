//! Grouped 1D/2D cross-correlation with zero padding.

use wavehax_core::{Error, Result};

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    /// Zeros added on both sides of each spatial axis.
    pub padding: (usize, usize),
    pub groups: usize,
}

impl Conv2dSpec {
    /// Stride 1 and output size equal to input size (odd kernels only).
    pub fn same(kernel: (usize, usize), groups: usize) -> Result<Self> {
        if kernel.0 % 2 == 0 || kernel.1 % 2 == 0 {
            return Err(Error::invalid(format!(
                "same padding needs odd kernel sizes, got {kernel:?}"
            )));
        }
        Ok(Self {
            stride: (1, 1),
            padding: (kernel.0 / 2, kernel.1 / 2),
            groups,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv1dSpec {
    pub fn same(kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::invalid(format!(
                "same padding needs an odd kernel, got {kernel}"
            )));
        }
        Ok(Self {
            stride: 1,
            padding: kernel / 2,
            groups: 1,
        })
    }
}

struct Geometry {
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    co: usize,
    cig: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    groups: usize,
    spec: Conv2dSpec,
}

impl Geometry {
    /// Output columns `j` whose input column `j·s + q − p` is in range.
    fn cols(&self, q: usize) -> std::ops::Range<usize> {
        span(q, self.spec.padding.1, self.spec.stride.1, self.w, self.wo)
    }

    fn rows(&self, p: usize) -> std::ops::Range<usize> {
        span(p, self.spec.padding.0, self.spec.stride.0, self.h, self.ho)
    }
}

fn span(k: usize, pad: usize, stride: usize, len: usize, out: usize) -> std::ops::Range<usize> {
    // need 0 ≤ j·stride + k − pad < len
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if len + pad > k {
        ((len + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    if hi > lo {
        lo..hi
    } else {
        0..0
    }
}

impl Graph {
    /// `x: [B, C, H, W]`, `w: [Cout, C/groups, KH, KW]`, `b: [Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let ([b, c, h, wd], [co, cig, kh, kw]) = (xs.as_slice(), ws.as_slice()) else {
            return Err(Error::invalid(format!(
                "conv2d expects rank-4 input and weight, got {xs:?} and {ws:?}"
            )));
        };
        let groups = spec.groups;
        if groups == 0 || c % groups != 0 || co % groups != 0 {
            return Err(Error::invalid(format!(
                "conv2d: {c} input and {co} output channels are not divisible by {groups} groups"
            )));
        }
        if c / groups != *cig {
            return Err(Error::invalid(format!(
                "conv2d: weight expects {cig} channels per group, input gives {}",
                c / groups
            )));
        }
        if spec.stride.0 == 0 || spec.stride.1 == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        if let Some(bv) = bias {
            if self.shape(bv) != [*co] {
                return Err(Error::invalid(format!(
                    "conv2d: bias shape {:?}, expected [{co}]",
                    self.shape(bv)
                )));
            }
        }
        let (ph, pw) = spec.padding;
        if h + 2 * ph < *kh || wd + 2 * pw < *kw {
            return Err(Error::invalid(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * ph,
                wd + 2 * pw
            )));
        }
        let g = Geometry {
            b: *b,
            c: *c,
            h: *h,
            w: *wd,
            co: *co,
            cig: *cig,
            kh: *kh,
            kw: *kw,
            ho: (h + 2 * ph - kh) / spec.stride.0 + 1,
            wo: (wd + 2 * pw - kw) / spec.stride.1 + 1,
            groups,
            spec,
        };
        let xv = self.data(x).to_vec();
        let wv = self.data(w).to_vec();
        let mut out = vec![0.0; g.b * g.co * g.ho * g.wo];
        if let Some(bv) = bias {
            let bd = self.data(bv);
            for (i, plane) in out.chunks_mut(g.ho * g.wo).enumerate() {
                plane.fill(bd[i % g.co]);
            }
        }
        forward(&g, &xv, &wv, &mut out);
        let out_shape = vec![g.b, g.co, g.ho, g.wo];
        let mut parents = vec![x, w];
        parents.extend(bias);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            &parents,
            Box::new(move |gy, need| {
                let gx = need[0].then(|| {
                    let mut gx = vec![0.0; xv.len()];
                    backward_input(&g, gy, &wv, &mut gx);
                    gx
                });
                let gw = need[1].then(|| {
                    let mut gw = vec![0.0; wv.len()];
                    backward_weight(&g, gy, &xv, &mut gw);
                    gw
                });
                let mut res = vec![gx, gw];
                if need.len() == 3 {
                    res.push(need[2].then(|| {
                        let mut gb = vec![0.0; g.co];
                        for (i, plane) in gy.chunks(g.ho * g.wo).enumerate() {
                            gb[i % g.co] += plane.iter().sum::<f64>();
                        }
                        gb
                    }));
                }
                res
            }),
        ))
    }

    /// `x: [B, C, T]`, `w: [Cout, C/groups, K]`, `b: [Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: Conv1dSpec) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let ([b, c, t], [co, cig, k]) = (xs.as_slice(), ws.as_slice()) else {
            return Err(Error::invalid(format!(
                "conv1d expects rank-3 input and weight, got {xs:?} and {ws:?}"
            )));
        };
        let x4 = self.reshape(x, &[*b, *c, 1, *t])?;
        let w4 = self.reshape(w, &[*co, *cig, 1, *k])?;
        let y = self.conv2d(
            x4,
            w4,
            bias,
            Conv2dSpec {
                stride: (1, spec.stride),
                padding: (0, spec.padding),
                groups: spec.groups,
            },
        )?;
        let s = self.shape(y).to_vec();
        self.reshape(y, &[s[0], s[1], s[3]])
    }
}

fn forward(g: &Geometry, x: &[f64], w: &[f64], out: &mut [f64]) {
    let cog = g.co / g.groups;
    let (sh, sw) = g.spec.stride;
    let (ph, pw) = g.spec.padding;
    for bi in 0..g.b {
        for o in 0..g.co {
            let grp = o / cog;
            let yo = &mut out[(bi * g.co + o) * g.ho * g.wo..][..g.ho * g.wo];
            for ci in 0..g.cig {
                let xc = &x[(bi * g.c + grp * g.cig + ci) * g.h * g.w..][..g.h * g.w];
                for p in 0..g.kh {
                    let rows = g.rows(p);
                    for q in 0..g.kw {
                        let wv = w[((o * g.cig + ci) * g.kh + p) * g.kw + q];
                        if wv == 0.0 {
                            continue;
                        }
                        let cols = g.cols(q);
                        if cols.is_empty() {
                            continue;
                        }
                        for i in rows.clone() {
                            let xr = &xc[(i * sh + p - ph) * g.w..][..g.w];
                            let yr = &mut yo[i * g.wo..][..g.wo];
                            if sw == 1 {
                                let off = cols.start + q - pw;
                                for (y, xv) in yr[cols.clone()].iter_mut().zip(&xr[off..]) {
                                    *y += wv * xv;
                                }
                            } else {
                                for j in cols.clone() {
                                    yr[j] += wv * xr[j * sw + q - pw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn backward_input(g: &Geometry, gy: &[f64], w: &[f64], gx: &mut [f64]) {
    let cog = g.co / g.groups;
    let (sh, sw) = g.spec.stride;
    let (ph, pw) = g.spec.padding;
    for bi in 0..g.b {
        for o in 0..g.co {
            let grp = o / cog;
            let go = &gy[(bi * g.co + o) * g.ho * g.wo..][..g.ho * g.wo];
            for ci in 0..g.cig {
                let gxc = &mut gx[(bi * g.c + grp * g.cig + ci) * g.h * g.w..][..g.h * g.w];
                for p in 0..g.kh {
                    let rows = g.rows(p);
                    for q in 0..g.kw {
                        let wv = w[((o * g.cig + ci) * g.kh + p) * g.kw + q];
                        let cols = g.cols(q);
                        if cols.is_empty() {
                            continue;
                        }
                        for i in rows.clone() {
                            let gr = &go[i * g.wo..][..g.wo];
                            let xr = &mut gxc[(i * sh + p - ph) * g.w..][..g.w];
                            for j in cols.clone() {
                                xr[j * sw + q - pw] += wv * gr[j];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn backward_weight(g: &Geometry, gy: &[f64], x: &[f64], gw: &mut [f64]) {
    let cog = g.co / g.groups;
    let (sh, sw) = g.spec.stride;
    let (ph, pw) = g.spec.padding;
    for bi in 0..g.b {
        for o in 0..g.co {
            let grp = o / cog;
            let go = &gy[(bi * g.co + o) * g.ho * g.wo..][..g.ho * g.wo];
            for ci in 0..g.cig {
                let xc = &x[(bi * g.c + grp * g.cig + ci) * g.h * g.w..][..g.h * g.w];
                for p in 0..g.kh {
                    let rows = g.rows(p);
                    for q in 0..g.kw {
                        let cols = g.cols(q);
                        if cols.is_empty() {
                            continue;
                        }
                        let mut acc = 0.0;
                        for i in rows.clone() {
                            let gr = &go[i * g.wo..][..g.wo];
                            let xr = &xc[(i * sh + p - ph) * g.w..][..g.w];
                            for j in cols.clone() {
                                acc += gr[j] * xr[j * sw + q - pw];
                            }
                        }
                        gw[((o * g.cig + ci) * g.kh + p) * g.kw + q] += acc;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_sum_1d() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let w = g.constant(Tensor::new(vec![1, 1, 3], vec![1.0; 3]).unwrap());
        let y = g.conv1d(x, w, None, Conv1dSpec::same(3).unwrap()).unwrap();
        assert_eq!(g.data(y), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn identity_kernels() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..2 * 3 * 4 * 5).map(|v| v as f64 * 0.1).collect();
        let x = g.constant(Tensor::new(vec![2, 3, 4, 5], data.clone()).unwrap());
        let mut eye = vec![0.0; 9];
        for c in 0..3 {
            eye[c * 3 + c] = 1.0;
        }
        let w = g.constant(Tensor::new(vec![3, 3, 1, 1], eye).unwrap());
        let y = g.conv2d(x, w, None, Conv2dSpec::same((1, 1), 1).unwrap()).unwrap();
        assert_eq!(g.data(y), data.as_slice());
    }

    #[test]
    fn depthwise_box_on_constant() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 2, 6, 6], 0.5));
        let w = g.constant(Tensor::full(&[2, 1, 3, 3], 1.0));
        let y = g.conv2d(x, w, None, Conv2dSpec::same((3, 3), 2).unwrap()).unwrap();
        let d = g.data(y);
        for c in 0..2 {
            for i in 1..5 {
                for j in 1..5 {
                    assert_eq!(d[(c * 6 + i) * 6 + j], 4.5);
                }
            }
            assert_eq!(d[c * 36], 2.0);
        }
    }

    #[test]
    fn strided_matches_naive() {
        let mut g = Graph::new();
        let xd: Vec<f64> = (0..2 * 7 * 5).map(|v| ((v * 37 % 11) as f64) - 5.0).collect();
        let wd: Vec<f64> = (0..3 * 2 * 3 * 2).map(|v| ((v * 13 % 7) as f64) - 3.0).collect();
        let x = g.constant(Tensor::new(vec![1, 2, 7, 5], xd.clone()).unwrap());
        let w = g.constant(Tensor::new(vec![3, 2, 3, 2], wd.clone()).unwrap());
        let spec = Conv2dSpec { stride: (2, 3), padding: (1, 1), groups: 1 };
        let y = g.conv2d(x, w, None, spec).unwrap();
        let (ho, wo) = ((7 + 2 - 3) / 2 + 1, (5 + 2 - 2) / 3 + 1);
        assert_eq!(g.shape(y), &[1, 3, ho, wo]);
        for o in 0..3 {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for p in 0..3 {
                            for q in 0..2 {
                                let (r, s) = ((i * 2 + p) as isize - 1, (j * 3 + q) as isize - 1);
                                if (0..7).contains(&r) && (0..5).contains(&s) {
                                    acc += wd[((o * 2 + c) * 3 + p) * 2 + q]
                                        * xd[(c * 7 + r as usize) * 5 + s as usize];
                                }
                            }
                        }
                    }
                    assert_eq!(g.data(y)[(o * ho + i) * wo + j], acc);
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 3, 4, 4]));
        let w = g.constant(Tensor::zeros(&[4, 3, 3, 3]));
        assert!(g.conv2d(x, w, None, Conv2dSpec::same((3, 3), 2).unwrap()).is_err());
        let w2 = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
        assert!(g.conv2d(x, w2, None, Conv2dSpec::same((3, 3), 1).unwrap()).is_err());
        assert!(Conv1dSpec::same(4).is_err());
    }
}
