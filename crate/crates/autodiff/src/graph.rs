//! Tape of operations recorded during a forward pass.
//!
//! Nodes are appended in execution order, so the tape is already a
//! topological order and [`Graph::backward`] is a single reverse sweep.

use wavehax_core::{Error, Result};

use crate::params::{ParamId, ParamStore};
use crate::tensor::{numel, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Receives the output gradient and a mask of which parents need gradients;
/// returns one gradient per parent (`None` where not needed).
pub(crate) type BackFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackFn>,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn leaf_node(&mut self, value: Tensor, requires_grad: bool, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf_node(value, false, None)
    }

    /// An input that receives a gradient (readable from [`Gradients`]).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.leaf_node(value, true, None)
    }

    /// A parameter; its gradient can be accumulated back into `store`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.leaf_node(store.value(id).clone(), true, Some(id))
    }

    /// Same value as `v`, cut from the gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Shapes of every node in creation order.
    pub fn node_shapes(&self) -> impl Iterator<Item = &[usize]> {
        self.nodes.iter().map(|n| n.value.shape())
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor, parents: &[Var], backward: BackFn) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            parents: parents.iter().map(|p| p.0).collect(),
            backward: requires_grad.then_some(backward),
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(back) = &node.backward else { continue };
            let Some(g) = grads[i].take() else { continue };
            let mask: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p].requires_grad)
                .collect();
            let parent_grads = back(&g, &mask);
            grads[i] = Some(g);
            for ((&p, pg), need) in node.parents.iter().zip(parent_grads).zip(&mask) {
                let (Some(pg), true) = (pg, *need) else { continue };
                match &mut grads[p] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Add parameter gradients of `grads` into `store`.
    pub fn accumulate(&self, grads: &Gradients, store: &mut ParamStore) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Some(id), Some(Some(g))) = (node.param, grads.grads.get(i)) {
                store.add_grad(id, g);
            }
        }
    }

    fn check_same(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::invalid(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn unary(
        &mut self,
        x: Var,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var {
        let xv = self.value(x).clone();
        let out: Vec<f64> = xv.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(xv.shape().to_vec(), out.clone()).expect("same shape");
        self.push(
            value,
            &[x],
            Box::new(move |g, _| {
                vec![Some(
                    g.iter()
                        .zip(xv.data())
                        .zip(&out)
                        .map(|((g, &x), &y)| g * df(x, y))
                        .collect(),
                )]
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, &[a, b], Box::new(|g, _| vec![Some(g.to_vec()), Some(g.to_vec())])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "sub")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x - y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(
            value,
            &[a, b],
            Box::new(|g, _| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())]),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let (av, bv) = (self.data(a).to_vec(), self.data(b).to_vec());
        let data = av.iter().zip(&bv).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(
            value,
            &[a, b],
            Box::new(move |g, need| {
                vec![
                    need[0].then(|| g.iter().zip(&bv).map(|(g, y)| g * y).collect()),
                    need[1].then(|| g.iter().zip(&av).map(|(g, x)| g * x).collect()),
                ]
            }),
        ))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| c * v, move |_, _| c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, |_, _| 1.0)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    /// `|x|`, with zero gradient at 0.
    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(
            x,
            move |v| if v > 0.0 { v } else { slope * v },
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// `x·Φ(x)` with the exact normal CDF.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, gelu, |x, _| {
            let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
            let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            cdf + x * pdf
        })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, |x, _| 2.0 * x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, |_, y| 1.0 - y * y)
    }

    /// `ln(x + eps)`.
    pub fn log_eps(&mut self, x: Var, eps: f64) -> Var {
        self.unary(x, move |v| (v + eps).ln(), move |x, _| 1.0 / (x + eps))
    }

    /// `√(re² + im²)` elementwise, with zero gradient at the origin.
    pub fn complex_abs(&mut self, re: Var, im: Var) -> Result<Var> {
        self.check_same(re, im, "complex_abs")?;
        let (rv, iv) = (self.data(re).to_vec(), self.data(im).to_vec());
        let mag: Vec<f64> = rv.iter().zip(&iv).map(|(r, i)| r.hypot(*i)).collect();
        let value = Tensor::new(self.shape(re).to_vec(), mag.clone())?;
        Ok(self.push(
            value,
            &[re, im],
            Box::new(move |g, _| {
                let part = |src: &[f64]| {
                    g.iter()
                        .zip(src)
                        .zip(&mag)
                        .map(|((g, s), m)| if *m > 0.0 { g * s / m } else { 0.0 })
                        .collect()
                };
                vec![Some(part(&rv)), Some(part(&iv))]
            }),
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), &[x], Box::new(move |g, _| vec![Some(vec![g[0]; n])]))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.data(x).iter().sum::<f64>() / n as f64;
        self.push(
            Tensor::scalar(s),
            &[x],
            Box::new(move |g, _| vec![Some(vec![g[0] / n as f64; n])]),
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(value, &[x], Box::new(|g, _| vec![Some(g.to_vec())])))
    }

    /// Permute axes: output axis `i` is input axis `perm[i]`.
    pub fn transpose(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let rank = shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid(format!(
                "{perm:?} is not a permutation of {rank} axes"
            )));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let in_strides = strides(&shape);
        // index into the input for each output position
        let n = numel(&shape);
        let mut map = Vec::with_capacity(n);
        let mut idx = vec![0usize; rank];
        for _ in 0..n {
            map.push(idx.iter().zip(perm).map(|(i, &p)| i * in_strides[p]).sum::<usize>());
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        let src = self.data(x);
        let data = map.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(
            value,
            &[x],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; n];
                for (o, &i) in map.iter().enumerate() {
                    gx[i] = g[o];
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start >= end || end > shape[axis] {
            return Err(Error::invalid(format!(
                "slice {start}..{end} on axis {axis} of shape {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let (len, width) = (shape[axis], end - start);
        let src = self.data(x);
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            data.extend_from_slice(&src[base..base + width * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = width;
        let n = numel(&shape);
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            &[x],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; n];
                for o in 0..outer {
                    let base = (o * len + start) * inner;
                    gx[base..base + width * inner]
                        .copy_from_slice(&g[o * width * inner..(o + 1) * width * inner]);
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Join along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::invalid("concat of no tensors"))?;
        let shape0 = self.shape(*first).to_vec();
        if axis >= shape0.len() {
            return Err(Error::invalid(format!("axis {axis} out of range for {shape0:?}")));
        }
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != shape0.len()
                || s.iter().zip(&shape0).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::invalid(format!(
                    "concat: shape {s:?} incompatible with {shape0:?} on axis {axis}"
                )));
            }
            widths.push(s[axis]);
        }
        let outer: usize = shape0[..axis].iter().product();
        let inner: usize = shape0[axis + 1..].iter().product();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; outer * total * inner];
        let mut off = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let src = self.data(x);
            for o in 0..outer {
                let dst = (o * total + off) * inner;
                data[dst..dst + w * inner].copy_from_slice(&src[o * w * inner..(o + 1) * w * inner]);
            }
            off += w;
        }
        let mut out_shape = shape0;
        out_shape[axis] = total;
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            xs,
            Box::new(move |g, need| {
                let mut off = 0;
                widths
                    .iter()
                    .zip(need)
                    .map(|(&w, &n)| {
                        let part = n.then(|| {
                            let mut gx = vec![0.0; outer * w * inner];
                            for o in 0..outer {
                                let s = (o * total + off) * inner;
                                gx[o * w * inner..(o + 1) * w * inner]
                                    .copy_from_slice(&g[s..s + w * inner]);
                            }
                            gx
                        });
                        off += w;
                        part
                    })
                    .collect()
            }),
        ))
    }

    /// `x[..., in] · wᵀ + b` with `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (Some(&d_in), [d_out, w_in]) = (xs.last(), ws.as_slice()) else {
            return Err(Error::invalid(format!("linear: bad shapes {xs:?}, {ws:?}")));
        };
        let d_out = *d_out;
        if *w_in != d_in {
            return Err(Error::invalid(format!(
                "linear: input width {d_in} but weight expects {w_in}"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [d_out] {
                return Err(Error::invalid(format!(
                    "linear: bias shape {:?}, expected [{d_out}]",
                    self.shape(b)
                )));
            }
        }
        let rows = numel(&xs) / d_in;
        let xv = self.data(x).to_vec();
        let wv = self.data(w).to_vec();
        let mut out = vec![0.0; rows * d_out];
        for r in 0..rows {
            let xr = &xv[r * d_in..(r + 1) * d_in];
            for o in 0..d_out {
                let wr = &wv[o * d_in..(o + 1) * d_in];
                out[r * d_out + o] = xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>()
                    + b.map_or(0.0, |b| self.data(b)[o]);
            }
        }
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = d_out;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            &parents,
            Box::new(move |g, need| {
                let gx = need[0].then(|| {
                    let mut gx = vec![0.0; rows * d_in];
                    for r in 0..rows {
                        for o in 0..d_out {
                            let go = g[r * d_out + o];
                            for i in 0..d_in {
                                gx[r * d_in + i] += go * wv[o * d_in + i];
                            }
                        }
                    }
                    gx
                });
                let gw = need[1].then(|| {
                    let mut gw = vec![0.0; d_out * d_in];
                    for r in 0..rows {
                        for o in 0..d_out {
                            let go = g[r * d_out + o];
                            for i in 0..d_in {
                                gw[o * d_in + i] += go * xv[r * d_in + i];
                            }
                        }
                    }
                    gw
                });
                let mut res = vec![gx, gw];
                if need.len() == 3 {
                    res.push(need[2].then(|| {
                        let mut gb = vec![0.0; d_out];
                        for r in 0..rows {
                            for o in 0..d_out {
                                gb[o] += g[r * d_out + o];
                            }
                        }
                        gb
                    }));
                }
                res
            }),
        ))
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let sq = g.square(x);
        let l = g.sum(sq);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        // 3·Φ(3), Φ(3) = 0.9986501019683699
        assert!((gelu(3.0) - 2.995_950_305_905_11).abs() < 1e-12);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let x = g.leaf(Tensor::scalar(5.0));
        let y = g.mul(c, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap(), &[2.0]);
    }

    #[test]
    fn transpose_and_slice_values() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 3], (0..6).map(f64::from).collect()).unwrap());
        let t = g.transpose(x, &[1, 0]).unwrap();
        assert_eq!(g.shape(t), &[3, 2]);
        assert_eq!(g.data(t), &[0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        let s = g.slice(x, 1, 1, 3).unwrap();
        assert_eq!(g.data(s), &[1.0, 2.0, 4.0, 5.0]);
        let c = g.concat(&[s, x], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 5]);
        assert_eq!(g.data(c), &[1.0, 2.0, 0.0, 1.0, 2.0, 4.0, 5.0, 3.0, 4.0, 5.0]);
        assert!(g.transpose(x, &[0, 0]).is_err());
        assert!(g.add(x, t).is_err());
    }

    #[test]
    fn complex_abs_is_zero_safe() {
        let mut g = Graph::new();
        let re = g.leaf(Tensor::from_vec(vec![0.0, 3.0]));
        let im = g.leaf(Tensor::from_vec(vec![0.0, 4.0]));
        let m = g.complex_abs(re, im).unwrap();
        assert_eq!(g.data(m), &[0.0, 5.0]);
        let l = g.sum(m);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(re).unwrap(), &[0.0, 0.6]);
        assert_eq!(grads.get(im).unwrap(), &[0.0, 0.8]);
    }
}
