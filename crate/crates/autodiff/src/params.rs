use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use wavehax_core::{Error, Result};

use crate::tensor::Tensor;

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

/// Identifies one parameter of one [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    tag: u64,
    index: usize,
}

/// Named trainable tensors and their accumulated gradients.
#[derive(Debug, Clone)]
pub struct ParamStore {
    tag: u64,
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Vec<f64>>,
    lookup: HashMap<String, usize>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.lookup.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
        }
        let index = self.values.len();
        self.lookup.insert(name.to_string(), index);
        self.names.push(name.to_string());
        self.grads.push(vec![0.0; value.numel()]);
        self.values.push(value);
        Ok(ParamId {
            tag: self.tag,
            index,
        })
    }

    /// Convolution/linear weight with uniform fan-in initialization, `±1/√fan_in`.
    pub fn add_kaiming(&mut self, name: &str, shape: &[usize], rng: &mut impl Rng) -> Result<ParamId> {
        let fan_in: usize = shape.iter().skip(1).product::<usize>().max(1);
        self.add(name, Tensor::uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&index| ParamId {
            tag: self.tag,
            index,
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(|index| ParamId {
            tag: self.tag,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.index]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.index]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.index]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.index]
    }

    pub(crate) fn add_grad(&mut self, id: ParamId, g: &[f64]) {
        if id.tag == self.tag {
            self.grads[id.index]
                .iter_mut()
                .zip(g)
                .for_each(|(a, b)| *a += b);
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale gradients so their global L2 norm is at most `max_norm`;
    /// returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm {
            let s = max_norm / norm;
            self.grads.iter_mut().flatten().for_each(|g| *g *= s);
        }
        norm
    }

    /// `(name, value)` pairs in insertion order.
    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrite a parameter; the shape must match.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?;
        if self.values[id.index].shape() != value.shape() {
            return Err(Error::invalid(format!(
                "parameter `{name}` has shape {:?}, got {:?}",
                self.values[id.index].shape(),
                value.shape()
            )));
        }
        self.values[id.index] = value;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_bounds_the_norm() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::zeros(&[3])).unwrap();
        s.add_grad(id, &[30.0, 40.0, 0.0]);
        assert_eq!(s.clip_grad_norm(10.0), 50.0);
        assert!((s.grad_norm() - 10.0).abs() < 1e-12);
        s.zero_grad();
        assert_eq!(s.grad_norm(), 0.0);
    }

    #[test]
    fn names_are_unique_and_shapes_checked() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::zeros(&[2])).unwrap();
        assert!(s.add("a", Tensor::zeros(&[2])).is_err());
        assert!(s.set("a", Tensor::zeros(&[3])).is_err());
        assert!(s.set("b", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn foreign_ids_are_ignored() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        let ia = a.add("w", Tensor::zeros(&[1])).unwrap();
        b.add("w", Tensor::zeros(&[1])).unwrap();
        b.add_grad(ia, &[1.0]);
        assert_eq!(b.grad_norm(), 0.0);
    }
}
