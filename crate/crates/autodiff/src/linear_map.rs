use std::sync::Arc;

use wavehax_core::{Error, Result};

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// A fixed linear operator `A` with its adjoint `Aᵀ`, usable as a graph op.
pub trait LinearMap {
    fn in_len(&self) -> usize;
    /// Shape of one output item.
    fn out_shape(&self) -> Vec<usize>;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;
}

impl Graph {
    /// Apply `map` to each of the `numel(x) / in_len` consecutive rows of `x`.
    /// The output shape is `[rows, ...out_shape]`.
    pub fn linear_map(&mut self, x: Var, map: Arc<dyn LinearMap>) -> Result<Var> {
        let n = self.value(x).numel();
        let len = map.in_len();
        if len == 0 || n % len != 0 {
            return Err(Error::invalid(format!(
                "linear map takes rows of {len} values, input has {n}"
            )));
        }
        let rows = n / len;
        let out: Vec<f64> = self
            .data(x)
            .chunks(len)
            .flat_map(|r| map.apply(r))
            .collect();
        let mut shape = vec![rows];
        shape.extend(map.out_shape());
        let out_len = out.len() / rows;
        Ok(self.push(
            Tensor::new(shape, out)?,
            &[x],
            Box::new(move |g, _| vec![Some(g.chunks(out_len).flat_map(|r| map.adjoint(r)).collect())]),
        ))
    }
}
