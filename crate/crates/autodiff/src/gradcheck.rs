//! Central finite-difference gradient checks.

use wavehax_core::{Error, Result};

use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Comparison of analytic and numerical gradients.
///
/// `relative_error` is `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)` over all checked entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_abs_error: f64,
    pub relative_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.relative_error < tol
    }
}

#[derive(Default)]
struct Accumulator {
    checked: usize,
    max_abs: f64,
    diff2: f64,
    a2: f64,
    n2: f64,
}

impl Accumulator {
    fn push(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        self.max_abs = self.max_abs.max((analytic - numeric).abs());
        self.diff2 += (analytic - numeric).powi(2);
        self.a2 += analytic * analytic;
        self.n2 += numeric * numeric;
    }

    fn report(self) -> GradCheckReport {
        let scale = self.a2.max(self.n2).sqrt();
        GradCheckReport {
            checked: self.checked,
            max_abs_error: self.max_abs,
            relative_error: if scale == 0.0 { 0.0 } else { self.diff2.sqrt() / scale },
        }
    }
}

fn scalar(g: &Graph, v: Var) -> Result<f64> {
    g.value(v).item()
}

/// Check the gradient of `f` with respect to every entry of every input.
pub fn check_inputs<F>(inputs: &[Tensor], f: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let l = f(&mut g, &vars)?;
        scalar(&g, l)
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let mut acc = Accumulator::default();
    let mut work = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[k].numel()];
        let analytic = grads.get(v).unwrap_or(&zeros).to_vec();
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + eps;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - eps;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            acc.push(analytic[i], (up - down) / (2.0 * eps));
        }
    }
    Ok(acc.report())
}

/// Check parameter gradients of `f`. `stride` > 1 checks every `stride`-th
/// entry of each parameter (always including the first).
pub fn check_params<F>(store: &ParamStore, f: F, eps: f64, stride: usize) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    if stride == 0 {
        return Err(Error::invalid("gradcheck stride must be positive"));
    }
    let mut base = store.clone();
    base.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, &base)?;
    let grads = g.backward(loss)?;
    g.accumulate(&grads, &mut base);
    let mut work = base.clone();
    let mut acc = Accumulator::default();
    let ids: Vec<_> = base.ids().collect();
    for id in ids {
        let n = base.value(id).numel();
        for i in (0..n).step_by(stride) {
            let orig = base.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + eps;
            let mut gu = Graph::new();
            let lu = f(&mut gu, &work)?;
            let up = scalar(&gu, lu)?;
            work.value_mut(id).data_mut()[i] = orig - eps;
            let mut gd = Graph::new();
            let ld = f(&mut gd, &work)?;
            let down = scalar(&gd, ld)?;
            work.value_mut(id).data_mut()[i] = orig;
            acc.push(base.grad(id)[i], (up - down) / (2.0 * eps));
        }
    }
    Ok(acc.report())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_gradient() {
        // detach hides the dependency from backward, so analytic = 0
        let r = check_inputs(
            &[Tensor::from_vec(vec![1.0, 2.0])],
            |g, v| {
                let d = g.detach(v[0]);
                let s = g.square(d);
                Ok(g.sum(s))
            },
            1e-4,
        )
        .unwrap();
        assert!(!r.passes(1e-4));
    }

    #[test]
    fn passes_on_a_smooth_function() {
        let r = check_inputs(
            &[Tensor::from_vec(vec![0.3, -1.2, 2.0])],
            |g, v| {
                let t = g.tanh(v[0]);
                let s = g.square(t);
                Ok(g.sum(s))
            },
            1e-4,
        )
        .unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.passes(1e-6), "{r:?}");
    }
}
