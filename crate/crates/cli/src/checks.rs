//! Finite-difference checks of every differentiable op and of the
//! generator end to end.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavehax_autodiff::gradcheck::{check_inputs, check_params, GradCheckReport};
use wavehax_autodiff::{Conv1dSpec, Conv2dSpec, Graph, Tensor, Var, LAYER_NORM_EPS};
use wavehax_core::signal::MelConfig;
use wavehax_core::Result;
use wavehax_model::loss::MelLoss;
use wavehax_model::maps::{IstftMap, MelMap, StftMap};
use wavehax_model::{Generator, GeneratorConfig};

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl Check {
    pub fn passes(&self) -> bool {
        self.report.passes(TOLERANCE)
    }
}

struct Inputs {
    rng: ChaCha8Rng,
}

impl Inputs {
    fn uniform(&mut self, shape: &[usize]) -> Tensor {
        Tensor::uniform(shape, 1.0, &mut self.rng)
    }

    /// Values at least 0.1 away from zero, for ops with a kink there.
    fn signed(&mut self, shape: &[usize]) -> Tensor {
        let mut t = self.uniform(shape);
        for v in t.data_mut() {
            *v = v.signum() * (v.abs() + 0.1);
        }
        t
    }

    fn positive(&mut self, shape: &[usize]) -> Tensor {
        let mut t = self.uniform(shape);
        for v in t.data_mut() {
            *v = v.abs() + 0.1;
        }
        t
    }
}

/// Reduce with a fixed random weighting so every output element counts.
fn project(g: &mut Graph, y: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(Tensor::new(g.shape(y).to_vec(), weights.data()[..g.value(y).numel()].to_vec())?);
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn micro_mel() -> MelConfig {
    MelConfig {
        sample_rate: 8000,
        fft_size: 64,
        hop: 16,
        bands: 6,
        fmin: 0.0,
        fmax: 4000.0,
        log_floor: 1e-5,
    }
}

/// Run every check; the list order is stable.
pub fn gradient_suite(seed: u64) -> Result<Vec<Check>> {
    let mut inp = Inputs {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let weights = inp.uniform(&[4096]);
    let mut out = Vec::new();
    let mut run = |name: &'static str, inputs: Vec<Tensor>, f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>| -> Result<()> {
        let report = check_inputs(&inputs, |g, v| {
            let y = f(g, v)?;
            project(g, y, &weights)
        }, EPS)?;
        out.push(Check { name, report });
        Ok(())
    };

    let s = [3, 4];
    run("add", vec![inp.uniform(&s), inp.uniform(&s)], &|g, v| g.add(v[0], v[1]))?;
    run("sub", vec![inp.uniform(&s), inp.uniform(&s)], &|g, v| g.sub(v[0], v[1]))?;
    run("mul", vec![inp.uniform(&s), inp.uniform(&s)], &|g, v| g.mul(v[0], v[1]))?;
    run("scale", vec![inp.uniform(&s)], &|g, v| Ok(g.scale(v[0], -1.7)))?;
    run("add_scalar", vec![inp.uniform(&s)], &|g, v| Ok(g.add_scalar(v[0], 0.3)))?;
    run("neg", vec![inp.uniform(&s)], &|g, v| Ok(g.neg(v[0])))?;
    run("abs", vec![inp.signed(&s)], &|g, v| Ok(g.abs(v[0])))?;
    run("relu", vec![inp.signed(&s)], &|g, v| Ok(g.relu(v[0])))?;
    run("leaky_relu", vec![inp.signed(&s)], &|g, v| Ok(g.leaky_relu(v[0], 0.1)))?;
    run("gelu", vec![inp.uniform(&s)], &|g, v| Ok(g.gelu(v[0])))?;
    run("square", vec![inp.uniform(&s)], &|g, v| Ok(g.square(v[0])))?;
    run("tanh", vec![inp.uniform(&s)], &|g, v| Ok(g.tanh(v[0])))?;
    run("log_eps", vec![inp.positive(&s)], &|g, v| Ok(g.log_eps(v[0], 1e-5)))?;
    run("complex_abs", vec![inp.signed(&s), inp.signed(&s)], &|g, v| g.complex_abs(v[0], v[1]))?;
    run("sum", vec![inp.uniform(&s)], &|g, v| Ok(g.sum(v[0])))?;
    run("mean", vec![inp.uniform(&s)], &|g, v| Ok(g.mean(v[0])))?;
    run("reshape", vec![inp.uniform(&[2, 6])], &|g, v| g.reshape(v[0], &[3, 4]))?;
    run("transpose", vec![inp.uniform(&[2, 3, 4])], &|g, v| g.transpose(v[0], &[2, 0, 1]))?;
    run("slice", vec![inp.uniform(&[2, 5, 3])], &|g, v| g.slice(v[0], 1, 1, 4))?;
    run("concat", vec![inp.uniform(&[2, 2, 3]), inp.uniform(&[2, 1, 3])], &|g, v| g.concat(&[v[0], v[1]], 1))?;
    run("linear", vec![inp.uniform(&[3, 5]), inp.uniform(&[4, 5]), inp.uniform(&[4])], &|g, v| {
        g.linear(v[0], v[1], Some(v[2]))
    })?;
    run("conv1d", vec![inp.uniform(&[2, 3, 9]), inp.uniform(&[4, 3, 3]), inp.uniform(&[4])], &|g, v| {
        g.conv1d(v[0], v[1], Some(v[2]), Conv1dSpec::same(3)?)
    })?;
    run("conv1d_strided_grouped", vec![inp.uniform(&[1, 4, 11]), inp.uniform(&[2, 2, 5])], &|g, v| {
        g.conv1d(v[0], v[1], None, Conv1dSpec { stride: 2, padding: 1, groups: 2 })
    })?;
    run("conv2d", vec![inp.uniform(&[2, 2, 6, 5]), inp.uniform(&[3, 2, 3, 3]), inp.uniform(&[3])], &|g, v| {
        g.conv2d(v[0], v[1], Some(v[2]), Conv2dSpec::same((3, 3), 1)?)
    })?;
    run("conv2d_depthwise", vec![inp.uniform(&[1, 4, 7, 7]), inp.uniform(&[4, 1, 7, 7])], &|g, v| {
        g.conv2d(v[0], v[1], None, Conv2dSpec::same((7, 7), 4)?)
    })?;
    run("conv2d_strided", vec![inp.uniform(&[1, 2, 9, 3]), inp.uniform(&[2, 2, 5, 1])], &|g, v| {
        g.conv2d(v[0], v[1], None, Conv2dSpec { stride: (3, 1), padding: (2, 0), groups: 1 })
    })?;
    run(
        "layer_norm",
        vec![inp.uniform(&[2, 5, 3, 2]), inp.uniform(&[5]), inp.uniform(&[5])],
        &|g, v| g.layer_norm(v[0], v[1], v[2], LAYER_NORM_EPS),
    )?;
    let stft = Arc::new(StftMap::new(32, 16, 64)?);
    run("stft", vec![inp.uniform(&[2, 64])], &|g, v| g.linear_map(v[0], stft.clone()))?;
    let istft = Arc::new(IstftMap::new(32, 16, 4)?);
    run("istft", vec![inp.uniform(&[1, 2 * 17 * 4])], &|g, v| g.linear_map(v[0], istft.clone()))?;
    let mel = Arc::new(MelMap::new(&micro_mel(), 3)?);
    run("mel_filterbank", vec![inp.positive(&[1, 33 * 3])], &|g, v| g.linear_map(v[0], mel.clone()))?;

    // end to end: mel loss of the micro generator against every parameter
    let cfg = GeneratorConfig::micro();
    let gen = Generator::new(cfg.clone(), seed)?;
    let n = 6;
    let t = n * cfg.hop;
    let prior = Tensor::uniform(&[1, t], 0.5, &mut inp.rng);
    let target = Tensor::uniform(&[1, t], 0.5, &mut inp.rng);
    let mel_in = Tensor::uniform(&[1, cfg.mel_bands, n], 2.0, &mut inp.rng);
    let loss = MelLoss::new(&micro_mel(), t)?;
    let report = check_params(
        gen.params(),
        |g, store| {
            let m = g.constant(mel_in.clone());
            let y = gen.forward_graph(g, store, &prior, m, true)?;
            let x = g.constant(target.clone());
            loss.loss(g, y, x)
        },
        EPS,
        1,
    )?;
    out.push(Check {
        name: "generator_micro",
        report,
    });
    Ok(out)
}
