//! Reduced discriminator bank: two log-magnitude spectrogram discriminators
//! and two period discriminators.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavehax_autodiff::{Conv2dSpec, Graph, ParamId, ParamStore, Tensor, Var};
use wavehax_core::{Error, Result};

use crate::generator::bind;
use crate::maps::StftMap;

pub const LEAKY_SLOPE: f64 = 0.1;
const LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubKind {
    Spectral { fft_size: usize, hop: usize },
    Period { period: usize },
}

#[derive(Debug, Clone)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
    spec: Conv2dSpec,
}

#[derive(Debug, Clone)]
struct Sub {
    kind: SubKind,
    hidden: Vec<Layer>,
    out: Layer,
}

/// Logits and intermediate activations of one subdiscriminator.
#[derive(Debug, Clone)]
pub struct DiscOutput {
    pub logits: Var,
    pub features: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorBank {
    params: ParamStore,
    subs: Vec<Sub>,
}

fn add_layer(
    s: &mut ParamStore,
    name: &str,
    shape: [usize; 4],
    spec: Conv2dSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Layer> {
    let weight = s.add_kaiming(&format!("{name}.weight"), &shape, rng)?;
    let bias = s.add(&format!("{name}.bias"), Tensor::zeros(&[shape[0]]))?;
    Ok(Layer { weight, bias, spec })
}

impl DiscriminatorBank {
    /// Spectrogram discriminators at FFT 512/1024 (quarter hops) and period
    /// discriminators at periods 2 and 3.
    pub fn toy(seed: u64) -> Result<Self> {
        Self::new(
            &[
                SubKind::Spectral { fft_size: 512, hop: 128 },
                SubKind::Spectral { fft_size: 1024, hop: 256 },
                SubKind::Period { period: 2 },
                SubKind::Period { period: 3 },
            ],
            8,
            seed,
        )
    }

    pub fn new(kinds: &[SubKind], width: usize, seed: u64) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::invalid("discriminator bank needs at least one member"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let mut subs = Vec::new();
        for (i, &kind) in kinds.iter().enumerate() {
            let name = |l: &str| format!("{i}.{l}");
            let (hidden, out) = match kind {
                SubKind::Spectral { .. } => {
                    let pad = Conv2dSpec::same((3, 3), 1)?;
                    let down = Conv2dSpec { stride: (2, 1), padding: (1, 1), groups: 1 };
                    (
                        vec![
                            add_layer(&mut s, &name("conv0"), [width, 1, 3, 3], pad, &mut rng)?,
                            add_layer(&mut s, &name("conv1"), [width, width, 3, 3], down, &mut rng)?,
                            add_layer(&mut s, &name("conv2"), [width, width, 3, 3], down, &mut rng)?,
                        ],
                        add_layer(&mut s, &name("out"), [1, width, 3, 3], pad, &mut rng)?,
                    )
                }
                SubKind::Period { period } => {
                    if period < 2 {
                        return Err(Error::invalid("period must be at least 2"));
                    }
                    let down = Conv2dSpec { stride: (3, 1), padding: (2, 0), groups: 1 };
                    let keep = Conv2dSpec { stride: (1, 1), padding: (2, 0), groups: 1 };
                    (
                        vec![
                            add_layer(&mut s, &name("conv0"), [width, 1, 5, 1], down, &mut rng)?,
                            add_layer(&mut s, &name("conv1"), [2 * width, width, 5, 1], down, &mut rng)?,
                            add_layer(&mut s, &name("conv2"), [2 * width, 2 * width, 5, 1], keep, &mut rng)?,
                        ],
                        add_layer(
                            &mut s,
                            &name("out"),
                            [1, 2 * width, 3, 1],
                            Conv2dSpec { stride: (1, 1), padding: (1, 0), groups: 1 },
                            &mut rng,
                        )?,
                    )
                }
            };
            subs.push(Sub { kind, hidden, out });
        }
        Ok(Self { params: s, subs })
    }

    pub fn kinds(&self) -> Vec<SubKind> {
        self.subs.iter().map(|s| s.kind).collect()
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn input_map(&self, g: &mut Graph, kind: SubKind, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let [b, t] = shape.as_slice() else {
            return Err(Error::invalid(format!("discriminator input must be [B, T], got {shape:?}")));
        };
        let pad_to = |g: &mut Graph, multiple: usize| -> Result<(Var, usize)> {
            let pad = (multiple - t % multiple) % multiple;
            if pad == 0 {
                return Ok((x, *t));
            }
            let z = g.constant(Tensor::zeros(&[*b, pad]));
            Ok((g.concat(&[x, z], 1)?, t + pad))
        };
        match kind {
            SubKind::Spectral { fft_size, hop } => {
                let (x, len) = pad_to(g, hop)?;
                let map = Arc::new(StftMap::new(fft_size, hop, len)?);
                let (k, m) = (map.bins(), map.frames());
                let spec = g.linear_map(x, map)?;
                let re = g.slice(spec, 1, 0, 1)?;
                let im = g.slice(spec, 1, 1, 2)?;
                let mag = g.complex_abs(re, im)?;
                let logmag = g.log_eps(mag, LOG_FLOOR);
                g.reshape(logmag, &[*b, 1, k, m])
            }
            SubKind::Period { period } => {
                let (x, len) = pad_to(g, period)?;
                g.reshape(x, &[*b, 1, len / period, period])
            }
        }
    }

    /// Run every subdiscriminator on a waveform batch `[B, T]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, trainable: bool) -> Result<Vec<DiscOutput>> {
        let mut outs = Vec::with_capacity(self.subs.len());
        for sub in &self.subs {
            let mut h = self.input_map(g, sub.kind, x)?;
            let mut features = Vec::with_capacity(sub.hidden.len());
            for l in &sub.hidden {
                let w = bind(g, store, l.weight, trainable);
                let b = bind(g, store, l.bias, trainable);
                let y = g.conv2d(h, w, Some(b), l.spec)?;
                h = g.leaky_relu(y, LEAKY_SLOPE);
                features.push(h);
            }
            let w = bind(g, store, sub.out.weight, trainable);
            let b = bind(g, store, sub.out.bias, trainable);
            let logits = g.conv2d(h, w, Some(b), sub.out.spec)?;
            outs.push(DiscOutput { logits, features });
        }
        Ok(outs)
    }
}
