//! Complex-spectrogram generator.
//!
//! The harmonic prior's STFT and the mel features are fused into a
//! `[B, 5, F, N]` map, processed at a fixed time-frequency resolution by
//! ConvNeXt-style 2D blocks and turned into real/imaginary STFT planes that
//! the inverse STFT maps back to `hop·N` samples. No layer changes the frame
//! rate, so nonlinearities never act on an upsampled time axis.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavehax_autodiff::{Conv1dSpec, Conv2dSpec, Graph, ParamId, ParamStore, Tensor, Var, LAYER_NORM_EPS};
use wavehax_core::signal::{MelSpectrogram, StftPlan, Waveform};
use wavehax_core::{Error, Result};

use crate::config::GeneratorConfig;
use crate::maps::IstftMap;

/// Prior feature channels after the frequency-axis convolution.
pub const PRIOR_CHANNELS: usize = 4;

/// Use a stored parameter either as a trainable node or as a constant.
pub(crate) fn bind(g: &mut Graph, store: &ParamStore, id: ParamId, trainable: bool) -> Var {
    if trainable {
        g.param(store, id)
    } else {
        g.constant(store.value(id).clone())
    }
}

#[derive(Debug, Clone)]
struct Block {
    pw1: (ParamId, ParamId),
    dw: (ParamId, ParamId),
    norm: (ParamId, ParamId),
    pw2: (ParamId, ParamId),
}

#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    params: ParamStore,
    prior_conv: (ParamId, ParamId),
    mel_conv: (ParamId, ParamId),
    in_proj: (ParamId, ParamId),
    in_norm: (ParamId, ParamId),
    blocks: Vec<Block>,
    out_norm: (ParamId, ParamId),
    head: (ParamId, ParamId),
}

fn conv_pair(
    s: &mut ParamStore,
    name: &str,
    shape: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(ParamId, ParamId)> {
    let w = s.add_kaiming(&format!("{name}.weight"), shape, rng)?;
    let fan_in: usize = shape[1..].iter().product();
    let b = s.add(
        &format!("{name}.bias"),
        Tensor::uniform(&[shape[0]], 1.0 / (fan_in as f64).sqrt(), rng),
    )?;
    Ok((w, b))
}

fn norm_pair(s: &mut ParamStore, name: &str, c: usize) -> Result<(ParamId, ParamId)> {
    Ok((
        s.add(&format!("{name}.scale"), Tensor::full(&[c], 1.0))?,
        s.add(&format!("{name}.shift"), Tensor::zeros(&[c]))?,
    ))
}

impl Generator {
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let (f, c, h, k1, kd) = (
            cfg.freq_bins(),
            cfg.channels,
            cfg.hidden,
            cfg.conv1d_kernel,
            cfg.depthwise_kernel,
        );
        let prior_conv = conv_pair(&mut s, "prior_conv", &[PRIOR_CHANNELS, 2, k1, 1], &mut rng)?;
        let mel_conv = conv_pair(&mut s, "mel_conv", &[f, cfg.mel_bands, k1], &mut rng)?;
        let in_proj = conv_pair(&mut s, "in_proj", &[c, PRIOR_CHANNELS + 1, 1, 1], &mut rng)?;
        let in_norm = norm_pair(&mut s, "in_norm", c)?;
        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        for i in 0..cfg.n_blocks {
            blocks.push(Block {
                pw1: conv_pair(&mut s, &format!("blocks.{i}.pw1"), &[h, c, 1, 1], &mut rng)?,
                dw: conv_pair(&mut s, &format!("blocks.{i}.dw"), &[h, 1, kd, kd], &mut rng)?,
                norm: norm_pair(&mut s, &format!("blocks.{i}.norm"), h)?,
                pw2: conv_pair(&mut s, &format!("blocks.{i}.pw2"), &[c, h, 1, 1], &mut rng)?,
            });
        }
        let out_norm = norm_pair(&mut s, "out_norm", c)?;
        let head = conv_pair(&mut s, "head", &[2, c, 1, 1], &mut rng)?;
        Ok(Self {
            cfg,
            params: s,
            prior_conv,
            mel_conv,
            in_proj,
            in_norm,
            blocks,
            out_norm,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Zero the output projection of block `i`, which turns it into the identity.
    pub fn zero_block_output(&mut self, i: usize) -> Result<()> {
        let b = self
            .blocks
            .get(i)
            .ok_or_else(|| Error::invalid(format!("no block {i}")))?
            .clone();
        for id in [b.pw2.0, b.pw2.1] {
            self.params.value_mut(id).data_mut().fill(0.0);
        }
        Ok(())
    }

    /// STFT planes of a batch of priors, `[B, 2, F, N]` (no gradient).
    pub fn prior_spectrum(&self, prior: &Tensor) -> Result<Tensor> {
        let [b, t] = prior.shape() else {
            return Err(Error::invalid(format!(
                "prior batch must be [B, T], got {:?}",
                prior.shape()
            )));
        };
        let plan = StftPlan::new(self.cfg.fft_size, self.cfg.hop)?;
        if *t == 0 || t % self.cfg.hop != 0 {
            return Err(Error::invalid(format!(
                "prior length {t} is not a positive multiple of hop {}",
                self.cfg.hop
            )));
        }
        let (n, f) = (t / self.cfg.hop, self.cfg.freq_bins());
        let mut data = vec![0.0; b * 2 * f * n];
        for (bi, row) in prior.data().chunks(*t).enumerate() {
            let spec = plan.analyze(row)?;
            let base = bi * 2 * f * n;
            for m in 0..n {
                for k in 0..f {
                    let c = spec[m * f + k];
                    data[base + k * n + m] = c.re;
                    data[base + (f + k) * n + m] = c.im;
                }
            }
        }
        Tensor::new(vec![*b, 2, f, n], data)
    }

    /// Prior STFT convolved along frequency: `[B, 4, F, N]`.
    pub fn encode_prior(&self, g: &mut Graph, store: &ParamStore, prior: &Tensor, trainable: bool) -> Result<Var> {
        let spec = g.constant(self.prior_spectrum(prior)?);
        let w = bind(g, store, self.prior_conv.0, trainable);
        let b = bind(g, store, self.prior_conv.1, trainable);
        let k = self.cfg.conv1d_kernel;
        g.conv2d(
            spec,
            w,
            Some(b),
            Conv2dSpec {
                stride: (1, 1),
                padding: (k / 2, 0),
                groups: 1,
            },
        )
    }

    /// Mel features `[B, bands, N]` convolved along time to `[B, 1, F, N]`.
    pub fn encode_mel(&self, g: &mut Graph, store: &ParamStore, mel: Var, trainable: bool) -> Result<Var> {
        let shape = g.shape(mel).to_vec();
        let [b, bands, n] = shape.as_slice() else {
            return Err(Error::invalid(format!("mel batch must be [B, bands, N], got {shape:?}")));
        };
        if *bands != self.cfg.mel_bands {
            return Err(Error::invalid(format!(
                "mel has {bands} bands, generator expects {}",
                self.cfg.mel_bands
            )));
        }
        let w = bind(g, store, self.mel_conv.0, trainable);
        let bias = bind(g, store, self.mel_conv.1, trainable);
        let y = g.conv1d(mel, w, Some(bias), Conv1dSpec::same(self.cfg.conv1d_kernel)?)?;
        g.reshape(y, &[*b, 1, self.cfg.freq_bins(), *n])
    }

    fn pointwise(&self, g: &mut Graph, store: &ParamStore, x: Var, p: (ParamId, ParamId), trainable: bool) -> Result<Var> {
        let w = bind(g, store, p.0, trainable);
        let b = bind(g, store, p.1, trainable);
        g.conv2d(x, w, Some(b), Conv2dSpec::same((1, 1), 1)?)
    }

    fn norm(&self, g: &mut Graph, store: &ParamStore, x: Var, p: (ParamId, ParamId), trainable: bool) -> Result<Var> {
        let s = bind(g, store, p.0, trainable);
        let b = bind(g, store, p.1, trainable);
        g.layer_norm(x, s, b, LAYER_NORM_EPS)
    }

    fn block(&self, g: &mut Graph, store: &ParamStore, x: Var, blk: &Block, trainable: bool) -> Result<Var> {
        let h = self.pointwise(g, store, x, blk.pw1, trainable)?;
        let w = bind(g, store, blk.dw.0, trainable);
        let b = bind(g, store, blk.dw.1, trainable);
        let kd = self.cfg.depthwise_kernel;
        let h = g.conv2d(h, w, Some(b), Conv2dSpec::same((kd, kd), self.cfg.hidden)?)?;
        let h = self.norm(g, store, h, blk.norm, trainable)?;
        let h = g.gelu(h);
        let h = self.pointwise(g, store, h, blk.pw2, trainable)?;
        g.add(x, h)
    }

    /// Real/imaginary planes `[B, 2, F, N]` before the inverse STFT.
    pub fn spectrum_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        prior: &Tensor,
        mel: Var,
        trainable: bool,
    ) -> Result<Var> {
        let p = self.encode_prior(g, store, prior, trainable)?;
        let m = self.encode_mel(g, store, mel, trainable)?;
        if g.shape(p)[0] != g.shape(m)[0] || g.shape(p)[3] != g.shape(m)[3] {
            return Err(Error::invalid(format!(
                "prior gives {:?} but mel gives {:?} (batch and frames must agree)",
                g.shape(p),
                g.shape(m)
            )));
        }
        let x = g.concat(&[p, m], 1)?;
        let x = self.pointwise(g, store, x, self.in_proj, trainable)?;
        let mut x = self.norm(g, store, x, self.in_norm, trainable)?;
        for blk in &self.blocks {
            x = self.block(g, store, x, blk, trainable)?;
        }
        let x = self.norm(g, store, x, self.out_norm, trainable)?;
        self.pointwise(g, store, x, self.head, trainable)
    }

    /// Waveform batch `[B, hop·N]`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        prior: &Tensor,
        mel: Var,
        trainable: bool,
    ) -> Result<Var> {
        let spec = self.spectrum_graph(g, store, prior, mel, trainable)?;
        let shape = g.shape(spec).to_vec();
        let (b, n) = (shape[0], shape[3]);
        let flat = g.reshape(spec, &[b, 2 * shape[2] * n])?;
        let map = Arc::new(IstftMap::new(self.cfg.fft_size, self.cfg.hop, n)?);
        g.linear_map(flat, map)
    }

    /// Inference on one utterance.
    pub fn forward(&self, prior: &Waveform, mel: &MelSpectrogram) -> Result<Waveform> {
        if prior.sample_rate() != self.cfg.sample_rate {
            return Err(Error::invalid(format!(
                "prior is sampled at {} Hz, generator expects {} Hz",
                prior.sample_rate(),
                self.cfg.sample_rate
            )));
        }
        let n = prior.len() / self.cfg.hop;
        if mel.frames != n || prior.len() % self.cfg.hop != 0 {
            return Err(Error::invalid(format!(
                "prior of {} samples gives {n} frames at hop {}, mel has {} frames",
                prior.len(),
                self.cfg.hop,
                mel.frames
            )));
        }
        let mut g = Graph::new();
        let pt = Tensor::new(vec![1, prior.len()], prior.samples().to_vec())?;
        let mv = g.constant(mel_tensor(mel)?);
        let y = self.forward_graph(&mut g, &self.params, &pt, mv, false)?;
        Waveform::new(g.data(y).to_vec(), self.cfg.sample_rate)
    }
}

/// `[1, bands, N]` tensor from a frames-major mel spectrogram.
pub fn mel_tensor(mel: &MelSpectrogram) -> Result<Tensor> {
    let (n, b) = (mel.frames, mel.bands);
    let mut data = vec![0.0; n * b];
    for m in 0..n {
        for k in 0..b {
            data[k * n + m] = mel.at(m, k);
        }
    }
    Tensor::new(vec![1, b, n], data)
}
