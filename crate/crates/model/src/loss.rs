use std::sync::Arc;

use wavehax_autodiff::{Graph, Tensor, Var};
use wavehax_core::signal::{MelConfig, Waveform};
use wavehax_core::{Error, Result};

use crate::disc::DiscOutput;
use crate::maps::{MelMap, StftMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mel: f64,
    pub adv: f64,
    pub fm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mel: 45.0,
            adv: 1.0,
            fm: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.mel, self.adv, self.fm].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid(format!("loss weights must be non-negative: {self:?}")));
        }
        Ok(())
    }

    pub fn combine(&self, mel: f64, adv: f64, fm: f64) -> f64 {
        self.mel * mel + self.adv * adv + self.fm * fm
    }
}

/// L1 distance between log-mel spectrograms of waveform batches `[B, T]`.
pub struct MelLoss {
    len: usize,
    floor: f64,
    stft: Arc<StftMap>,
    mel: Arc<MelMap>,
}

impl MelLoss {
    pub fn new(cfg: &MelConfig, len: usize) -> Result<Self> {
        cfg.validate()?;
        let stft = Arc::new(StftMap::new(cfg.fft_size, cfg.hop, len)?);
        let mel = Arc::new(MelMap::new(cfg, stft.frames())?);
        Ok(Self {
            len,
            floor: cfg.log_floor,
            stft,
            mel,
        })
    }

    /// `ln(mel(|STFT(x)|) + floor)`, shape `[B, bands, frames]`.
    pub fn log_mel(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.len {
            return Err(Error::invalid(format!(
                "mel loss expects [B, {}] waveforms, got {shape:?}",
                self.len
            )));
        }
        let spec = g.linear_map(x, self.stft.clone())?;
        let re = g.slice(spec, 1, 0, 1)?;
        let im = g.slice(spec, 1, 1, 2)?;
        let mag = g.complex_abs(re, im)?;
        let mel = g.linear_map(mag, self.mel.clone())?;
        Ok(g.log_eps(mel, self.floor))
    }

    pub fn loss(&self, g: &mut Graph, x_hat: Var, target: Var) -> Result<Var> {
        if g.shape(x_hat) != g.shape(target) {
            return Err(Error::invalid(format!(
                "mel loss: length mismatch {:?} vs {:?}",
                g.shape(x_hat),
                g.shape(target)
            )));
        }
        let a = self.log_mel(g, x_hat)?;
        let b = self.log_mel(g, target)?;
        let d = g.sub(a, b)?;
        let d = g.abs(d);
        Ok(g.mean(d))
    }
}

/// Mel loss value between two single waveforms.
pub fn mel_loss(x: &Waveform, x_hat: &Waveform, cfg: &MelConfig) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::invalid(format!(
            "mel loss: length mismatch {} vs {}",
            x.len(),
            x_hat.len()
        )));
    }
    let ml = MelLoss::new(cfg, x.len())?;
    let mut g = Graph::new();
    let a = g.constant(Tensor::new(vec![1, x.len()], x.samples().to_vec())?);
    let b = g.constant(Tensor::new(vec![1, x.len()], x_hat.samples().to_vec())?);
    let l = ml.loss(&mut g, b, a)?;
    g.value(l).item()
}

fn check_bank(n: usize, weights: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("empty discriminator bank"));
    }
    if weights.len() != n {
        return Err(Error::invalid(format!(
            "{} subdiscriminator weights for {n} members",
            weights.len()
        )));
    }
    Ok(())
}

fn hinge(g: &mut Graph, x: Var, sign: f64) -> Var {
    // mean(max(0, 1 + sign·x))
    let s = g.scale(x, sign);
    let s = g.add_scalar(s, 1.0);
    let r = g.relu(s);
    g.mean(r)
}

fn weighted_sum(g: &mut Graph, terms: Vec<Var>, weights: &[f64]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for (t, &w) in terms.into_iter().zip(weights) {
        let t = if w == 1.0 { t } else { g.scale(t, w) };
        acc = Some(match acc {
            None => t,
            Some(a) => g.add(a, t)?,
        });
    }
    acc.ok_or_else(|| Error::invalid("no loss terms"))
}

/// `Σ_k w_k [mean(max(0, 1 − D_k(x))) + mean(max(0, 1 + D_k(x̂)))]`.
pub fn disc_loss_weighted(g: &mut Graph, real: &[Var], fake: &[Var], weights: &[f64]) -> Result<Var> {
    check_bank(real.len(), weights)?;
    if fake.len() != real.len() {
        return Err(Error::invalid("real and fake logits come from different banks"));
    }
    let mut terms = Vec::with_capacity(real.len());
    for (&r, &f) in real.iter().zip(fake) {
        let a = hinge(g, r, -1.0);
        let b = hinge(g, f, 1.0);
        terms.push(g.add(a, b)?);
    }
    weighted_sum(g, terms, weights)
}

pub fn disc_loss(g: &mut Graph, real: &[Var], fake: &[Var]) -> Result<Var> {
    disc_loss_weighted(g, real, fake, &vec![1.0; real.len()])
}

/// `Σ_k w_k mean(max(0, 1 − D_k(x̂)))`.
pub fn adv_loss_weighted(g: &mut Graph, fake: &[Var], weights: &[f64]) -> Result<Var> {
    check_bank(fake.len(), weights)?;
    let terms = fake.iter().map(|&f| hinge(g, f, -1.0)).collect();
    weighted_sum(g, terms, weights)
}

pub fn adv_loss(g: &mut Graph, fake: &[Var]) -> Result<Var> {
    adv_loss_weighted(g, fake, &vec![1.0; fake.len()])
}

/// `Σ_k w_k Σ_l mean|D_k^l(x) − D_k^l(x̂)|`.
pub fn feature_matching_loss_weighted(
    g: &mut Graph,
    real: &[Vec<Var>],
    fake: &[Vec<Var>],
    weights: &[f64],
) -> Result<Var> {
    check_bank(real.len(), weights)?;
    if fake.len() != real.len() {
        return Err(Error::invalid("real and fake features come from different banks"));
    }
    let mut terms = Vec::with_capacity(real.len());
    for (r, f) in real.iter().zip(fake) {
        if r.len() != f.len() || r.is_empty() {
            return Err(Error::invalid(format!(
                "feature layer counts differ or are empty: {} vs {}",
                r.len(),
                f.len()
            )));
        }
        let mut layer_terms = Vec::with_capacity(r.len());
        for (&a, &b) in r.iter().zip(f) {
            let d = g.sub(a, b)?;
            let d = g.abs(d);
            layer_terms.push(g.mean(d));
        }
        terms.push(weighted_sum(g, layer_terms.clone(), &vec![1.0; layer_terms.len()])?);
    }
    weighted_sum(g, terms, weights)
}

pub fn feature_matching_loss(g: &mut Graph, real: &[Vec<Var>], fake: &[Vec<Var>]) -> Result<Var> {
    feature_matching_loss_weighted(g, real, fake, &vec![1.0; real.len()])
}

pub fn logits(outs: &[DiscOutput]) -> Vec<Var> {
    outs.iter().map(|o| o.logits).collect()
}

pub fn features(outs: &[DiscOutput]) -> Vec<Vec<Var>> {
    outs.iter().map(|o| o.features.clone()).collect()
}
