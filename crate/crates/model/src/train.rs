//! Datasets, the alternating discriminator/generator update and checkpoints.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavehax_autodiff::{checkpoint, cosine_lr, AdamW, AdamWConfig, Graph, Tensor};
use wavehax_core::io::{atomic_write, read_f0_csv, read_wav, KeyValues};
use wavehax_core::prior::{generate_prior, F0Contour, PriorConfig};
use wavehax_core::signal::{mel_spectrogram, MelConfig, MelSpectrogram, Waveform};
use wavehax_core::{Error, Result};

use crate::config::GeneratorConfig;
use crate::disc::DiscriminatorBank;
use crate::generator::Generator;
use crate::loss::{
    adv_loss_weighted, disc_loss_weighted, feature_matching_loss_weighted, features, logits, LossWeights, MelLoss,
};

/// One utterance with its features and harmonic prior, all `frames` long.
#[derive(Debug, Clone)]
pub struct Example {
    pub wave: Waveform,
    pub f0: F0Contour,
    pub mel: MelSpectrogram,
    pub prior: Waveform,
}

impl Example {
    pub fn frames(&self) -> usize {
        self.mel.frames
    }
}

/// The mel configuration that feeds a generator.
pub fn mel_config(cfg: &GeneratorConfig) -> Result<MelConfig> {
    let mut m = MelConfig::for_rate(cfg.sample_rate);
    m.bands = cfg.mel_bands;
    m.fmax = m.fmax.min(cfg.sample_rate as f64 / 2.0);
    if m.hop != cfg.hop {
        m.hop = cfg.hop;
    }
    m.validate()?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<Example>,
}

impl Dataset {
    /// Trim each pair to a common whole number of frames and derive mel
    /// features and priors. Priors of utterance `i` use seed `seed + i`.
    pub fn new(pairs: Vec<(Waveform, F0Contour)>, cfg: &GeneratorConfig, prior: &PriorConfig, seed: u64) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let mel_cfg = mel_config(cfg)?;
        let mut examples = Vec::with_capacity(pairs.len());
        for (i, (wave, f0)) in pairs.into_iter().enumerate() {
            if wave.sample_rate() != cfg.sample_rate || f0.sample_rate() != cfg.sample_rate {
                return Err(Error::invalid(format!(
                    "utterance {i} is not at {} Hz",
                    cfg.sample_rate
                )));
            }
            if f0.hop() != cfg.hop {
                return Err(Error::invalid(format!(
                    "utterance {i}: F0 hop {} differs from generator hop {}",
                    f0.hop(),
                    cfg.hop
                )));
            }
            let frames = (wave.len() / cfg.hop).min(f0.frames());
            if frames == 0 {
                return Err(Error::invalid(format!("utterance {i} is shorter than one frame")));
            }
            let wave = Waveform::new(wave.samples()[..frames * cfg.hop].to_vec(), cfg.sample_rate)?;
            let f0 = F0Contour::new(f0.values()[..frames].to_vec(), cfg.hop, cfg.sample_rate)?;
            let mel = mel_spectrogram(&wave, &mel_cfg)?;
            let pc = PriorConfig {
                seed: seed.wrapping_add(i as u64),
                ..prior.clone()
            };
            let prior = generate_prior(&f0, &pc)?;
            examples.push(Example { wave, f0, mel, prior });
        }
        Ok(Self { examples })
    }

    /// `*.wav` files with sibling `*.f0.csv` contours, in sorted order.
    pub fn load_dir(dir: &Path, cfg: &GeneratorConfig, prior: &PriorConfig, seed: u64) -> Result<Self> {
        let mut wavs: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "wav"))
            .collect();
        wavs.sort();
        let mut pairs = Vec::with_capacity(wavs.len());
        for w in wavs {
            let csv = w.with_extension("f0.csv");
            if !csv.exists() {
                return Err(Error::invalid(format!("{} has no sibling {}", w.display(), csv.display())));
            }
            pairs.push((
                read_wav(&w, Some(cfg.sample_rate))?,
                read_f0_csv(&csv, cfg.hop, cfg.sample_rate)?,
            ));
        }
        Self::new(pairs, cfg, prior, seed)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Voiced test signals: a gliding harmonic source shaped by three formant
/// resonators, peak-normalized to 0.5, with its exact F0 contour.
pub fn synthetic_utterances(
    count: usize,
    seconds: f64,
    sample_rate: u32,
    hop: usize,
    seed: u64,
) -> Result<Vec<(Waveform, F0Contour)>> {
    let frames = (seconds * sample_rate as f64 / hop as f64).round() as usize;
    if frames == 0 || count == 0 {
        return Err(Error::invalid("synthetic dataset needs a positive size and duration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate as f64;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let f_start: f64 = rng.random_range(90.0..180.0);
        let f_end: f64 = rng.random_range(90.0..220.0);
        let vib_rate: f64 = rng.random_range(4.0..6.0);
        let formants: Vec<f64> = [
            rng.random_range(400.0..800.0),
            rng.random_range(1000.0..1800.0),
            rng.random_range(2200.0..3000.0),
        ]
        .to_vec();
        let f0: Vec<f64> = (0..frames)
            .map(|m| {
                let t = m as f64 / frames as f64;
                let base = f_start + (f_end - f_start) * t;
                base * (1.0 + 0.02 * (2.0 * PI * vib_rate * m as f64 * hop as f64 / fs).sin())
            })
            .collect();
        let contour = F0Contour::new(f0.clone(), hop, sample_rate)?;
        let mut phase = 0.0f64;
        let mut source = Vec::with_capacity(frames * hop);
        for &f in &f0 {
            for _ in 0..hop {
                phase = (phase + f / fs).fract();
                let k_max = ((fs / 2.0 - 1.0) / f).floor() as usize;
                let s: f64 = (1..=k_max)
                    .map(|k| (2.0 * PI * k as f64 * phase).sin() / k as f64)
                    .sum();
                source.push(s);
            }
        }
        let mut y = vec![0.0; source.len()];
        for &fc in &formants {
            // two-pole resonator with 80 Hz bandwidth
            let r = (-PI * 80.0 / fs).exp();
            let (a1, a2) = (2.0 * r * (2.0 * PI * fc / fs).cos(), -r * r);
            let (mut y1, mut y2) = (0.0, 0.0);
            for (n, &s) in source.iter().enumerate() {
                let v = (1.0 - r) * s + a1 * y1 + a2 * y2;
                y2 = y1;
                y1 = v;
                y[n] += v;
            }
        }
        let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let y: Vec<f64> = y.iter().map(|v| 0.5 * v / peak).collect();
        out.push((Waveform::new(y, sample_rate)?, contour));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    /// Length of the cosine schedule; defaults to `steps`.
    pub schedule_steps: Option<usize>,
    pub seed: u64,
    pub batch_size: usize,
    pub segment_frames: usize,
    pub lr: f64,
    pub adam: AdamWConfig,
    pub clip: f64,
    pub weights: LossWeights,
    /// Per-subdiscriminator loss weights; empty means all ones.
    pub sub_weights: Vec<f64>,
    /// Train the generator on the mel loss only (no discriminator).
    pub mel_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            schedule_steps: None,
            seed: 0,
            batch_size: 1,
            segment_frames: 16,
            lr: 2e-4,
            adam: AdamWConfig::default(),
            clip: 10.0,
            weights: LossWeights::default(),
            sub_weights: Vec::new(),
            mel_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss_mel: f64,
    pub loss_adv: f64,
    pub loss_fm: f64,
    pub loss_d: f64,
    /// Total generator objective actually differentiated.
    pub loss_g: f64,
}

pub const LOG_HEADER: &str = "step,loss_mel,loss_adv,loss_fm,loss_d";

impl StepLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.loss_mel, self.loss_adv, self.loss_fm, self.loss_d
        )
    }
}

pub struct Trainer {
    pub gen: Generator,
    pub disc: DiscriminatorBank,
    cfg: TrainConfig,
    opt_g: AdamW,
    opt_d: AdamW,
    rng: ChaCha8Rng,
    step: usize,
    schedule_start: usize,
    mel_loss: MelLoss,
    sub_weights: Vec<f64>,
}

/// Aligned training segments: priors and targets `[B, T]`, mel `[B, bands, N]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub prior: Tensor,
    pub mel: Tensor,
    pub target: Tensor,
}

impl Trainer {
    pub fn new(gen_cfg: GeneratorConfig, cfg: TrainConfig) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.segment_frames == 0 {
            return Err(Error::invalid("batch size and segment length must be positive"));
        }
        if !(cfg.lr > 0.0 && cfg.clip > 0.0) {
            return Err(Error::invalid("learning rate and clip threshold must be positive"));
        }
        cfg.weights.validate()?;
        let gen = Generator::new(gen_cfg.clone(), cfg.seed)?;
        let disc = DiscriminatorBank::toy(cfg.seed.wrapping_add(1))?;
        let sub_weights = if cfg.sub_weights.is_empty() {
            vec![1.0; disc.len()]
        } else if cfg.sub_weights.len() == disc.len() && cfg.sub_weights.iter().all(|w| *w >= 0.0) {
            cfg.sub_weights.clone()
        } else {
            return Err(Error::invalid(format!(
                "need {} non-negative subdiscriminator weights",
                disc.len()
            )));
        };
        let mel_loss = MelLoss::new(&mel_config(&gen_cfg)?, cfg.segment_frames * gen_cfg.hop)?;
        Ok(Self {
            opt_g: AdamW::new(gen.params(), cfg.adam),
            opt_d: AdamW::new(disc.params(), cfg.adam),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2)),
            gen,
            disc,
            step: 0,
            schedule_start: 0,
            mel_loss,
            sub_weights,
            cfg,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn set_mel_only(&mut self, on: bool) {
        self.cfg.mel_only = on;
    }

    /// Draw random aligned segments; the draw order is fixed by the seed.
    pub fn sample(&mut self, data: &Dataset) -> Result<Batch> {
        if data.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let (n, hop) = (self.cfg.segment_frames, self.gen.config().hop);
        let bands = self.gen.config().mel_bands;
        let b = self.cfg.batch_size;
        let (mut prior, mut target) = (Vec::with_capacity(b * n * hop), Vec::with_capacity(b * n * hop));
        let mut mel = vec![0.0; b * bands * n];
        for bi in 0..b {
            let ex = &data.examples[self.rng.random_range(0..data.len())];
            if ex.frames() < n {
                return Err(Error::invalid(format!(
                    "utterance of {} frames is shorter than the {n}-frame segment",
                    ex.frames()
                )));
            }
            let s = self.rng.random_range(0..=ex.frames() - n);
            prior.extend_from_slice(&ex.prior.samples()[s * hop..(s + n) * hop]);
            target.extend_from_slice(&ex.wave.samples()[s * hop..(s + n) * hop]);
            for m in 0..n {
                for k in 0..bands {
                    mel[(bi * bands + k) * n + m] = ex.mel.at(s + m, k);
                }
            }
        }
        Ok(Batch {
            prior: Tensor::new(vec![b, n * hop], prior)?,
            mel: Tensor::new(vec![b, bands, n], mel)?,
            target: Tensor::new(vec![b, n * hop], target)?,
        })
    }

    /// Learning rate of the next update.
    pub fn lr(&self) -> f64 {
        cosine_lr(
            self.cfg.lr,
            self.step - self.schedule_start,
            self.cfg.schedule_steps.unwrap_or(self.cfg.steps),
        )
    }

    /// Start a new cosine schedule from `lr` over `steps` updates, keeping
    /// the optimizer state.
    pub fn restart_schedule(&mut self, lr: f64, steps: usize) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        self.cfg.lr = lr;
        self.cfg.schedule_steps = Some(steps);
        self.schedule_start = self.step;
        Ok(())
    }

    /// Discriminator update on fixed real and generated batches.
    pub fn disc_step(&mut self, real: &Tensor, fake: &Tensor, lr: f64) -> Result<f64> {
        let mut g = Graph::new();
        let real = g.constant(real.clone());
        let fake = g.constant(fake.clone());
        let out_r = self.disc.forward(&mut g, self.disc.params(), real, true)?;
        let out_f = self.disc.forward(&mut g, self.disc.params(), fake, true)?;
        let loss = disc_loss_weighted(&mut g, &logits(&out_r), &logits(&out_f), &self.sub_weights)?;
        let grads = g.backward(loss)?;
        let store = self.disc.params_mut();
        store.zero_grad();
        g.accumulate(&grads, store);
        store.clip_grad_norm(self.cfg.clip);
        self.opt_d.step(self.disc.params_mut(), lr);
        g.value(loss).item()
    }

    /// One update: discriminator on the detached generator output, then the
    /// generator against the updated discriminator.
    pub fn step(&mut self, data: &Dataset) -> Result<StepLog> {
        let batch = self.sample(data)?;
        self.step_on(&batch)
    }

    pub fn step_on(&mut self, batch: &Batch) -> Result<StepLog> {
        let lr = self.lr();
        let mut g = Graph::new();
        let mel = g.constant(batch.mel.clone());
        let x_hat = self.gen.forward_graph(&mut g, self.gen.params(), &batch.prior, mel, true)?;
        let real = g.constant(batch.target.clone());
        let loss_d = if self.cfg.mel_only {
            0.0
        } else {
            let fake = g.value(x_hat).clone();
            self.disc_step(&batch.target, &fake, lr)?
        };

        let lm = self.mel_loss.loss(&mut g, x_hat, real)?;
        let w = self.cfg.weights;
        let (total, loss_adv, loss_fm) = if self.cfg.mel_only {
            (g.scale(lm, w.mel), 0.0, 0.0)
        } else {
            let out_f = self.disc.forward(&mut g, self.disc.params(), x_hat, false)?;
            let out_r = self.disc.forward(&mut g, self.disc.params(), real, false)?;
            let la = adv_loss_weighted(&mut g, &logits(&out_f), &self.sub_weights)?;
            let lf = feature_matching_loss_weighted(&mut g, &features(&out_r), &features(&out_f), &self.sub_weights)?;
            let a = g.scale(lm, w.mel);
            let b = g.scale(la, w.adv);
            let c = g.scale(lf, w.fm);
            let ab = g.add(a, b)?;
            (g.add(ab, c)?, g.value(la).item()?, g.value(lf).item()?)
        };
        let grads = g.backward(total)?;
        let store = self.gen.params_mut();
        store.zero_grad();
        g.accumulate(&grads, store);
        store.clip_grad_norm(self.cfg.clip);
        self.opt_g.step(self.gen.params_mut(), lr);

        self.step += 1;
        Ok(StepLog {
            step: self.step,
            lr,
            loss_mel: g.value(lm).item()?,
            loss_adv,
            loss_fm,
            loss_d,
            loss_g: g.value(total).item()?,
        })
    }

    /// Parameters as `gen.*` and `disc.*` records plus a `<path>.cfg` sidecar
    /// holding the generator configuration.
    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &[("gen.", self.gen.params()), ("disc.", self.disc.params())])?;
        atomic_write(&sidecar(path), self.gen.config().to_key_values().render().as_bytes())
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

/// Generator from a checkpoint; the configuration comes from `cfg` or the
/// checkpoint's sidecar, or defaults when neither exists.
pub fn load_generator(path: &Path, cfg: Option<GeneratorConfig>) -> Result<Generator> {
    let cfg = match cfg {
        Some(c) => c,
        None => {
            let side = sidecar(path);
            if side.exists() {
                GeneratorConfig::from_key_values(&KeyValues::parse(&std::fs::read_to_string(side)?)?)?
            } else {
                GeneratorConfig::default()
            }
        }
    };
    let records = checkpoint::load(path)?;
    let mut gen = Generator::new(cfg, 0)?;
    checkpoint::restore(gen.params_mut(), &records, "gen.")?;
    Ok(gen)
}

/// Run `cfg.steps` updates, reporting each step.
pub fn train(
    data: &Dataset,
    gen_cfg: GeneratorConfig,
    cfg: TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<Trainer> {
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let steps = cfg.steps;
    let mut t = Trainer::new(gen_cfg, cfg)?;
    for _ in 0..steps {
        let log = t.step(data)?;
        if !log.loss_g.is_finite() {
            return Err(Error::internal(format!("non-finite loss at step {}", log.step)));
        }
        on_step(&log);
    }
    Ok(t)
}
