//! Band-limited harmonic prior generated from a frame-rate F0 contour.
//!
//! Every voiced sample carries `K` harmonics of equal amplitude
//! `lc·√(2/K)`, so the mean power stays at `lc²` regardless of F0, with all
//! partials strictly below Nyquist. Initial phases are linear in the harmonic
//! index (`k·φ`, one `φ` per utterance).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::aliasing::alias_energy;
use crate::error::{invalid, Result};
use crate::signal::window::hann_periodic;
use crate::signal::Waveform;

/// Frame-rate fundamental frequency in Hz; 0 marks unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour {
    values: Vec<f64>,
    hop: usize,
    sample_rate: u32,
}

impl F0Contour {
    pub fn new(values: Vec<f64>, hop: usize, sample_rate: u32) -> Result<Self> {
        if hop == 0 || sample_rate == 0 {
            return Err(invalid("F0 contour needs a positive hop and sample rate"));
        }
        let nyquist = sample_rate as f64 / 2.0;
        for (i, &f) in values.iter().enumerate() {
            if !(f == 0.0 || (f > 0.0 && f < nyquist)) {
                return Err(invalid(format!(
                    "F0 value {f} at frame {i} is neither 0 nor inside (0, {nyquist})"
                )));
            }
        }
        Ok(Self {
            values,
            hop,
            sample_rate,
        })
    }

    pub fn constant(f0: f64, frames: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![f0; frames], hop, sample_rate)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frames(&self) -> usize {
        self.values.len()
    }

    pub fn samples(&self) -> usize {
        self.values.len() * self.hop
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    /// The common value when every frame is voiced at the same F0.
    pub fn constant_voiced(&self) -> Option<f64> {
        let first = *self.values.first()?;
        (first > 0.0 && self.values.iter().all(|&v| v == first)).then_some(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Harmonic,
    Sine,
    Noise,
}

impl std::str::FromStr for PriorKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Self::Harmonic),
            "sine" => Ok(Self::Sine),
            "noise" => Ok(Self::Noise),
            other => Err(invalid(format!("unknown prior kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Frame power constant; the prior's mean square is `lc²`.
    pub lc: f64,
    pub noise_sigma: f64,
    /// Highest harmonic frequency; `None` means Nyquist.
    pub fmax: Option<f64>,
    pub kind: PriorKind,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            lc: 0.1,
            noise_sigma: 0.01,
            fmax: None,
            kind: PriorKind::Harmonic,
            seed: 0,
        }
    }
}

impl PriorConfig {
    fn validate(&self, nyquist: f64) -> Result<f64> {
        if !(self.lc > 0.0) {
            return Err(invalid("lc must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(invalid("noise sigma must be non-negative"));
        }
        let fmax = self.fmax.unwrap_or(nyquist);
        if !(fmax > 0.0 && fmax <= nyquist) {
            return Err(invalid(format!("fmax {fmax} must lie in (0, {nyquist}]")));
        }
        Ok(fmax)
    }
}

/// Zero-order hold from frame rate to sample rate.
pub fn upsample_f0(f0: &F0Contour) -> Vec<f64> {
    f0.values
        .iter()
        .flat_map(|&v| std::iter::repeat(v).take(f0.hop))
        .collect()
}

/// `⌊fmax / f⌋`.
pub fn harmonic_count(f: f64, fmax: f64) -> Result<usize> {
    if !(f > 0.0) {
        return Err(invalid(format!("harmonic count needs a positive F0, got {f}")));
    }
    Ok((fmax / f).floor() as usize)
}

/// Highest harmonic index actually synthesized: `k·f ≤ fmax` and strictly
/// below Nyquist, so a partial landing exactly on Nyquist is dropped.
fn synthesized_count(f: f64, fmax: f64, nyquist: f64) -> usize {
    let mut k = (fmax / f).floor() as usize;
    while k > 0 && k as f64 * f >= nyquist {
        k -= 1;
    }
    k
}

/// Per-partial amplitude `lc·√(2/K)` with `K = ⌊fmax/f⌋`.
fn partial_amplitude(f: f64, fmax: f64, lc: f64) -> f64 {
    let k = (fmax / f).floor();
    if k < 1.0 {
        0.0
    } else {
        lc * (2.0 / k).sqrt()
    }
}

/// Cumulative phase in cycles, `φ[n] = Σ_{m≤n} f[m]/fs`, wrapped to `[0, 1)`.
pub fn cumulative_phase(f0_samples: &[f64], sample_rate: u32) -> Vec<f64> {
    let mut phase = 0.0f64;
    f0_samples
        .iter()
        .map(|&f| {
            phase = (phase + f / sample_rate as f64).fract();
            phase
        })
        .collect()
}

pub fn generate_prior(f0: &F0Contour, cfg: &PriorConfig) -> Result<Waveform> {
    let nyquist = f0.nyquist();
    let fmax = cfg.validate(nyquist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offset: f64 = rng.random_range(-PI..PI);
    let per_sample = upsample_f0(f0);
    let phase = cumulative_phase(&per_sample, f0.sample_rate);
    let mut out = Vec::with_capacity(per_sample.len());
    for (&f, &ph) in per_sample.iter().zip(&phase) {
        let z: f64 = rng.sample(StandardNormal);
        let v = match cfg.kind {
            PriorKind::Noise => z,
            PriorKind::Sine => {
                let tone = if f > 0.0 && f <= fmax {
                    cfg.lc * 2f64.sqrt() * (2.0 * PI * ph + offset).sin()
                } else {
                    0.0
                };
                tone + cfg.noise_sigma * z
            }
            PriorKind::Harmonic => {
                let tone = if f > 0.0 {
                    harmonic_sum(
                        2.0 * PI * ph + offset,
                        synthesized_count(f, fmax, nyquist),
                        partial_amplitude(f, fmax, cfg.lc),
                    )
                } else {
                    0.0
                };
                tone + cfg.noise_sigma * z
            }
        };
        out.push(v);
    }
    Waveform::new(out, f0.sample_rate)
}

/// `amp·Σ_{k=1..K} sin(kθ)` via complex rotation.
fn harmonic_sum(theta: f64, k_max: usize, amp: f64) -> f64 {
    let step = Complex64::from_polar(1.0, theta);
    let mut rot = step;
    let mut acc = 0.0;
    for _ in 0..k_max {
        acc += rot.im;
        rot *= step;
    }
    amp * acc
}

/// Unit impulses at every phase wrap of the cumulative phase: the classic
/// pointwise-sampled pulse-train excitation.
pub fn naive_pulse_train(f0: &F0Contour) -> Waveform {
    let per_sample = upsample_f0(f0);
    let mut phase = 0.0f64;
    let out = per_sample
        .iter()
        .map(|&f| {
            phase += f / f0.sample_rate as f64;
            if phase >= 1.0 {
                phase -= phase.floor();
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Waveform::from_trusted(out, f0.sample_rate)
}

/// Hann-weighted mean square of each full frame (`frame_len` samples every `hop`).
pub fn frame_power(x: &[f64], frame_len: usize, hop: usize) -> Vec<f64> {
    if frame_len == 0 || hop == 0 || x.len() < frame_len {
        return Vec::new();
    }
    let w = hann_periodic(frame_len);
    let norm: f64 = w.iter().sum();
    (0..=(x.len() - frame_len) / hop)
        .map(|i| {
            let seg = &x[i * hop..i * hop + frame_len];
            seg.iter().zip(&w).map(|(v, w)| w * v * v).sum::<f64>() / norm
        })
        .collect()
}

/// Fraction of samples dropped at each end before steady-state analysis.
pub const TRANSIENT_FRACTION: f64 = 0.1;

pub(crate) fn steady_segment(x: &[f64]) -> &[f64] {
    let skip = (x.len() as f64 * TRANSIENT_FRACTION) as usize;
    &x[skip..x.len() - skip]
}

/// Non-harmonic to harmonic energy ratio (dB) of a constant-F0 voiced signal.
pub fn alias_free_check(x: &Waveform, f0: &F0Contour) -> Result<f64> {
    let f = f0
        .constant_voiced()
        .ok_or_else(|| invalid("alias check needs a constant, voiced F0 contour"))?;
    let seg = Waveform::from_trusted(steady_segment(x.samples()).to_vec(), x.sample_rate());
    alias_energy(&seg, f, 4)
}

/// Largest deviation between `x` and the same prior synthesized at four times
/// the sample rate (harmonics still capped at the original Nyquist) and decimated.
pub fn oversampled_deviation(x: &Waveform, f0: &F0Contour, cfg: &PriorConfig) -> Result<f64> {
    if f0.constant_voiced().is_none() {
        return Err(invalid("oversampled check needs a constant, voiced F0 contour"));
    }
    let nyquist = f0.nyquist();
    let fmax = cfg.validate(nyquist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offset: f64 = rng.random_range(-PI..PI);
    let per_sample = upsample_f0(f0);
    let fast_rate = 4 * f0.sample_rate;
    let fast: Vec<f64> = per_sample
        .iter()
        .flat_map(|&f| std::iter::repeat(f).take(4))
        .collect();
    let phase = cumulative_phase(&fast, fast_rate);
    let mut dev = 0.0f64;
    for (n, &xv) in x.samples().iter().enumerate() {
        // sample 4n+3 accumulates exactly the same phase as base-rate sample n
        let i = 4 * n + 3;
        let f = fast[i];
        let theta = 2.0 * PI * phase[i] + offset;
        let v = match cfg.kind {
            PriorKind::Harmonic => harmonic_sum(
                theta,
                synthesized_count(f, fmax, nyquist),
                partial_amplitude(f, fmax, cfg.lc),
            ),
            PriorKind::Sine => cfg.lc * 2f64.sqrt() * theta.sin(),
            PriorKind::Noise => 0.0,
        };
        dev = dev.max((v - xv).abs());
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(kind: PriorKind) -> PriorConfig {
        PriorConfig {
            noise_sigma: 0.0,
            kind,
            seed: 5,
            ..PriorConfig::default()
        }
    }

    #[test]
    fn zero_order_hold() {
        let c = F0Contour::new(vec![100.0, 200.0], 240, 24000).unwrap();
        let s = upsample_f0(&c);
        assert_eq!(s.len(), 480);
        assert!(s[..240].iter().all(|&v| v == 100.0));
        assert!(s[240..].iter().all(|&v| v == 200.0));
        let u = F0Contour::new(vec![0.0], 240, 24000).unwrap();
        assert_eq!(upsample_f0(&u), vec![0.0; 240]);
    }

    #[test]
    fn contour_validation() {
        assert!(F0Contour::new(vec![12000.0], 240, 24000).is_err());
        assert!(F0Contour::new(vec![-1.0], 240, 24000).is_err());
        assert!(F0Contour::new(vec![f64::NAN], 240, 24000).is_err());
        assert!(F0Contour::new(vec![0.0, 11999.0], 240, 24000).is_ok());
    }

    #[test]
    fn harmonic_counts() {
        assert_eq!(harmonic_count(100.0, 12000.0).unwrap(), 120);
        assert_eq!(harmonic_count(499.0, 12000.0).unwrap(), 24);
        assert_eq!(harmonic_count(12001.0, 12000.0).unwrap(), 0);
        assert!(harmonic_count(0.0, 12000.0).is_err());
        // the partial sitting exactly on Nyquist is not synthesized
        assert_eq!(synthesized_count(100.0, 12000.0, 12000.0), 119);
        assert_eq!(synthesized_count(499.0, 12000.0, 12000.0), 24);
    }

    #[test]
    fn per_harmonic_amplitude_at_500hz() {
        // K = 24 at 500 Hz sets the amplitude; the 24th partial sits on Nyquist
        // and is not synthesized.
        assert_eq!(harmonic_count(500.0, 12000.0).unwrap(), 24);
        assert_eq!(synthesized_count(500.0, 12000.0, 12000.0), 23);
        let a = partial_amplitude(500.0, 12000.0, 0.1);
        assert!((a - (0.02f64 / 24.0).sqrt()).abs() < 1e-15);
        assert!((a - 0.028_867_513_459_481_29).abs() < 1e-12);
        let theta = 0.3;
        let direct: f64 = (1..=23).map(|j| a * (j as f64 * theta).sin()).sum();
        assert!((harmonic_sum(theta, 23, a) - direct).abs() < 1e-12);
    }

    #[test]
    fn unvoiced_without_noise_is_silent() {
        let c = F0Contour::new(vec![0.0; 4], 240, 24000).unwrap();
        let x = generate_prior(&c, &quiet(PriorKind::Harmonic)).unwrap();
        assert!(x.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_power_at_100hz() {
        let c = F0Contour::constant(100.0, 40, 240, 24000).unwrap();
        let x = generate_prior(&c, &quiet(PriorKind::Harmonic)).unwrap();
        let ms = x.energy() / x.len() as f64;
        assert!((ms / 0.01 - 1.0).abs() < 0.1, "{ms}");
    }

    #[test]
    fn noise_prior_has_unit_variance() {
        let c = F0Contour::constant(100.0, 100, 240, 24000).unwrap();
        let x = generate_prior(&c, &quiet(PriorKind::Noise)).unwrap();
        let var = x.energy() / x.len() as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let c = F0Contour::new(vec![120.0, 0.0, 180.0, 240.0], 240, 24000).unwrap();
        let cfg = PriorConfig::default();
        let a = generate_prior(&c, &cfg).unwrap();
        let b = generate_prior(&c, &cfg).unwrap();
        assert_eq!(a, b);
        let other = generate_prior(&c, &PriorConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn harmonic_prior_is_alias_free_and_pulses_are_not() {
        let c = F0Contour::constant(499.0, 100, 240, 24000).unwrap();
        let cfg = quiet(PriorKind::Harmonic);
        let x = generate_prior(&c, &cfg).unwrap();
        assert!(alias_free_check(&x, &c).unwrap() < -60.0);
        assert!(oversampled_deviation(&x, &c, &cfg).unwrap() < 1e-9);
        let p = naive_pulse_train(&c);
        assert!(alias_free_check(&p, &c).unwrap() > -30.0);
        let s = generate_prior(&c, &quiet(PriorKind::Sine)).unwrap();
        assert!(alias_free_check(&s, &c).unwrap() < -60.0);
    }

    #[test]
    fn alias_check_rejects_unvoiced() {
        let c = F0Contour::new(vec![0.0; 10], 240, 24000).unwrap();
        let x = Waveform::zeros(2400, 24000).unwrap();
        assert!(alias_free_check(&x, &c).is_err());
    }

    #[test]
    fn fundamental_phase_is_continuous() {
        let c = F0Contour::new(vec![80.0, 0.0, 0.0, 450.0, 90.0, 11000.0, 200.0], 240, 24000)
            .unwrap();
        let f = upsample_f0(&c);
        let ph = cumulative_phase(&f, 24000);
        for n in 1..ph.len() {
            if f[n] > 0.0 && f[n - 1] > 0.0 {
                let mut d = 2.0 * PI * (ph[n] - ph[n - 1]);
                d = (d + PI).rem_euclid(2.0 * PI) - PI;
                assert!(d.abs() < PI);
            }
        }
    }
}
