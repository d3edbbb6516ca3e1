//! Objective spectral distances.

use std::collections::BTreeMap;

use crate::error::{invalid, Result};
use crate::prior::F0Contour;
use crate::signal::{StftPlan, Waveform};

pub const LOG_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub fft_size: usize,
    pub window: usize,
    pub hop: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrStftConfig {
    pub resolutions: Vec<Resolution>,
}

impl Default for MrStftConfig {
    fn default() -> Self {
        let r = |n: usize| Resolution {
            fft_size: n,
            window: n,
            hop: n / 4,
        };
        Self {
            resolutions: vec![r(512), r(1024), r(2048)],
        }
    }
}

impl MrStftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(invalid("at least one STFT resolution is required"));
        }
        for r in &self.resolutions {
            if r.window != r.fft_size {
                return Err(invalid("window length must equal the FFT size"));
            }
            if r.hop * 4 != r.fft_size {
                return Err(invalid(format!(
                    "hop {} must be a quarter of fft {}",
                    r.hop, r.fft_size
                )));
            }
        }
        Ok(())
    }
}

/// Log amplitude (`ln(|X| + 1e−5)`) frames of the largest hop-aligned prefix.
fn log_amplitudes(x: &[f64], plan: &StftPlan) -> Result<Vec<f64>> {
    let usable = x.len() / plan.hop() * plan.hop();
    let spec = plan.analyze(&x[..usable])?;
    Ok(spec.iter().map(|c| (c.norm() + LOG_FLOOR).ln()).collect())
}

fn check_pair(x: &Waveform, y: &Waveform) -> Result<()> {
    if x.len() != y.len() {
        return Err(invalid(format!(
            "length mismatch: {} vs {} samples",
            x.len(),
            y.len()
        )));
    }
    if x.sample_rate() != y.sample_rate() {
        return Err(invalid(format!(
            "sample-rate mismatch: {} vs {} Hz",
            x.sample_rate(),
            y.sample_rate()
        )));
    }
    Ok(())
}

/// Mean over resolutions of the mean absolute log-amplitude difference.
pub fn mr_stft_distance(x: &Waveform, y: &Waveform, cfg: &MrStftConfig) -> Result<f64> {
    check_pair(x, y)?;
    cfg.validate()?;
    let mut total = 0.0;
    for r in &cfg.resolutions {
        let plan = StftPlan::new(r.fft_size, r.hop)?;
        if x.len() < r.hop {
            return Err(invalid(format!(
                "signal of {} samples is shorter than hop {}",
                x.len(),
                r.hop
            )));
        }
        let a = log_amplitudes(x.samples(), &plan)?;
        let b = log_amplitudes(y.samples(), &plan)?;
        total += a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / a.len() as f64;
    }
    Ok(total / cfg.resolutions.len() as f64)
}

/// Mean frame distance inside one F0 bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStat {
    pub mean: f64,
    pub frames: usize,
}

/// Frame-wise log-amplitude L1 grouped into `bin_hz`-wide F0 bins keyed by
/// the bin's lower edge. Unvoiced frames are skipped; each contour frame is
/// matched with the STFT frame of the same index (hop = contour hop,
/// FFT = 4 hops).
pub fn f0_binned_distance(
    pairs: &[(Waveform, Waveform, F0Contour)],
    bin_hz: f64,
) -> Result<BTreeMap<u64, BinStat>> {
    if !(bin_hz > 0.0) {
        return Err(invalid("F0 bin width must be positive"));
    }
    let mut sums: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for (x, y, f0) in pairs {
        check_pair(x, y)?;
        let plan = StftPlan::new(4 * f0.hop(), f0.hop())?;
        let bins = plan.bins();
        let a = log_amplitudes(x.samples(), &plan)?;
        let b = log_amplitudes(y.samples(), &plan)?;
        let frames = (a.len() / bins).min(f0.frames());
        for m in 0..frames {
            let f = f0.values()[m];
            if f <= 0.0 {
                continue;
            }
            let d = (0..bins)
                .map(|k| (a[m * bins + k] - b[m * bins + k]).abs())
                .sum::<f64>()
                / bins as f64;
            let key = ((f / bin_hz).floor() * bin_hz) as u64;
            let e = sums.entry(key).or_insert((0.0, 0));
            e.0 += d;
            e.1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(k, (s, n))| {
            (
                k,
                BinStat {
                    mean: s / n as f64,
                    frames: n,
                },
            )
        })
        .collect())
}

/// Scale to a target RMS level (used instead of loudness normalization).
pub fn rms_normalize(x: &Waveform, target_rms: f64) -> Waveform {
    let rms = x.rms();
    if rms == 0.0 {
        x.clone()
    } else {
        x.scaled(target_rms / rms)
    }
}
