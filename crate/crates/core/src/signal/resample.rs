use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::signal::window::kaiser;
use crate::signal::Waveform;

/// Filter order (taps - 1) of the default anti-aliasing filter.
pub const DEFAULT_ORDER: usize = 96;
pub const DEFAULT_KAISER_BETA: f64 = 8.6;

/// Linear-phase Kaiser-windowed sinc low-pass, applied with its group delay
/// removed so the output is time-aligned with the input.
#[derive(Debug, Clone, PartialEq)]
pub struct FirLowpass {
    taps: Vec<f64>,
    cutoff: f64,
    beta: f64,
}

impl FirLowpass {
    /// `cutoff` is normalized to the sample rate (`0 < cutoff < 0.5`); `order` must be even.
    pub fn design(cutoff: f64, order: usize, beta: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < 0.5) {
            return Err(invalid(format!(
                "normalized cutoff {cutoff} must lie strictly between 0 and 0.5"
            )));
        }
        if order == 0 || order % 2 != 0 {
            return Err(invalid(format!(
                "filter order {order} must be positive and even for an integer group delay"
            )));
        }
        let centre = (order / 2) as f64;
        let window = kaiser(order + 1, beta);
        let mut taps: Vec<f64> = window
            .iter()
            .enumerate()
            .map(|(n, w)| {
                let t = n as f64 - centre;
                let sinc = if t == 0.0 {
                    2.0 * cutoff
                } else {
                    (2.0 * PI * cutoff * t).sin() / (PI * t)
                };
                sinc * w
            })
            .collect();
        let dc: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= dc);
        Ok(Self { taps, cutoff, beta })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Normalized transition width predicted by Kaiser's design formula.
    pub fn transition_width(&self) -> f64 {
        let atten = if self.beta > 4.55 {
            self.beta / 0.1102 + 8.7
        } else {
            21.0
        };
        (atten - 7.95) / (2.285 * (self.taps.len() - 1) as f64) / (2.0 * PI)
    }

    /// Real (zero-phase) gain at normalized frequency `f`.
    pub fn response(&self, f: f64) -> f64 {
        let d = self.delay() as f64;
        self.taps
            .iter()
            .enumerate()
            .map(|(n, h)| h * (2.0 * PI * f * (n as f64 - d)).cos())
            .sum()
    }

    /// Zero-phase filtering with zero boundary conditions.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.delay() as isize;
        let len = x.len() as isize;
        (0..len)
            .map(|n| {
                let mut acc = 0.0;
                for (j, h) in self.taps.iter().enumerate() {
                    let i = n + d - j as isize;
                    if i >= 0 && i < len {
                        acc += h * x[i as usize];
                    }
                }
                acc
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleFactor {
    /// Zero-stuff, then low-pass at the original Nyquist frequency.
    Up2,
    /// Low-pass at the new Nyquist frequency, then keep every other sample.
    Down2,
}

impl ResampleFactor {
    pub fn ratio(self) -> f64 {
        match self {
            Self::Up2 => 2.0,
            Self::Down2 => 0.5,
        }
    }
}

fn half_band() -> FirLowpass {
    FirLowpass::design(0.25, DEFAULT_ORDER, DEFAULT_KAISER_BETA).expect("static design")
}

pub fn resample(x: &Waveform, factor: ResampleFactor) -> Result<Waveform> {
    let filter = half_band();
    match factor {
        ResampleFactor::Up2 => {
            let mut stuffed = vec![0.0; 2 * x.len()];
            for (i, &v) in x.samples().iter().enumerate() {
                stuffed[2 * i] = 2.0 * v;
            }
            Ok(Waveform::from_trusted(
                filter.apply(&stuffed),
                x.sample_rate() * 2,
            ))
        }
        ResampleFactor::Down2 => {
            if x.sample_rate() % 2 != 0 {
                return Err(invalid(format!(
                    "cannot halve odd sample rate {}",
                    x.sample_rate()
                )));
            }
            let y = filter.apply(x.samples());
            Ok(Waveform::from_trusted(
                y.into_iter().step_by(2).collect(),
                x.sample_rate() / 2,
            ))
        }
    }
}

/// Low-pass a waveform at `cutoff_hz` with the default Kaiser design.
pub fn lowpass(x: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    if cutoff_hz >= x.nyquist() || cutoff_hz <= 0.0 {
        return Err(invalid(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            x.nyquist()
        )));
    }
    let filter = FirLowpass::design(
        cutoff_hz / x.sample_rate() as f64,
        DEFAULT_ORDER,
        DEFAULT_KAISER_BETA,
    )?;
    Ok(Waveform::from_trusted(filter.apply(x.samples()), x.sample_rate()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(x: f64) -> f64 {
        20.0 * x.abs().log10()
    }

    #[test]
    fn default_filter_meets_ripple_and_stopband() {
        let f = half_band();
        let tw = f.transition_width();
        let pass_edge = 0.25 - tw / 2.0;
        let stop_edge = 0.25 + tw / 2.0;
        for i in 0..=2000 {
            let nu = 0.5 * i as f64 / 2000.0;
            let g = f.response(nu);
            if nu <= pass_edge {
                assert!(db(g).abs() < 0.1, "ripple at {nu}: {}", db(g));
            } else if nu >= stop_edge {
                assert!(db(g) < -60.0, "stopband at {nu}: {}", db(g));
            }
        }
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(FirLowpass::design(0.5, 96, 8.6).is_err());
        assert!(FirLowpass::design(0.2, 95, 8.6).is_err());
        let x = Waveform::zeros(10, 1000).unwrap();
        assert!(lowpass(&x, 500.0).is_err());
        assert!(lowpass(&x, 499.0).is_ok());
    }

    #[test]
    fn dc_is_preserved() {
        let x = Waveform::new(vec![0.7; 400], 1000).unwrap();
        let up = resample(&x, ResampleFactor::Up2).unwrap();
        assert_eq!(up.sample_rate(), 2000);
        // away from the zero-padded boundaries
        for &v in &up.samples()[200..600] {
            assert!(db(v / 0.7).abs() < 0.1);
        }
        let lp = lowpass(&x, 200.0).unwrap();
        for &v in &lp.samples()[100..300] {
            assert!(db(v / 0.7).abs() < 0.1);
        }
    }

    #[test]
    fn lowpass_is_linear() {
        let a: Vec<f64> = (0..300).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..300).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let la = lowpass(&Waveform::new(a, 1000).unwrap(), 120.0).unwrap();
        let lb = lowpass(&Waveform::new(b, 1000).unwrap(), 120.0).unwrap();
        let lm = lowpass(&Waveform::new(mix, 1000).unwrap(), 120.0).unwrap();
        for i in 0..300 {
            let expect = 2.0 * la.samples()[i] - 0.5 * lb.samples()[i];
            assert!((lm.samples()[i] - expect).abs() < 1e-9);
        }
    }
}
