//! STFT, inverse STFT and mel projection as differentiable linear maps.
//!
//! Spectrogram tensors use the `[2, bins, frames]` layout (real plane, then
//! imaginary plane), matching the generator's channel-first feature maps.

use wavehax_autodiff::LinearMap;
use wavehax_core::signal::{MelConfig, MelFilterbank, StftPlan};
use wavehax_core::{Complex64, Result};

fn to_planes(spec: &[Complex64], frames: usize, bins: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * bins * frames];
    for m in 0..frames {
        for k in 0..bins {
            let c = spec[m * bins + k];
            out[k * frames + m] = c.re;
            out[(bins + k) * frames + m] = c.im;
        }
    }
    out
}

fn from_planes(p: &[f64], frames: usize, bins: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(frames * bins);
    for m in 0..frames {
        for k in 0..bins {
            out.push(Complex64::new(p[k * frames + m], p[(bins + k) * frames + m]));
        }
    }
    out
}

/// Waveform of `frames·hop` samples to its `[2, bins, frames]` STFT.
pub struct StftMap {
    plan: StftPlan,
    len: usize,
    frames: usize,
}

impl StftMap {
    pub fn new(fft_size: usize, hop: usize, len: usize) -> Result<Self> {
        let plan = StftPlan::new(fft_size, hop)?;
        let frames = plan.frames_for(len)?;
        Ok(Self { plan, len, frames })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.plan.bins()
    }
}

impl LinearMap for StftMap {
    fn in_len(&self) -> usize {
        self.len
    }

    fn out_shape(&self) -> Vec<usize> {
        vec![2, self.plan.bins(), self.frames]
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let spec = self.plan.analyze(x).expect("length validated at construction");
        to_planes(&spec, self.frames, self.plan.bins())
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let g = from_planes(y, self.frames, self.plan.bins());
        self.plan
            .analyze_adjoint(&g, self.len)
            .expect("length validated at construction")
    }
}

/// `[2, bins, frames]` spectrogram to a waveform of `frames·hop` samples.
pub struct IstftMap {
    plan: StftPlan,
    frames: usize,
}

impl IstftMap {
    pub fn new(fft_size: usize, hop: usize, frames: usize) -> Result<Self> {
        let plan = StftPlan::new(fft_size, hop)?;
        // fails early when the window envelope has gaps
        plan.synthesize(&vec![Complex64::new(0.0, 0.0); frames * plan.bins()], frames)?;
        Ok(Self { plan, frames })
    }
}

impl LinearMap for IstftMap {
    fn in_len(&self) -> usize {
        2 * self.plan.bins() * self.frames
    }

    fn out_shape(&self) -> Vec<usize> {
        vec![self.frames * self.plan.hop()]
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let spec = from_planes(x, self.frames, self.plan.bins());
        self.plan
            .synthesize(&spec, self.frames)
            .expect("envelope validated at construction")
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let g = self
            .plan
            .synthesize_adjoint(y, self.frames)
            .expect("envelope validated at construction");
        to_planes(&g, self.frames, self.plan.bins())
    }
}

/// Magnitudes `[bins, frames]` to mel energies `[bands, frames]`.
pub struct MelMap {
    bank: MelFilterbank,
    frames: usize,
}

impl MelMap {
    pub fn new(cfg: &MelConfig, frames: usize) -> Result<Self> {
        Ok(Self {
            bank: MelFilterbank::new(cfg)?,
            frames,
        })
    }
}

impl LinearMap for MelMap {
    fn in_len(&self) -> usize {
        self.bank.bins() * self.frames
    }

    fn out_shape(&self) -> Vec<usize> {
        vec![self.bank.bands(), self.frames]
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (bands, bins, n) = (self.bank.bands(), self.bank.bins(), self.frames);
        let w = self.bank.weights();
        let mut out = vec![0.0; bands * n];
        for b in 0..bands {
            for k in 0..bins {
                let wk = w[b * bins + k];
                if wk != 0.0 {
                    for m in 0..n {
                        out[b * n + m] += wk * x[k * n + m];
                    }
                }
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let (bands, bins, n) = (self.bank.bands(), self.bank.bins(), self.frames);
        let w = self.bank.weights();
        let mut out = vec![0.0; bins * n];
        for b in 0..bands {
            for k in 0..bins {
                let wk = w[b * bins + k];
                if wk != 0.0 {
                    for m in 0..n {
                        out[k * n + m] += wk * y[b * n + m];
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn adjoint_identity(map: &dyn LinearMap) {
        let out_len: usize = map.out_shape().iter().product();
        let x = lcg(1, map.in_len());
        let y = lcg(2, out_len);
        let lhs = dot(&map.apply(&x), &y);
        let rhs = dot(&x, &map.adjoint(&y));
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn adjoints_satisfy_dot_product_identity() {
        adjoint_identity(&StftMap::new(32, 16, 96).unwrap());
        adjoint_identity(&IstftMap::new(32, 16, 6).unwrap());
        let cfg = MelConfig { sample_rate: 8000, fft_size: 64, hop: 32, bands: 8, fmin: 0.0, fmax: 4000.0, log_floor: 1e-5 };
        adjoint_identity(&MelMap::new(&cfg, 5).unwrap());
    }

    #[test]
    fn istft_inverts_stft() {
        let s = StftMap::new(480, 240, 2400).unwrap();
        let i = IstftMap::new(480, 240, 10).unwrap();
        let x = lcg(3, 2400);
        let y = i.apply(&s.apply(&x));
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}
