use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::signal::fft::{fft_in_place, ifft_in_place};
use crate::signal::window::hann_periodic;
use crate::signal::Waveform;

/// Mirror an arbitrary index into `0..len` without repeating the edge sample
/// (`-1 -> 1`, `len -> len - 2`), folding repeatedly for indices far outside.
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len <= 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut r = i.rem_euclid(period);
    if r >= len as isize {
        r = period - r;
    }
    r as usize
}

/// Framing and windowing shared by analysis and synthesis.
///
/// Frames are centred: frame `m` covers input samples
/// `m·hop - fft/2 .. m·hop + fft/2` with reflect padding at both ends, and a
/// waveform of `M·hop` samples has exactly `M` frames.
#[derive(Debug, Clone)]
pub struct StftPlan {
    fft_size: usize,
    hop: usize,
    window: Vec<f64>,
}

impl StftPlan {
    pub fn new(fft_size: usize, hop: usize) -> Result<Self> {
        if fft_size < 2 {
            return Err(invalid("fft size must be at least 2"));
        }
        if hop == 0 || hop > fft_size {
            return Err(invalid(format!(
                "hop {hop} must be in 1..={fft_size} for fft size {fft_size}"
            )));
        }
        Ok(Self {
            fft_size,
            hop,
            window: hann_periodic(fft_size),
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn frames_for(&self, len: usize) -> Result<usize> {
        if len == 0 || len % self.hop != 0 {
            return Err(invalid(format!(
                "waveform length {len} is not a positive multiple of hop {}",
                self.hop
            )));
        }
        Ok(len / self.hop)
    }

    /// Forward STFT, frames-major (`M × K`).
    pub fn analyze(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        let frames = self.frames_for(x.len())?;
        let n_fft = self.fft_size;
        let k_bins = self.bins();
        let half = (n_fft / 2) as isize;
        let mut out = Vec::with_capacity(frames * k_bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for m in 0..frames {
            let start = (m * self.hop) as isize - half;
            for (n, b) in buf.iter_mut().enumerate() {
                let idx = reflect_index(start + n as isize, x.len());
                *b = Complex64::new(x[idx] * self.window[n], 0.0);
            }
            fft_in_place(&mut buf);
            out.extend_from_slice(&buf[..k_bins]);
        }
        Ok(out)
    }

    /// Adjoint of [`analyze`](Self::analyze) with respect to the real input.
    ///
    /// `grad[m·K + k]` holds `∂L/∂Re + j ∂L/∂Im` for that bin.
    pub fn analyze_adjoint(&self, grad: &[Complex64], len: usize) -> Result<Vec<f64>> {
        let frames = self.frames_for(len)?;
        let k_bins = self.bins();
        if grad.len() != frames * k_bins {
            return Err(invalid("gradient does not match the spectrogram shape"));
        }
        let n_fft = self.fft_size;
        let half = (n_fft / 2) as isize;
        let mut gx = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for m in 0..frames {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            buf[..k_bins].copy_from_slice(&grad[m * k_bins..(m + 1) * k_bins]);
            ifft_in_place(&mut buf);
            let start = (m * self.hop) as isize - half;
            for (n, b) in buf.iter().enumerate() {
                let idx = reflect_index(start + n as isize, len);
                gx[idx] += self.window[n] * b.re;
            }
        }
        Ok(gx)
    }

    fn padded_len(&self, frames: usize) -> usize {
        let covered = (frames - 1) * self.hop + self.fft_size;
        covered.max(self.fft_size / 2 + frames * self.hop)
    }

    /// Summed squared synthesis window over the padded signal.
    fn envelope(&self, frames: usize) -> Vec<f64> {
        let mut env = vec![0.0; self.padded_len(frames)];
        for m in 0..frames {
            for (n, w) in self.window.iter().enumerate() {
                env[m * self.hop + n] += w * w;
            }
        }
        env
    }

    fn checked_envelope(&self, frames: usize) -> Result<Vec<f64>> {
        let env = self.envelope(frames);
        let off = self.fft_size / 2;
        if let Some(t) = env[off..off + frames * self.hop]
            .iter()
            .position(|&e| e <= 1e-11)
        {
            return Err(Error::Internal(format!(
                "window envelope vanishes at sample {t} (hop {} too large for fft {})",
                self.hop, self.fft_size
            )));
        }
        Ok(env)
    }

    fn inverse_frame(&self, bins: &[Complex64], buf: &mut [Complex64]) {
        let n_fft = self.fft_size;
        let k_bins = self.bins();
        buf[0] = Complex64::new(bins[0].re, 0.0);
        for k in 1..k_bins {
            if 2 * k == n_fft {
                buf[k] = Complex64::new(bins[k].re, 0.0);
            } else {
                buf[k] = bins[k];
                buf[n_fft - k] = bins[k].conj();
            }
        }
        ifft_in_place(buf);
    }

    /// Least-squares overlap-add inverse of a frames-major spectrogram.
    pub fn synthesize(&self, spec: &[Complex64], frames: usize) -> Result<Vec<f64>> {
        let k_bins = self.bins();
        if frames == 0 || spec.len() != frames * k_bins {
            return Err(invalid(format!(
                "spectrogram has {} values, expected {frames} frames × {k_bins} bins",
                spec.len()
            )));
        }
        let env = self.checked_envelope(frames)?;
        let n_fft = self.fft_size;
        let scale = 1.0 / n_fft as f64;
        let mut acc = vec![0.0; env.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for m in 0..frames {
            self.inverse_frame(&spec[m * k_bins..(m + 1) * k_bins], &mut buf);
            let base = m * self.hop;
            for n in 0..n_fft {
                acc[base + n] += self.window[n] * buf[n].re * scale;
            }
        }
        let off = n_fft / 2;
        Ok((0..frames * self.hop)
            .map(|t| acc[off + t] / env[off + t])
            .collect())
    }

    /// Adjoint of [`synthesize`](Self::synthesize); returns `∂L/∂Re + j ∂L/∂Im` per bin.
    pub fn synthesize_adjoint(&self, grad_out: &[f64], frames: usize) -> Result<Vec<Complex64>> {
        if frames == 0 || grad_out.len() != frames * self.hop {
            return Err(invalid("output gradient does not match the synthesis length"));
        }
        let env = self.checked_envelope(frames)?;
        let n_fft = self.fft_size;
        let k_bins = self.bins();
        let off = n_fft / 2;
        let mut gp = vec![0.0; env.len()];
        for (t, g) in grad_out.iter().enumerate() {
            gp[off + t] = g / env[off + t];
        }
        let scale = 1.0 / n_fft as f64;
        let mut out = Vec::with_capacity(frames * k_bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        for m in 0..frames {
            let base = m * self.hop;
            for n in 0..n_fft {
                buf[n] = Complex64::new(self.window[n] * gp[base + n], 0.0);
            }
            fft_in_place(&mut buf);
            for (k, b) in buf.iter().take(k_bins).enumerate() {
                let c = if k == 0 || 2 * k == n_fft { 1.0 } else { 2.0 };
                let im = if k == 0 || 2 * k == n_fft { 0.0 } else { b.im };
                out.push(Complex64::new(c * scale * b.re, c * scale * im));
            }
        }
        Ok(out)
    }
}

/// Complex STFT of a waveform, `frames × bins`, frames-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Vec<Complex64>,
    pub frames: usize,
    pub bins: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn at(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

/// Hann-windowed STFT with centred, reflect-padded framing.
pub fn stft(x: &Waveform, fft_size: usize, hop: usize) -> Result<ComplexSpectrogram> {
    let plan = StftPlan::new(fft_size, hop)?;
    let data = plan.analyze(x.samples())?;
    Ok(ComplexSpectrogram {
        frames: x.len() / hop,
        bins: plan.bins(),
        data,
        fft_size,
        hop,
        sample_rate: x.sample_rate(),
    })
}

/// Least-squares overlap-add inverse; output has `frames·hop` samples.
pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform> {
    let plan = StftPlan::new(s.fft_size, s.hop)?;
    if s.bins != plan.bins() {
        return Err(invalid(format!(
            "spectrogram has {} bins, expected {} for fft {}",
            s.bins,
            plan.bins(),
            s.fft_size
        )));
    }
    let y = plan.synthesize(&s.data, s.frames)?;
    Waveform::new(y, s.sample_rate)
}
