use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::signal::Waveform;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Unnormalized forward transform, `X[k] = Σ x[n] e^{-j2πkn/N}`.
pub fn fft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    forward_plan(buf.len()).process(buf);
}

/// Unnormalized inverse transform, `x[n] = Σ X[k] e^{+j2πkn/N}` (no 1/N).
pub fn ifft_in_place(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    inverse_plan(buf.len()).process(buf);
}

/// DFT of a real sequence zero-padded to `size`.
pub fn dft_real(x: &[f64], size: usize) -> Result<Vec<Complex64>> {
    if size == 0 {
        return Err(invalid("DFT size must be positive"));
    }
    if x.len() > size {
        return Err(invalid(format!(
            "DFT size {size} is shorter than the input ({})",
            x.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    fft_in_place(&mut buf);
    Ok(buf)
}

/// Full-length spectrum of a waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub sample_rate: u32,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.bins.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|c| c.norm_sqr()).sum()
    }
}

pub fn dft(x: &Waveform, size: usize) -> Result<Spectrum> {
    Ok(Spectrum {
        bins: dft_real(x.samples(), size)?,
        sample_rate: x.sample_rate(),
    })
}
