use crate::error::{invalid, Result};
use crate::signal::stft::reflect_index;

/// Boundary rule used by [`time_convolve`] when `n + m` runs past the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Periodic,
    Zero,
    Reflect,
}

/// Correlation-style convolution `y[n] = Σ_m x[n+m]·h[m]`, same length as `x`.
///
/// The kernel is not flipped; with periodic padding its frequency response is
/// that of the time-reversed kernel.
pub fn time_convolve(x: &[f64], h: &[f64], padding: Padding) -> Result<Vec<f64>> {
    if h.is_empty() {
        return Err(invalid("convolution kernel is empty"));
    }
    if h.len() > x.len() {
        return Err(invalid(format!(
            "kernel length {} exceeds signal length {}",
            h.len(),
            x.len()
        )));
    }
    let n_len = x.len();
    let out = (0..n_len)
        .map(|n| {
            h.iter()
                .enumerate()
                .map(|(m, &hm)| {
                    let idx = n + m;
                    let v = match padding {
                        Padding::Periodic => x[idx % n_len],
                        Padding::Zero => x.get(idx).copied().unwrap_or(0.0),
                        Padding::Reflect => x[reflect_index(idx as isize, n_len)],
                    };
                    v * hm
                })
                .sum()
        })
        .collect();
    Ok(out)
}
