//! Aliasing analyses: pointwise nonlinearities as coefficient signals, the
//! oversampled ("anti-aliased") nonlinear operation, closed-form harmonic
//! expansions of rectified and powered sinusoids, and alias-energy measures.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::prior::steady_segment;
use crate::signal::window::blackman_harris;
use crate::signal::{dft_real, resample, FirLowpass, ResampleFactor, Spectrum, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Identity,
    Relu,
    Tanh,
    /// `x + sin²(αx)/α`.
    Snake { alpha: f64 },
    /// `Σ c_k x^k`.
    Polynomial(Vec<f64>),
}

impl Nonlinearity {
    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Relu => x.max(0.0),
            Self::Tanh => x.tanh(),
            Self::Snake { alpha } => x + (alpha * x).sin().powi(2) / alpha,
            Self::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.evaluate(v)).collect()
    }
}

impl std::str::FromStr for Nonlinearity {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "relu" => Ok(Self::Relu),
            "tanh" => Ok(Self::Tanh),
            "snake" => Ok(Self::Snake { alpha: 1.0 }),
            other => {
                if let Some(a) = other.strip_prefix("snake:") {
                    let alpha: f64 = a
                        .trim()
                        .parse()
                        .map_err(|_| invalid(format!("bad snake alpha `{a}`")))?;
                    if !(alpha > 0.0 && alpha.is_finite()) {
                        return Err(invalid("snake alpha must be positive"));
                    }
                    Ok(Self::Snake { alpha })
                } else if let Some(list) = other.strip_prefix("poly:") {
                    let coeffs = list
                        .split(',')
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| invalid(format!("bad polynomial coefficient: {e}")))?;
                    Ok(Self::Polynomial(coeffs))
                } else {
                    Err(invalid(format!(
                        "unknown nonlinearity `{other}` (identity|relu|tanh|snake[:alpha]|poly:c0,c1,..)"
                    )))
                }
            }
        }
    }
}

/// `a[n] = f(x[n]) / x[n]` where `x[n] ≠ 0`, else 0, so that `x ⊙ a = f(x)` off zeros.
pub fn coefficient_signal(x: &[f64], f: &Nonlinearity) -> Vec<f64> {
    x.iter()
        .map(|&v| if v != 0.0 { f.evaluate(v) / v } else { 0.0 })
        .collect()
}

/// Intermediate signals of the oversampled nonlinearity at twice the input rate.
#[derive(Debug, Clone)]
pub struct AntiAliasTrace {
    pub upsampled: Waveform,
    pub coefficients: Vec<f64>,
    pub product: Vec<f64>,
    pub output: Waveform,
}

/// Upsample ×2 (low-pass at the input Nyquist), apply `f`, low-pass at the
/// input Nyquist and decimate back. Output length equals input length.
pub fn anti_aliased_apply(x: &Waveform, f: &Nonlinearity) -> Result<Waveform> {
    anti_aliased_trace(x, f).map(|t| t.output)
}

pub fn anti_aliased_trace(x: &Waveform, f: &Nonlinearity) -> Result<AntiAliasTrace> {
    let upsampled = resample(x, ResampleFactor::Up2)?;
    let coefficients = coefficient_signal(upsampled.samples(), f);
    let product = f.apply(upsampled.samples());
    let shaped = Waveform::new(product.clone(), upsampled.sample_rate())?;
    let output = resample(&shaped, ResampleFactor::Down2)?;
    Ok(AntiAliasTrace {
        upsampled,
        coefficients,
        product,
        output,
    })
}

/// Coefficients of `relu(sin θ) = 1/π + sin(θ)/2 − Σ_k 2cos(2kθ)/(π(2k−1)(2k+1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RectifiedSineSeries {
    pub dc: f64,
    pub fundamental: f64,
    /// Amplitude of the `cos(2kθ)` term for `k = 1..`, subtracted in the series.
    pub even: Vec<f64>,
}

impl RectifiedSineSeries {
    pub fn new(n_terms: usize) -> Self {
        Self {
            dc: 1.0 / PI,
            fundamental: 0.5,
            even: (1..=n_terms)
                .map(|k| {
                    let k = k as f64;
                    2.0 / (PI * (2.0 * k - 1.0) * (2.0 * k + 1.0))
                })
                .collect(),
        }
    }

    pub fn evaluate(&self, theta: f64) -> f64 {
        let mut v = self.dc + self.fundamental * theta.sin();
        for (i, c) in self.even.iter().enumerate() {
            v -= c * (2.0 * (i + 1) as f64 * theta).cos();
        }
        v
    }
}

/// Truncated rectified-sine series sampled at integer `t`, angular frequency `omega` rad/sample.
pub fn rectified_sine_oracle(omega: f64, n_terms: usize, length: usize) -> Result<Vec<f64>> {
    if n_terms == 0 {
        return Err(invalid("rectified sine series needs at least one term"));
    }
    let series = RectifiedSineSeries::new(n_terms);
    Ok((0..length)
        .map(|t| series.evaluate(omega * t as f64))
        .collect())
}

/// `sinᵏθ = Σ_m a_m sin(mθ) + b_m cos(mθ)`, `m = 0..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicDecomposition {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl HarmonicDecomposition {
    pub fn evaluate(&self, theta: f64) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(m, (a, b))| {
                let mt = m as f64 * theta;
                a * mt.sin() + b * mt.cos()
            })
            .sum()
    }

    /// Largest index with a nonzero coefficient.
    pub fn support(&self) -> usize {
        (0..self.a.len())
            .rev()
            .find(|&m| self.a[m] != 0.0 || self.b[m] != 0.0)
            .unwrap_or(0)
    }
}

/// Harmonic decomposition of `sinᵏ` by repeated multiplication with `sin θ`
/// using the product-to-sum identities.
pub fn sine_power_decompose(k: i64) -> Result<HarmonicDecomposition> {
    if k < 0 {
        return Err(invalid(format!("sine power must be non-negative, got {k}")));
    }
    let k = k as usize;
    let mut a = vec![0.0; k + 1];
    let mut b = vec![0.0; k + 1];
    b[0] = 1.0;
    for n in 0..k {
        let mut na = vec![0.0; k + 1];
        let mut nb = vec![0.0; k + 1];
        for m in 0..=n {
            // a_m sin(mθ)sinθ = a_m/2 [cos((m−1)θ) − cos((m+1)θ)]
            if a[m] != 0.0 {
                nb[m - 1] += a[m] / 2.0;
                nb[m + 1] -= a[m] / 2.0;
            }
            // b_m cos(mθ)sinθ = b_m/2 [sin((m+1)θ) − sin((m−1)θ)]
            if b[m] != 0.0 {
                na[m + 1] += b[m] / 2.0;
                if m == 0 {
                    na[1] += b[0] / 2.0;
                } else {
                    na[m - 1] -= b[m] / 2.0;
                }
            }
        }
        na[0] = 0.0;
        a = na;
        b = nb;
    }
    Ok(HarmonicDecomposition { a, b })
}

/// DFT of `Σ c_k sin(2π·f0_bin·n/N)^k`; the returned spectrum uses `N` as its
/// sample rate so bin index equals frequency.
pub fn polynomial_apply_spectrum(f0_bin: usize, coeffs: &[f64], n: usize) -> Result<Spectrum> {
    if n == 0 {
        return Err(invalid("spectrum length must be positive"));
    }
    let poly = Nonlinearity::Polynomial(coeffs.to_vec());
    let x: Vec<f64> = (0..n)
        .map(|i| poly.evaluate((2.0 * PI * (f0_bin * i) as f64 / n as f64).sin()))
        .collect();
    Ok(Spectrum {
        bins: dft_real(&x, n)?,
        sample_rate: n as u32,
    })
}

/// `(S ⋆ l)[k] = Σ_{m<L} S[(k+m) mod N]·l[m]` over spectral bins.
pub fn freq_domain_convolve(s: &[Complex64], kernel: &[Complex64]) -> Result<Vec<Complex64>> {
    if kernel.is_empty() {
        return Err(invalid("spectral kernel is empty"));
    }
    if kernel.len() > s.len() {
        return Err(invalid("spectral kernel is longer than the spectrum"));
    }
    let n = s.len();
    Ok((0..n)
        .map(|k| {
            kernel
                .iter()
                .enumerate()
                .map(|(m, l)| s[(k + m) % n] * l)
                .sum()
        })
        .collect())
}

/// `(1/N)·Σ_m X[(k−m) mod N]·A[m]`: the spectrum of an elementwise product.
pub fn circular_convolve_spectra(x: &[Complex64], a: &[Complex64]) -> Result<Vec<Complex64>> {
    if x.len() != a.len() || x.is_empty() {
        return Err(invalid("spectra must be non-empty and of equal length"));
    }
    let n = x.len();
    Ok((0..n)
        .map(|k| {
            (0..n)
                .map(|m| x[(k + n - m) % n] * a[m])
                .sum::<Complex64>()
                / n as f64
        })
        .collect())
}

/// Non-harmonic to harmonic energy ratio in dB.
///
/// Bins within `tolerance_bins` of any `k·f0 ≤ Nyquist` (including DC) are
/// harmonic. A Blackman-Harris window keeps leakage below ~−90 dB, so the
/// tolerance should cover its main lobe (4 bins).
pub fn alias_energy(x: &Waveform, f0: f64, tolerance_bins: usize) -> Result<f64> {
    let nyquist = x.nyquist();
    if !(f0 > 0.0 && f0 < nyquist) {
        return Err(invalid(format!("f0 {f0} Hz must lie in (0, {nyquist}) Hz")));
    }
    let n = x.len();
    if n < 2 {
        return Err(invalid("alias energy needs at least two samples"));
    }
    let w = blackman_harris(n);
    let windowed: Vec<f64> = x.samples().iter().zip(&w).map(|(v, w)| v * w).collect();
    let spec = dft_real(&windowed, n)?;
    let bin_hz = x.sample_rate() as f64 / n as f64;
    let half = n / 2;
    let mut harmonic = vec![false; half + 1];
    let mut k = 0usize;
    while k as f64 * f0 <= nyquist {
        let centre = (k as f64 * f0 / bin_hz).round() as isize;
        for d in -(tolerance_bins as isize)..=tolerance_bins as isize {
            let b = centre + d;
            if (0..=half as isize).contains(&b) {
                harmonic[b as usize] = true;
            }
        }
        k += 1;
    }
    let (mut e_h, mut e_n) = (0.0, 0.0);
    for (b, is_h) in harmonic.iter().enumerate() {
        let e = spec[b].norm_sqr();
        if *is_h {
            e_h += e;
        } else {
            e_n += e;
        }
    }
    if e_h == 0.0 {
        return Err(invalid("no energy at harmonic bins"));
    }
    Ok(10.0 * (e_n.max(f64::MIN_POSITIVE) / e_h).log10())
}

/// Energy of `y − reference` relative to the reference over the steady-state
/// part of the signals, in dB.
pub fn reference_error_db(y: &[f64], reference: &[f64]) -> Result<f64> {
    if y.len() != reference.len() || y.len() < 10 {
        return Err(invalid("signal and reference must have equal length ≥ 10"));
    }
    let ys = steady_segment(y);
    let rs = steady_segment(reference);
    let err: f64 = ys.iter().zip(rs).map(|(a, b)| (a - b).powi(2)).sum();
    let refe: f64 = rs.iter().map(|v| v * v).sum();
    if refe == 0.0 {
        return Err(invalid("reference has no energy"));
    }
    Ok(10.0 * (err.max(f64::MIN_POSITIVE) / refe).log10())
}

/// Alias-free part of `relu(A·sin(2πf0·t/fs))` at the base rate: the
/// rectified-sine series restricted to partials up to Nyquist, each partial
/// scaled by `gain(hz)`. The series holds only cosines above the fundamental,
/// so a partial exactly at Nyquist is still representable.
pub fn band_limited_rectified_sine(
    f0: f64,
    sample_rate: u32,
    len: usize,
    amplitude: f64,
    gain: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let mut partials = vec![(0.0, 1.0 / PI, false)];
    if f0 < nyquist {
        partials.push((f0, 0.5, true));
    }
    let mut k = 1usize;
    while 2.0 * k as f64 * f0 <= nyquist {
        let kf = k as f64;
        partials.push((
            2.0 * kf * f0,
            -2.0 / (PI * (2.0 * kf - 1.0) * (2.0 * kf + 1.0)),
            false,
        ));
        k += 1;
    }
    let weighted: Vec<(f64, f64, bool)> = partials
        .into_iter()
        .map(|(hz, c, is_sin)| (hz, amplitude * c * gain(hz), is_sin))
        .collect();
    (0..len)
        .map(|t| {
            let tt = t as f64 / sample_rate as f64;
            weighted
                .iter()
                .map(|&(hz, c, is_sin)| {
                    let ph = 2.0 * PI * hz * tt;
                    if is_sin {
                        c * ph.sin()
                    } else {
                        c * ph.cos()
                    }
                })
                .sum::<f64>()
        })
        .collect()
}

/// Alias error of naive and oversampled relu on a pure tone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluAliasReport {
    pub f0: f64,
    pub naive_db: f64,
    pub anti_aliased_db: f64,
}

impl ReluAliasReport {
    pub fn reduction_db(&self) -> f64 {
        self.naive_db - self.anti_aliased_db
    }
}

/// Compare relu applied pointwise and through [`anti_aliased_apply`] against
/// their alias-free references.
///
/// Each output is measured against the band-limited rectified-sine series it
/// would produce without aliasing. For the oversampled path the reference
/// includes the (known) passband response of the resampling filters, so only
/// folded components count as error. Subtraction sees aliases that land
/// exactly on harmonic bins, which bin partitioning cannot.
pub fn relu_alias_report(f0: f64, sample_rate: u32, len: usize) -> Result<ReluAliasReport> {
    let fs = sample_rate as f64;
    if !(f0 > 0.0 && f0 < fs / 2.0) {
        return Err(invalid(format!("f0 {f0} Hz must lie in (0, {}) Hz", fs / 2.0)));
    }
    let x: Vec<f64> = (0..len)
        .map(|t| (2.0 * PI * f0 * t as f64 / fs).sin())
        .collect();
    let naive = Nonlinearity::Relu.apply(&x);
    let reference = band_limited_rectified_sine(f0, sample_rate, len, 1.0, |_| 1.0);
    let naive_db = reference_error_db(&naive, &reference)?;

    let wave = Waveform::new(x, sample_rate)?;
    let aa = anti_aliased_apply(&wave, &Nonlinearity::Relu)?;
    let filter = FirLowpass::design(
        0.25,
        crate::signal::DEFAULT_ORDER,
        crate::signal::DEFAULT_KAISER_BETA,
    )?;
    // relu is positively homogeneous, so the up-filter gain at f0 scales the
    // whole series; each partial then passes the down filter.
    let amp = filter.response(f0 / (2.0 * fs));
    let aa_ref = band_limited_rectified_sine(f0, sample_rate, len, amp, |hz| {
        filter.response(hz / (2.0 * fs))
    });
    let anti_aliased_db = reference_error_db(aa.samples(), &aa_ref)?;
    Ok(ReluAliasReport {
        f0,
        naive_db,
        anti_aliased_db,
    })
}

/// One-sided log amplitude spectrum (`hz`, `dB`) with a Hann window.
pub fn log_spectrum_db(x: &[f64], sample_rate: u32) -> Result<Vec<(f64, f64)>> {
    let n = x.len();
    if n == 0 {
        return Err(invalid("empty signal"));
    }
    let w = crate::signal::window::hann_periodic(n);
    let windowed: Vec<f64> = x.iter().zip(&w).map(|(v, w)| v * w).collect();
    let spec = dft_real(&windowed, n)?;
    let norm: f64 = w.iter().sum::<f64>() / 2.0;
    Ok((0..=n / 2)
        .map(|k| {
            let hz = k as f64 * sample_rate as f64 / n as f64;
            let amp = spec[k].norm() / norm;
            (hz, 20.0 * (amp.max(1e-12)).log10())
        })
        .collect())
}
