//! Signal processing and analysis building blocks for an aliasing-free
//! neural vocoder: STFT/iSTFT with perfect reconstruction, windowed-sinc
//! resampling, log-mel features, the band-limited harmonic prior, aliasing
//! measurements and objective spectral metrics.

pub mod aliasing;
pub mod error;
pub mod io;
pub mod metrics;
pub mod prior;
pub mod signal;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use signal::{ComplexSpectrogram, MelSpectrogram, Spectrum, Waveform};
