use crate::error::{invalid, Result};
use crate::signal::stft::StftPlan;
use crate::signal::Waveform;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub bands: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl MelConfig {
    /// 100 bands over 0–8 kHz, 2048-point FFT, 10 ms hop.
    pub fn for_rate(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            fft_size: 2048,
            hop: (sample_rate / 100) as usize,
            bands: 100,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.bands == 0 {
            return Err(invalid("mel band count must be positive"));
        }
        if self.fmax > nyquist {
            return Err(invalid(format!(
                "mel fmax {} Hz exceeds Nyquist {nyquist} Hz",
                self.fmax
            )));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return Err(invalid(format!(
                "mel range [{}, {}] Hz is empty",
                self.fmin, self.fmax
            )));
        }
        if self.log_floor <= 0.0 {
            return Err(invalid("log floor must be positive"));
        }
        StftPlan::new(self.fft_size, self.hop).map(|_| ())
    }
}

impl Default for MelConfig {
    fn default() -> Self {
        Self::for_rate(24000)
    }
}

/// Triangular filters on the HTK mel scale, peak gain 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    bands: usize,
    bins: usize,
    centres: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let bins = cfg.fft_size / 2 + 1;
        let lo = hz_to_mel(cfg.fmin);
        let hi = hz_to_mel(cfg.fmax);
        let edges: Vec<f64> = (0..cfg.bands + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.bands + 1) as f64))
            .collect();
        let mut weights = vec![0.0; cfg.bands * bins];
        for b in 0..cfg.bands {
            let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
            for k in 0..bins {
                let f = k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64;
                let up = (f - l) / (c - l);
                let down = (r - f) / (r - c);
                weights[b * bins + k] = up.min(down).max(0.0);
            }
        }
        Ok(Self {
            weights,
            bands: cfg.bands,
            bins,
            centres: edges[1..=cfg.bands].to_vec(),
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Row-major `bands × bins` weight matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn centres_hz(&self) -> &[f64] {
        &self.centres
    }

    /// Project one magnitude frame (`bins` values) onto the bands.
    pub fn project(&self, magnitudes: &[f64], out: &mut [f64]) {
        for (b, o) in out.iter_mut().enumerate() {
            let row = &self.weights[b * self.bins..(b + 1) * self.bins];
            *o = row.iter().zip(magnitudes).map(|(w, m)| w * m).sum();
        }
    }
}

/// Log-amplitude mel features, `frames × bands`, frames-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Vec<f64>,
    pub frames: usize,
    pub bands: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub hop: usize,
}

impl MelSpectrogram {
    pub fn frame(&self, m: usize) -> &[f64] {
        &self.data[m * self.bands..(m + 1) * self.bands]
    }

    pub fn at(&self, frame: usize, band: usize) -> f64 {
        self.data[frame * self.bands + band]
    }
}

pub fn mel_spectrogram(x: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    if x.sample_rate() != cfg.sample_rate {
        return Err(invalid(format!(
            "waveform rate {} Hz differs from mel config rate {} Hz",
            x.sample_rate(),
            cfg.sample_rate
        )));
    }
    let bank = MelFilterbank::new(cfg)?;
    let plan = StftPlan::new(cfg.fft_size, cfg.hop)?;
    let spec = plan.analyze(x.samples())?;
    let bins = plan.bins();
    let frames = spec.len() / bins;
    let mut data = vec![0.0; frames * cfg.bands];
    let mut mag = vec![0.0; bins];
    for m in 0..frames {
        for (k, v) in mag.iter_mut().enumerate() {
            *v = spec[m * bins + k].norm();
        }
        let out = &mut data[m * cfg.bands..(m + 1) * cfg.bands];
        bank.project(&mag, out);
        out.iter_mut().for_each(|v| *v = (*v + cfg.log_floor).ln());
    }
    Ok(MelSpectrogram {
        data,
        frames,
        bands: cfg.bands,
        fmin: cfg.fmin,
        fmax: cfg.fmax,
        hop: cfg.hop,
    })
}
