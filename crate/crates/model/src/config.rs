use wavehax_core::io::KeyValues;
use wavehax_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub channels: usize,
    pub hidden: usize,
    pub n_blocks: usize,
    pub conv1d_kernel: usize,
    pub depthwise_kernel: usize,
    pub mel_bands: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            sample_rate: 24000,
            fft_size: 480,
            hop: 240,
            channels: 32,
            hidden: 64,
            n_blocks: 8,
            conv1d_kernel: 7,
            depthwise_kernel: 7,
            mel_bands: 100,
        }
    }
}

pub const CONFIG_KEYS: [&str; 9] = [
    "sample_rate",
    "fft_size",
    "hop",
    "channels",
    "hidden",
    "n_blocks",
    "conv1d_kernel",
    "depthwise_kernel",
    "mel_bands",
];

impl GeneratorConfig {
    /// Reduced width and depth for desk-scale training runs.
    pub fn toy() -> Self {
        Self {
            channels: 8,
            hidden: 16,
            n_blocks: 2,
            ..Self::default()
        }
    }

    /// Tiny shapes for finite-difference checks.
    pub fn micro() -> Self {
        Self {
            sample_rate: 8000,
            fft_size: 32,
            hop: 16,
            channels: 3,
            hidden: 4,
            n_blocks: 1,
            conv1d_kernel: 3,
            depthwise_kernel: 3,
            mel_bands: 6,
        }
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sample_rate", self.sample_rate as usize),
            ("fft_size", self.fft_size),
            ("channels", self.channels),
            ("hidden", self.hidden),
            ("n_blocks", self.n_blocks),
            ("mel_bands", self.mel_bands),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("generator {k} must be positive")));
        }
        // generous ceilings that keep size arithmetic far from overflow
        let limits = [
            ("sample_rate", self.sample_rate as usize, 1 << 20),
            ("fft_size", self.fft_size, 1 << 16),
            ("channels", self.channels, 1 << 12),
            ("hidden", self.hidden, 1 << 14),
            ("n_blocks", self.n_blocks, 1 << 10),
            ("conv1d_kernel", self.conv1d_kernel, 1 << 10),
            ("depthwise_kernel", self.depthwise_kernel, 1 << 10),
            ("mel_bands", self.mel_bands, 1 << 12),
        ];
        if let Some((k, v, max)) = limits.iter().find(|(_, v, max)| v > max) {
            return Err(Error::invalid(format!("generator {k} = {v} exceeds {max}")));
        }
        if self.fft_size % 2 != 0 || self.hop.checked_mul(2) != Some(self.fft_size) {
            return Err(Error::invalid(format!(
                "hop must be half of an even fft size (fft {}, hop {})",
                self.fft_size, self.hop
            )));
        }
        for (k, v) in [("conv1d_kernel", self.conv1d_kernel), ("depthwise_kernel", self.depthwise_kernel)] {
            if v % 2 == 0 {
                return Err(Error::invalid(format!("{k} must be odd, got {v}")));
            }
        }
        Ok(())
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(&CONFIG_KEYS)?;
        let d = Self::default();
        let cfg = Self {
            sample_rate: kv.get_or("sample_rate", d.sample_rate)?,
            fft_size: kv.get_or("fft_size", d.fft_size)?,
            hop: kv.get_or("hop", d.hop)?,
            channels: kv.get_or("channels", d.channels)?,
            hidden: kv.get_or("hidden", d.hidden)?,
            n_blocks: kv.get_or("n_blocks", d.n_blocks)?,
            conv1d_kernel: kv.get_or("conv1d_kernel", d.conv1d_kernel)?,
            depthwise_kernel: kv.get_or("depthwise_kernel", d.depthwise_kernel)?,
            mel_bands: kv.get_or("mel_bands", d.mel_bands)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("sample_rate", self.sample_rate);
        kv.insert("fft_size", self.fft_size);
        kv.insert("hop", self.hop);
        kv.insert("channels", self.channels);
        kv.insert("hidden", self.hidden);
        kv.insert("n_blocks", self.n_blocks);
        kv.insert("conv1d_kernel", self.conv1d_kernel);
        kv.insert("depthwise_kernel", self.depthwise_kernel);
        kv.insert("mel_bands", self.mel_bands);
        kv
    }
}
