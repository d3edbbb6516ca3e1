use std::path::Path;

use crate::error::{format_err, Result};
use crate::signal::{MelConfig, MelSpectrogram};

pub const MEL_MAGIC: &[u8; 4] = b"MELS";
const HEADER_LEN: usize = 4 + 4 * 2;
/// Refuse headers that would need more than this many values.
const MAX_VALUES: usize = 1 << 28;

/// `MELS`, little-endian u32 frames and bands, then `frames × bands` f32
/// values, frames-major.
pub fn encode_mel(m: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data.len());
    out.extend_from_slice(MEL_MAGIC);
    for v in [m.frames as u32, m.bands as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &m.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// The file stores no analysis parameters; hop and band edges come from `cfg`.
pub fn decode_mel(bytes: &[u8], cfg: &MelConfig) -> Result<MelSpectrogram> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MEL_MAGIC {
        return Err(format_err("mel file", "missing MELS header"));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (frames, bands) = (u(4), u(8));
    if bands == 0 {
        return Err(format_err("mel file", "band count must be positive"));
    }
    let count = frames
        .checked_mul(bands)
        .filter(|&c| c <= MAX_VALUES)
        .ok_or_else(|| format_err("mel file", "feature matrix is too large"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 4 {
        return Err(format_err(
            "mel file",
            format!("expected {} data bytes, found {}", count * 4, body.len()),
        ));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(format_err("mel file", "non-finite value"));
    }
    Ok(MelSpectrogram {
        data,
        frames,
        bands,
        fmin: cfg.fmin,
        fmax: cfg.fmax,
        hop: cfg.hop,
    })
}

pub fn read_mel(path: &Path, cfg: &MelConfig) -> Result<MelSpectrogram> {
    decode_mel(&std::fs::read(path)?, cfg)
}

pub fn write_mel(path: &Path, m: &MelSpectrogram) -> Result<()> {
    super::atomic_write(path, &encode_mel(m))
}
