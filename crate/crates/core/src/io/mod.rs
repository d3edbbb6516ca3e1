//! File formats: WAV audio, F0 contours as CSV, binary mel features and
//! `key = value` configuration text. Every writer goes through a temporary
//! file that is renamed into place.

mod config;
mod f0;
mod mel;
mod wav;

use std::io::Write;
use std::path::Path;

pub use config::KeyValues;
pub use f0::{parse_f0_csv, read_f0_csv, render_f0_csv, write_f0_csv};
pub use mel::{decode_mel, encode_mel, read_mel, write_mel, MEL_MAGIC};
pub use wav::{decode_wav, read_wav, write_wav, WavFormat};

use crate::error::Result;

/// Write `bytes` to `path` atomically (temp file in the same directory, then rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
