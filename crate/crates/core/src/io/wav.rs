use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{format_err, invalid, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

/// Decode a mono WAV held in memory. Integer PCM is scaled to `[-1, 1)`.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(|e| format_err("wav", e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(format_err(
            "wav",
            format!("expected mono audio, found {} channels", spec.channels),
        ));
    }
    if spec.sample_rate == 0 {
        return Err(format_err("wav", "sample rate is zero"));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
        }
        (fmt, bits) => {
            return Err(format_err(
                "wav",
                format!("unsupported sample format {fmt:?} with {bits} bits"),
            ))
        }
    }
    .map_err(|e| format_err("wav", e.to_string()))?;
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(format_err("wav", "non-finite sample"));
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Read a mono WAV file, optionally requiring a sample rate.
pub fn read_wav(path: &Path, expected_rate: Option<u32>) -> Result<Waveform> {
    let bytes = std::fs::read(path)?;
    let w = decode_wav(&bytes)?;
    if let Some(rate) = expected_rate {
        if w.sample_rate() != rate {
            return Err(invalid(format!(
                "{} is sampled at {} Hz, expected {rate} Hz",
                path.display(),
                w.sample_rate()
            )));
        }
    }
    Ok(w)
}

fn encode_wav(x: &Waveform, format: WavFormat) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: x.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut buf = Cursor::new(Vec::new());
    let map = |e: hound::Error| format_err("wav", e.to_string());
    {
        let mut w = WavWriter::new(&mut buf, spec).map_err(map)?;
        for &s in x.samples() {
            match format {
                WavFormat::Pcm16 => {
                    let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    w.write_sample(v).map_err(map)?;
                }
                WavFormat::Float32 => w.write_sample(s as f32).map_err(map)?,
            }
        }
        w.finalize().map_err(map)?;
    }
    Ok(buf.into_inner())
}

pub fn write_wav(path: &Path, x: &Waveform, format: WavFormat) -> Result<()> {
    super::atomic_write(path, &encode_wav(x, format)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let x = Waveform::new((0..100).map(|i| (i as f64 * 0.1).sin() * 0.9).collect(), 24000).unwrap();
        let y = decode_wav(&encode_wav(&x, WavFormat::Pcm16).unwrap()).unwrap();
        assert_eq!(y.sample_rate(), 24000);
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }

    #[test]
    fn float_round_trip_is_f32_exact() {
        let x = Waveform::new(vec![0.25, -0.5, 1.5], 16000).unwrap();
        let y = decode_wav(&encode_wav(&x, WavFormat::Float32).unwrap()).unwrap();
        assert_eq!(y.samples(), x.samples());
    }

    #[test]
    fn rate_mismatch_and_garbage_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(&p, &Waveform::new(vec![0.0; 10], 22050).unwrap(), WavFormat::Pcm16).unwrap();
        assert!(read_wav(&p, Some(24000)).is_err());
        assert!(read_wav(&p, Some(22050)).is_ok());
        assert!(decode_wav(b"RIFF....WAVEjunk").is_err());
    }
}
