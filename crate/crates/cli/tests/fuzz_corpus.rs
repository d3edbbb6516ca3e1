//! Runs the checked-in fuzz seeds through the parsers with the same
//! invariants the fuzz targets assert.

use std::path::PathBuf;

use wavehax_autodiff::checkpoint;
use wavehax_core::io::{decode_mel, decode_wav, encode_mel, parse_f0_csv, render_f0_csv, KeyValues};
use wavehax_core::signal::MelConfig;
use wavehax_model::GeneratorConfig;

/// Seeds whose names start with one of these must be rejected.
const MALFORMED: &[&str] = &["truncated", "bad_order", "short_body", "unknown_key", "overflowing"];

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn check<T, E: std::fmt::Debug>(name: &str, r: Result<T, E>) -> Option<T> {
    let malformed = MALFORMED.iter().any(|m| name.starts_with(m));
    match r {
        Ok(v) => {
            assert!(!malformed, "{name} should be rejected");
            Some(v)
        }
        Err(e) => {
            assert!(malformed, "{name}: {e:?}");
            None
        }
    }
}

#[test]
fn wav_seeds() {
    for (name, bytes) in seeds("wav") {
        if let Some(x) = check(&name, decode_wav(&bytes)) {
            assert_eq!(x.sample_rate(), 24000);
            assert!(x.samples().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        }
    }
}

#[test]
fn f0_seeds() {
    for (name, bytes) in seeds("f0_csv") {
        if let Some(f0) = check(&name, parse_f0_csv(bytes.as_slice(), 240, 24000)) {
            let again = parse_f0_csv(render_f0_csv(&f0).as_bytes(), 240, 24000).unwrap();
            assert_eq!(again.values(), f0.values());
        }
    }
}

#[test]
fn mel_seeds() {
    let cfg = MelConfig::for_rate(24000);
    for (name, bytes) in seeds("mel_file") {
        if let Some(m) = check(&name, decode_mel(&bytes, &cfg)) {
            assert_eq!(encode_mel(&m), bytes);
        }
    }
}

#[test]
fn checkpoint_seeds() {
    for (name, bytes) in seeds("checkpoint") {
        if let Some(entries) = check(&name, checkpoint::decode(&bytes)) {
            assert_eq!(checkpoint::encode(entries.iter().map(|(n, t)| (n.as_str(), t))), bytes);
        }
    }
}

#[test]
fn config_seeds() {
    for (name, bytes) in seeds("config") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let parsed = KeyValues::parse(text).and_then(|kv| GeneratorConfig::from_key_values(&kv));
        if let Some(cfg) = check(&name, parsed) {
            let again = GeneratorConfig::from_key_values(&KeyValues::parse(&cfg.to_key_values().render()).unwrap());
            assert_eq!(again.unwrap(), cfg);
        }
    }
}
