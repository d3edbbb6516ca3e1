#![no_main]

use libfuzzer_sys::fuzz_target;
use wavehax_core::io::{decode_mel, encode_mel};
use wavehax_core::signal::MelConfig;

fuzz_target!(|data: &[u8]| {
    let cfg = MelConfig::for_rate(24000);
    if let Ok(m) = decode_mel(data, &cfg) {
        assert_eq!(m.data.len(), m.frames * m.bands);
        assert_eq!(encode_mel(&m), data);
    }
});
