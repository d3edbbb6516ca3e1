#![no_main]

use libfuzzer_sys::fuzz_target;
use wavehax_core::io::decode_wav;

fuzz_target!(|data: &[u8]| {
    if let Ok(x) = decode_wav(data) {
        assert!(x.sample_rate() > 0);
        assert!(x.samples().iter().all(|v| v.is_finite()));
    }
});
