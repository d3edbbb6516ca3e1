#![no_main]

use libfuzzer_sys::fuzz_target;
use wavehax_core::io::{parse_f0_csv, render_f0_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(f0) = parse_f0_csv(data, 240, 24000) {
        assert!(f0.values().iter().all(|v| v.is_finite() && *v >= 0.0));
        let again = parse_f0_csv(render_f0_csv(&f0).as_bytes(), 240, 24000).unwrap();
        assert_eq!(again.values(), f0.values());
    }
});
