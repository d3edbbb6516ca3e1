#![no_main]

use libfuzzer_sys::fuzz_target;
use wavehax_autodiff::checkpoint::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(entries) = decode(data) {
        let bytes = encode(entries.iter().map(|(n, t)| (n.as_str(), t)));
        assert_eq!(decode(&bytes).unwrap().len(), entries.len());
    }
});
