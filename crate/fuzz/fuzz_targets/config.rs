#![no_main]

use libfuzzer_sys::fuzz_target;
use wavehax_core::io::KeyValues;
use wavehax_model::GeneratorConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kv) = KeyValues::parse(text) {
        if let Ok(cfg) = GeneratorConfig::from_key_values(&kv) {
            let again = GeneratorConfig::from_key_values(&KeyValues::parse(&cfg.to_key_values().render()).unwrap());
            assert_eq!(again.unwrap(), cfg);
        }
    }
});
