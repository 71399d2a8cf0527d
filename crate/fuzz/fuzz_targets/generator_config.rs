#![no_main]

use libfuzzer_sys::fuzz_target;
use srkit_core::models::GeneratorConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = GeneratorConfig::from_json(text) {
            let _ = cfg.validate();
            let _ = cfg.downsample_factor();
        }
    }
});
