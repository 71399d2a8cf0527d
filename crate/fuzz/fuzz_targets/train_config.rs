#![no_main]

use libfuzzer_sys::fuzz_target;
use srkit_core::train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mut cfg) = TrainConfig::from_json(text) {
            // Keep the fuzzer off the filesystem.
            cfg.model_config = None;
            let _ = cfg.validate();
        }
    }
});
