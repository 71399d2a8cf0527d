#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(wave) = srkit_core::signal::decode_wav(data) {
        assert!(wave.samples().iter().all(|s| s.is_finite()));
    }
});
