#![no_main]

use libfuzzer_sys::fuzz_target;
use srkit_core::autograd::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = decode_checkpoint(data) {
        // Anything that decodes must re-encode to the same bytes.
        let bytes = encode_checkpoint(&records).expect("decoded records re-encode");
        assert_eq!(bytes, data);
    }
});
