//! Replays the checked-in fuzz corpus through the same entry points the
//! fuzz targets drive.

use std::fs;
use std::path::PathBuf;

use srkit_core::autograd::{decode_checkpoint, encode_checkpoint};
use srkit_core::models::GeneratorConfig;
use srkit_core::signal::decode_wav;
use srkit_core::train::TrainConfig;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn wav_seeds_decode() {
    for (path, bytes) in seeds("decode_wav") {
        let wave = decode_wav(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!wave.samples().is_empty());
        assert!(wave.samples().iter().all(|s| s.is_finite() && s.abs() <= 1.0));
    }
}

#[test]
fn checkpoint_seeds_roundtrip() {
    for (path, bytes) in seeds("decode_checkpoint") {
        let recs = decode_checkpoint(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(encode_checkpoint(&recs).unwrap(), bytes, "{}", path.display());
    }
}

#[test]
fn config_seeds_parse() {
    for (path, bytes) in seeds("train_config") {
        let cfg = TrainConfig::from_json(std::str::from_utf8(&bytes).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
    }
    for (path, bytes) in seeds("generator_config") {
        GeneratorConfig::from_json(std::str::from_utf8(&bytes).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn truncated_seeds_never_panic() {
    for target in ["decode_wav", "decode_checkpoint"] {
        for (_, bytes) in seeds(target) {
            for cut in 0..bytes.len() {
                let _ = decode_wav(&bytes[..cut]);
                let _ = decode_checkpoint(&bytes[..cut]);
            }
        }
    }
}
