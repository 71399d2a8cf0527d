use std::path::Path;
use std::process::{Command, Output};

fn srkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srkit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn srkit")
}

fn ok(args: &[&str]) -> String {
    let out = srkit(args);
    assert!(
        out.status.success(),
        "srkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn signal_commands() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(ok(&["synth-corpus", "--n", "2", "--seed", "4", "--out", p(&corpus)]).contains("wrote 2 files"));
    let first = corpus.join("synth_0000.wav");

    let rt = ok(&["mdct-roundtrip", p(&first)]);
    let err: f64 = rt.split_whitespace().last().unwrap().parse().unwrap();
    assert!(err < 1e-9, "{rt}");

    let degraded = dir.path().join("lr.wav");
    assert!(ok(&["degrade", p(&first), p(&degraded), "--rate", "8000"]).contains("8000 Hz"));
    let random = dir.path().join("rand.wav");
    assert!(ok(&["degrade", p(&first), p(&random), "--random", "--seed", "3"]).contains("Hz"));
    assert!(!srkit(&["degrade", p(&first), p(&random)]).status.success());

    let lsd: f64 = ok(&["lsd", p(&first), p(&degraded)]).trim().parse().unwrap();
    assert!(lsd > 0.0);
    let same: f64 = ok(&["lsd", p(&first), p(&first)]).trim().parse().unwrap();
    assert_eq!(same, 0.0);

    let csv = dir.path().join("lsd.csv");
    assert!(ok(&["lsd-corpus", "--ref-dir", p(&corpus), "--est-dir", p(&corpus), "--csv", p(&csv)]).contains("mean LSD"));
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() >= 3);
}

#[test]
fn bands_table() {
    let out = ok(&["bands", "--lr", "16000"]);
    assert!(out.contains("head,bin_lo,bin_hi,hz_lo,hz_hi"));
    assert!(out.contains(",171,"), "{out}");
    assert!(!srkit(&["bands", "--lr", "96000"]).status.success());
}

#[test]
fn train_infer_eval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["synth-corpus", "--n", "3", "--seed", "1", "--out", p(&corpus)]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 2, "batch_size": 1, "segment_len": 4096, "steps": 2,
            "rate_grid": {"discrete": [8000]},
            "generator": {"embed_dim": 8, "depths": [1], "heads": 2, "window_size": 4, "num_stages": 1, "patch_size": 2},
            "corpus_dir": "corpus", "checkpoint_dir": "ckpt"}"#,
    )
    .unwrap();
    assert!(ok(&["train", "--config", p(&cfg)]).contains("trained to step 2"));
    let ckpt = dir.path().join("ckpt/step_00000002.srkt");
    assert!(ckpt.exists());
    let telemetry = std::fs::read_to_string(dir.path().join("ckpt/telemetry.csv")).unwrap();
    assert_eq!(telemetry.lines().count(), 3);

    let lr = dir.path().join("lr.wav");
    ok(&["degrade", p(&corpus.join("synth_0001.wav")), p(&lr), "--rate", "8000"]);
    let hr = dir.path().join("hr.wav");
    assert!(ok(&["infer", "--ckpt", p(&ckpt), "--in", p(&lr), "--out", p(&hr)]).contains("at 48 kHz"));
    assert!(hr.exists());

    let csv = dir.path().join("eval.csv");
    let table = ok(&["eval", "--ckpt", p(&ckpt), "--ref-dir", p(&corpus), "--rates", "8000,16000", "--csv", p(&csv)]);
    assert!(table.contains("8 kHz") && table.contains("16 kHz") && table.contains("Avg."));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);
    assert!(ok(&["eval", "--passthrough", "--ref-dir", p(&corpus)]).contains("24 kHz"));
    assert!(!srkit(&["eval", "--ref-dir", p(&corpus)]).status.success());

    let bad = dir.path().join("bad.srkt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    assert!(!srkit(&["infer", "--ckpt", p(&bad), "--in", p(&lr), "--out", p(&hr)]).status.success());
}
