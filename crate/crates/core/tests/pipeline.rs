use std::path::Path;

use srkit_core::autograd::ParamStore;
use srkit_core::degrade::RateGrid;
use srkit_core::losses::LossWeights;
use srkit_core::models::{Generator, GeneratorConfig};
use srkit_core::signal::{read_wav, synth_corpus, write_wav, SampleFormat, Waveform};
use srkit_core::train::{evaluate, infer, train, EvalModel, Enhancer, TrainConfig, TELEMETRY_HEADER};

fn fresh_enhancer() -> Enhancer {
    let mut store = ParamStore::new();
    let g = Generator::new(GeneratorConfig::tiny(), &mut store, "g.", 5).unwrap();
    Enhancer::new(g, store)
}

fn tone(len: usize, rate: u32) -> Waveform {
    let samples = (0..len)
        .map(|n| {
            let t = n as f64 / rate as f64;
            0.4 * (2.0 * std::f64::consts::PI * 440.0 * t).sin() + 0.1 * (2.0 * std::f64::consts::PI * 1250.0 * t).cos()
        })
        .collect();
    Waveform::new(samples, rate).unwrap()
}

#[test]
fn infer_writes_48k_with_scaled_length() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.wav");
    let output = dir.path().join("out.wav");
    write_wav(&input, &tone(4_000, 8_000), SampleFormat::Pcm16).unwrap();
    let out = infer(&fresh_enhancer(), &input, &output).unwrap();
    assert_eq!(out.len(), 24_000);
    let back = read_wav(&output).unwrap();
    assert_eq!(back.sample_rate(), 48_000);
    assert_eq!(back.len(), 24_000);
}

#[test]
fn untrained_enhancer_is_identity() {
    let wave = tone(10_001, 48_000);
    let out = fresh_enhancer().enhance(&wave).unwrap();
    let err = wave.samples().iter().zip(out.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9, "{err}");
    assert!(fresh_enhancer().enhance(&tone(100, 16_000)).is_err());
}

#[test]
fn eval_table_for_single_file() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(dir.path().join("a.wav"), &tone(24_000, 48_000), SampleFormat::Float32).unwrap();
    let table = evaluate(&EvalModel::Passthrough, dir.path(), &[8_000, 16_000]).unwrap();
    assert_eq!(table.files, 1);
    assert_eq!(table.rows.len(), 2);
    // Both tones sit below 4 kHz, so passthrough keeps almost everything.
    assert!(table.rows.iter().all(|r| r.lsd.is_finite() && r.lsd >= 0.0));
    assert_eq!(table.average(), (table.rows[0].lsd + table.rows[1].lsd) / 2.0);
    let csv = table.to_csv();
    assert!(csv.starts_with("rate_hz,lsd_db\n8000,"));
    assert!(csv.lines().last().unwrap().starts_with("average,"));
    assert!(table.to_table().contains("8 kHz"));

    let identity = evaluate(&EvalModel::Enhancer(Box::new(fresh_enhancer())), dir.path(), &[8_000]).unwrap();
    assert!((identity.rows[0].lsd - table.rows[0].lsd).abs() < 1e-6);
    assert!(evaluate(&EvalModel::Passthrough, dir.path(), &[]).is_err());
    assert!(evaluate(&EvalModel::Passthrough, &dir.path().join("missing"), &[8_000]).is_err());
}

fn short_config(corpus: &Path, out: &Path) -> TrainConfig {
    TrainConfig {
        seed: 9,
        batch_size: 2,
        segment_len: 4_096,
        steps: 3,
        rate_grid: RateGrid::Discrete(vec![4_000, 12_000]),
        generator: GeneratorConfig::tiny(),
        corpus_dir: corpus.to_path_buf(),
        checkpoint_dir: out.to_path_buf(),
        checkpoint_every: 2,
        ..TrainConfig::default()
    }
}

#[test]
fn telemetry_rows_reproduce_totals() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_corpus(4, 2, &corpus).unwrap();
    let cfg = short_config(&corpus, &dir.path().join("run"));
    let outcome = train(&cfg, None).unwrap();
    assert!(dir.path().join("run/step_00000002.srkt").exists());
    assert!(outcome.final_checkpoint.ends_with("step_00000003.srkt"));

    let text = std::fs::read_to_string(&outcome.telemetry).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), TELEMETRY_HEADER);
    let w = LossWeights::default();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), TELEMETRY_HEADER.split(',').count());
        assert_eq!(v[0], i as f64);
        assert!(v.iter().all(|x| x.is_finite()));
        let (lw, ls) = (v[11], v[12]);
        assert_eq!((lw, ls), w.warmup(i as u64));
        let total_g = lw * v[1] + ls * v[2] + w.wav * v[7] + w.feat * v[5] + v[6];
        assert!((total_g - v[8]).abs() <= 1e-12 * total_g.abs().max(1.0), "{line}");
        assert_eq!(v[9], v[3] + v[4]);
        assert_eq!(v[10], cfg.lr_at(i as u64, 4));
        rows += 1;
    }
    assert_eq!(rows, 3);

    // The final checkpoint serves inference directly.
    let enhancer = Enhancer::from_checkpoint(&outcome.final_checkpoint).unwrap();
    assert_eq!(enhancer.generator().config(), &GeneratorConfig::tiny());
}

#[test]
fn same_seed_same_telemetry() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    synth_corpus(4, 3, &corpus).unwrap();
    let a = train(&short_config(&corpus, &dir.path().join("a")), None).unwrap();
    let b = train(&short_config(&corpus, &dir.path().join("b")), None).unwrap();
    assert_eq!(std::fs::read(a.telemetry).unwrap(), std::fs::read(b.telemetry).unwrap());
    let c = train(&TrainConfig { seed: 10, ..short_config(&corpus, &dir.path().join("c")) }, None).unwrap();
    assert_ne!(std::fs::read(a.final_checkpoint).unwrap(), std::fs::read(c.final_checkpoint).unwrap());
}

#[test]
fn training_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    assert!(train(&short_config(&empty, &dir.path().join("x")), None).is_err());
    let corpus = dir.path().join("corpus");
    synth_corpus(2, 4, &corpus).unwrap();
    let bad = TrainConfig { segment_len: 100, ..short_config(&corpus, &dir.path().join("y")) };
    assert!(train(&bad, None).is_err());
    let wrong_model = TrainConfig {
        generator: GeneratorConfig { embed_dim: 12, heads: 2, ..GeneratorConfig::tiny() },
        ..short_config(&corpus, &dir.path().join("z"))
    };
    let ok = train(&short_config(&corpus, &dir.path().join("ok")), None).unwrap();
    assert!(train(&wrong_model, Some(&ok.final_checkpoint)).is_err());
}
