use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{write_wav, SampleFormat, Waveform};
use crate::error::{Error, Result};

/// Knobs for the harmonic-plus-noise speech stand-in.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub sample_rate: u32,
    pub duration_secs: (f64, f64),
    pub f0_hz: (f64, f64),
    pub peak: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            duration_secs: (1.0, 2.0),
            f0_hz: (80.0, 400.0),
            peak: 0.5,
        }
    }
}

/// One utterance: a vibrato harmonic source with 1/h partial amplitudes up to
/// Nyquist, a syllabic envelope, and a few band-limited noise bursts.
pub fn synth_utterance<R: Rng>(rng: &mut R, params: &SynthParams) -> Waveform {
    let sr = params.sample_rate as f64;
    let nyquist = sr / 2.0;
    let duration = rng.gen_range(params.duration_secs.0..=params.duration_secs.1);
    let len = (duration * sr).round() as usize;

    let f0 = rng.gen_range(params.f0_hz.0..=params.f0_hz.1);
    let vib_depth = 0.05;
    let vib_rate = rng.gen_range(3.0..6.0);
    let vib_phase = rng.gen_range(0.0..2.0 * PI);
    let syll_rate = rng.gen_range(2.0..5.0);
    let num_harmonics = ((0.98 * nyquist) / (f0 * (1.0 + vib_depth))).floor().max(1.0) as usize;

    let mut x = vec![0.0; len];
    let mut phase = rng.gen_range(0.0..2.0 * PI);
    for (n, out) in x.iter_mut().enumerate() {
        let t = n as f64 / sr;
        let f = f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * t + vib_phase).sin());
        phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
        // sin(h*phase) by the Chebyshev recurrence.
        let two_cos = 2.0 * phase.cos();
        let (mut prev, mut cur) = (0.0, phase.sin());
        let mut acc = 0.0;
        for h in 1..=num_harmonics {
            acc += cur / h as f64;
            let next = two_cos * cur - prev;
            prev = cur;
            cur = next;
        }
        let env = 0.35 + 0.65 * (0.5 - 0.5 * (2.0 * PI * syll_rate * t).cos());
        *out = acc * env;
    }

    let bursts = rng.gen_range(1..=3);
    for _ in 0..bursts {
        let blen = ((rng.gen_range(0.03..0.12) * sr) as usize).min(len);
        if blen < 16 {
            continue;
        }
        let start = rng.gen_range(0..=len - blen);
        let lo = rng.gen_range(2_000.0..8_000.0);
        let hi = rng.gen_range((lo + 4_000.0)..(0.92 * nyquist));
        let gain = rng.gen_range(0.1..0.3);
        let noise = band_noise(rng, blen, sr, lo, hi);
        let peak = noise.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for (i, v) in noise.iter().enumerate() {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (blen - 1) as f64).cos();
            x[start + i] += gain * w * v / peak;
        }
    }

    let fade = ((0.01 * sr) as usize).min(len / 2);
    for i in 0..fade {
        let g = i as f64 / fade as f64;
        x[i] *= g;
        x[len - 1 - i] *= g;
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= params.peak / peak);
    }
    Waveform::new(x, params.sample_rate).expect("synthesized samples are finite")
}

fn band_noise<R: Rng>(rng: &mut R, len: usize, sr: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(rng.gen_range(-1.0..1.0), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(len - k);
        let f = bin as f64 * sr / len as f64;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().map(|c| c.re / len as f64).collect()
}

/// Write `n` deterministic utterances as `synth_NNNN.wav` (float32) into `dir`.
pub fn synth_corpus(n: usize, seed: u64, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if n == 0 {
        return Err(Error::invalid("corpus size must be at least 1"));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params = SynthParams::default();
    let mut paths = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let wave = synth_utterance(&mut rng, &params);
        let path = dir.join(format!("synth_{i:04}.wav"));
        write_wav(&path, &wave, SampleFormat::Float32)?;
        paths.push(path);
    }
    Ok(paths)
}
