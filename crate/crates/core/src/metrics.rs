//! Log-spectral distance on Hann-windowed STFT magnitudes.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{read_wav, Waveform};

pub const LSD_FFT_SIZE: usize = 2048;
pub const LSD_HOP: usize = 512;
pub const POWER_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MagSpectrogram {
    mags: Vec<f64>,
    frames: usize,
    freqs: usize,
    fft_size: usize,
    hop: usize,
}

impl MagSpectrogram {
    pub fn mags(&self) -> &[f64] {
        &self.mags
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn freqs(&self) -> usize {
        self.freqs
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.mags[t * self.freqs..(t + 1) * self.freqs]
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Magnitude STFT with frames centered on multiples of `hop` (the signal is
/// zero-padded by `fft_size / 2` on both sides).
pub fn stft_mag(samples: &[f64], fft_size: usize, hop: usize) -> Result<MagSpectrogram> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot take the STFT of an empty signal"));
    }
    if !fft_size.is_power_of_two() || fft_size < 2 {
        return Err(Error::invalid(format!("fft size {fft_size} is not a power of two")));
    }
    if hop == 0 || hop > fft_size {
        return Err(Error::invalid(format!("hop {hop} must be in 1..={fft_size}")));
    }
    let half = fft_size / 2;
    let mut padded = vec![0.0; samples.len() + fft_size];
    padded[half..half + samples.len()].copy_from_slice(samples);
    let frames = samples.len() / hop + 1;
    let freqs = half + 1;
    let window = hann(fft_size);
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let mut mags = Vec::with_capacity(frames * freqs);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    for t in 0..frames {
        let seg = &padded[t * hop..t * hop + fft_size];
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        mags.extend(buf[..freqs].iter().map(|c| c.norm()));
    }
    Ok(MagSpectrogram {
        mags,
        frames,
        freqs,
        fft_size,
        hop,
    })
}

/// `(1/T) sum_t sqrt((1/F) sum_f log10(S^2 / S_est^2)^2)` with both powers
/// floored at [`POWER_FLOOR`].
pub fn lsd(reference: &MagSpectrogram, estimate: &MagSpectrogram) -> Result<f64> {
    if reference.frames != estimate.frames || reference.freqs != estimate.freqs {
        return Err(Error::shape(format!(
            "LSD needs equal shapes, got {}x{} and {}x{}",
            reference.frames, reference.freqs, estimate.frames, estimate.freqs
        )));
    }
    let f = reference.freqs as f64;
    let total: f64 = (0..reference.frames)
        .map(|t| {
            let inner: f64 = reference
                .frame(t)
                .iter()
                .zip(estimate.frame(t))
                .map(|(a, b)| {
                    let pa = (a * a).max(POWER_FLOOR);
                    let pb = (b * b).max(POWER_FLOOR);
                    (pa / pb).log10().powi(2)
                })
                .sum();
            (inner / f).sqrt()
        })
        .sum();
    Ok(total / reference.frames as f64)
}

/// LSD between two waveforms; the estimate is truncated or zero-padded to
/// the reference length first.
pub fn lsd_waves(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    if reference.sample_rate() != estimate.sample_rate() {
        return Err(Error::invalid(format!(
            "sample rates differ: {} vs {}",
            reference.sample_rate(),
            estimate.sample_rate()
        )));
    }
    let est = estimate.fit_to_len(reference.len());
    lsd(
        &stft_mag(reference.samples(), LSD_FFT_SIZE, LSD_HOP)?,
        &stft_mag(est.samples(), LSD_FFT_SIZE, LSD_HOP)?,
    )
}

pub fn lsd_files(reference: impl AsRef<Path>, estimate: impl AsRef<Path>) -> Result<f64> {
    lsd_waves(&read_wav(reference)?, &read_wav(estimate)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusLsd {
    pub per_file: Vec<(String, f64)>,
    pub mean: f64,
}

impl CorpusLsd {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("file,lsd\n");
        for (name, v) in &self.per_file {
            out.push_str(&format!("{name},{v:.6}\n"));
        }
        out.push_str(&format!("mean,{:.6}\n", self.mean));
        out
    }
}

pub fn wav_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// LSD for every `*.wav` in `ref_dir` against the same file name in `est_dir`.
pub fn lsd_corpus(ref_dir: impl AsRef<Path>, est_dir: impl AsRef<Path>) -> Result<CorpusLsd> {
    let refs = wav_files(&ref_dir)?;
    if refs.is_empty() {
        return Err(Error::invalid(format!(
            "no wav files in {}",
            ref_dir.as_ref().display()
        )));
    }
    let mut per_file = Vec::with_capacity(refs.len());
    for r in refs {
        let name = r.file_name().unwrap().to_string_lossy().into_owned();
        let v = lsd_files(&r, est_dir.as_ref().join(&name))?;
        per_file.push((name, v));
    }
    let mean = per_file.iter().map(|(_, v)| v).sum::<f64>() / per_file.len() as f64;
    Ok(CorpusLsd { per_file, mean })
}
