//! Deterministic batch sampling. Every random choice for step `s` comes
//! from a generator keyed by `(seed, s)`, so any step can be reproduced
//! without replaying the ones before it.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::degrade::{self, RateGrid, HR_RATE};
use crate::error::{Error, Result};
use crate::metrics::wav_files;
use crate::signal::{read_wav, Waveform};

/// Streams above this are reserved for per-epoch shuffles.
const SHUFFLE_STREAM_BASE: u64 = 1 << 62;

pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// One training example: a 48 kHz crop and its band-limited version.
#[derive(Debug, Clone)]
pub struct Example {
    pub hr: Waveform,
    pub lr: Waveform,
    pub rate: u32,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    files: Vec<PathBuf>,
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let files = wav_files(dir)?;
        if files.is_empty() {
            return Err(Error::invalid(format!("no .wav files in {}", dir.display())));
        }
        Ok(Self { files })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// File order for one epoch.
    fn permutation(&self, seed: u64, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.files.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SHUFFLE_STREAM_BASE + epoch);
        order.shuffle(&mut rng);
        order
    }

    /// Files for batch `step`: consecutive entries of the per-epoch
    /// shuffled file list.
    pub fn batch_files(&self, seed: u64, step: u64, batch_size: usize) -> Vec<&Path> {
        let n = self.files.len() as u64;
        let mut cached: Option<(u64, Vec<usize>)> = None;
        (0..batch_size as u64)
            .map(|j| {
                let pos = step * batch_size as u64 + j;
                let epoch = pos / n;
                if cached.as_ref().map(|c| c.0) != Some(epoch) {
                    cached = Some((epoch, self.permutation(seed, epoch)));
                }
                let order = &cached.as_ref().expect("just filled").1;
                self.files[order[(pos % n) as usize]].as_path()
            })
            .collect()
    }

    /// Crop and degrade the files of batch `step`.
    pub fn sample(&self, seed: u64, step: u64, batch_size: usize, segment_len: usize, grid: &RateGrid) -> Result<Vec<Example>> {
        let mut rng = step_rng(seed, step);
        self.batch_files(seed, step, batch_size)
            .into_iter()
            .map(|path| {
                let wave = to_hr_rate(read_wav(path)?)?;
                let hr = degrade::random_crop(&wave, segment_len, &mut rng)?;
                let (lr, rate) = degrade::random_degrade(&hr, grid, &mut rng)?;
                Ok(Example { hr, lr, rate })
            })
            .collect()
    }
}

/// Resample to 48 kHz if needed.
pub fn to_hr_rate(wave: Waveform) -> Result<Waveform> {
    if wave.sample_rate() == HR_RATE {
        Ok(wave)
    } else {
        degrade::resample(&wave, HR_RATE)
    }
}
