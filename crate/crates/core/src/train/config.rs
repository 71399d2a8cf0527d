use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::degrade::RateGrid;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, SparseParams};
use crate::mdct::DEFAULT_FRAME_LEN;
use crate::models::{DiscriminatorConfig, GeneratorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    /// Training crop length in 48 kHz samples.
    pub segment_len: usize,
    pub steps: u64,
    pub lr_init: f64,
    /// Multiplier applied to the learning rate after every pass over the
    /// corpus file list.
    pub lr_decay: f64,
    pub rate_grid: RateGrid,
    /// Optional JSON file holding the generator configuration; overrides
    /// `generator` when set.
    pub model_config: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub losses: LossWeights,
    pub sparse: SparseParams,
    pub corpus_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    /// Write a checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 4,
            segment_len: 48_460,
            steps: 1_000,
            lr_init: 2e-4,
            lr_decay: 0.999,
            rate_grid: RateGrid::default(),
            model_config: None,
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            losses: LossWeights::default(),
            sparse: SparseParams::default(),
            corpus_dir: PathBuf::from("corpus"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.corpus_dir);
        rebase(&mut cfg.checkpoint_dir);
        if let Some(m) = cfg.model_config.as_mut() {
            rebase(m);
        }
        Ok(cfg)
    }

    /// The generator configuration in effect, reading `model_config` if set.
    pub fn generator_config(&self) -> Result<GeneratorConfig> {
        match &self.model_config {
            Some(path) => GeneratorConfig::load(path),
            None => Ok(self.generator.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.steps == 0 {
            return fail("steps must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.segment_len < DEFAULT_FRAME_LEN {
            return fail("segment_len must be at least one MDCT frame (1024 samples)");
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail("lr_init must be positive and lr_decay in (0, 1]");
        }
        self.rate_grid.validate()?;
        let gen = self.generator_config()?;
        gen.validate()?;
        self.discriminator.validate()?;
        if gen.bins != DEFAULT_FRAME_LEN / 2 || self.discriminator.bins != gen.bins {
            return fail("generator and discriminator must both use 512 MDCT bins");
        }
        self.losses.validate()?;
        self.sparse.validate()
    }

    /// Learning rate for a step: decayed once per completed corpus pass.
    pub fn lr_at(&self, step: u64, corpus_len: usize) -> f64 {
        self.lr_init * self.lr_decay.powi(epoch_of(step, self.batch_size, corpus_len) as i32)
    }
}

/// Completed passes over a corpus of `corpus_len` files before `step`.
pub fn epoch_of(step: u64, batch_size: usize, corpus_len: usize) -> u64 {
    step * batch_size as u64 / corpus_len.max(1) as u64
}
