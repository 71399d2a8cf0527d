//! Waveform discriminators over periodic and multi-scale views, and the
//! spectral discriminator whose band heads see only the generated band.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Bound, ParamStore, Var};
use crate::bands::{self, BandLayout};
use crate::error::{Error, Result};

use super::layers::{Builder, Conv1d, Conv2d};

const LEAK: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub periods: Vec<usize>,
    pub msd_scales: usize,
    /// Maximum number of high-band heads; the layout may use fewer.
    pub num_bands: usize,
    pub min_bins: usize,
    pub bins: usize,
    pub hr_rate: u32,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            periods: vec![2, 3, 5, 7, 11],
            msd_scales: 3,
            num_bands: bands::DEFAULT_NUM_BANDS,
            min_bins: bands::DEFAULT_MIN_BINS,
            bins: 512,
            hr_rate: 48_000,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.periods.iter().any(|&p| p == 0) || self.num_bands == 0 || self.min_bins == 0 || self.bins == 0 {
            return Err(Error::Config("periods, num_bands, min_bins and bins must be positive".into()));
        }
        if self.periods.is_empty() && self.msd_scales == 0 {
            return Err(Error::Config("at least one waveform discriminator head is required".into()));
        }
        Ok(())
    }
}

/// One head's result: the final logit map and every hidden activation.
#[derive(Debug, Clone)]
pub struct HeadOutput<'t> {
    pub logits: Var<'t>,
    pub features: Vec<Var<'t>>,
}

fn run_stack<'t>(
    p: &Bound<'t>,
    x: Var<'t>,
    layers: &[Conv2d],
    post: &Conv2d,
) -> Result<HeadOutput<'t>> {
    let mut h = x;
    let mut features = Vec::with_capacity(layers.len());
    for layer in layers {
        h = layer.forward(p, h)?.leaky_relu(LEAK);
        features.push(h);
    }
    Ok(HeadOutput {
        logits: post.forward(p, h)?,
        features,
    })
}

/// Folds the waveform into `[L/p, p]` columns and convolves along time.
#[derive(Debug, Clone)]
pub struct PeriodHead {
    pub period: usize,
    layers: Vec<Conv2d>,
    post: Conv2d,
}

impl PeriodHead {
    fn new(bld: &mut Builder, name: &str, period: usize) -> Self {
        let chans = [1, 4, 8, 16];
        let layers = chans
            .windows(2)
            .enumerate()
            .map(|(i, c)| Conv2d::new(bld, &format!("{name}.conv{i}"), c[0], c[1], (5, 1), (3, 1), (2, 0)))
            .collect();
        let post = Conv2d::new(bld, &format!("{name}.post"), 16, 1, (3, 1), (1, 1), (1, 0));
        Self { period, layers, post }
    }

    /// `[1, ceil(L/p), p]` view of the signal, zero-padded at the end.
    pub fn fold<'t>(&self, wave: Var<'t>) -> Result<Var<'t>> {
        let len = wave.numel();
        let rows = len.div_ceil(self.period);
        wave.reshape(&[len])?
            .pad(0, 0, rows * self.period - len)?
            .reshape(&[1, rows, self.period])
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, wave: Var<'t>) -> Result<HeadOutput<'t>> {
        run_stack(p, self.fold(wave)?, &self.layers, &self.post)
    }
}

/// 1-D convolution stack applied at one time resolution.
#[derive(Debug, Clone)]
pub struct ScaleHead {
    layers: Vec<Conv1d>,
    post: Conv1d,
}

impl ScaleHead {
    fn new(bld: &mut Builder, name: &str) -> Self {
        let layers = vec![
            Conv1d::new(bld, &format!("{name}.conv0"), 1, 4, 15, 1, 7),
            Conv1d::new(bld, &format!("{name}.conv1"), 4, 8, 11, 4, 5),
            Conv1d::new(bld, &format!("{name}.conv2"), 8, 16, 11, 4, 5),
        ];
        let post = Conv1d::new(bld, &format!("{name}.post"), 16, 1, 3, 1, 1);
        Self { layers, post }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, view: Var<'t>) -> Result<HeadOutput<'t>> {
        let mut h = view;
        let mut features = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            h = layer.forward(p, h)?.leaky_relu(LEAK);
            features.push(h);
        }
        Ok(HeadOutput {
            logits: self.post.forward(p, h)?,
            features,
        })
    }
}

/// PatchGAN over a `[T, bins]` slice of a companded spectrogram.
#[derive(Debug, Clone)]
pub struct SpecHead {
    layers: Vec<Conv2d>,
    post: Conv2d,
}

impl SpecHead {
    fn new(bld: &mut Builder, name: &str) -> Self {
        let layers = vec![
            Conv2d::new(bld, &format!("{name}.conv0"), 1, 8, (3, 3), (1, 2), (1, 1)),
            Conv2d::new(bld, &format!("{name}.conv1"), 8, 16, (3, 3), (2, 2), (1, 1)),
            Conv2d::new(bld, &format!("{name}.conv2"), 16, 16, (3, 3), (1, 1), (1, 1)),
        ];
        let post = Conv2d::new(bld, &format!("{name}.post"), 16, 1, (3, 3), (1, 1), (1, 1));
        Self { layers, post }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, spec: Var<'t>) -> Result<HeadOutput<'t>> {
        let s = spec.shape();
        run_stack(p, spec.reshape(&[1, s[0], s[1]])?, &self.layers, &self.post)
    }
}

/// All discriminator heads.
#[derive(Debug, Clone)]
pub struct DiscriminatorSet {
    config: DiscriminatorConfig,
    pub mpd: Vec<PeriodHead>,
    pub msd: Vec<ScaleHead>,
    pub band_heads: Vec<SpecHead>,
    pub full_head: SpecHead,
}

impl DiscriminatorSet {
    pub fn new(config: DiscriminatorConfig, store: &mut ParamStore, prefix: &str, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bld = Builder { store, rng: &mut rng };
        let mpd = config
            .periods
            .iter()
            .map(|&p| PeriodHead::new(&mut bld, &format!("{prefix}mpd.p{p}"), p))
            .collect();
        let msd = (0..config.msd_scales)
            .map(|i| ScaleHead::new(&mut bld, &format!("{prefix}msd.s{i}")))
            .collect();
        let band_heads = (0..config.num_bands)
            .map(|i| SpecHead::new(&mut bld, &format!("{prefix}mbd.band{i}")))
            .collect();
        let full_head = SpecHead::new(&mut bld, &format!("{prefix}mbd.full"));
        Ok(Self {
            config,
            mpd,
            msd,
            band_heads,
            full_head,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn layout(&self, lr_rate: u32) -> Result<BandLayout> {
        bands::layout(lr_rate, self.config.hr_rate, self.config.bins, self.config.num_bands, self.config.min_bins)
    }

    pub fn mpd_forward<'t>(&self, p: &Bound<'t>, wave: Var<'t>) -> Result<Vec<HeadOutput<'t>>> {
        check_wave(wave, self.config.periods.iter().copied().max().unwrap_or(1))?;
        self.mpd.iter().map(|h| h.forward(p, wave)).collect()
    }

    /// The signal at full rate and after each successive 2x average pool,
    /// as `[1, L]` views.
    pub fn msd_views<'t>(&self, wave: Var<'t>) -> Result<Vec<Var<'t>>> {
        check_wave(wave, 1 << self.config.msd_scales.saturating_sub(1))?;
        let mut view = wave.reshape(&[1, wave.numel()])?;
        let mut out = Vec::with_capacity(self.config.msd_scales);
        for i in 0..self.config.msd_scales {
            if i > 0 {
                view = view.avg_pool1d(2, 2, 0)?;
            }
            out.push(view);
        }
        Ok(out)
    }

    pub fn msd_forward<'t>(&self, p: &Bound<'t>, wave: Var<'t>) -> Result<Vec<HeadOutput<'t>>> {
        let views = self.msd_views(wave)?;
        self.msd.iter().zip(views).map(|(h, v)| h.forward(p, v)).collect()
    }

    /// Waveform heads: MPD followed by MSD.
    pub fn wave_forward<'t>(&self, p: &Bound<'t>, wave: Var<'t>) -> Result<Vec<HeadOutput<'t>>> {
        let mut out = self.mpd_forward(p, wave)?;
        out.extend(self.msd_forward(p, wave)?);
        Ok(out)
    }

    /// One head per band of `layout` (each fed only its bin slice) followed
    /// by the full-band head.
    pub fn hbmbd_forward<'t>(&self, p: &Bound<'t>, spec: Var<'t>, layout: &BandLayout) -> Result<Vec<HeadOutput<'t>>> {
        let s = spec.shape();
        if s.len() != 2 || s[1] != layout.bins || s[0] == 0 {
            return Err(Error::shape(format!(
                "spectrogram {s:?} does not match a layout over {} bins",
                layout.bins
            )));
        }
        if layout.bands.len() > self.band_heads.len() {
            return Err(Error::shape(format!(
                "layout has {} bands but only {} band heads exist",
                layout.bands.len(),
                self.band_heads.len()
            )));
        }
        let mut out = Vec::with_capacity(layout.num_heads());
        for (head, band) in self.band_heads.iter().zip(&layout.bands) {
            out.push(head.forward(p, spec.slice(1, band.clone())?)?);
        }
        out.push(self.full_head.forward(p, spec)?);
        Ok(out)
    }
}

fn check_wave(wave: Var<'_>, min_len: usize) -> Result<()> {
    let n = wave.numel();
    if n == 0 || n < min_len {
        return Err(Error::shape(format!("waveform of {n} samples is shorter than {min_len}")));
    }
    Ok(())
}
