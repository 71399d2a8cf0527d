use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{concat, Bound, ParamStore, Var};
use crate::error::{Error, Result};

use super::layers::{conv_hwc, Builder, Conv2d, LayerNorm, Linear};
use super::swin::Rstb;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub embed_dim: usize,
    /// RSTB depth per encoder stage; the matching decoder stage reuses it
    /// and the bottleneck uses the last entry.
    pub depths: Vec<usize>,
    pub heads: usize,
    pub window_size: usize,
    pub num_stages: usize,
    /// Side of the square patches embedded as tokens.
    pub patch_size: usize,
    pub bins: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            depths: vec![2, 2],
            heads: 4,
            window_size: 8,
            num_stages: 2,
            patch_size: 4,
            bins: 512,
        }
    }
}

impl GeneratorConfig {
    pub fn tiny() -> Self {
        Self {
            embed_dim: 8,
            depths: vec![1],
            heads: 2,
            window_size: 4,
            num_stages: 1,
            patch_size: 2,
            bins: 512,
        }
    }

    /// Time and frequency extents must be multiples of this.
    pub fn downsample_factor(&self) -> usize {
        self.patch_size << self.num_stages
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return fail(format!("embed_dim {} must be a positive multiple of heads {}", self.embed_dim, self.heads));
        }
        if self.depths.len() != self.num_stages || self.num_stages == 0 {
            return fail(format!("depths {:?} must list one entry per stage ({})", self.depths, self.num_stages));
        }
        if self.window_size == 0 || self.patch_size == 0 {
            return fail("window_size and patch_size must be positive".into());
        }
        if self.num_stages > 6 || self.patch_size > self.bins || self.bins % self.downsample_factor() != 0 {
            return fail(format!(
                "bins {} must be divisible by patch_size * 2^num_stages = {}",
                self.bins,
                self.downsample_factor()
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone)]
struct Merge {
    norm: LayerNorm,
    reduce: Linear,
}

#[derive(Debug, Clone)]
struct Expand {
    linear: Linear,
    fuse: Conv2d,
}

/// Swin U-Net over companded `[T, bins]` spectrograms with a global
/// residual: output = input + learned correction. The correction head
/// starts at zero so a fresh model is the identity.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    embed: Conv2d,
    encoders: Vec<Rstb>,
    merges: Vec<Merge>,
    bottleneck: Rstb,
    expands: Vec<Expand>,
    decoders: Vec<Rstb>,
    head_norm: LayerNorm,
    head: Linear,
}

/// `[H, W, C]` -> `[H/2, W/2, 4C]` by gathering each 2x2 neighbourhood.
fn space_to_depth<'t>(x: Var<'t>) -> Result<Var<'t>> {
    let s = x.shape();
    x.reshape(&[s[0] / 2, 2, s[1] / 2, 2, s[2]])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[s[0] / 2, s[1] / 2, 4 * s[2]])
}

/// `[H, W, r*r*C]` -> `[rH, rW, C]`.
fn depth_to_space<'t>(x: Var<'t>, r: usize) -> Result<Var<'t>> {
    let s = x.shape();
    let c = s[2] / (r * r);
    x.reshape(&[s[0], s[1], r, r, c])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[s[0] * r, s[1] * r, c])
}

impl Generator {
    /// Build with fresh parameters registered in `store` under `prefix`.
    pub fn new(config: GeneratorConfig, store: &mut ParamStore, prefix: &str, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bld = Builder { store, rng: &mut rng };
        let c = config.embed_dim;
        let (p, w, heads) = (config.patch_size, config.window_size, config.heads);
        let embed = Conv2d::new(&mut bld, &format!("{prefix}embed"), 1, c, (p, p), (p, p), (0, 0));
        let mut encoders = Vec::new();
        let mut merges = Vec::new();
        for (i, &depth) in config.depths.iter().enumerate() {
            let dim = c << i;
            encoders.push(Rstb::new(&mut bld, &format!("{prefix}enc{i}"), dim, depth, heads, w)?);
            merges.push(Merge {
                norm: LayerNorm::new(&mut bld, &format!("{prefix}merge{i}.norm"), 4 * dim),
                reduce: Linear::new(&mut bld, &format!("{prefix}merge{i}.reduce"), 4 * dim, 2 * dim),
            });
        }
        let deepest = c << config.num_stages;
        let last_depth = *config.depths.last().expect("validated non-empty");
        let bottleneck = Rstb::new(&mut bld, &format!("{prefix}bottleneck"), deepest, last_depth, heads, w)?;
        let mut expands = Vec::new();
        let mut decoders = Vec::new();
        for (i, &depth) in config.depths.iter().enumerate() {
            let dim = c << i;
            expands.push(Expand {
                linear: Linear::new(&mut bld, &format!("{prefix}expand{i}.linear"), 2 * dim, 4 * dim),
                fuse: Conv2d::new(&mut bld, &format!("{prefix}expand{i}.fuse"), 2 * dim, dim, (3, 3), (1, 1), (1, 1)),
            });
            decoders.push(Rstb::new(&mut bld, &format!("{prefix}dec{i}"), dim, depth, heads, w)?);
        }
        let head_norm = LayerNorm::new(&mut bld, &format!("{prefix}head.norm"), c);
        let head = Linear::zeros(&mut bld, &format!("{prefix}head"), c, p * p);
        Ok(Self {
            config,
            embed,
            encoders,
            merges,
            bottleneck,
            expands,
            decoders,
            head_norm,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// Map a `[T, bins]` companded spectrogram to the same shape. Time is
    /// zero-padded to a multiple of the downsampling factor internally.
    pub fn forward<'t>(&self, params: &Bound<'t>, s: Var<'t>) -> Result<Var<'t>> {
        let shape = s.shape();
        if shape.len() != 2 || shape[1] != self.config.bins || shape[0] == 0 {
            return Err(Error::shape(format!(
                "generator expects [T, {}], got {shape:?}",
                self.config.bins
            )));
        }
        let t = shape[0];
        let f = self.config.downsample_factor();
        let tp = t.div_ceil(f) * f;
        let p = self.config.patch_size;
        let padded = s.pad(0, 0, tp - t)?;

        let img = padded.reshape(&[1, tp, self.config.bins])?;
        let mut x = self.embed.forward(params, img)?.permute(&[1, 2, 0])?;
        let mut skips = Vec::with_capacity(self.config.num_stages);
        for (enc, merge) in self.encoders.iter().zip(&self.merges) {
            x = enc.forward(params, x)?;
            skips.push(x);
            let merged = merge.norm.forward(params, space_to_depth(x)?)?;
            x = merge.reduce.forward(params, merged)?;
        }
        x = self.bottleneck.forward(params, x)?;
        for i in (0..self.config.num_stages).rev() {
            let up = depth_to_space(self.expands[i].linear.forward(params, x)?, 2)?;
            let joined = concat(&[up, skips[i]], 2)?;
            x = conv_hwc(&self.expands[i].fuse, params, joined)?;
            x = self.decoders[i].forward(params, x)?;
        }
        let out = self.head.forward(params, self.head_norm.forward(params, x)?)?;
        let correction = depth_to_space(out, p)?.reshape(&[tp, self.config.bins])?;
        padded.add(correction)?.slice(0, 0..t)
    }
}
