//! Generator and discriminator networks built on [`crate::autograd`].

mod discriminators;
mod generator;
mod layers;
mod swin;

pub use discriminators::{DiscriminatorConfig, DiscriminatorSet, HeadOutput, PeriodHead, ScaleHead, SpecHead};
pub use generator::{Generator, GeneratorConfig};
pub use layers::{Builder, Conv1d, Conv2d, LayerNorm, Linear};
pub use swin::{window_partition, window_reverse, Rstb, SwinLayer, WindowAttention};
