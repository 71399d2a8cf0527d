//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar replays the record in reverse and leaves
//! gradients on the leaves that asked for them. Learnable weights live in a
//! [`ParamStore`] and are bound onto a fresh tape for each step.

mod checkpoint;
mod gradcheck;
mod ops_elementwise;
mod ops_linalg;
mod ops_shape;
mod ops_signal;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use ops_shape::concat;
pub use optim::{AdamW, AdamWConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
