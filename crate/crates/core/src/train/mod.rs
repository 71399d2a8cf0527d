//! Training loop, inference and evaluation.

mod config;
mod data;
mod inference;
mod trainer;

pub use config::{epoch_of, TrainConfig};
pub use data::{step_rng, to_hr_rate, Corpus, Example};
pub use inference::{evaluate, infer, EvalModel, EvalRow, EvalTable, Enhancer};
pub use trainer::{checkpoint_path, train, StepTrace, TrainOutcome, Trainer, TELEMETRY_FILE, TELEMETRY_HEADER};
