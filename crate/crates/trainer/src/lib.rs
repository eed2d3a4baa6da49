//! Optimization and measurement: decoupled-weight-decay Adam with the
//! warmup+cosine schedule, global-norm gradient clipping, the gate-penalty
//! objective, deterministic single runs, per-run records, the norm-deviation
//! and cosine-alignment metrics, and the low-dimensional reflection
//! diagnostics.
//!
//! One run is single-threaded and fully determined by its seed; callers may
//! execute independent runs concurrently, each with its own stream and
//! output directory.

mod adamw;
mod loss;
mod metrics;
mod record;
mod reflection;
mod run;
mod schedule;

pub use adamw::{adamw_step, clip_gradients, AdamHyper, OptimState};
pub use loss::total_loss;
pub use metrics::{cosine_alignment, norm_deviation, norm_profile};
pub use record::{mean_std, DiagnosticRecord, RunRecord, StepRecord};
pub use reflection::{reflection_diagnostic, ToyKind, TOY_DIM};
pub use run::{eval_mse, train_run, TrainOptions, TrainOutcome, DEFAULT_BATCH, DEFAULT_ITERS};
pub use schedule::{lr_at, DECAY_END, LR_FLOOR, LR_PEAK, WARMUP_ITERS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("non-finite gradient")]
    NonFiniteGradient,

    /// A run stopped early; the partial record travels with the error.
    #[error("run aborted: {source}")]
    Aborted {
        source: Box<TrainerError>,
        record: Box<RunRecord>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
