//! Training: SGD with momentum under cosine warm restarts, the per-strategy
//! epoch loop, evaluation, metrics, and checkpoint persistence.

mod checkpoint;
mod config;
mod metrics;
mod optim;
mod run;
mod schedule;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use metrics::{EpochRecord, MetricsLog};
pub use optim::sgd_step;
pub use run::{evaluate, train, EvalReport, TrainFailure, TrainOutcome};
pub use schedule::warm_restart_lr;
