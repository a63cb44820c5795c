//! The end-to-end training loop: alternating critic and generator updates
//! with Adam, a selectable adversarial objective, a λ-weighted conditioning
//! loss, optional consistency regularization, an EMA shadow of the
//! generator, and periodic evaluation records.

pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod optimizer;
mod runner;

pub use checkpoint::{Checkpoint, ParamArray, UVector, CHECKPOINT_FORMAT_VERSION};
pub use config::{
    AdvLossKind, ConditioningKind, CrConfig, DataConfig, EmaConfig, Preset, TrainConfig,
};
pub use metrics::{stability_scan, EvalRecord, JsonlSink, MemorySink, MetricsSink, SigmaReading};
pub use optimizer::{Adam, ADAM_EPS};
pub use runner::{
    adv_d_loss, adv_g_loss, build_models, head_kind_for, squared_consistency, CriticBatch,
    GenBatch, StepLosses, TrainOutcome, Trainer,
};
