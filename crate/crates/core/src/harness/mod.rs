//! Benchmark generator, splits, the adversarial trainer, metrics and the
//! generalisation-gap sweep.

use alloc::string::String;

use crate::autodiff::AutodiffError;
use crate::disdat::DisdatError;
use crate::encoders::EncoderError;

mod generator;
mod metrics;
mod model;
mod split;
mod theory;
mod train;

pub use generator::{
    generate_benchmark, is_active, pair_label, semantic_score, topological_score, Benchmark, DomainData, DomainLabel,
    FunctionalGroup, MolRecord, PairRecord, LABEL_THRESHOLD, LONG_CHAIN, MIN_PAIRS,
};
pub use metrics::{
    aupr, auroc, classification_metrics, improvement, regression_metrics, rmse, spearman, Metrics,
};
pub use model::{Model, Prepared, TrainConfig};
pub use split::{split, Splits, SOURCE_PRETRAIN_FRACTION};
pub use theory::{fit_xi, label_entropy, theory_sweep, TheoryRecord, TheoryReport, MIN_SHIFT_LEVELS};
pub use train::{
    adapt, evaluate, pretrain, pretrain_source, representation_report, run_mode, split_pairs, AdaptLog,
    AdaptOptions, Evaluation, PretrainLog, Pretrained, RunResult, TransferMode,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("benchmark needs at least 200 pairs per domain, got {0}")]
    TooFewPairs(usize),
    #[error("shift level {0} outside [0, 1]")]
    ShiftOutOfRange(f64),
    #[error("fraction {0} outside (0, 1)")]
    FractionOutOfRange(f64),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("baseline metric is zero")]
    ZeroBaseline,
    #[error("unsupported transfer mode `{0}`")]
    ModeUnsupported(String),
    #[error("sweep needs at least 5 shift levels, got {0}")]
    TooFewShiftLevels(usize),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Disdat(#[from] DisdatError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
