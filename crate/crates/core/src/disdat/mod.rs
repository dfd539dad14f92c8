//! DisDAT: JSD-scaled domain-adversarial objectives, MINE-based
//! mutual-information shift, shift-weighted fusion and the task head.

use crate::autodiff::AutodiffError;

mod adversarial;
mod fusion;
mod head;
mod jsd;
mod mine;

pub use adversarial::{
    image_adv_value, loss_image_adv, loss_struct_adv, struct_adv_value, DomainClassifier,
    LOGIT_CLAMP,
};
pub use fusion::{fusion_weights, Fusion};
pub use head::{loss_task, loss_total, total_value, TaskHead, TaskKind, TaskLabels};
pub use jsd::{discrete_jsd, jsd_scale, JSD_BINS, JSD_EPS};
pub use mine::{mi_shift_report, mine_estimate, DomainSample, MiReport, MineConfig, MIN_SAMPLES};

/// How a feature reaches a domain classifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reversal {
    /// Plain pass-through: minimising the loss aligns features with the
    /// classifier.
    Identity,
    /// Gradient reversal with scale φ ≥ 0.
    Reverse(f64),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DisdatError {
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("batch must contain both source and target samples")]
    SingleDomainBatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("MINE needs at least {need} paired samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("samples have inconsistent widths or counts")]
    RaggedSamples,
    #[error("labels do not match the task kind")]
    LabelKindMismatch,
    #[error("loss weights must be nonnegative, got ({0}, {1})")]
    NegativeLambda(f64, f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
