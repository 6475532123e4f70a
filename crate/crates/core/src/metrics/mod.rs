//! Segmentation, classification and agreement metrics.

mod agreement;
mod classification;
mod edt;
mod roc;
mod segmentation;

pub use agreement::{bland_altman, mean_sd, pearson, AgreementStats, MeanSd};
pub use classification::{
    confusion_metrics, weighted_f1, BinaryCounts, ClassReport, ConfusionMatrix, ConfusionMetrics,
};
pub use edt::squared_distance_field;
pub use roc::{auc, percentile, roc_auc, roc_curve, BootstrapConfig, RocAuc, RocPoint};
pub use segmentation::{
    asd, dsc, dsc_labels, evaluate_case, hausdorff, hausdorff_percentile, surface_extract, surface_of,
    SegmentationRecord, SurfaceSet,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("spacing mismatch between masks")]
    SpacingMismatch,
    #[error("label {0} is not part of the mask schema")]
    UnknownLabel(u8),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} samples, got {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("single-class input: need at least one positive and one negative")]
    SingleClass,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
