//! Slice accuracy, learning curves and multi-strategy comparison reports.

mod compare;
mod metrics;

pub use compare::{compare_strategies, run_grid, CellSummary, ComparisonReport, ReplicateSummary, Spread};
pub use metrics::{
    balanced_accuracy, labels_to_reach, slice_accuracy, CurvePoint, LearningCurve, Metric,
    SliceScore,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction has {pred} entries but truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("cannot score an empty prediction")]
    Empty,
    #[error("comparison needs at least one spec and one seed")]
    EmptyGrid,
    #[error("run {spec} (seed {seed}) failed: {source}")]
    Run {
        spec: String,
        seed: u64,
        #[source]
        source: Box<crate::discovery::DiscoveryError>,
    },
}
