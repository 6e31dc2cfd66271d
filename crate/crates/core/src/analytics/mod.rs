//! Temporal-coherence statistics and video instance segmentation metrics.

mod coherence;
mod eval;

pub use coherence::{coherence_stats, histogram_bin, CoherenceReport, DeltaStats, HIGH_IOU, HISTOGRAM_BINS};
pub use eval::{evaluate, interpolated_ap, CategoryAp, EvalReport, IOU_THRESHOLDS, RECALL_POINTS};
