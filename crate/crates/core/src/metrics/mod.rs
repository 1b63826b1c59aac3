//! Evaluation metrics: Avg_mAP over tIoU thresholds and Avg_F1 over
//! absolute boundary distances, plus slow oracles for cross-checking.

pub mod ap;
pub mod boundary;
pub mod oracle;
pub mod report;

pub use ap::{ap_single_class, avg_map, ClassAp, Detection, MapResult};
pub use boundary::{
    avg_f1, boundary_match, boundary_match_with, F1AtDistance, F1Result, F1Strategy, MatchCounts,
};
pub use report::{evaluate, EvaluationReport};

pub const NUM_TIOU: usize = 10;
pub const NUM_F1_T: usize = 5;

/// Slack on the inclusive `≥ tIoU` and `≤ t` comparisons so that decimal
/// thresholds hit exactly by decimal inputs are not lost to rounding.
pub const MATCH_EPS: f64 = 1e-9;

/// 0.50, 0.55, …, 0.95.
pub fn tiou_thresholds() -> Vec<f64> {
    (0..NUM_TIOU).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

/// 0.1, 0.2, …, 0.5 seconds.
pub fn f1_thresholds() -> Vec<f64> {
    (1..=NUM_F1_T).map(|k| k as f64 / 10.0).collect()
}
