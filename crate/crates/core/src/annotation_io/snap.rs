//! Replace hand-annotated scene boundaries by nearby shot cuts.

use serde::Serialize;

use super::documents::ShotBoundarySet;
use crate::error::{Error, Result};
use crate::types::VideoAnnotation;

pub const DEFAULT_SNAP_EPS_S: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryMove {
    /// Index of the interior boundary (0 = end of the first scene).
    pub boundary: usize,
    pub from_s: f64,
    pub to_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapWarning {
    pub boundary: usize,
    pub at_s: f64,
    pub shot_s: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct SnapOutcome {
    pub annotation: VideoAnnotation,
    pub moves: Vec<BoundaryMove>,
    pub warnings: Vec<SnapWarning>,
}

/// Nearest shot cut to `t`; ties go to the earlier cut.
fn nearest_shot(shots: &[f64], t: f64) -> Option<f64> {
    let idx = shots.partition_point(|&s| s < t);
    let before = idx.checked_sub(1).map(|i| shots[i]);
    let after = shots.get(idx).copied();
    match (before, after) {
        (Some(b), Some(a)) => Some(if t - b <= a - t { b } else { a }),
        (b, a) => b.or(a),
    }
}

/// Moves every interior boundary onto its nearest shot cut when the cut is
/// within `eps_s`. A move that would give a scene non-positive length is
/// skipped and reported as a warning. The scene count never changes.
pub fn snap_to_shots(
    ann: &VideoAnnotation,
    shots: &ShotBoundarySet,
    eps_s: f64,
) -> Result<SnapOutcome> {
    if !(eps_s > 0.0 && eps_s.is_finite()) {
        return Err(Error::Config(format!(
            "snap eps must be positive, got {eps_s}"
        )));
    }
    let mut out = ann.clone();
    let mut moves = Vec::new();
    let mut warnings = Vec::new();
    let n = out.scenes.len();
    for k in 1..n {
        let b = out.scenes[k].start_s;
        let Some(shot) = nearest_shot(&shots.boundaries, b) else {
            break;
        };
        if (shot - b).abs() > eps_s || shot == b {
            continue;
        }
        let lower = out.scenes[k - 1].start_s;
        let upper = out.scenes[k].end_s;
        if !(shot > lower && shot < upper) {
            warnings.push(SnapWarning {
                boundary: k - 1,
                at_s: b,
                shot_s: shot,
                reason: "snapping would collapse a scene".into(),
            });
            continue;
        }
        out.scenes[k - 1].end_s = shot;
        out.scenes[k].start_s = shot;
        moves.push(BoundaryMove {
            boundary: k - 1,
            from_s: b,
            to_s: shot,
        });
    }
    Ok(SnapOutcome {
        annotation: out,
        moves,
        warnings,
    })
}
