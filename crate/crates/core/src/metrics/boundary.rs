//! Boundary F1 at absolute distance thresholds and its five-threshold
//! average.

use std::str::FromStr;

use serde::Serialize;

use super::ap::check_known_videos;
use super::{f1_thresholds, MATCH_EPS};
use crate::annotation_io::DatasetSplit;
use crate::error::{Error, Result};
use crate::types::PredictedSceneSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

/// Order in which predicted boundaries claim ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Strategy {
    /// Predictions in ascending time, each claiming its nearest unclaimed
    /// ground truth.
    #[default]
    Sequential,
    /// Globally closest (prediction, ground truth) pair first.
    NearestPairFirst,
}

impl FromStr for F1Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(F1Strategy::Sequential),
            "nearest-pair-first" => Ok(F1Strategy::NearestPairFirst),
            other => Err(Error::Config(format!("unknown F1 strategy `{other}`"))),
        }
    }
}

impl std::fmt::Display for F1Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            F1Strategy::Sequential => "sequential",
            F1Strategy::NearestPairFirst => "nearest-pair-first",
        })
    }
}

/// Claim-and-delete matching of one video's sorted boundary lists.
///
/// A prediction is a true positive iff its nearest unclaimed ground-truth
/// boundary lies within `t` seconds (inclusive); the claimed ground truth is
/// then removed. Unclaimed ground truths are false negatives.
pub fn boundary_match(pred_b: &[f64], gt_b: &[f64], t: f64) -> MatchCounts {
    boundary_match_with(pred_b, gt_b, t, F1Strategy::Sequential)
}

pub fn boundary_match_with(
    pred_b: &[f64],
    gt_b: &[f64],
    t: f64,
    strategy: F1Strategy,
) -> MatchCounts {
    let tp = match strategy {
        F1Strategy::Sequential => sequential_tp(pred_b, gt_b, t),
        F1Strategy::NearestPairFirst => nearest_pair_tp(pred_b, gt_b, t),
    };
    MatchCounts {
        tp,
        fp: pred_b.len() - tp,
        fn_: gt_b.len() - tp,
    }
}

fn sequential_tp(pred_b: &[f64], gt_b: &[f64], t: f64) -> usize {
    let mut claimed = vec![false; gt_b.len()];
    let mut tp = 0;
    for &p in pred_b {
        let nearest = gt_b
            .iter()
            .enumerate()
            .filter(|(j, _)| !claimed[*j])
            .map(|(j, &g)| (j, (p - g).abs()))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 <= cur.1 => Some(b),
                _ => Some(cur),
            });
        if let Some((j, dist)) = nearest {
            if dist <= t + MATCH_EPS {
                claimed[j] = true;
                tp += 1;
            }
        }
    }
    tp
}

fn nearest_pair_tp(pred_b: &[f64], gt_b: &[f64], t: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &p) in pred_b.iter().enumerate() {
        for (j, &g) in gt_b.iter().enumerate() {
            let d = (p - g).abs();
            if d <= t + MATCH_EPS {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred_b.len()];
    let mut used_g = vec![false; gt_b.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            tp += 1;
        }
    }
    tp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F1AtDistance {
    pub t: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl F1AtDistance {
    pub fn from_counts(t: f64, c: MatchCounts) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        F1AtDistance {
            t,
            precision,
            recall,
            f1,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Result {
    pub strategy: F1Strategy,
    pub per_t: Vec<F1AtDistance>,
    pub avg_f1: f64,
    /// No boundary on either side anywhere: every F1 is defined as 1.
    pub vacuous: bool,
}

/// Avg_F1 with micro-averaged (pooled) counts over videos. A ground-truth
/// video without predictions contributes only false negatives.
pub fn avg_f1(
    gt: &DatasetSplit,
    preds: &[PredictedSceneSet],
    strategy: F1Strategy,
) -> Result<F1Result> {
    check_known_videos(gt, preds)?;
    let videos: Vec<(Vec<f64>, Vec<f64>)> = gt
        .annotations
        .iter()
        .map(|ann| {
            let pred_b = preds
                .iter()
                .find(|p| p.video_id == ann.video_id)
                .map(|p| p.boundaries(ann.duration_s))
                .unwrap_or_default();
            (pred_b, ann.internal_boundaries())
        })
        .collect();
    let total_pred: usize = videos.iter().map(|(p, _)| p.len()).sum();
    let total_gt: usize = videos.iter().map(|(_, g)| g.len()).sum();

    if total_pred == 0 && total_gt == 0 {
        let per_t = f1_thresholds()
            .into_iter()
            .map(|t| F1AtDistance {
                t,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                tp: 0,
                fp: 0,
                fn_: 0,
            })
            .collect();
        return Ok(F1Result {
            strategy,
            per_t,
            avg_f1: 1.0,
            vacuous: true,
        });
    }

    let per_t: Vec<F1AtDistance> = f1_thresholds()
        .into_iter()
        .map(|t| {
            let mut counts = MatchCounts::default();
            for (pred_b, gt_b) in &videos {
                counts += boundary_match_with(pred_b, gt_b, t, strategy);
            }
            F1AtDistance::from_counts(t, counts)
        })
        .collect();
    let avg_f1 = per_t.iter().map(|r| r.f1).sum::<f64>() / per_t.len() as f64;
    Ok(F1Result {
        strategy,
        per_t,
        avg_f1,
        vacuous: false,
    })
}
