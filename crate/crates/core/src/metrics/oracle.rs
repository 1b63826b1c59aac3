//! Slow reference implementations used only to cross-check the metric
//! engines. They share the matching conventions (inclusive thresholds,
//! [`MATCH_EPS`] slack, tie rules) but none of the code.

use super::ap::{ClassGroundTruth, Detection};
use super::boundary::MatchCounts;
use super::MATCH_EPS;
use crate::error::{Error, Result};

pub const ORACLE_MAX_DETECTIONS: usize = 64;
pub const ORACLE_MAX_BOUNDARIES: usize = 8;

fn overlap_ratio(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lo, hi) = if a.0 <= b.0 { (a, b) } else { (b, a) };
    if hi.0 >= lo.1 {
        return 0.0;
    }
    let inter = if hi.1 <= lo.1 {
        hi.1 - hi.0
    } else {
        lo.1 - hi.0
    };
    let union = (lo.1 - lo.0) + (hi.1 - hi.0) - inter;
    inter / union
}

/// `true` if `a` ranks strictly before `b`.
fn ranks_before(a: &Detection<'_>, b: &Detection<'_>) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    if a.interval.start != b.interval.start {
        return a.interval.start < b.interval.start;
    }
    a.video_id < b.video_id
}

/// Greedy claiming over a ranked prefix, recomputed from scratch. Returns
/// the claimed (video, gt index) for each detection.
fn claims_for_prefix(
    ranked: &[Detection<'_>],
    gts: &ClassGroundTruth<'_>,
    thr: f64,
) -> Vec<Option<(String, usize)>> {
    let mut taken: Vec<(String, usize)> = Vec::new();
    let mut out = Vec::with_capacity(ranked.len());
    for det in ranked {
        let mut choice: Option<(usize, f64)> = None;
        if let Some(list) = gts.get(det.video_id) {
            for (j, g) in list.iter().enumerate() {
                if taken.iter().any(|(v, k)| v == det.video_id && *k == j) {
                    continue;
                }
                let r = overlap_ratio((det.interval.start, det.interval.end), (g.start, g.end));
                if r + MATCH_EPS < thr {
                    continue;
                }
                match choice {
                    Some((_, best)) if best >= r => {}
                    _ => choice = Some((j, r)),
                }
            }
        }
        let claim = choice.map(|(j, _)| (det.video_id.to_string(), j));
        if let Some(c) = &claim {
            taken.push(c.clone());
        }
        out.push(claim);
    }
    out
}

/// Reference AP: selection-sort ranking, then for every cut-off rank the
/// greedy matching of that prefix is recomputed independently. The recall
/// increments and precisions are read off the prefix counts.
///
/// Also asserts that matchings of nested prefixes agree, i.e. that greedy
/// claiming never revisits an earlier decision.
pub fn oracle_ap(
    dets: &[Detection<'_>],
    gts: &ClassGroundTruth<'_>,
    thr: f64,
) -> Result<Option<f64>> {
    if dets.len() > ORACLE_MAX_DETECTIONS {
        return Err(Error::OracleTooLarge(format!(
            "{} detections (limit {ORACLE_MAX_DETECTIONS})",
            dets.len()
        )));
    }
    let num_gt: usize = gts.values().map(|v| v.len()).sum();
    if num_gt == 0 {
        return Ok(None);
    }

    let mut pool: Vec<Detection<'_>> = dets.to_vec();
    let mut ranked = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            if ranks_before(&pool[i], &pool[best]) {
                best = i;
            }
        }
        ranked.push(pool.remove(best));
    }

    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    let mut prev_claims: Vec<Option<(String, usize)>> = Vec::new();
    for r in 1..=ranked.len() {
        let claims = claims_for_prefix(&ranked[..r], gts, thr);
        assert_eq!(
            &claims[..r - 1],
            &prev_claims[..],
            "greedy claims changed when extending the prefix"
        );
        let tp = claims.iter().filter(|c| c.is_some()).count();
        if tp > prev_tp {
            let precision = tp as f64 / r as f64;
            let recall_gain = (tp - prev_tp) as f64 / num_gt as f64;
            ap += precision * recall_gain;
        }
        prev_tp = tp;
        prev_claims = claims;
    }
    Ok(Some(ap))
}

/// Literal claim-and-delete simulation: predictions visited in ascending
/// order; the remaining ground-truth list shrinks on every positive match.
pub fn oracle_f1(pred_b: &[f64], gt_b: &[f64], t: f64) -> Result<MatchCounts> {
    if pred_b.len() > ORACLE_MAX_BOUNDARIES || gt_b.len() > ORACLE_MAX_BOUNDARIES {
        return Err(Error::OracleTooLarge(format!(
            "{} predicted / {} ground-truth boundaries (limit {ORACLE_MAX_BOUNDARIES})",
            pred_b.len(),
            gt_b.len()
        )));
    }
    let mut preds = pred_b.to_vec();
    preds.sort_by(f64::total_cmp);
    let mut remaining = gt_b.to_vec();
    remaining.sort_by(f64::total_cmp);
    let (mut tp, mut fp) = (0, 0);
    for p in preds {
        if remaining.is_empty() {
            fp += 1;
            continue;
        }
        let mut k = 0;
        for i in 1..remaining.len() {
            if (p - remaining[i]).abs() < (p - remaining[k]).abs() {
                k = i;
            }
        }
        if (p - remaining[k]).abs() <= t + MATCH_EPS {
            remaining.remove(k);
            tp += 1;
        } else {
            fp += 1;
        }
    }
    Ok(MatchCounts {
        tp,
        fp,
        fn_: remaining.len(),
    })
}

/// Size of the largest one-to-one matching with pair distance ≤ `t`,
/// found by enumerating every injective assignment.
pub fn oracle_max_matching(pred_b: &[f64], gt_b: &[f64], t: f64) -> Result<usize> {
    if pred_b.len() > ORACLE_MAX_BOUNDARIES || gt_b.len() > ORACLE_MAX_BOUNDARIES {
        return Err(Error::OracleTooLarge(
            "too many boundaries for enumeration".into(),
        ));
    }
    fn go(i: usize, pred: &[f64], gt: &[f64], used: &mut Vec<bool>, t: f64) -> usize {
        if i == pred.len() {
            return 0;
        }
        let mut best = go(i + 1, pred, gt, used, t);
        for j in 0..gt.len() {
            if !used[j] && (pred[i] - gt[j]).abs() <= t + MATCH_EPS {
                used[j] = true;
                best = best.max(1 + go(i + 1, pred, gt, used, t));
                used[j] = false;
            }
        }
        best
    }
    Ok(go(0, pred_b, gt_b, &mut vec![false; gt_b.len()], t))
}
