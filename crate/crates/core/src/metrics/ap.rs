//! Per-class average precision over temporal segments and the Avg_mAP
//! aggregate across tIoU thresholds.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use super::{tiou_thresholds, MATCH_EPS, NUM_TIOU};
use crate::annotation_io::DatasetSplit;
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;
use crate::types::{tiou, Interval, PredictedSceneSet};

/// One scored segment for a single class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<'a> {
    pub video_id: &'a str,
    pub interval: Interval,
    pub score: f64,
}

/// Ground-truth instances of one class, keyed by video.
pub type ClassGroundTruth<'a> = BTreeMap<&'a str, Vec<Interval>>;

/// Ranking order: score descending, then earlier start, then video id.
pub fn rank_order(a: &Detection<'_>, b: &Detection<'_>) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.interval.start.total_cmp(&b.interval.start))
        .then(a.video_id.cmp(b.video_id))
}

/// Un-interpolated AP at one tIoU threshold. Returns `None` when the class
/// has no ground-truth instance.
///
/// Each detection, in rank order, claims the unclaimed same-video
/// ground truth with the highest tIoU, provided that tIoU reaches the
/// threshold; otherwise it is a false positive. AP is the sum over true
/// positive ranks of precision-at-rank times the recall increment.
pub fn ap_single_class(
    dets: &[Detection<'_>],
    gts: &ClassGroundTruth<'_>,
    tiou_thr: f64,
) -> Option<f64> {
    let num_gt: usize = gts.values().map(Vec::len).sum();
    if num_gt == 0 {
        return None;
    }
    let mut order: Vec<&Detection<'_>> = dets.iter().collect();
    order.sort_by(|a, b| rank_order(a, b));

    let mut claimed: BTreeMap<&str, Vec<bool>> = gts
        .iter()
        .map(|(&v, g)| (v, vec![false; g.len()]))
        .collect();
    let mut tp = 0usize;
    // Precisions are summed and divided once, so a perfect ranking gives
    // exactly 1.
    let mut precision_sum = 0.0;
    for (rank, det) in order.iter().enumerate() {
        let Some(video_gts) = gts.get(det.video_id) else {
            continue;
        };
        let flags = claimed.get_mut(det.video_id).expect("same keys as gts");
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in video_gts.iter().enumerate() {
            if flags[j] {
                continue;
            }
            let overlap = tiou(det.interval, *g).unwrap_or(0.0);
            if overlap + MATCH_EPS >= tiou_thr && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((j, overlap));
            }
        }
        if let Some((j, _)) = best {
            flags[j] = true;
            tp += 1;
            precision_sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Some(precision_sum / num_gt as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class_id: u32,
    pub name: String,
    /// AP at each tIoU threshold; `None` when the class has no ground truth.
    pub ap: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub tious: Vec<f64>,
    pub per_class_per_tiou: Vec<ClassAp>,
    pub map_at_tiou: Vec<f64>,
    pub avg_map: f64,
    /// Classes without ground truth, excluded from the class mean.
    pub skipped_classes: Vec<u32>,
}

pub(crate) fn check_known_videos(gt: &DatasetSplit, preds: &[PredictedSceneSet]) -> Result<()> {
    let known: HashSet<&str> = gt.annotations.iter().map(|a| a.video_id.as_str()).collect();
    for p in preds {
        if !known.contains(p.video_id.as_str()) {
            return Err(Error::UnknownVideo(p.video_id.clone()));
        }
    }
    Ok(())
}

/// Detections (score > 0) and ground-truth instances for one class.
pub fn class_instances<'a>(
    gt: &'a DatasetSplit,
    preds: &'a [PredictedSceneSet],
    class: u32,
) -> (Vec<Detection<'a>>, ClassGroundTruth<'a>) {
    let mut gts: ClassGroundTruth<'a> = BTreeMap::new();
    for ann in &gt.annotations {
        let hits: Vec<Interval> = ann
            .scenes
            .iter()
            .filter(|s| s.labels.contains(&class))
            .map(|s| s.interval())
            .collect();
        if !hits.is_empty() {
            gts.entry(ann.video_id.as_str()).or_default().extend(hits);
        }
    }
    let dets = preds
        .iter()
        .flat_map(|p| {
            p.segments.iter().filter_map(move |s| {
                let score = s.score(class);
                (score > 0.0).then_some(Detection {
                    video_id: p.video_id.as_str(),
                    interval: s.interval(),
                    score,
                })
            })
        })
        .collect();
    (dets, gts)
}

/// Avg_mAP: mean over tIoU ∈ {0.50, 0.55, …, 0.95} of the mean per-class AP.
pub fn avg_map(
    gt: &DatasetSplit,
    preds: &[PredictedSceneSet],
    tax: &Taxonomy,
) -> Result<MapResult> {
    check_known_videos(gt, preds)?;
    let tious = tiou_thresholds();
    let per_class: Vec<ClassAp> = tax
        .classes()
        .par_iter()
        .map(|class| {
            let (dets, gts) = class_instances(gt, preds, class.id);
            let ap = if gts.is_empty() {
                None
            } else {
                Some(
                    tious
                        .iter()
                        .map(|&thr| {
                            ap_single_class(&dets, &gts, thr).expect("class has ground truth")
                        })
                        .collect(),
                )
            };
            ClassAp {
                class_id: class.id,
                name: class.name.clone(),
                ap,
            }
        })
        .collect();

    let skipped_classes: Vec<u32> = per_class
        .iter()
        .filter(|c| c.ap.is_none())
        .map(|c| c.class_id)
        .collect();
    let evaluated: Vec<&Vec<f64>> = per_class.iter().filter_map(|c| c.ap.as_ref()).collect();
    let map_at_tiou: Vec<f64> = (0..NUM_TIOU)
        .map(|t| {
            if evaluated.is_empty() {
                0.0
            } else {
                evaluated.iter().map(|ap| ap[t]).sum::<f64>() / evaluated.len() as f64
            }
        })
        .collect();
    let avg_map = map_at_tiou.iter().sum::<f64>() / NUM_TIOU as f64;
    Ok(MapResult {
        tious,
        per_class_per_tiou: per_class,
        map_at_tiou,
        avg_map,
        skipped_classes,
    })
}
