//! Turns frame-level model outputs into non-overlapping scene predictions.
//!
//! Two decoders are provided:
//! - boundary mode: peak-pick the boundary probability, refine each peak by
//!   its regressed offset, cut the video there and max-pool class scores
//!   inside each segment;
//! - framewise mode: threshold per-frame class scores and cut wherever the
//!   thresholded label set changes.
//!
//! Sample `k` sits at time `k / fps` and belongs to the segment whose
//! half-open span `[start, end)` contains that time.

use std::collections::BTreeMap;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{Interval, PredictedScene, PredictedSceneSet};

pub const DEFAULT_FPS: f64 = 2.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NMS_WINDOW_S: f64 = 1.0;

/// Number of samples covering `[0, duration_s)` at `fps`: `ceil(duration·fps)`.
pub fn num_samples(duration_s: f64, fps: f64) -> usize {
    ((duration_s * fps - 1e-9).ceil() as usize).max(1)
}

pub fn sample_time(k: usize, fps: f64) -> f64 {
    k as f64 / fps
}

/// Per-sample model outputs for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutputs {
    pub fps: f64,
    pub duration_s: f64,
    /// `T × C` class confidences in `[0, 1]`.
    pub label_scores: Array2<f64>,
    /// Length-`T` boundary probabilities in `[0, 1]`.
    pub boundary_prob: Array1<f64>,
    /// Length-`T` signed offsets (seconds) from each sample to the boundary.
    pub offsets_s: Array1<f64>,
}

impl FrameOutputs {
    pub fn new(
        fps: f64,
        duration_s: f64,
        label_scores: Array2<f64>,
        boundary_prob: Array1<f64>,
        offsets_s: Array1<f64>,
    ) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0 && duration_s.is_finite() && duration_s > 0.0) {
            return Err(Error::Config(format!(
                "fps {fps} and duration {duration_s} must be positive"
            )));
        }
        let t = num_samples(duration_s, fps);
        if label_scores.nrows() != t || boundary_prob.len() != t || offsets_s.len() != t {
            return Err(Error::shape(
                "frame outputs",
                format!("T = {t} rows"),
                format!(
                    "{} score rows, {} probabilities, {} offsets",
                    label_scores.nrows(),
                    boundary_prob.len(),
                    offsets_s.len()
                ),
            ));
        }
        let unit = |v: &f64| v.is_finite() && (0.0..=1.0).contains(v);
        if !label_scores.iter().all(unit) || !boundary_prob.iter().all(unit) {
            return Err(Error::Config(
                "scores and probabilities must be finite and in [0, 1]".into(),
            ));
        }
        if !offsets_s.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("offsets must be finite".into()));
        }
        Ok(FrameOutputs {
            fps,
            duration_s,
            label_scores,
            boundary_prob,
            offsets_s,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.boundary_prob.len()
    }

    pub fn num_classes(&self) -> usize {
        self.label_scores.ncols()
    }

    pub fn max_offset(&self) -> f64 {
        0.5 / self.fps
    }
}

fn check_threshold(thr: f64) -> Result<()> {
    if !(thr > 0.0 && thr < 1.0) {
        return Err(Error::Config(format!(
            "threshold must lie in (0, 1), got {thr}"
        )));
    }
    Ok(())
}

/// Boundary times from peaks of the boundary probability.
///
/// A sample is a candidate when its probability reaches `thr` and no other
/// sample within `±nms_window_s` beats it (an equal value earlier in time
/// also suppresses it). The candidate's time is `k / fps` plus its offset
/// clamped to `±0.5 / fps`. Refined times outside `(0, duration)` are
/// dropped and candidates closer than `0.5 / fps` are merged, keeping the
/// more probable one.
pub fn pick_boundaries(out: &FrameOutputs, thr: f64, nms_window_s: f64) -> Result<Vec<f64>> {
    check_threshold(thr)?;
    if !(nms_window_s > 0.0 && nms_window_s.is_finite()) {
        return Err(Error::Config(format!(
            "NMS window must be positive, got {nms_window_s}"
        )));
    }
    let prob = &out.boundary_prob;
    let n = prob.len();
    let radius = (nms_window_s * out.fps + 1e-9).floor() as usize;
    let half = out.max_offset();

    let mut cands: Vec<(f64, f64)> = Vec::new();
    for k in 0..n {
        let p = prob[k];
        if p < thr {
            continue;
        }
        let lo = k.saturating_sub(radius);
        let hi = (k + radius).min(n - 1);
        let dominated = (lo..k).any(|j| prob[j] >= p) || (k + 1..=hi).any(|j| prob[j] > p);
        if dominated {
            continue;
        }
        let t = sample_time(k, out.fps) + out.offsets_s[k].clamp(-half, half);
        if t > 0.0 && t < out.duration_s {
            cands.push((t, p));
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut kept: Vec<(f64, f64)> = Vec::with_capacity(cands.len());
    for c in cands {
        match kept.last_mut() {
            Some(last) if c.0 - last.0 < half => {
                if c.1 > last.1 {
                    *last = c;
                }
            }
            _ => kept.push(c),
        }
    }
    Ok(kept.into_iter().map(|(t, _)| t).collect())
}

/// `k` strictly increasing interior boundaries → `k + 1` contiguous
/// intervals covering `[0, duration_s]`.
pub fn segments_from_boundaries(bounds: &[f64], duration_s: f64) -> Result<Vec<Interval>> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::Config(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let mut edges = Vec::with_capacity(bounds.len() + 2);
    edges.push(0.0);
    for &b in bounds {
        let prev = *edges.last().expect("non-empty");
        if !(b > prev && b < duration_s) {
            return Err(Error::Config(format!(
                "boundary {b} must be strictly increasing inside (0, {duration_s})"
            )));
        }
        edges.push(b);
    }
    edges.push(duration_s);
    Ok(edges
        .windows(2)
        .map(|w| Interval {
            start: w[0],
            end: w[1],
        })
        .collect())
}

fn sparse_scores(row: ArrayView1<'_, f64>) -> BTreeMap<u32, f64> {
    row.iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(c, &s)| (c as u32, s))
        .collect()
}

/// Sample indices whose times fall in `[start, end)`.
fn samples_in(iv: &Interval, fps: f64, n: usize) -> std::ops::Range<usize> {
    let first = (0..n)
        .find(|&k| sample_time(k, fps) >= iv.start)
        .unwrap_or(n);
    let mut last = first;
    while last < n && sample_time(last, fps) < iv.end {
        last += 1;
    }
    first..last
}

/// Max-pools class scores over the samples of each segment. A segment that
/// contains no sample takes the scores of the sample nearest its midpoint.
pub fn label_segments(
    out: &FrameOutputs,
    segments: &[Interval],
    video_id: &str,
) -> PredictedSceneSet {
    let n = out.num_samples();
    let scored = segments
        .iter()
        .map(|iv| {
            let range = samples_in(iv, out.fps, n);
            let pooled: Array1<f64> = if range.is_empty() {
                let mid = 0.5 * (iv.start + iv.end);
                let k = ((mid * out.fps).round().max(0.0) as usize).min(n - 1);
                out.label_scores.row(k).to_owned()
            } else {
                out.label_scores.slice(ndarray::s![range, ..]).fold_axis(
                    Axis(0),
                    f64::NEG_INFINITY,
                    |&a, &b| a.max(b),
                )
            };
            PredictedScene {
                start_s: iv.start,
                end_s: iv.end,
                scores: sparse_scores(pooled.view()),
            }
        })
        .collect();
    PredictedSceneSet {
        video_id: video_id.to_string(),
        segments: scored,
    }
}

#[derive(Debug, Clone)]
pub struct FramewiseDecode {
    pub predictions: PredictedSceneSet,
    /// No frame reached the threshold; the whole video became one segment
    /// scored with column-wise maxima.
    pub all_empty: bool,
}

/// Threshold-and-merge baseline: per-frame label sets `{c : score ≥ thr}`,
/// empty frames inheriting the previous non-empty set (leading empties the
/// following one), and a new segment at every change of label set. Each
/// segment is scored with per-class maxima over its frames.
pub fn framewise_threshold_decode(
    out: &FrameOutputs,
    thr: f64,
    video_id: &str,
) -> Result<FramewiseDecode> {
    check_threshold(thr)?;
    let n = out.num_samples();
    let mut sets: Vec<Option<Vec<u32>>> = out
        .label_scores
        .rows()
        .into_iter()
        .map(|row| {
            let set: Vec<u32> = row
                .iter()
                .enumerate()
                .filter(|(_, &s)| s >= thr)
                .map(|(c, _)| c as u32)
                .collect();
            (!set.is_empty()).then_some(set)
        })
        .collect();

    let Some(first_nonempty) = sets.iter().position(Option::is_some) else {
        let whole = Interval {
            start: 0.0,
            end: out.duration_s,
        };
        return Ok(FramewiseDecode {
            predictions: label_segments(out, &[whole], video_id),
            all_empty: true,
        });
    };
    let lead = sets[first_nonempty].clone();
    for s in sets.iter_mut().take(first_nonempty) {
        *s = lead.clone();
    }
    for k in 1..n {
        if sets[k].is_none() {
            sets[k] = sets[k - 1].clone();
        }
    }

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for k in 1..=n {
        if k == n || sets[k] != sets[start] {
            runs.push((start, k));
            start = k;
        }
    }
    let segments = runs
        .iter()
        .map(|&(a, b)| {
            let start_s = if a == 0 { 0.0 } else { sample_time(a, out.fps) };
            let end_s = if b == n {
                out.duration_s
            } else {
                sample_time(b, out.fps)
            };
            let pooled = out.label_scores.slice(ndarray::s![a..b, ..]).fold_axis(
                Axis(0),
                f64::NEG_INFINITY,
                |&x, &y| x.max(y),
            );
            PredictedScene {
                start_s,
                end_s,
                scores: sparse_scores(pooled.view()),
            }
        })
        .collect();
    Ok(FramewiseDecode {
        predictions: PredictedSceneSet {
            video_id: video_id.to_string(),
            segments,
        },
        all_empty: false,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Boundary,
    Framewise,
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(DecodeMode::Boundary),
            "framewise" => Ok(DecodeMode::Framewise),
            other => Err(Error::Config(format!("unknown decode mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub thr: f64,
    pub nms_window_s: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: DecodeMode::Boundary,
            thr: DEFAULT_THRESHOLD,
            nms_window_s: DEFAULT_NMS_WINDOW_S,
        }
    }
}

/// Full decode of one video with either decoder.
pub fn decode_video(
    out: &FrameOutputs,
    cfg: &DecodeConfig,
    video_id: &str,
) -> Result<PredictedSceneSet> {
    match cfg.mode {
        DecodeMode::Boundary => {
            let bounds = pick_boundaries(out, cfg.thr, cfg.nms_window_s)?;
            let segments = segments_from_boundaries(&bounds, out.duration_s)?;
            Ok(label_segments(out, &segments, video_id))
        }
        DecodeMode::Framewise => {
            Ok(framewise_threshold_decode(out, cfg.thr, video_id)?.predictions)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn outputs(duration: f64, fps: f64, classes: usize) -> FrameOutputs {
        let t = num_samples(duration, fps);
        FrameOutputs::new(
            fps,
            duration,
            Array2::zeros((t, classes)),
            Array1::zeros(t),
            Array1::zeros(t),
        )
        .unwrap()
    }

    #[test]
    fn sample_count() {
        assert_eq!(num_samples(10.0, 2.0), 20);
        assert_eq!(num_samples(10.01, 2.0), 21);
        assert_eq!(num_samples(0.1, 10.0), 1);
    }

    #[test]
    fn silent_outputs_give_no_boundaries() {
        let out = outputs(10.0, 2.0, 3);
        assert!(pick_boundaries(&out, 0.5, 1.0).unwrap().is_empty());
    }

    #[test]
    fn single_spike_with_offset() {
        let mut out = outputs(10.0, 2.0, 3);
        out.boundary_prob[6] = 1.0;
        out.offsets_s[6] = 0.12;
        let b = pick_boundaries(&out, 0.5, 1.0).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b[0] - 3.12).abs() < 1e-12);
    }

    #[test]
    fn offsets_are_clamped() {
        let mut out = outputs(10.0, 2.0, 1);
        out.boundary_prob[6] = 0.9;
        out.offsets_s[6] = 5.0;
        assert_eq!(pick_boundaries(&out, 0.5, 1.0).unwrap(), vec![3.25]);
    }

    #[test]
    fn nms_keeps_one_peak_per_window() {
        let mut out = outputs(10.0, 2.0, 1);
        out.boundary_prob[6] = 0.8;
        out.boundary_prob[7] = 0.9;
        out.boundary_prob[8] = 0.9;
        out.boundary_prob[15] = 0.7;
        assert_eq!(pick_boundaries(&out, 0.5, 1.0).unwrap(), vec![3.5, 7.5]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let out = outputs(10.0, 2.0, 1);
        assert!(pick_boundaries(&out, 1.0, 1.0).is_err());
        assert!(pick_boundaries(&out, 0.5, 0.0).is_err());
        assert!(framewise_threshold_decode(&out, 0.0, "v").is_err());
    }

    #[test]
    fn segments_from_bounds() {
        let s = segments_from_boundaries(&[], 30.0).unwrap();
        assert_eq!(
            s,
            vec![Interval {
                start: 0.0,
                end: 30.0
            }]
        );
        let s = segments_from_boundaries(&[3.0, 7.0], 10.0).unwrap();
        let spans: Vec<(f64, f64)> = s.iter().map(|i| (i.start, i.end)).collect();
        assert_eq!(spans, vec![(0.0, 3.0), (3.0, 7.0), (7.0, 10.0)]);
        assert!(segments_from_boundaries(&[7.0, 3.0], 10.0).is_err());
        assert!(segments_from_boundaries(&[10.0], 10.0).is_err());
    }

    #[test]
    fn constant_scores_pool_to_themselves() {
        let mut out = outputs(4.0, 2.0, 2);
        out.label_scores.column_mut(0).fill(0.25);
        out.label_scores.column_mut(1).fill(0.75);
        let segs = segments_from_boundaries(&[1.3], 4.0).unwrap();
        let set = label_segments(&out, &segs, "v");
        for s in &set.segments {
            assert_eq!(s.scores, BTreeMap::from([(0, 0.25), (1, 0.75)]));
        }
    }

    #[test]
    fn whole_video_pools_columnwise_max() {
        let out = FrameOutputs::new(
            1.0,
            3.0,
            array![[0.1, 0.9], [0.5, 0.2], [0.3, 0.0]],
            Array1::zeros(3),
            Array1::zeros(3),
        )
        .unwrap();
        let set = label_segments(&out, &segments_from_boundaries(&[], 3.0).unwrap(), "v");
        assert_eq!(set.segments[0].scores, BTreeMap::from([(0, 0.5), (1, 0.9)]));
    }

    #[test]
    fn sampleless_segment_uses_nearest_sample() {
        let out = FrameOutputs::new(
            1.0,
            3.0,
            array![[0.1], [0.6], [0.3]],
            Array1::zeros(3),
            Array1::zeros(3),
        )
        .unwrap();
        let segs = segments_from_boundaries(&[1.6, 1.9], 3.0).unwrap();
        let set = label_segments(&out, &segs, "v");
        assert_eq!(set.segments[1].scores, BTreeMap::from([(0, 0.3)]));
        assert_eq!(set.segments[0].scores, BTreeMap::from([(0, 0.6)]));
    }

    #[test]
    fn framewise_two_halves() {
        let mut out = outputs(5.0, 2.0, 2);
        for k in 0..10 {
            out.label_scores[[k, if k < 4 { 0 } else { 1 }]] = 0.9;
        }
        let dec = framewise_threshold_decode(&out, 0.5, "v").unwrap();
        let spans: Vec<(f64, f64)> = dec
            .predictions
            .segments
            .iter()
            .map(|s| (s.start_s, s.end_s))
            .collect();
        assert_eq!(spans, vec![(0.0, 2.0), (2.0, 5.0)]);
        assert!(!dec.all_empty);
    }

    #[test]
    fn framewise_uniform_and_empty_frames() {
        let mut out = outputs(5.0, 2.0, 2);
        for k in [2usize, 3, 7] {
            out.label_scores[[k, 1]] = 0.6;
        }
        let dec = framewise_threshold_decode(&out, 0.5, "v").unwrap();
        assert_eq!(dec.predictions.segments.len(), 1);
        assert_eq!(
            dec.predictions.segments[0].scores,
            BTreeMap::from([(1, 0.6)])
        );
    }

    #[test]
    fn framewise_all_empty_is_flagged() {
        let mut out = outputs(5.0, 2.0, 2);
        out.label_scores[[3, 0]] = 0.2;
        let dec = framewise_threshold_decode(&out, 0.5, "v").unwrap();
        assert!(dec.all_empty);
        assert_eq!(dec.predictions.segments.len(), 1);
        assert_eq!(
            dec.predictions.segments[0].scores,
            BTreeMap::from([(0, 0.2)])
        );
    }
}
