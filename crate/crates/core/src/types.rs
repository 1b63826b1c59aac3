//! Core domain types: time intervals, ground-truth scene partitions and
//! scored scene predictions.
//!
//! All times are double-precision seconds measured from the start of the
//! video.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open time span `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        let iv = Interval { start, end };
        iv.check()?;
        Ok(iv)
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    fn check(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite()) || self.end <= self.start {
            return Err(Error::InvalidInterval {
                start: self.start,
                end: self.end,
            });
        }
        Ok(())
    }
}

/// Temporal intersection-over-union of two positive-length intervals.
pub fn tiou(a: Interval, b: Interval) -> Result<f64> {
    a.check()?;
    b.check()?;
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    if inter == 0.0 {
        return Ok(0.0);
    }
    let union = a.end.max(b.end) - a.start.min(b.start);
    Ok(inter / union)
}

/// One ground-truth scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub start_s: f64,
    pub end_s: f64,
    pub labels: BTreeSet<u32>,
}

impl Scene {
    pub fn new(start_s: f64, end_s: f64, labels: impl IntoIterator<Item = u32>) -> Self {
        Scene {
            start_s,
            end_s,
            labels: labels.into_iter().collect(),
        }
    }

    pub fn interval(&self) -> Interval {
        Interval {
            start: self.start_s,
            end: self.end_s,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// A video's ground truth: an ordered partition of `[0, duration_s]` into
/// labelled scenes.
///
/// The fields are public so malformed annotations can be represented and
/// linted; [`VideoAnnotation::new`] enforces the partition invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub duration_s: f64,
    pub scenes: Vec<Scene>,
}

impl VideoAnnotation {
    pub fn new(video_id: impl Into<String>, duration_s: f64, scenes: Vec<Scene>) -> Result<Self> {
        let ann = VideoAnnotation {
            video_id: video_id.into(),
            duration_s,
            scenes,
        };
        ann.check_structure()?;
        Ok(ann)
    }

    /// Structural checks: exact partition, positive lengths, non-empty label
    /// sets. Label ids are checked against a taxonomy by
    /// [`crate::validate::validate_annotation`].
    pub fn check_structure(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidAnnotation {
            video_id: self.video_id.clone(),
            reason,
        };
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(fail(format!(
                "duration {} is not positive",
                self.duration_s
            )));
        }
        let Some(first) = self.scenes.first() else {
            return Err(fail("no scenes".into()));
        };
        if first.start_s != 0.0 {
            return Err(fail(format!(
                "first scene starts at {} instead of 0",
                first.start_s
            )));
        }
        for (k, scene) in self.scenes.iter().enumerate() {
            if !(scene.start_s.is_finite() && scene.end_s.is_finite())
                || scene.end_s <= scene.start_s
            {
                return Err(fail(format!(
                    "scene {k} [{}, {}] has non-positive length",
                    scene.start_s, scene.end_s
                )));
            }
            if scene.labels.is_empty() {
                return Err(fail(format!("scene {k} has no labels")));
            }
            if let Some(next) = self.scenes.get(k + 1) {
                if next.start_s != scene.end_s {
                    let kind = if next.start_s > scene.end_s {
                        "gap"
                    } else {
                        "overlap"
                    };
                    return Err(fail(format!(
                        "{kind}: scene {k} ends at {} but scene {} starts at {}",
                        scene.end_s,
                        k + 1,
                        next.start_s
                    )));
                }
            }
        }
        let last = self.scenes.last().expect("non-empty");
        if last.end_s != self.duration_s {
            return Err(fail(format!(
                "last scene ends at {} but duration is {}",
                last.end_s, self.duration_s
            )));
        }
        Ok(())
    }

    /// Interior cut points of the partition. Video start and end are not
    /// boundaries.
    pub fn internal_boundaries(&self) -> Vec<f64> {
        internal_boundaries(self)
    }
}

pub fn internal_boundaries(ann: &VideoAnnotation) -> Vec<f64> {
    ann.scenes.iter().skip(1).map(|s| s.start_s).collect()
}

/// A scored segment. Absent classes have score 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedScene {
    pub start_s: f64,
    pub end_s: f64,
    pub scores: BTreeMap<u32, f64>,
}

impl PredictedScene {
    pub fn interval(&self) -> Interval {
        Interval {
            start: self.start_s,
            end: self.end_s,
        }
    }

    pub fn score(&self, class: u32) -> f64 {
        self.scores.get(&class).copied().unwrap_or(0.0)
    }
}

/// Non-overlapping predicted segments for one video, sorted by start.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedSceneSet {
    pub video_id: String,
    pub segments: Vec<PredictedScene>,
}

impl PredictedSceneSet {
    /// Sorts the segments and checks the non-overlap and score-range
    /// invariants. Touching endpoints are allowed.
    pub fn new(video_id: impl Into<String>, mut segments: Vec<PredictedScene>) -> Result<Self> {
        let video_id = video_id.into();
        segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        let set = PredictedSceneSet { video_id, segments };
        set.check()?;
        Ok(set)
    }

    pub fn check(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidPrediction {
            video_id: self.video_id.clone(),
            reason,
        };
        for (k, seg) in self.segments.iter().enumerate() {
            if !(seg.start_s.is_finite() && seg.end_s.is_finite()) || seg.end_s <= seg.start_s {
                return Err(fail(format!(
                    "segment {k} [{}, {}] has non-positive length",
                    seg.start_s, seg.end_s
                )));
            }
            if seg.start_s < 0.0 {
                return Err(fail(format!(
                    "segment {k} starts before 0 ({})",
                    seg.start_s
                )));
            }
            for (&class, &score) in &seg.scores {
                if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
                    return Err(fail(format!(
                        "segment {k} has score {score} for class {class} outside [0, 1]"
                    )));
                }
            }
        }
        for (k, pair) in self.segments.windows(2).enumerate() {
            if pair[0].start_s > pair[1].start_s {
                return Err(fail(format!("segments {k} and {} are not sorted", k + 1)));
            }
            if pair[1].start_s < pair[0].end_s {
                return Err(fail(format!(
                    "segments {k} [{}, {}] and {} [{}, {}] overlap",
                    pair[0].start_s,
                    pair[0].end_s,
                    k + 1,
                    pair[1].start_s,
                    pair[1].end_s
                )));
            }
        }
        Ok(())
    }

    /// Predicted boundaries: all segment endpoints strictly inside
    /// `(0, duration_s)`, deduplicated. For a contiguous partition these are
    /// the interior cut points; a gap contributes both of its ends.
    pub fn boundaries(&self, duration_s: f64) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.segments.len() * 2);
        for seg in &self.segments {
            for t in [seg.start_s, seg.end_s] {
                if t > 0.0 && t < duration_s {
                    out.push(t);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Ground truth exported as a perfect prediction: every GT label at score
    /// 1.0, nothing else.
    pub fn from_annotation(ann: &VideoAnnotation) -> Self {
        PredictedSceneSet {
            video_id: ann.video_id.clone(),
            segments: ann
                .scenes
                .iter()
                .map(|s| PredictedScene {
                    start_s: s.start_s,
                    end_s: s.end_s,
                    scores: s.labels.iter().map(|&c| (c, 1.0)).collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval { start: a, end: b }
    }

    #[test]
    fn tiou_examples() {
        assert_eq!(tiou(iv(0.0, 2.0), iv(0.0, 2.0)).unwrap(), 1.0);
        assert_eq!(tiou(iv(0.0, 1.0), iv(2.0, 3.0)).unwrap(), 0.0);
        assert!((tiou(iv(0.0, 2.0), iv(1.0, 3.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tiou(iv(0.0, 10.0), iv(0.0, 5.0)).unwrap(), 0.5);
    }

    #[test]
    fn tiou_rejects_degenerate() {
        assert!(matches!(
            tiou(iv(1.0, 1.0), iv(0.0, 2.0)),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(tiou(iv(0.0, 2.0), iv(3.0, 2.0)).is_err());
    }

    #[test]
    fn boundaries_of_partition() {
        let ann = VideoAnnotation::new(
            "v",
            10.0,
            vec![
                Scene::new(0.0, 3.0, [1]),
                Scene::new(3.0, 7.0, [2]),
                Scene::new(7.0, 10.0, [1]),
            ],
        )
        .unwrap();
        assert_eq!(ann.internal_boundaries(), vec![3.0, 7.0]);

        let single = VideoAnnotation::new("w", 5.0, vec![Scene::new(0.0, 5.0, [0])]).unwrap();
        assert!(single.internal_boundaries().is_empty());
    }

    #[test]
    fn annotation_rejects_gap() {
        let err = VideoAnnotation::new(
            "gap",
            7.0,
            vec![Scene::new(0.0, 3.0, [1]), Scene::new(4.0, 7.0, [1])],
        )
        .unwrap_err();
        assert!(err.to_string().contains("gap"));
    }

    #[test]
    fn prediction_overlap_rejected_touching_allowed() {
        let seg = |a, b| PredictedScene {
            start_s: a,
            end_s: b,
            scores: BTreeMap::from([(0, 0.5)]),
        };
        assert!(PredictedSceneSet::new("v", vec![seg(0.0, 5.0), seg(4.0, 9.0)]).is_err());
        let ok = PredictedSceneSet::new("v", vec![seg(5.0, 9.0), seg(0.0, 5.0)]).unwrap();
        assert_eq!(ok.segments[0].start_s, 0.0);
        assert_eq!(ok.boundaries(9.0), vec![5.0]);
    }

    #[test]
    fn gap_contributes_both_ends() {
        let seg = |a, b| PredictedScene {
            start_s: a,
            end_s: b,
            scores: BTreeMap::new(),
        };
        let set = PredictedSceneSet::new("v", vec![seg(0.0, 4.0), seg(5.0, 10.0)]).unwrap();
        assert_eq!(set.boundaries(10.0), vec![4.0, 5.0]);
    }
}
