//! JSON documents: annotations, predictions and shot boundaries.
//!
//! Times are written with exactly three fractional digits, so values on a
//! millisecond grid survive `parse(serialize(x))` bit for bit. Scores are
//! written in shortest round-trip form.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;
use crate::types::{PredictedScene, PredictedSceneSet, Scene, VideoAnnotation};

pub const SCHEMA_VERSION: u32 = 1;
pub const TIME_DECIMALS: usize = 3;

/// Rounds to the on-disk time grid.
pub fn round_time(t: f64) -> f64 {
    let scale = 10f64.powi(TIME_DECIMALS as i32);
    (t * scale).round() / scale
}

fn fixed_time<S: Serializer>(t: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format!("{:.*}", TIME_DECIMALS, t))
        .map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

fn fixed_times<S: Serializer>(ts: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(ts.len()))?;
    for t in ts {
        let raw = RawValue::from_string(format!("{:.*}", TIME_DECIMALS, t))
            .map_err(serde::ser::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub annotations: Vec<VideoAnnotation>,
}

impl DatasetSplit {
    pub fn get(&self, video_id: &str) -> Option<&VideoAnnotation> {
        self.annotations.iter().find(|a| a.video_id == video_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotBoundarySet {
    pub video_id: String,
    pub boundaries: Vec<f64>,
}

// --- annotations -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct AnnotationsDoc {
    #[serde(default = "default_version")]
    schema_version: u32,
    split: SplitName,
    videos: Vec<VideoDoc>,
}

#[derive(Serialize, Deserialize)]
struct VideoDoc {
    video_id: String,
    #[serde(serialize_with = "fixed_time")]
    duration: f64,
    scenes: Vec<SceneDoc>,
}

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    #[serde(serialize_with = "fixed_time")]
    start: f64,
    #[serde(serialize_with = "fixed_time")]
    end: f64,
    labels: BTreeSet<u32>,
}

fn parse_doc<'a, T: Deserialize<'a>>(what: &'static str, document: &'a [u8]) -> Result<T> {
    serde_json::from_slice(document).map_err(|source| Error::Parse { what, source })
}

/// Parses an annotation document and checks every video's partition
/// structure. Video ids must be unique.
pub fn parse_annotations(document: &[u8]) -> Result<DatasetSplit> {
    let split = parse_annotations_lenient(document)?;
    let mut seen = HashSet::new();
    for ann in &split.annotations {
        ann.check_structure()?;
        if !seen.insert(ann.video_id.as_str()) {
            return Err(Error::InvalidAnnotation {
                video_id: ann.video_id.clone(),
                reason: "duplicate video_id in split".into(),
            });
        }
    }
    Ok(split)
}

/// Parses without structural checks, for linting malformed corpora.
pub fn parse_annotations_lenient(document: &[u8]) -> Result<DatasetSplit> {
    let doc: AnnotationsDoc = parse_doc("annotations", document)?;
    Ok(DatasetSplit {
        name: doc.split,
        annotations: doc
            .videos
            .into_iter()
            .map(|v| VideoAnnotation {
                video_id: v.video_id,
                duration_s: v.duration,
                scenes: v
                    .scenes
                    .into_iter()
                    .map(|s| Scene {
                        start_s: s.start,
                        end_s: s.end,
                        labels: s.labels,
                    })
                    .collect(),
            })
            .collect(),
    })
}

pub fn serialize_annotations(split: &DatasetSplit) -> String {
    let doc = AnnotationsDoc {
        schema_version: SCHEMA_VERSION,
        split: split.name,
        videos: split
            .annotations
            .iter()
            .map(|a| VideoDoc {
                video_id: a.video_id.clone(),
                duration: a.duration_s,
                scenes: a
                    .scenes
                    .iter()
                    .map(|s| SceneDoc {
                        start: s.start_s,
                        end: s.end_s,
                        labels: s.labels.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("annotations serialize");
    out.push('\n');
    out
}

/// Canonical form: times on the millisecond grid.
pub fn normalize_split(split: &DatasetSplit) -> DatasetSplit {
    let mut out = split.clone();
    for ann in &mut out.annotations {
        ann.duration_s = round_time(ann.duration_s);
        for s in &mut ann.scenes {
            s.start_s = round_time(s.start_s);
            s.end_s = round_time(s.end_s);
        }
    }
    out
}

// --- predictions -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PredictionsDoc {
    #[serde(default = "default_version")]
    schema_version: u32,
    videos: Vec<PredVideoDoc>,
}

#[derive(Serialize, Deserialize)]
struct PredVideoDoc {
    video_id: String,
    segments: Vec<SegmentDoc>,
}

#[derive(Serialize, Deserialize)]
struct SegmentDoc {
    #[serde(serialize_with = "fixed_time")]
    start: f64,
    #[serde(serialize_with = "fixed_time")]
    end: f64,
    #[serde(default)]
    scores: BTreeMap<u32, f64>,
}

/// Parses a prediction document. Rejects overlapping segments, scores
/// outside `[0, 1]`, class ids outside the taxonomy and duplicate videos.
pub fn parse_predictions(document: &[u8], tax: &Taxonomy) -> Result<Vec<PredictedSceneSet>> {
    let doc: PredictionsDoc = parse_doc("predictions", document)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(doc.videos.len());
    for v in doc.videos {
        if !seen.insert(v.video_id.clone()) {
            return Err(Error::InvalidPrediction {
                video_id: v.video_id,
                reason: "duplicate video_id".into(),
            });
        }
        for seg in &v.segments {
            if let Some(&bad) = seg.scores.keys().find(|&&c| !tax.contains(c)) {
                return Err(Error::InvalidPrediction {
                    video_id: v.video_id.clone(),
                    reason: format!("unknown class id {bad}"),
                });
            }
        }
        let segments = v
            .segments
            .into_iter()
            .map(|s| PredictedScene {
                start_s: s.start,
                end_s: s.end,
                scores: s.scores,
            })
            .collect();
        out.push(PredictedSceneSet::new(v.video_id, segments)?);
    }
    Ok(out)
}

pub fn serialize_predictions(preds: &[PredictedSceneSet]) -> String {
    let doc = PredictionsDoc {
        schema_version: SCHEMA_VERSION,
        videos: preds
            .iter()
            .map(|p| PredVideoDoc {
                video_id: p.video_id.clone(),
                segments: p
                    .segments
                    .iter()
                    .map(|s| SegmentDoc {
                        start: s.start_s,
                        end: s.end_s,
                        scores: s.scores.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("predictions serialize");
    out.push('\n');
    out
}

// --- shots -----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ShotsDoc {
    #[serde(default = "default_version")]
    schema_version: u32,
    videos: Vec<ShotVideoDoc>,
}

#[derive(Serialize, Deserialize)]
struct ShotVideoDoc {
    video_id: String,
    #[serde(serialize_with = "fixed_times")]
    boundaries: Vec<f64>,
}

/// Parses shot boundaries; each list must be strictly increasing and
/// positive.
pub fn parse_shots(document: &[u8]) -> Result<Vec<ShotBoundarySet>> {
    let doc: ShotsDoc = parse_doc("shots", document)?;
    doc.videos
        .into_iter()
        .map(|v| {
            let ok = v.boundaries.iter().all(|t| t.is_finite() && *t > 0.0)
                && v.boundaries.windows(2).all(|w| w[0] < w[1]);
            if !ok {
                return Err(Error::InvalidAnnotation {
                    video_id: v.video_id,
                    reason: "shot boundaries must be positive and strictly increasing".into(),
                });
            }
            Ok(ShotBoundarySet {
                video_id: v.video_id,
                boundaries: v.boundaries,
            })
        })
        .collect()
}

pub fn serialize_shots(shots: &[ShotBoundarySet]) -> String {
    let doc = ShotsDoc {
        schema_version: SCHEMA_VERSION,
        videos: shots
            .iter()
            .map(|s| ShotVideoDoc {
                video_id: s.video_id.clone(),
                boundaries: s.boundaries.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("shots serialize");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const DOC_EXAMPLE: &str = r#"{
  "schema_version": 1,
  "split": "val",
  "videos": [
    {
      "video_id": "ad_0001",
      "duration": 30.000,
      "scenes": [
        { "start": 0.000, "end": 12.340, "labels": [0, 25, 59] },
        { "start": 12.340, "end": 30.000, "labels": [3, 60] }
      ]
    },
    {
      "video_id": "ad_0002",
      "duration": 45.500,
      "scenes": [
        { "start": 0.000, "end": 10.000, "labels": [7] },
        { "start": 10.000, "end": 31.080, "labels": [7, 30] },
        { "start": 31.080, "end": 45.500, "labels": [12] }
      ]
    }
  ]
}"#;

    #[test]
    fn documented_example_parses() {
        let split = parse_annotations(DOC_EXAMPLE.as_bytes()).unwrap();
        assert_eq!(split.name, SplitName::Val);
        assert_eq!(split.annotations.len(), 2);
        let scenes: usize = split.annotations.iter().map(|a| a.scenes.len()).sum();
        assert_eq!(scenes, 5);
        assert_eq!(
            split.annotations[1].internal_boundaries(),
            vec![10.0, 31.08]
        );
    }

    #[test]
    fn serialize_is_canonical_and_round_trips() {
        let split = parse_annotations(DOC_EXAMPLE.as_bytes()).unwrap();
        let text = serialize_annotations(&split);
        assert!(text.contains("\"end\": 12.340"), "{text}");
        let again = parse_annotations(text.as_bytes()).unwrap();
        assert_eq!(again, split);
        assert_eq!(serialize_annotations(&again), text);
    }

    #[test]
    fn empty_video_list_is_fine() {
        let split = parse_annotations(br#"{"split":"test","videos":[]}"#).unwrap();
        assert!(split.annotations.is_empty());
    }

    #[test]
    fn malformed_reports_position() {
        let err = parse_annotations(b"{\"split\":\"test\",\n\"videos\": [ {\"video_id\": 3} ]}")
            .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn invalid_partition_names_video() {
        let doc = r#"{"split":"train","videos":[{"video_id":"bad_one","duration":7.0,
            "scenes":[{"start":0.0,"end":3.0,"labels":[1]},{"start":4.0,"end":7.0,"labels":[1]}]}]}"#;
        let err = parse_annotations(doc.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("bad_one"));
        assert!(parse_annotations_lenient(doc.as_bytes()).is_ok());
    }

    #[test]
    fn predictions_rules() {
        let tax = Taxonomy::flat(5);
        let overlap = r#"{"videos":[{"video_id":"v","segments":[
            {"start":0.0,"end":5.0,"scores":{"1":0.5}},{"start":4.0,"end":9.0,"scores":{"1":0.5}}]}]}"#;
        let err = parse_predictions(overlap.as_bytes(), &tax).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");

        let range = r#"{"videos":[{"video_id":"v","segments":[{"start":0.0,"end":5.0,"scores":{"1":1.5}}]}]}"#;
        assert!(parse_predictions(range.as_bytes(), &tax).is_err());

        let unknown = r#"{"videos":[{"video_id":"v","segments":[{"start":0.0,"end":5.0,"scores":{"9":0.5}}]}]}"#;
        assert!(parse_predictions(unknown.as_bytes(), &tax).is_err());
    }

    #[test]
    fn perfect_export_parses() {
        let split = parse_annotations(DOC_EXAMPLE.as_bytes()).unwrap();
        let preds: Vec<_> = split
            .annotations
            .iter()
            .map(PredictedSceneSet::from_annotation)
            .collect();
        let text = serialize_predictions(&preds);
        let back = parse_predictions(text.as_bytes(), &Taxonomy::bundled()).unwrap();
        assert_eq!(back, preds);
    }

    #[test]
    fn shots_round_trip_and_checks() {
        let shots = vec![ShotBoundarySet {
            video_id: "v".into(),
            boundaries: vec![1.5, 10.07],
        }];
        let text = serialize_shots(&shots);
        assert!(text.contains("10.070"));
        assert_eq!(parse_shots(text.as_bytes()).unwrap(), shots);
        assert!(parse_shots(br#"{"videos":[{"video_id":"v","boundaries":[3.0,2.0]}]}"#).is_err());
    }
}
