//! Annotation linting: partition structure, label ids and the
//! mutual-exclusion rule. Problems are collected, never thrown.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::taxonomy::Taxonomy;
use crate::types::VideoAnnotation;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositiveDuration {
        duration_s: f64,
    },
    NoScenes,
    StartNotZero {
        start_s: f64,
    },
    EndNotDuration {
        end_s: f64,
        duration_s: f64,
    },
    NonPositiveScene {
        scene: usize,
        start_s: f64,
        end_s: f64,
    },
    Gap {
        after_scene: usize,
        from_s: f64,
        to_s: f64,
    },
    Overlap {
        after_scene: usize,
        end_s: f64,
        next_start_s: f64,
    },
    EmptyLabels {
        scene: usize,
    },
    UnknownLabel {
        scene: usize,
        label: u32,
    },
    MutualExclusion {
        exclusion_group: u32,
        classes: Vec<u32>,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveDuration { duration_s } => write!(f, "duration {duration_s} is not positive"),
            Violation::NoScenes => write!(f, "no scenes"),
            Violation::StartNotZero { start_s } => write!(f, "first scene starts at {start_s}, not 0"),
            Violation::EndNotDuration { end_s, duration_s } => {
                write!(f, "last scene ends at {end_s}, duration is {duration_s}")
            }
            Violation::NonPositiveScene { scene, start_s, end_s } => {
                write!(f, "scene {scene} [{start_s}, {end_s}] has non-positive length")
            }
            Violation::Gap { after_scene, from_s, to_s } => {
                write!(f, "gap after scene {after_scene}: [{from_s}, {to_s}] is unannotated")
            }
            Violation::Overlap { after_scene, end_s, next_start_s } => write!(
                f,
                "overlap after scene {after_scene}: ends at {end_s}, next starts at {next_start_s}"
            ),
            Violation::EmptyLabels { scene } => write!(f, "scene {scene} has no labels"),
            Violation::UnknownLabel { scene, label } => write!(f, "scene {scene} uses unknown label {label}"),
            Violation::MutualExclusion { exclusion_group, classes } => write!(
                f,
                "mutual-exclusion: classes {classes:?} of exclusion group {exclusion_group} co-occur"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub video_id: String,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lints with exact time comparisons.
pub fn validate_annotation(ann: &VideoAnnotation, tax: &Taxonomy) -> ValidationReport {
    validate_annotation_with_tolerance(ann, tax, 0.0)
}

/// Lints with `tolerance_s` slack on the partition equalities (0 = exact).
pub fn validate_annotation_with_tolerance(
    ann: &VideoAnnotation,
    tax: &Taxonomy,
    tolerance_s: f64,
) -> ValidationReport {
    let mut v = Vec::new();
    let close = |a: f64, b: f64| (a - b).abs() <= tolerance_s;

    if !(ann.duration_s.is_finite() && ann.duration_s > 0.0) {
        v.push(Violation::NonPositiveDuration {
            duration_s: ann.duration_s,
        });
    }
    match (ann.scenes.first(), ann.scenes.last()) {
        (Some(first), Some(last)) => {
            if !close(first.start_s, 0.0) {
                v.push(Violation::StartNotZero {
                    start_s: first.start_s,
                });
            }
            if !close(last.end_s, ann.duration_s) {
                v.push(Violation::EndNotDuration {
                    end_s: last.end_s,
                    duration_s: ann.duration_s,
                });
            }
        }
        _ => v.push(Violation::NoScenes),
    }

    for (k, scene) in ann.scenes.iter().enumerate() {
        if !(scene.end_s > scene.start_s) {
            v.push(Violation::NonPositiveScene {
                scene: k,
                start_s: scene.start_s,
                end_s: scene.end_s,
            });
        }
        if scene.labels.is_empty() {
            v.push(Violation::EmptyLabels { scene: k });
        }
        for &label in &scene.labels {
            if !tax.contains(label) {
                v.push(Violation::UnknownLabel { scene: k, label });
            }
        }
        if let Some(next) = ann.scenes.get(k + 1) {
            if !close(next.start_s, scene.end_s) {
                if next.start_s > scene.end_s {
                    v.push(Violation::Gap {
                        after_scene: k,
                        from_s: scene.end_s,
                        to_s: next.start_s,
                    });
                } else {
                    v.push(Violation::Overlap {
                        after_scene: k,
                        end_s: scene.end_s,
                        next_start_s: next.start_s,
                    });
                }
            }
        }
    }

    let present: BTreeSet<u32> = ann
        .scenes
        .iter()
        .flat_map(|s| s.labels.iter().copied())
        .collect();
    for (group, members) in tax.exclusion_groups() {
        let hit: Vec<u32> = members
            .into_iter()
            .filter(|c| present.contains(c))
            .collect();
        if hit.len() > 1 {
            v.push(Violation::MutualExclusion {
                exclusion_group: group,
                classes: hit,
            });
        }
    }

    ValidationReport {
        video_id: ann.video_id.clone(),
        violations: v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::ClassLabel;
    use crate::types::Scene;

    fn tax_with_exclusion() -> Taxonomy {
        let mk = |id: u32, excl: Option<u32>| ClassLabel {
            id,
            name: format!("c{id}"),
            group: 0,
            path: vec![format!("c{id}")],
            exclusion_group: excl,
        };
        Taxonomy::new(
            vec!["g".into()],
            vec![mk(0, Some(1)), mk(1, Some(1)), mk(2, None)],
        )
        .unwrap()
    }

    fn ann(scenes: Vec<Scene>, duration: f64) -> VideoAnnotation {
        VideoAnnotation {
            video_id: "v".into(),
            duration_s: duration,
            scenes,
        }
    }

    #[test]
    fn clean_annotation_is_valid() {
        let a = ann(
            vec![
                Scene::new(0.0, 3.0, [0]),
                Scene::new(3.0, 7.0, [2]),
                Scene::new(7.0, 10.0, [0, 2]),
            ],
            10.0,
        );
        let report = validate_annotation(&a, &tax_with_exclusion());
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn gap_is_one_violation() {
        let a = ann(
            vec![Scene::new(0.0, 3.0, [2]), Scene::new(4.0, 7.0, [2])],
            7.0,
        );
        let report = validate_annotation(&a, &tax_with_exclusion());
        assert_eq!(
            report.violations,
            vec![Violation::Gap {
                after_scene: 0,
                from_s: 3.0,
                to_s: 4.0
            }]
        );
    }

    #[test]
    fn tolerance_forgives_small_gap() {
        let a = ann(
            vec![Scene::new(0.0, 3.0, [2]), Scene::new(3.01, 7.0, [2])],
            7.0,
        );
        assert!(!validate_annotation(&a, &tax_with_exclusion()).is_valid());
        assert!(validate_annotation_with_tolerance(&a, &tax_with_exclusion(), 0.02).is_valid());
    }

    #[test]
    fn exclusion_across_scenes() {
        let a = ann(
            vec![Scene::new(0.0, 3.0, [0]), Scene::new(3.0, 7.0, [1])],
            7.0,
        );
        let report = validate_annotation(&a, &tax_with_exclusion());
        assert_eq!(
            report.violations,
            vec![Violation::MutualExclusion {
                exclusion_group: 1,
                classes: vec![0, 1]
            }]
        );
    }

    #[test]
    fn unknown_and_empty_labels() {
        let a = ann(
            vec![Scene::new(0.0, 3.0, [9]), Scene::new(3.0, 7.0, [])],
            7.0,
        );
        let report = validate_annotation(&a, &tax_with_exclusion());
        assert!(report
            .violations
            .contains(&Violation::UnknownLabel { scene: 0, label: 9 }));
        assert!(report
            .violations
            .contains(&Violation::EmptyLabels { scene: 1 }));
    }
}
