//! Three-group class hierarchy with optional mutual-exclusion sets.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub id: u32,
    pub name: String,
    pub group: u32,
    /// Ancestor names from the group down to the class itself, depth 1..=3.
    pub path: Vec<String>,
    /// Classes sharing an exclusion group must not co-occur within a video.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_group: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TaxonomyFile", into = "TaxonomyFile")]
pub struct Taxonomy {
    groups: Vec<String>,
    classes: Vec<ClassLabel>,
    group_sizes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    groups: Vec<String>,
    classes: Vec<ClassLabel>,
}

impl TryFrom<TaxonomyFile> for Taxonomy {
    type Error = Error;

    fn try_from(file: TaxonomyFile) -> Result<Self> {
        Taxonomy::new(file.groups, file.classes)
    }
}

impl From<Taxonomy> for TaxonomyFile {
    fn from(tax: Taxonomy) -> Self {
        TaxonomyFile {
            groups: tax.groups,
            classes: tax.classes,
        }
    }
}

impl Taxonomy {
    /// Builds a taxonomy, sorting classes by id and checking that ids are
    /// dense and every class references an existing group.
    pub fn new(groups: Vec<String>, mut classes: Vec<ClassLabel>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Taxonomy("at least one group is required".into()));
        }
        classes.sort_by_key(|c| c.id);
        let mut group_sizes = vec![0usize; groups.len()];
        for (expected, class) in classes.iter().enumerate() {
            if class.id as usize != expected {
                return Err(Error::Taxonomy(format!(
                    "class ids must be dense 0..N-1 and unique; found id {} at position {expected}",
                    class.id
                )));
            }
            let Some(size) = group_sizes.get_mut(class.group as usize) else {
                return Err(Error::Taxonomy(format!(
                    "class {} references unknown group {}",
                    class.id, class.group
                )));
            };
            *size += 1;
            if !(1..=3).contains(&class.path.len()) {
                return Err(Error::Taxonomy(format!(
                    "class {} has path depth {}, expected 1..=3",
                    class.id,
                    class.path.len()
                )));
            }
        }
        Ok(Taxonomy {
            groups,
            classes,
            group_sizes,
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|source| Error::Parse {
            what: "taxonomy",
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taxonomy serializes")
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    pub fn class(&self, id: u32) -> Option<&ClassLabel> {
        self.classes.get(id as usize)
    }

    pub fn contains(&self, id: u32) -> bool {
        (id as usize) < self.classes.len()
    }

    /// Exclusion group id → member class ids.
    pub fn exclusion_groups(&self) -> BTreeMap<u32, Vec<u32>> {
        let mut out: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for c in &self.classes {
            if let Some(g) = c.exclusion_group {
                out.entry(g).or_default().push(c.id);
            }
        }
        out
    }

    /// Flat taxonomy of `n` placeholder classes in a single group. Handy for
    /// small test instances.
    pub fn flat(n: usize) -> Self {
        let classes = (0..n as u32)
            .map(|id| ClassLabel {
                id,
                name: format!("class_{id}"),
                group: 0,
                path: vec![format!("class_{id}")],
                exclusion_group: None,
            })
            .collect();
        Taxonomy::new(vec!["all".into()], classes).expect("flat taxonomy is valid")
    }

    /// The bundled 82-class default: "presentation form" (25), "style" (34)
    /// and "place" (23). Names are placeholders seeded with representative
    /// ads-video categories; no exclusion groups are declared.
    pub fn bundled() -> Self {
        let groups = vec![
            "presentation form".to_string(),
            "style".to_string(),
            "place".to_string(),
        ];
        let mut classes = Vec::with_capacity(82);
        for (group, subgroups) in BUNDLED.iter().enumerate() {
            for (subgroup, names) in subgroups.iter() {
                for name in names.iter() {
                    classes.push(ClassLabel {
                        id: classes.len() as u32,
                        name: name.to_string(),
                        group: group as u32,
                        path: vec![
                            groups[group].clone(),
                            subgroup.to_string(),
                            name.to_string(),
                        ],
                        exclusion_group: None,
                    });
                }
            }
        }
        Taxonomy::new(groups, classes).expect("bundled taxonomy is valid")
    }
}

type Subgroup = (&'static str, &'static [&'static str]);

const BUNDLED: [&[Subgroup]; 3] = [
    &[
        (
            "people",
            &[
                "interview",
                "dubbing",
                "talk show",
                "vlog",
                "live streaming",
                "monologue",
                "street interview",
            ],
        ),
        (
            "production",
            &[
                "animation",
                "cross-cutting",
                "stop motion",
                "split screen",
                "slideshow",
                "time-lapse",
                "slow motion",
            ],
        ),
        (
            "content",
            &[
                "product display",
                "teaching",
                "unboxing",
                "tutorial",
                "comparison",
                "drama",
                "sketch comedy",
                "testimonial",
                "demo",
                "screen recording",
                "montage",
            ],
        ),
    ],
    &[
        (
            "relationship",
            &[
                "lovers",
                "friends",
                "family members",
                "colleagues",
                "parent-child",
                "strangers",
                "teacher-student",
            ],
        ),
        (
            "theme",
            &[
                "family",
                "education",
                "romance",
                "workplace",
                "campus",
                "festival",
            ],
        ),
        (
            "tone",
            &[
                "warm",
                "funny",
                "inspiring",
                "suspenseful",
                "sad",
                "exciting",
                "relaxing",
                "touching",
                "cool",
                "cute",
            ],
        ),
        (
            "visual",
            &[
                "realistic",
                "cartoon",
                "retro",
                "minimalist",
                "luxurious",
                "fresh",
                "dark",
                "colorful",
                "cinematic",
                "documentary",
                "sci-fi",
            ],
        ),
    ],
    &[
        (
            "working place",
            &["office", "studio", "factory", "meeting room", "shop"],
        ),
        (
            "living place",
            &[
                "living room",
                "bedroom",
                "kitchen",
                "bathroom",
                "dining room",
            ],
        ),
        (
            "public place",
            &[
                "city street",
                "mall",
                "restaurant",
                "hospital",
                "school",
                "gym",
                "station",
            ],
        ),
        (
            "outdoor",
            &[
                "park",
                "beach",
                "mountain",
                "countryside",
                "sports field",
                "vehicle interior",
            ],
        ),
    ],
];
