//! Corpus statistics: label distribution, scene counts and durations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::documents::DatasetSplit;
use crate::taxonomy::Taxonomy;

pub const DURATION_BIN_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCount {
    pub class_id: u32,
    pub name: String,
    pub scenes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DurationBin {
    pub from_s: f64,
    pub to_s: f64,
    pub videos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub num_videos: usize,
    pub num_scenes: usize,
    pub num_labels: usize,
    pub mean_duration_s: f64,
    pub mean_scene_duration_s: f64,
    pub mean_scenes_per_video: f64,
    pub mean_labels_per_scene: f64,
    pub per_class: Vec<ClassCount>,
    /// Scene count → number of videos with that many scenes.
    pub scenes_per_video: BTreeMap<usize, usize>,
    pub duration_histogram: Vec<DurationBin>,
    /// Label ids found in the corpus but missing from the taxonomy.
    pub unknown_labels: BTreeMap<u32, usize>,
}

fn mean(total: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

pub fn dataset_stats(split: &DatasetSplit, tax: &Taxonomy) -> StatsReport {
    let mut per_class = vec![0usize; tax.num_classes()];
    let mut unknown_labels = BTreeMap::new();
    let mut scenes_per_video = BTreeMap::new();
    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    let (mut num_scenes, mut num_labels) = (0usize, 0usize);
    let (mut total_duration, mut total_scene_duration) = (0.0f64, 0.0f64);

    for ann in &split.annotations {
        total_duration += ann.duration_s;
        *scenes_per_video.entry(ann.scenes.len()).or_insert(0) += 1;
        *bins
            .entry((ann.duration_s.max(0.0) / DURATION_BIN_S).floor() as usize)
            .or_insert(0) += 1;
        for scene in &ann.scenes {
            num_scenes += 1;
            total_scene_duration += scene.duration();
            for &label in &scene.labels {
                num_labels += 1;
                match per_class.get_mut(label as usize) {
                    Some(count) => *count += 1,
                    None => *unknown_labels.entry(label).or_insert(0) += 1,
                }
            }
        }
    }

    StatsReport {
        num_videos: split.annotations.len(),
        num_scenes,
        num_labels,
        mean_duration_s: mean(total_duration, split.annotations.len()),
        mean_scene_duration_s: mean(total_scene_duration, num_scenes),
        mean_scenes_per_video: mean(num_scenes as f64, split.annotations.len()),
        mean_labels_per_scene: mean(num_labels as f64, num_scenes),
        per_class: tax
            .classes()
            .iter()
            .map(|c| ClassCount {
                class_id: c.id,
                name: c.name.clone(),
                scenes: per_class[c.id as usize],
            })
            .collect(),
        scenes_per_video,
        duration_histogram: bins
            .into_iter()
            .map(|(bin, videos)| DurationBin {
                from_s: bin as f64 * DURATION_BIN_S,
                to_s: (bin + 1) as f64 * DURATION_BIN_S,
                videos,
            })
            .collect(),
        unknown_labels,
    }
}

impl StatsReport {
    /// Long-format CSV: `section,key,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,key,value\n");
        let _ = writeln!(out, "summary,num_videos,{}", self.num_videos);
        let _ = writeln!(out, "summary,num_scenes,{}", self.num_scenes);
        let _ = writeln!(out, "summary,num_labels,{}", self.num_labels);
        let _ = writeln!(out, "summary,mean_duration_s,{}", self.mean_duration_s);
        let _ = writeln!(
            out,
            "summary,mean_scene_duration_s,{}",
            self.mean_scene_duration_s
        );
        let _ = writeln!(
            out,
            "summary,mean_scenes_per_video,{}",
            self.mean_scenes_per_video
        );
        let _ = writeln!(
            out,
            "summary,mean_labels_per_scene,{}",
            self.mean_labels_per_scene
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "class_scenes,{} {},{}",
                c.class_id,
                c.name.replace(',', ";"),
                c.scenes
            );
        }
        for (k, v) in &self.scenes_per_video {
            let _ = writeln!(out, "scenes_per_video,{k},{v}");
        }
        for b in &self.duration_histogram {
            let _ = writeln!(
                out,
                "duration_histogram,{}-{},{}",
                b.from_s, b.to_s, b.videos
            );
        }
        for (k, v) in &self.unknown_labels {
            let _ = writeln!(out, "unknown_label,{k},{v}");
        }
        out
    }

    pub fn to_pretty(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "videos              {}", self.num_videos);
        let _ = writeln!(out, "scenes              {}", self.num_scenes);
        let _ = writeln!(out, "labels              {}", self.num_labels);
        let _ = writeln!(out, "mean duration       {:.2} s", self.mean_duration_s);
        let _ = writeln!(
            out,
            "mean scene duration {:.2} s",
            self.mean_scene_duration_s
        );
        let _ = writeln!(out, "scenes / video      {:.3}", self.mean_scenes_per_video);
        let _ = writeln!(out, "labels / scene      {:.3}", self.mean_labels_per_scene);
        let _ = writeln!(out, "\nduration histogram");
        for b in &self.duration_histogram {
            let _ = writeln!(out, "  [{:>5.1}, {:>5.1})  {}", b.from_s, b.to_s, b.videos);
        }
        let _ = writeln!(out, "\nscenes per video");
        for (k, v) in &self.scenes_per_video {
            let _ = writeln!(out, "  {k:>3}  {v}");
        }
        let mut ranked: Vec<&ClassCount> = self.per_class.iter().collect();
        ranked.sort_by(|a, b| b.scenes.cmp(&a.scenes).then(a.class_id.cmp(&b.class_id)));
        let _ = writeln!(out, "\nper-class scene counts (descending)");
        for c in ranked {
            let _ = writeln!(out, "  {:>3} {:<20} {}", c.class_id, c.name, c.scenes);
        }
        if !self.unknown_labels.is_empty() {
            let _ = writeln!(out, "\nunknown labels: {:?}", self.unknown_labels);
        }
        out
    }
}
