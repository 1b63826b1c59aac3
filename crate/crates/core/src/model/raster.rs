//! Continuous-time annotations to per-sample training targets.

use std::ops::Range;

use ndarray::{Array1, Array2};

use crate::decode::{num_samples, sample_time};
use crate::error::{Error, Result};
use crate::types::VideoAnnotation;

#[derive(Debug, Clone, PartialEq)]
pub struct RasterTargets {
    pub fps: f64,
    pub duration_s: f64,
    /// 1 at the sample nearest each interior boundary.
    pub boundary_01: Array1<f64>,
    /// `boundary − k/fps` at positive samples, 0 elsewhere.
    pub offsets_s: Array1<f64>,
    /// `T × C` labels of the scene containing each sample.
    pub frame_labels: Array2<f64>,
    /// `S × C` label vectors, one row per scene.
    pub scene_labels: Array2<f64>,
    /// Samples whose time falls in each scene; may be empty for very short
    /// scenes.
    pub scene_samples: Vec<Range<usize>>,
    pub video_labels: Array1<f64>,
    /// Boundaries that fell on an already occupied sample and were dropped.
    pub dropped_boundaries: Vec<f64>,
}

impl RasterTargets {
    pub fn num_samples(&self) -> usize {
        self.boundary_01.len()
    }

    pub fn positives(&self) -> Vec<usize> {
        (0..self.num_samples())
            .filter(|&k| self.boundary_01[k] > 0.5)
            .collect()
    }
}

/// Nearest sample to time `b`; exact midpoints go to the earlier sample.
pub fn nearest_sample(b: f64, fps: f64, n: usize) -> usize {
    let k = (b * fps - 0.5).ceil().max(0.0) as usize;
    k.min(n - 1)
}

pub fn rasterize_targets(
    ann: &VideoAnnotation,
    fps: f64,
    num_classes: usize,
) -> Result<RasterTargets> {
    ann.check_structure()?;
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::Config(format!("fps must be positive, got {fps}")));
    }
    for s in &ann.scenes {
        if let Some(&c) = s.labels.iter().find(|&&c| c as usize >= num_classes) {
            return Err(Error::InvalidAnnotation {
                video_id: ann.video_id.clone(),
                reason: format!("label {c} outside 0..{num_classes}"),
            });
        }
    }
    let n = num_samples(ann.duration_s, fps);

    let mut boundary_01 = Array1::zeros(n);
    let mut offsets_s = Array1::zeros(n);
    let mut dropped = Vec::new();
    for b in ann.internal_boundaries() {
        let k = nearest_sample(b, fps, n);
        if boundary_01[k] > 0.0 {
            dropped.push(b);
            continue;
        }
        boundary_01[k] = 1.0;
        offsets_s[k] = b - sample_time(k, fps);
    }

    let mut frame_labels = Array2::zeros((n, num_classes));
    let mut scene_labels = Array2::zeros((ann.scenes.len(), num_classes));
    let mut video_labels = Array1::zeros(num_classes);
    let mut scene_samples = Vec::with_capacity(ann.scenes.len());
    let mut k = 0;
    for (j, scene) in ann.scenes.iter().enumerate() {
        let last = j + 1 == ann.scenes.len();
        let first = k;
        while k < n && (last || sample_time(k, fps) < scene.end_s) {
            for &c in &scene.labels {
                frame_labels[[k, c as usize]] = 1.0;
            }
            k += 1;
        }
        scene_samples.push(first..k);
        for &c in &scene.labels {
            scene_labels[[j, c as usize]] = 1.0;
            video_labels[c as usize] = 1.0;
        }
    }

    Ok(RasterTargets {
        fps,
        duration_s: ann.duration_s,
        boundary_01,
        offsets_s,
        frame_labels,
        scene_labels,
        scene_samples,
        video_labels,
        dropped_boundaries: dropped,
    })
}
