//! Seeded synthetic corpora for testing metrics, decoders and the model.
//!
//! Randomness comes from ChaCha8 seeded with `SynthConfig::seed`. Stream 0
//! draws corpus-wide quantities (class popularity ranks, feature
//! signatures); video `i` draws its annotation and shot cuts from stream
//! `2i + 1` and its features and frame outputs from stream `2i + 2`, so
//! videos can be generated in parallel and a corpus is a prefix of any
//! larger corpus with the same seed.
//!
//! All times are multiples of 0.01 s.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation_io::{round_time, DatasetSplit, ShotBoundarySet, SplitName};
use crate::decode::{num_samples, sample_time, FrameOutputs};
use crate::error::{Error, Result};
use crate::model::raster::rasterize_targets;
use crate::model::FeatureBundle;
use crate::taxonomy::Taxonomy;
use crate::types::{PredictedScene, PredictedSceneSet, Scene, VideoAnnotation};

/// Number of transition channels at the end of each frame feature row.
pub const TRANSITION_CHANNELS: usize = 2;
/// Smallest gap between perturbed boundaries.
pub const MIN_PERTURBED_GAP_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_videos: usize,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    pub min_scene_s: f64,
    /// Scenes per video are `1 + Poisson(extra_scenes_mean)`, capped.
    pub extra_scenes_mean: f64,
    pub max_scenes: usize,
    /// Log-normal shape of the scene length weights.
    pub scene_len_sigma: f64,
    pub labels_per_scene: f64,
    /// Class popularity follows `rank^-zipf_exponent`.
    pub zipf_exponent: f64,
    /// Extra shot cuts inside a scene, `Poisson(extra_shots_mean)`.
    pub extra_shots_mean: f64,
    pub fps: f64,
    pub frame_dim: usize,
    pub audio_dim: usize,
    pub text_dim: usize,
    pub feature_noise: f64,
    /// Probability that a scene has speech (non-zero text features).
    pub speech_prob: f64,
    /// Gaussian width (s) of the boundary probability bumps in frame outputs.
    pub boundary_blur_s: f64,
    /// Magnitude of half-normal noise on frame output label scores.
    pub label_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            num_videos: 100,
            duration_min_s: 25.0,
            duration_max_s: 60.0,
            min_scene_s: 2.0,
            extra_scenes_mean: 1.8,
            max_scenes: 10,
            scene_len_sigma: 0.75,
            labels_per_scene: 6.0,
            zipf_exponent: 0.8,
            extra_shots_mean: 1.5,
            fps: 2.0,
            frame_dim: 16,
            audio_dim: 8,
            text_dim: 12,
            feature_noise: 0.05,
            speech_prob: 0.3,
            boundary_blur_s: 0.25,
            label_noise: 0.1,
        }
    }
}

impl SynthConfig {
    /// Configuration whose frame outputs decode back to the ground truth.
    pub fn noiseless() -> Self {
        SynthConfig {
            feature_noise: 0.0,
            boundary_blur_s: 0.0,
            label_noise: 0.0,
            ..SynthConfig::default()
        }
    }

    pub fn check(&self, num_classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let non_neg = [
            self.extra_scenes_mean,
            self.scene_len_sigma,
            self.zipf_exponent,
            self.extra_shots_mean,
            self.feature_noise,
            self.boundary_blur_s,
            self.label_noise,
        ];
        if non_neg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("rates, exponents and noise levels must be finite and non-negative".into());
        }
        if !(self.duration_min_s > 0.0
            && self.duration_min_s <= self.duration_max_s
            && self.duration_max_s.is_finite())
        {
            return bad(format!(
                "duration range [{}, {}] is not a positive interval",
                self.duration_min_s, self.duration_max_s
            ));
        }
        if !(self.min_scene_s > 0.0) || self.max_scenes == 0 {
            return bad("min_scene_s and max_scenes must be positive".into());
        }
        if self.min_scene_s * self.max_scenes as f64 > self.duration_min_s {
            return bad(format!(
                "{} scenes of at least {} s do not fit in {} s",
                self.max_scenes, self.min_scene_s, self.duration_min_s
            ));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) || self.min_scene_s * self.fps < 2.0 {
            return bad(format!(
                "fps {} must give at least two samples per scene",
                self.fps
            ));
        }
        if !(self.labels_per_scene >= 1.0 && self.labels_per_scene <= num_classes as f64) {
            return bad(format!(
                "labels_per_scene {} must lie in [1, {num_classes}]",
                self.labels_per_scene
            ));
        }
        if !(0.0..=1.0).contains(&self.speech_prob) {
            return bad(format!(
                "speech_prob {} is not a probability",
                self.speech_prob
            ));
        }
        if self.frame_dim <= TRANSITION_CHANNELS || self.audio_dim == 0 || self.text_dim == 0 {
            return bad(format!(
                "feature widths must be positive with frame_dim > {TRANSITION_CHANNELS}"
            ));
        }
        Ok(())
    }
}

/// Per-class inclusion probabilities `min(1, λ·w_c)` summing to `mean`,
/// with Zipf weights `w_c = rank_c^-s`.
pub fn inclusion_probabilities(ranks: &[usize], zipf_exponent: f64, mean: f64) -> Vec<f64> {
    let w: Vec<f64> = ranks
        .iter()
        .map(|&r| ((r + 1) as f64).powf(-zipf_exponent))
        .collect();
    let total = |lambda: f64| w.iter().map(|&x| (lambda * x).min(1.0)).sum::<f64>();
    let wmin = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, 1.0 / wmin);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    w.iter().map(|&x| (lambda * x).min(1.0)).collect()
}

/// Systematic probability-proportional sampling: a random class order, one
/// uniform offset, and every class whose cumulative span contains
/// `u + j` is picked. Class `c` is included with probability `pi[c]` and
/// the set size is `floor` or `ceil` of `Σ pi`.
fn systematic_sample(pi: &[f64], rng: &mut ChaCha8Rng) -> BTreeSet<u32> {
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.shuffle(rng);
    let u: f64 = rng.random();
    let mut picked = BTreeSet::new();
    let mut acc = 0.0;
    for c in order {
        let next = acc + pi[c];
        // The next grid point u + j at or after acc.
        let j = (acc - u).ceil();
        if u + j < next {
            picked.insert(c as u32);
        }
        acc = next;
    }
    picked
}

struct Globals {
    pi: Vec<f64>,
    frame_sig: Array2<f64>,
    audio_sig: Array2<f64>,
    text_sig: Array2<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn popularity(cfg: &SynthConfig, num_classes: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..num_classes).collect();
    ranks.shuffle(rng);
    inclusion_probabilities(&ranks, cfg.zipf_exponent, cfg.labels_per_scene)
}

/// Probability that a scene carries each class, before the rule that
/// rejects empty sets and repeats of the previous scene's set.
pub fn label_marginals(cfg: &SynthConfig, num_classes: usize) -> Vec<f64> {
    popularity(cfg, num_classes, &mut stream(cfg.seed, 0))
}

fn globals(cfg: &SynthConfig, num_classes: usize) -> Globals {
    let mut rng = stream(cfg.seed, 0);
    let pi = popularity(cfg, num_classes, &mut rng);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut sig =
        |cols: usize| Array2::from_shape_simple_fn((num_classes, cols), || normal.sample(&mut rng));
    let frame_sig = sig(cfg.frame_dim - TRANSITION_CHANNELS);
    let audio_sig = sig(cfg.audio_dim);
    let text_sig = sig(cfg.text_dim);
    Globals {
        pi,
        frame_sig,
        audio_sig,
        text_sig,
    }
}

pub fn video_id(i: usize) -> String {
    format!("syn{i:05}")
}

fn centis(t: f64) -> i64 {
    (t * 100.0).round() as i64
}

fn from_centis(c: i64) -> f64 {
    c as f64 / 100.0
}

fn gen_annotation(i: usize, cfg: &SynthConfig, g: &Globals) -> (VideoAnnotation, ShotBoundarySet) {
    let mut rng = stream(cfg.seed, 2 * i as u64 + 1);
    let dur_c = rng.random_range(centis(cfg.duration_min_s)..=centis(cfg.duration_max_s));
    let min_c = centis(cfg.min_scene_s);

    let extra = if cfg.extra_scenes_mean > 0.0 {
        Poisson::new(cfg.extra_scenes_mean)
            .expect("positive rate")
            .sample(&mut rng) as usize
    } else {
        0
    };
    let k = (1 + extra).min(cfg.max_scenes);

    let spread = cfg.scene_len_sigma;
    let lognormal = LogNormal::new(0.0, spread.max(1e-12)).expect("valid shape");
    let weights: Vec<f64> = (0..k)
        .map(|_| loop {
            let w = lognormal.sample(&mut rng);
            if w.ln().abs() <= 3.0 * spread {
                break w;
            }
        })
        .collect();
    let wsum: f64 = weights.iter().sum();
    let free = dur_c - k as i64 * min_c;
    let mut edges = vec![0i64];
    let mut used = 0;
    for w in &weights[..k - 1] {
        let share = (free as f64 * w / wsum).floor() as i64;
        used += share;
        edges.push(edges.last().unwrap() + min_c + share);
    }
    debug_assert!(used <= free);
    edges.push(dur_c);

    let mut scenes: Vec<Scene> = Vec::with_capacity(k);
    for w in edges.windows(2) {
        let labels = loop {
            let l = systematic_sample(&g.pi, &mut rng);
            let repeat = scenes.last().is_some_and(|prev| prev.labels == l);
            if !l.is_empty() && !repeat {
                break l;
            }
        };
        scenes.push(Scene {
            start_s: from_centis(w[0]),
            end_s: from_centis(w[1]),
            labels,
        });
    }

    let margin = 50;
    let mut cuts: Vec<i64> = edges[1..k].to_vec();
    for w in edges.windows(2) {
        let n = if cfg.extra_shots_mean > 0.0 {
            Poisson::new(cfg.extra_shots_mean)
                .expect("positive rate")
                .sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..n {
            if w[1] - w[0] <= 2 * margin {
                break;
            }
            let c = rng.random_range(w[0] + margin..w[1] - margin);
            if cuts.iter().all(|&x| (x - c).abs() >= margin) {
                cuts.push(c);
            }
        }
    }
    cuts.sort_unstable();

    let id = video_id(i);
    let ann = VideoAnnotation {
        video_id: id.clone(),
        duration_s: from_centis(dur_c),
        scenes,
    };
    let shots = ShotBoundarySet {
        video_id: id,
        boundaries: cuts.into_iter().map(from_centis).collect(),
    };
    (ann, shots)
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Frame features: window-averaged class signatures of the scenes under
/// each sample, then two transition channels (a centred "flash" and a
/// trailing "onset", each one sample long) at every scene cut.
fn gen_features(
    ann: &VideoAnnotation,
    cfg: &SynthConfig,
    g: &Globals,
    rng: &mut ChaCha8Rng,
) -> FeatureBundle {
    let fps = cfg.fps;
    let s = 1.0 / fps;
    let n = num_samples(ann.duration_s, fps);
    let sig_dim = cfg.frame_dim - TRANSITION_CHANNELS;
    let scene_rows = |sig: &Array2<f64>, scene: &Scene| -> Array1<f64> {
        let mut row = Array1::zeros(sig.ncols());
        for &c in &scene.labels {
            row += &sig.row(c as usize);
        }
        row / (scene.labels.len() as f64).sqrt()
    };
    let speech: Vec<bool> = ann
        .scenes
        .iter()
        .map(|_| rng.random::<f64>() < cfg.speech_prob)
        .collect();
    let cuts = ann.internal_boundaries();

    let mut frame = Array2::zeros((n, cfg.frame_dim));
    let mut audio = Array2::zeros((n, cfg.audio_dim));
    let mut text = Array2::zeros((n, cfg.text_dim));
    for k in 0..n {
        let t = sample_time(k, fps);
        let win = ((t - 0.5 * s).max(0.0), (t + 0.5 * s).min(ann.duration_s));
        let len = win.1 - win.0;
        for (j, scene) in ann.scenes.iter().enumerate() {
            let frac = overlap(win, (scene.start_s, scene.end_s)) / len;
            if frac == 0.0 {
                continue;
            }
            frame
                .slice_mut(ndarray::s![k, ..sig_dim])
                .scaled_add(frac, &scene_rows(&g.frame_sig, scene));
            audio
                .row_mut(k)
                .scaled_add(frac, &scene_rows(&g.audio_sig, scene));
            if speech[j] {
                text.row_mut(k)
                    .scaled_add(frac, &scene_rows(&g.text_sig, scene));
            }
        }
        let full = (t - 0.5 * s, t + 0.5 * s);
        for &b in &cuts {
            frame[[k, sig_dim]] += overlap(full, (b - 0.5 * s, b + 0.5 * s)) / s;
            frame[[k, sig_dim + 1]] += overlap(full, (b, b + s)) / s;
        }
    }
    if cfg.feature_noise > 0.0 {
        let noise = Normal::new(0.0, cfg.feature_noise).expect("valid sigma");
        frame.mapv_inplace(|v| v + noise.sample(rng));
        audio.mapv_inplace(|v| v + noise.sample(rng));
        for mut row in text.rows_mut() {
            if row.iter().any(|&v| v != 0.0) {
                row.mapv_inplace(|v| v + noise.sample(rng));
            }
        }
    }
    // Per-video mean removal, as feature extractors commonly normalize.
    for m in [&mut frame, &mut audio] {
        let mean = m.mean_axis(ndarray::Axis(0)).expect("non-empty");
        *m -= &mean;
    }
    FeatureBundle::new(frame, audio, text, fps, ann.duration_s).expect("generated shapes agree")
}

/// Frame outputs derived from the ground truth: Gaussian bumps around each
/// boundary (a one-hot peak when the blur is 0), offsets to the nearest
/// boundary clamped to half a sample, and label indicators perturbed by
/// half-normal noise towards the middle.
fn gen_outputs(
    ann: &VideoAnnotation,
    cfg: &SynthConfig,
    num_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FrameOutputs> {
    let fps = cfg.fps;
    let raster = rasterize_targets(ann, fps, num_classes)?;
    let n = raster.num_samples();
    let half = 0.5 / fps;
    let cuts = ann.internal_boundaries();

    let mut prob = Array1::zeros(n);
    let mut offsets = Array1::zeros(n);
    for k in 0..n {
        let t = sample_time(k, fps);
        let Some(&b) = cuts
            .iter()
            .min_by(|a, b| (*a - t).abs().total_cmp(&(*b - t).abs()))
        else {
            continue;
        };
        offsets[k] = if raster.boundary_01[k] > 0.5 {
            raster.offsets_s[k]
        } else {
            (b - t).clamp(-half, half)
        };
        prob[k] = if cfg.boundary_blur_s > 0.0 {
            let z = (t - b) / cfg.boundary_blur_s;
            (-0.5 * z * z).exp()
        } else {
            raster.boundary_01[k]
        };
    }

    let mut scores = raster.frame_labels;
    if cfg.label_noise > 0.0 {
        let noise = Normal::new(0.0, cfg.label_noise).expect("valid sigma");
        scores.mapv_inplace(|y| {
            let e = noise.sample(rng).abs().min(0.49);
            if y > 0.5 {
                1.0 - e
            } else {
                e
            }
        });
    }
    FrameOutputs::new(fps, ann.duration_s, scores, prob, offsets)
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub split: DatasetSplit,
    pub shots: Vec<ShotBoundarySet>,
    pub features: Vec<FeatureBundle>,
    pub outputs: Vec<FrameOutputs>,
}

/// Annotations and shot cuts only.
pub fn gen_annotations(
    cfg: &SynthConfig,
    tax: &Taxonomy,
) -> Result<(DatasetSplit, Vec<ShotBoundarySet>)> {
    cfg.check(tax.num_classes())?;
    let g = globals(cfg, tax.num_classes());
    let (annotations, shots) = (0..cfg.num_videos)
        .into_par_iter()
        .map(|i| gen_annotation(i, cfg, &g))
        .unzip();
    Ok((
        DatasetSplit {
            name: SplitName::Test,
            annotations,
        },
        shots,
    ))
}

pub fn gen_corpus(cfg: &SynthConfig, tax: &Taxonomy) -> Result<SyntheticCorpus> {
    cfg.check(tax.num_classes())?;
    let g = globals(cfg, tax.num_classes());
    let videos = (0..cfg.num_videos)
        .into_par_iter()
        .map(|i| {
            let (ann, shots) = gen_annotation(i, cfg, &g);
            let mut rng = stream(cfg.seed, 2 * i as u64 + 2);
            let features = gen_features(&ann, cfg, &g, &mut rng);
            let outputs = gen_outputs(&ann, cfg, tax.num_classes(), &mut rng)?;
            Ok((ann, shots, features, outputs))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut corpus = SyntheticCorpus {
        split: DatasetSplit {
            name: SplitName::Test,
            annotations: Vec::with_capacity(videos.len()),
        },
        shots: Vec::with_capacity(videos.len()),
        features: Vec::with_capacity(videos.len()),
        outputs: Vec::with_capacity(videos.len()),
    };
    for (a, s, f, o) in videos {
        corpus.split.annotations.push(a);
        corpus.shots.push(s);
        corpus.features.push(f);
        corpus.outputs.push(o);
    }
    Ok(corpus)
}

/// Moves every interior boundary by `jitter(j)`, limited so that each
/// boundary stays within half of the slack to its neighbours (keeping
/// order and a [`MIN_PERTURBED_GAP_S`] gap). Labels are copied at score 1.
fn move_boundaries(
    ann: &VideoAnnotation,
    mut jitter: impl FnMut(usize) -> f64,
) -> PredictedSceneSet {
    let mut edges = vec![0.0];
    edges.extend(ann.internal_boundaries());
    edges.push(ann.duration_s);
    let mut moved = edges.clone();
    for j in 1..edges.len() - 1 {
        let back = ((edges[j] - edges[j - 1] - MIN_PERTURBED_GAP_S) / 2.0).max(0.0);
        let fwd = ((edges[j + 1] - edges[j] - MIN_PERTURBED_GAP_S) / 2.0).max(0.0);
        moved[j] = round_time(edges[j] + jitter(j).clamp(-back, fwd));
    }
    let segments = ann
        .scenes
        .iter()
        .enumerate()
        .map(|(j, s)| PredictedScene {
            start_s: moved[j],
            end_s: moved[j + 1],
            scores: s.labels.iter().map(|&c| (c, 1.0)).collect(),
        })
        .collect();
    PredictedSceneSet {
        video_id: ann.video_id.clone(),
        segments,
    }
}

/// GT-derived predictions whose boundaries carry Gaussian jitter of width
/// `sigma_s`, clipped at `±3σ`. Video `i` uses stream `i + 1` of `seed`.
pub fn perturb_boundaries(
    split: &DatasetSplit,
    sigma_s: f64,
    seed: u64,
) -> Result<Vec<PredictedSceneSet>> {
    if !(sigma_s >= 0.0 && sigma_s.is_finite()) {
        return Err(Error::Config(format!(
            "sigma must be non-negative, got {sigma_s}"
        )));
    }
    Ok(split
        .annotations
        .iter()
        .enumerate()
        .map(|(i, ann)| {
            if sigma_s == 0.0 {
                return move_boundaries(ann, |_| 0.0);
            }
            let mut rng = stream(seed, i as u64 + 1);
            let normal = Normal::new(0.0, sigma_s).expect("valid sigma");
            move_boundaries(ann, |_| {
                normal.sample(&mut rng).clamp(-3.0 * sigma_s, 3.0 * sigma_s)
            })
        })
        .collect())
}

/// GT-derived predictions with every boundary moved by the same `delta_s`
/// (subject to the same neighbour limits as [`perturb_boundaries`]).
pub fn shift_boundaries(split: &DatasetSplit, delta_s: f64) -> Vec<PredictedSceneSet> {
    split
        .annotations
        .iter()
        .map(|ann| move_boundaries(ann, |_| delta_s))
        .collect()
}
