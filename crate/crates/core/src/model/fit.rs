//! Fits the three heads of every stage by full-batch gradient descent on a
//! frozen backbone. Inputs are whitened while fitting and the linear map
//! is folded back into the stored weights afterwards.

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::layers::{heads_forward, HeadOutputs};
use super::loss::{loss_asl, loss_boundary_bce, loss_offset_smooth_l1, AslParams};
use super::raster::RasterTargets;
use super::weights::ModelWeights;
use super::{ForwardOutputs, ModelConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    pub lr_cls: f64,
    pub lr_boundary: f64,
    pub lr_offset: f64,
    pub asl: AslParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 300,
            lr_cls: 0.5,
            lr_boundary: 0.5,
            lr_offset: 0.5,
            asl: AslParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HeadFit {
    pub loss_before: f64,
    pub loss_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageFit {
    pub stage: usize,
    pub classification: HeadFit,
    pub boundary: HeadFit,
    pub offset: HeadFit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FitReport {
    pub samples: usize,
    pub positives: usize,
    pub stages: Vec<StageFit>,
}

/// Inputs mapped to zero mean and identity covariance (on the subspace
/// they span), which makes plain gradient descent well conditioned.
struct Whitened {
    x: Array2<f64>,
    mean: Array1<f64>,
    /// `Din × k` whitening map.
    map: Array2<f64>,
}

fn whiten(x: Array2<f64>) -> Whitened {
    let n = x.nrows() as f64;
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / n;
    let dim = cov.nrows();
    let eig = nalgebra::DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]).symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..dim)
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * top.max(1e-300))
        .collect();
    let map = Array2::from_shape_fn((dim, keep.len()), |(r, c)| {
        let i = keep[c];
        eig.eigenvectors[(r, i)] / eig.eigenvalues[i].sqrt()
    });
    Whitened {
        x: centered.dot(&map),
        mean,
        map,
    }
}

impl Whitened {
    /// Maps weights fitted on whitened inputs back to raw inputs.
    fn fold(&self, w: &Array2<f64>, b: &Array1<f64>) -> (Array2<f64>, Array2<f64>) {
        let raw_w = self.map.dot(w);
        let raw_b = b - &self.mean.dot(&raw_w);
        (raw_w, raw_b.insert_axis(Axis(0)))
    }
}

/// Plain gradient descent on `x·w + b` given a closure that returns the
/// loss and its gradient w.r.t. the linear outputs.
fn descend(
    x: &Array2<f64>,
    outputs: usize,
    iterations: usize,
    lr: f64,
    loss: impl Fn(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
) -> Result<(Array2<f64>, Array1<f64>, HeadFit)> {
    let mut w = Array2::zeros((x.ncols(), outputs));
    let mut b = Array1::zeros(outputs);
    let mut fit = HeadFit::default();
    for it in 0..=iterations {
        let z = x.dot(&w) + &b;
        let (value, g) = loss(&z)?;
        if it == 0 {
            fit.loss_before = value;
        }
        fit.loss_after = value;
        if it == iterations {
            break;
        }
        w.scaled_add(-lr, &x.t().dot(&g));
        b.scaled_add(-lr, &g.sum_axis(Axis(0)));
    }
    Ok((w, b, fit))
}

/// Fits classification, boundary and offset heads of every stage on the
/// given forward passes and targets; backbone weights are untouched.
/// Classification uses frame-level ASL, boundaries use BCE with positives weighted
/// by the square root of the negative/positive ratio, offsets use smooth-L1 measured in half-sample
/// units.
pub fn fit_heads(
    data: &[(ForwardOutputs, RasterTargets)],
    cfg: &ModelConfig,
    w: &mut ModelWeights,
    fit: &FitConfig,
) -> Result<FitReport> {
    if data.is_empty() {
        return Err(Error::Config("no training videos".into()));
    }
    let fps = data[0].1.fps;
    if data.iter().any(|(_, t)| t.fps != fps) {
        return Err(Error::Config(
            "all videos must share one sampling rate".into(),
        ));
    }
    let half = 0.5 / fps;
    let c = cfg.num_classes;

    let labels = concatenate(
        Axis(0),
        &data
            .iter()
            .map(|(_, t)| t.frame_labels.view())
            .collect::<Vec<_>>(),
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let bnd = concatenate(
        Axis(0),
        &data
            .iter()
            .map(|(_, t)| t.boundary_01.view())
            .collect::<Vec<_>>(),
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let offs = concatenate(
        Axis(0),
        &data
            .iter()
            .map(|(_, t)| t.offsets_s.view())
            .collect::<Vec<_>>(),
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let positives: Vec<usize> = (0..bnd.len()).filter(|&k| bnd[k] > 0.5).collect();
    let n = bnd.len();
    let pos_weight = if positives.is_empty() {
        None
    } else {
        Some(((n - positives.len()) as f64 / positives.len() as f64).sqrt())
    };

    let mut report = FitReport {
        samples: n,
        positives: positives.len(),
        stages: Vec::new(),
    };
    for s in 0..cfg.stages {
        let stack = |pick: fn(&ForwardOutputs, usize) -> &Array2<f64>| {
            let views: Vec<_> = data.iter().map(|(f, _)| pick(f, s).view()).collect();
            concatenate(Axis(0), &views).map_err(|e| Error::Config(e.to_string()))
        };
        let h = whiten(stack(|f, s| &f.hidden[s])?);
        let d = whiten(stack(|f, s| &f.diffs[s])?);
        let stage = s + 1;
        let mut sf = StageFit {
            stage,
            ..Default::default()
        };

        // Class-summed, sample-averaged ASL: the mean over all entries times C.
        let (cw, cb, cls_fit) = descend(&h.x, c, fit.iterations, fit.lr_cls, |z| {
            let l = loss_asl(z.view(), labels.view(), &fit.asl)?;
            Ok((l.value * c as f64, l.grad * c as f64))
        })?;
        sf.classification = cls_fit;
        let (rw, rb) = h.fold(&cw, &cb);
        w.set(&format!("stage{stage}.head.cls.w"), rw)?;
        w.set(&format!("stage{stage}.head.cls.b"), rb)?;

        let target = bnd.view().insert_axis(Axis(1));
        let (bw, bb, bnd_fit) = descend(&d.x, 1, fit.iterations, fit.lr_boundary, |z| {
            let l = loss_boundary_bce(z.view(), target, pos_weight)?;
            Ok((l.value, l.grad))
        })?;
        sf.boundary = bnd_fit;
        let (rw, rb) = d.fold(&bw, &bb);
        w.set(&format!("stage{stage}.head.bnd.w"), rw)?;
        w.set(&format!("stage{stage}.head.bnd.b"), rb)?;

        if !positives.is_empty() {
            // Boundary rows are the extreme rows of `d`, so they get their
            // own whitening.
            let dp = whiten(stack(|f, s| &f.diffs[s])?.select(Axis(0), &positives));
            let target: Array1<f64> = positives.iter().map(|&k| offs[k] / half).collect();
            let (ow, ob, off_fit) = descend(&dp.x, 1, fit.iterations, fit.lr_offset, |z| {
                let t = z.column(0).mapv(f64::tanh);
                let l = loss_offset_smooth_l1(t.view(), target.view())?;
                let g = &l.grad * &t.mapv(|v| 1.0 - v * v);
                Ok((l.value, g.insert_axis(Axis(1))))
            })?;
            sf.offset = off_fit;
            let (rw, rb) = dp.fold(&ow, &ob);
            w.set(&format!("stage{stage}.head.off.w"), rw)?;
            w.set(&format!("stage{stage}.head.off.b"), rb)?;
        }
        report.stages.push(sf);
    }
    Ok(report)
}

/// Recomputes head outputs for already computed backbone features, e.g.
/// after [`fit_heads`] changed the heads.
pub fn refresh_heads(fwd: &mut ForwardOutputs, fps: f64, w: &ModelWeights) -> Result<()> {
    let heads: Vec<HeadOutputs> = fwd
        .hidden
        .iter()
        .zip(&fwd.diffs)
        .enumerate()
        .map(|(s, (h, d))| heads_forward(h, d, s + 1, fps, w))
        .collect::<Result<_>>()?;
    fwd.heads = heads;
    Ok(())
}

/// Forward pass over every video, optional head fitting against the
/// matching annotations, then frame outputs from the final stage.
pub fn fit_and_predict(
    bundles: &[super::FeatureBundle],
    annotations: Option<&[crate::types::VideoAnnotation]>,
    cfg: &ModelConfig,
    w: &mut ModelWeights,
    fit: &FitConfig,
) -> Result<(Vec<crate::decode::FrameOutputs>, Option<FitReport>)> {
    use rayon::prelude::*;

    w.check(cfg)?;
    let mut passes: Vec<ForwardOutputs> = bundles
        .par_iter()
        .map(|b| super::forward(b, cfg, w))
        .collect::<Result<_>>()?;
    let report = match annotations {
        Some(anns) => {
            if anns.len() != bundles.len() {
                return Err(Error::Config(format!(
                    "{} annotations for {} feature bundles",
                    anns.len(),
                    bundles.len()
                )));
            }
            let targets = anns
                .iter()
                .zip(bundles)
                .map(|(a, b)| super::raster::rasterize_targets(a, b.fps, cfg.num_classes))
                .collect::<Result<Vec<_>>>()?;
            let data: Vec<(ForwardOutputs, RasterTargets)> =
                passes.into_iter().zip(targets).collect();
            let report = fit_heads(&data, cfg, w, fit)?;
            passes = data.into_iter().map(|(f, _)| f).collect();
            for (p, b) in passes.iter_mut().zip(bundles) {
                refresh_heads(p, b.fps, w)?;
            }
            Some(report)
        }
        None => None,
    };
    let outputs = passes
        .iter()
        .zip(bundles)
        .map(|(p, b)| {
            super::to_frame_outputs(p.heads.last().expect("one stage"), b.fps, b.duration_s)
        })
        .collect::<Result<_>>()?;
    Ok((outputs, report))
}
