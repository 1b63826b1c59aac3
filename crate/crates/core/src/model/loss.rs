//! Training losses with analytic gradients with respect to head outputs.
//!
//! All element-wise losses are means over their inputs; an empty input has
//! loss 0 and an empty gradient.

use ndarray::{Array, Array1, Array2, ArrayView, ArrayView1, Dimension, Zip};
use serde::{Deserialize, Serialize};

use super::layers::HeadOutputs;
use super::raster::RasterTargets;
use super::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Loss<G = Array1<f64>> {
    pub value: f64,
    pub grad: G,
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn check_same<D: Dimension>(
    a: &ArrayView<'_, f64, D>,
    b: &ArrayView<'_, f64, D>,
    what: &str,
) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            what.to_string(),
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(())
}

fn check_binary<D: Dimension>(y: &ArrayView<'_, f64, D>) -> Result<()> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Config("targets must be 0 or 1".into()));
    }
    Ok(())
}

/// Mean of a per-element `(loss, dloss/dx)` over paired inputs.
fn elementwise<D: Dimension>(
    x: &ArrayView<'_, f64, D>,
    y: &ArrayView<'_, f64, D>,
    f: impl Fn(f64, f64) -> (f64, f64),
) -> Loss<Array<f64, D>> {
    let n = x.len();
    let pairs = Zip::from(x).and(y).map_collect(|&x, &y| f(x, y));
    if n == 0 {
        return Loss {
            value: 0.0,
            grad: pairs.mapv(|_| 0.0),
        };
    }
    let total: f64 = pairs.iter().map(|p| p.0).sum();
    Loss {
        value: total / n as f64,
        grad: pairs.mapv(|p| p.1 / n as f64),
    }
}

/// Binary cross-entropy on logits, optionally up-weighting positives.
pub fn loss_boundary_bce<D: Dimension>(
    logits: ArrayView<'_, f64, D>,
    targets: ArrayView<'_, f64, D>,
    pos_weight: Option<f64>,
) -> Result<Loss<Array<f64, D>>> {
    check_same(&logits, &targets, "BCE")?;
    check_binary(&targets)?;
    let w = pos_weight.unwrap_or(1.0);
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::Config(format!(
            "pos_weight must be positive, got {w}"
        )));
    }
    Ok(elementwise(&logits, &targets, |x, y| {
        let p = sigmoid(x);
        if y == 1.0 {
            (w * softplus(-x), -w * (1.0 - p))
        } else {
            (softplus(x), p)
        }
    }))
}

fn smooth_l1(x: f64) -> (f64, f64) {
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// Smooth-L1 between predicted and target offsets, gradient w.r.t. `pred`.
pub fn loss_offset_smooth_l1(
    pred: ArrayView1<'_, f64>,
    target: ArrayView1<'_, f64>,
) -> Result<Loss> {
    check_same(&pred, &target, "smooth L1")?;
    Ok(elementwise(&pred, &target, |p, t| smooth_l1(p - t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AslParams {
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    /// Probability shift applied to negatives.
    pub clip: f64,
}

impl Default for AslParams {
    fn default() -> Self {
        AslParams {
            gamma_pos: 0.0,
            gamma_neg: 4.0,
            clip: 0.05,
        }
    }
}

impl AslParams {
    pub const BCE: AslParams = AslParams {
        gamma_pos: 0.0,
        gamma_neg: 0.0,
        clip: 0.0,
    };
}

/// `x^g`, through `powi` when `g` is a small integer (the usual case).
fn pow(x: f64, g: f64) -> f64 {
    if g == g.trunc() && g.abs() <= 16.0 {
        x.powi(g as i32)
    } else {
        x.powf(g)
    }
}

fn asl_element(x: f64, y: f64, a: &AslParams) -> (f64, f64) {
    let p = sigmoid(x);
    if y == 1.0 {
        let q = 1.0 - p;
        let focus = pow(q, a.gamma_pos);
        let log_p = -softplus(-x);
        (focus * softplus(-x), focus * (a.gamma_pos * p * log_p - q))
    } else {
        let (pm, log_q, ratio) = if a.clip == 0.0 {
            (p, -softplus(x), 1.0)
        } else {
            let pm = (p - a.clip).max(0.0);
            if pm == 0.0 {
                return (0.0, 0.0);
            }
            (pm, (-pm).ln_1p(), (1.0 - p) / (1.0 - pm))
        };
        let focus = pow(pm, a.gamma_neg);
        let mut g = p * focus * ratio;
        if a.gamma_neg != 0.0 {
            g -= p * (1.0 - p) * a.gamma_neg * pow(pm, a.gamma_neg - 1.0) * log_q;
        }
        (focus * -log_q, g)
    }
}

/// Asymmetric loss: `-(1-p)^γ+ · log p` on positives and
/// `-p_m^γ- · log(1 - p_m)` on negatives, `p_m = max(p - clip, 0)`.
/// With all three parameters zero it is bitwise equal to
/// [`loss_boundary_bce`] without a positive weight.
pub fn loss_asl<D: Dimension>(
    logits: ArrayView<'_, f64, D>,
    targets: ArrayView<'_, f64, D>,
    params: &AslParams,
) -> Result<Loss<Array<f64, D>>> {
    check_same(&logits, &targets, "ASL")?;
    check_binary(&targets)?;
    if params.gamma_pos < 0.0 || params.gamma_neg < 0.0 || !(0.0..1.0).contains(&params.clip) {
        return Err(Error::Config(format!("invalid ASL parameters {params:?}")));
    }
    Ok(elementwise(&logits, &targets, |x, y| {
        asl_element(x, y, params)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub frame: f64,
    pub scene: f64,
    pub video: f64,
    pub boundary: f64,
    pub offset: f64,
    pub pos_weight: Option<f64>,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            frame: 1.0,
            scene: 1.0,
            video: 1.0,
            boundary: 1.0,
            offset: 1.0,
            pos_weight: None,
        }
    }
}

/// Max over `rows` of each column, with the arg-max row (first on ties).
fn max_pool(logits: &Array2<f64>, rows: std::ops::Range<usize>) -> (Array1<f64>, Vec<usize>) {
    let c = logits.ncols();
    let mut best = Array1::from_elem(c, f64::NEG_INFINITY);
    let mut arg = vec![rows.start; c];
    for k in rows {
        for j in 0..c {
            if logits[[k, j]] > best[j] {
                best[j] = logits[[k, j]];
                arg[j] = k;
            }
        }
    }
    (best, arg)
}

/// Frame-level ASL plus scene- and video-level ASL on max-pooled logits
/// (max-pooling probabilities and logits select the same sample). Pooled
/// gradients flow to the arg-max sample. Scenes without samples are skipped.
pub fn loss_multiscale(
    label_logits: &Array2<f64>,
    targets: &RasterTargets,
    params: &AslParams,
    weights: &LossWeights,
) -> Result<Loss<Array2<f64>>> {
    if label_logits.dim() != targets.frame_labels.dim() {
        return Err(Error::shape(
            "multiscale loss",
            format!("{:?}", targets.frame_labels.dim()),
            format!("{:?}", label_logits.dim()),
        ));
    }
    let frame = loss_asl(label_logits.view(), targets.frame_labels.view(), params)?;
    let mut value = weights.frame * frame.value;
    let mut grad = frame.grad * weights.frame;

    let mut pool_term =
        |ranges: Vec<(std::ops::Range<usize>, Array1<f64>)>, w: f64| -> Result<()> {
            if ranges.is_empty() {
                return Ok(());
            }
            let c = label_logits.ncols();
            let mut pooled = Array2::zeros((ranges.len(), c));
            let mut pooled_targets = Array2::zeros((ranges.len(), c));
            let mut args = Vec::with_capacity(ranges.len());
            for (i, (r, y)) in ranges.into_iter().enumerate() {
                let (m, a) = max_pool(label_logits, r);
                pooled.row_mut(i).assign(&m);
                pooled_targets.row_mut(i).assign(&y);
                args.push(a);
            }
            let l = loss_asl(pooled.view(), pooled_targets.view(), params)?;
            value += w * l.value;
            for (i, a) in args.iter().enumerate() {
                for (j, &k) in a.iter().enumerate() {
                    grad[[k, j]] += w * l.grad[[i, j]];
                }
            }
            Ok(())
        };

    let scenes = targets
        .scene_samples
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(j, r)| (r.clone(), targets.scene_labels.row(j).to_owned()))
        .collect();
    pool_term(scenes, weights.scene)?;
    let n = label_logits.nrows();
    pool_term(vec![(0..n, targets.video_labels.clone())], weights.video)?;
    Ok(Loss { value, grad })
}

/// Gradients of the total loss for one stage's heads.
#[derive(Debug, Clone, PartialEq)]
pub struct StageGrads {
    pub label_logits: Array2<f64>,
    pub boundary_logits: Array1<f64>,
    pub offsets_s: Array1<f64>,
    /// Chained through `tanh · 0.5/fps` to the offset head's pre-activation.
    pub offset_pre: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub value: f64,
    pub stages: Vec<StageGrads>,
}

/// Deep supervision: the three head losses summed over every stage.
pub fn total_loss(
    heads: &[HeadOutputs],
    targets: &RasterTargets,
    params: &AslParams,
    weights: &LossWeights,
) -> Result<TotalLoss> {
    let positives = targets.positives();
    let half = 0.5 / targets.fps;
    let mut value = 0.0;
    let mut stages = Vec::with_capacity(heads.len());
    for h in heads {
        let ms = loss_multiscale(&h.label_logits, targets, params, weights)?;
        let bce = loss_boundary_bce(
            h.boundary_logits.view(),
            targets.boundary_01.view(),
            weights.pos_weight,
        )?;
        let pred: Array1<f64> = positives.iter().map(|&k| h.offsets_s[k]).collect();
        let tgt: Array1<f64> = positives.iter().map(|&k| targets.offsets_s[k]).collect();
        let sl = loss_offset_smooth_l1(pred.view(), tgt.view())?;

        value += ms.value + weights.boundary * bce.value + weights.offset * sl.value;
        let mut g_off = Array1::zeros(h.offsets_s.len());
        for (i, &k) in positives.iter().enumerate() {
            g_off[k] = weights.offset * sl.grad[i];
        }
        let g_pre = Zip::from(&g_off)
            .and(&h.offset_pre)
            .map_collect(|&g, &z| g * half * (1.0 - z.tanh().powi(2)));
        stages.push(StageGrads {
            label_logits: ms.grad,
            boundary_logits: bce.grad * weights.boundary,
            offsets_s: g_off,
            offset_pre: g_pre,
        });
    }
    Ok(TotalLoss { value, stages })
}
