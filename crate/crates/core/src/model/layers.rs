//! Forward building blocks. Row-vector convention throughout: a `T × Din`
//! input times a `Din × Dout` weight plus a `1 × Dout` bias.

use ndarray::{concatenate, s, Array1, Array2, Axis};

use super::weights::ModelWeights;
use super::{sigmoid, FusionVariant, ModelConfig};
use crate::error::{Error, Result};

pub fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != w.nrows() || b.dim() != (1, w.ncols()) {
        return Err(Error::shape(
            "linear layer",
            format!("input width {} and bias (1, {})", w.nrows(), w.ncols()),
            format!("input width {} and bias {:?}", x.ncols(), b.dim()),
        ));
    }
    Ok(x.dot(w) + b.row(0))
}

fn apply(x: &Array2<f64>, prefix: &str, w: &ModelWeights) -> Result<Array2<f64>> {
    linear(
        x,
        w.get(&format!("{prefix}.w"))?,
        w.get(&format!("{prefix}.b"))?,
    )
}

fn relu(x: Array2<f64>) -> Array2<f64> {
    x.mapv_into(|v| v.max(0.0))
}

/// Channel gates of the squeeze-and-excitation block for a `T × D` input.
pub fn se_gates(x: &Array2<f64>, w: &ModelWeights) -> Result<Array1<f64>> {
    let pooled = x
        .mean_axis(Axis(0))
        .ok_or_else(|| Error::Config("empty sequence".into()))?
        .insert_axis(Axis(0));
    let hidden = relu(apply(&pooled, "se.reduce", w)?);
    let gates = apply(&hidden, "se.expand", w)?;
    Ok(gates.row(0).mapv(sigmoid))
}

/// Concatenates frame and audio features and rescales each channel by its
/// SE gate.
pub fn se_fusion(
    frame: &Array2<f64>,
    audio: &Array2<f64>,
    w: &ModelWeights,
) -> Result<Array2<f64>> {
    if frame.nrows() != audio.nrows() {
        return Err(Error::shape(
            "SE fusion",
            format!("{} audio rows", frame.nrows()),
            audio.nrows(),
        ));
    }
    let x = concatenate![Axis(1), *frame, *audio];
    let gates = se_gates(&x, w)?;
    Ok(x * &gates)
}

/// Standard sinusoidal positional encoding, `T × dim`.
pub fn sinusoidal_pe(t: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, dim), |(pos, i)| {
        let freq = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = pos as f64 / freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone)]
pub struct Attention {
    /// `T × attn_dim` after the output projection.
    pub output: Array2<f64>,
    /// One `Tq × Tk` row-stochastic matrix per head.
    pub weights: Vec<Array2<f64>>,
}

fn softmax_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    m
}

/// Multi-head scaled dot-product attention. Positional encodings are added
/// to the query and key inputs only, so values carry content alone.
pub fn multi_head_attention(
    queries: &Array2<f64>,
    keys_values: &Array2<f64>,
    prefix: &str,
    heads: usize,
    w: &ModelWeights,
) -> Result<Attention> {
    let q_in = queries + &sinusoidal_pe(queries.nrows(), queries.ncols());
    let k_in = keys_values + &sinusoidal_pe(keys_values.nrows(), keys_values.ncols());
    let q = apply(&q_in, &format!("{prefix}.q"), w)?;
    let k = apply(&k_in, &format!("{prefix}.k"), w)?;
    let v = apply(keys_values, &format!("{prefix}.v"), w)?;
    let dim = q.ncols();
    if heads == 0 || dim % heads != 0 {
        return Err(Error::Config(format!(
            "attention width {dim} not divisible into {heads} heads"
        )));
    }
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut concat = Array2::zeros((q.nrows(), dim));
    let mut maps = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * hd..(h + 1) * hd];
        let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        let a = softmax_rows(scores);
        concat.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
        maps.push(a);
    }
    Ok(Attention {
        output: apply(&concat, &format!("{prefix}.o"), w)?,
        weights: maps,
    })
}

/// Salient stream attends to text; with the dual variant text also attends
/// to the salient stream and the two results are summed. The attention
/// result is appended to the salient channels.
pub fn cross_attention_fusion(
    salient: &Array2<f64>,
    text: &Array2<f64>,
    cfg: &ModelConfig,
    w: &ModelWeights,
) -> Result<Array2<f64>> {
    if salient.nrows() != text.nrows() {
        return Err(Error::shape(
            "cross attention",
            format!("{} text rows", salient.nrows()),
            text.nrows(),
        ));
    }
    let mut fused = multi_head_attention(salient, text, "xattn", cfg.attn_heads, w)?.output;
    if cfg.fusion == FusionVariant::Dual {
        fused += &multi_head_attention(text, salient, "xattn_rev", cfg.attn_heads, w)?.output;
    }
    Ok(concatenate![Axis(1), *salient, fused])
}

/// Kernel-3 dilated convolution with zero padding; weight rows hold the
/// taps for `t - d`, `t`, `t + d` in that order.
fn dilated_conv(
    x: &Array2<f64>,
    wt: &Array2<f64>,
    b: &Array2<f64>,
    d: usize,
) -> Result<Array2<f64>> {
    let c = x.ncols();
    if wt.nrows() != 3 * c {
        return Err(Error::shape("dilated conv", 3 * c, wt.nrows()));
    }
    let tap = |j: usize| wt.slice(s![j * c..(j + 1) * c, ..]);
    let mut out = linear(x, &tap(1).to_owned(), b)?;
    let t = x.nrows();
    if d < t {
        let past = x.slice(s![..t - d, ..]).dot(&tap(0));
        let future = x.slice(s![d.., ..]).dot(&tap(2));
        out.slice_mut(s![d.., ..]).scaled_add(1.0, &past);
        out.slice_mut(s![..t - d, ..]).scaled_add(1.0, &future);
    }
    Ok(out)
}

fn conv(x: &Array2<f64>, prefix: &str, d: usize, w: &ModelWeights) -> Result<Array2<f64>> {
    dilated_conv(
        x,
        w.get(&format!("{prefix}.w"))?,
        w.get(&format!("{prefix}.b"))?,
        d,
    )
}

/// Multi-stage temporal convolution stack. Every layer is residual,
/// `h + W_out · relu(conv(h))`; first-stage layers sum two convolutions
/// with dilations `2^(l-1)` and `2^(L-l)` before the nonlinearity.
/// Returns the output of every stage.
pub fn mstcn_forward(
    x: &Array2<f64>,
    cfg: &ModelConfig,
    w: &ModelWeights,
) -> Result<Vec<Array2<f64>>> {
    if x.ncols() != cfg.channels {
        return Err(Error::shape(
            "temporal stack input",
            cfg.channels,
            x.ncols(),
        ));
    }
    let mut h = x.clone();
    let mut stages = Vec::with_capacity(cfg.stages);
    for s in 1..=cfg.stages {
        for l in 1..=cfg.layers {
            let base = format!("stage{s}.layer{l}");
            let mut z = conv(&h, &format!("{base}.conv_a"), cfg.dilation(l), w)?;
            if s == 1 {
                z += &conv(&h, &format!("{base}.conv_b"), cfg.dual_dilation(l), w)?;
            }
            h += &apply(&relu(z), &format!("{base}.out"), w)?;
        }
        stages.push(h.clone());
    }
    Ok(stages)
}

/// Exact receptive-field radius of the final stage output: each layer
/// widens it by its largest dilation.
pub fn receptive_radius(cfg: &ModelConfig) -> usize {
    (1..=cfg.stages)
        .map(|s| {
            (1..=cfg.layers)
                .map(|l| {
                    if s == 1 {
                        cfg.dilation(l).max(cfg.dual_dilation(l))
                    } else {
                        cfg.dilation(l)
                    }
                })
                .sum::<usize>()
        })
        .sum()
}

/// `d[k] = h[k] - h[k-1]`, `d[0] = 0`.
pub fn temporal_difference(h: &Array2<f64>) -> Array2<f64> {
    let mut d = Array2::zeros(h.raw_dim());
    let t = h.nrows();
    if t > 1 {
        let diff = &h.slice(s![1.., ..]) - &h.slice(s![..t - 1, ..]);
        d.slice_mut(s![1.., ..]).assign(&diff);
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub label_logits: Array2<f64>,
    pub boundary_logits: Array1<f64>,
    /// Offset head output before `tanh`.
    pub offset_pre: Array1<f64>,
    /// `tanh(offset_pre) · 0.5 / fps`.
    pub offsets_s: Array1<f64>,
}

/// Classification on `h`, boundary and offset regression on `d`, using the
/// heads of stage `stage` (1-based).
pub fn heads_forward(
    h: &Array2<f64>,
    d: &Array2<f64>,
    stage: usize,
    fps: f64,
    w: &ModelWeights,
) -> Result<HeadOutputs> {
    if h.dim() != d.dim() {
        return Err(Error::shape(
            "heads",
            format!("{:?}", h.dim()),
            format!("{:?}", d.dim()),
        ));
    }
    let label_logits = apply(h, &format!("stage{stage}.head.cls"), w)?;
    let boundary_logits = apply(d, &format!("stage{stage}.head.bnd"), w)?
        .column(0)
        .to_owned();
    let offset_pre = apply(d, &format!("stage{stage}.head.off"), w)?
        .column(0)
        .to_owned();
    let half = 0.5 / fps;
    let offsets_s = offset_pre.mapv(|z| z.tanh() * half);
    Ok(HeadOutputs {
        label_logits,
        boundary_logits,
        offset_pre,
        offsets_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::weights::param_shapes;
    use ndarray::array;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            stages: 1,
            layers: 4,
            channels: 8,
            num_classes: 5,
            se_reduction: 4,
            attn_dim: 8,
            attn_heads: 2,
            seed: 3,
            frame_dim: 16,
            audio_dim: 8,
            text_dim: 12,
            fusion: FusionVariant::Single,
            residual_gain: 1.0,
        }
    }

    #[test]
    fn dilations_follow_layer_index() {
        let cfg = small_cfg();
        let main: Vec<usize> = (1..=4).map(|l| cfg.dilation(l)).collect();
        let dual: Vec<usize> = (1..=4).map(|l| cfg.dual_dilation(l)).collect();
        assert_eq!(main, vec![1, 2, 4, 8]);
        assert_eq!(dual, vec![8, 4, 2, 1]);
        assert_eq!(receptive_radius(&cfg), 8 + 4 + 4 + 8);
    }

    #[test]
    fn difference_of_constant_and_step() {
        let h = Array2::from_elem((6, 3), 2.5);
        assert!(temporal_difference(&h).iter().all(|&v| v == 0.0));
        let mut step = Array2::zeros((6, 2));
        step.slice_mut(s![3.., ..]).fill(1.0);
        let d = temporal_difference(&step);
        for k in 0..6 {
            let expect = if k == 3 { 1.0 } else { 0.0 };
            assert!(d.row(k).iter().all(|&v| v == expect));
        }
    }

    #[test]
    fn zero_heads() {
        let cfg = small_cfg();
        let mut w = ModelWeights::init(&cfg).unwrap();
        for (path, r, c, _) in param_shapes(&cfg) {
            if path.contains(".head.") {
                w.set(&path, Array2::zeros((r, c))).unwrap();
            }
        }
        let h = Array2::from_elem((7, 8), 0.3);
        let d = temporal_difference(&h);
        let out = heads_forward(&h, &d, 1, 2.0, &w).unwrap();
        assert_eq!(out.label_logits.dim(), (7, 5));
        assert!(out.label_logits.iter().all(|&v| v == 0.0));
        assert!(out.boundary_logits.iter().all(|&v| sigmoid(v) == 0.5));
        assert!(out.offsets_s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_taps_and_padding() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let wt = array![[10.0], [1.0], [100.0]];
        let y = dilated_conv(&x, &wt, &array![[0.0]], 2).unwrap();
        assert_eq!(
            y.column(0).to_vec(),
            vec![1.0 + 300.0, 2.0 + 400.0, 3.0 + 10.0, 4.0 + 20.0]
        );
        let y = dilated_conv(&x, &wt, &array![[0.5]], 4).unwrap();
        assert_eq!(y.column(0).to_vec(), vec![1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn pe_first_rows() {
        let pe = sinusoidal_pe(2, 4);
        assert_eq!(pe.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[1, 2]] - (0.01f64).sin()).abs() < 1e-15);
    }
}
