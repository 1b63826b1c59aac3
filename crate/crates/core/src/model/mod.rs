//! Reference forward pass of the multi-modal scene segmentation network:
//! SE fusion of frame and audio features, cross-attention with text,
//! a multi-stage dilated temporal convolution stack, a temporal difference
//! module and three heads (labels, boundaries, offsets). Losses return
//! analytic gradients with respect to head outputs so heads can be fitted
//! without an autodiff framework.

pub mod fit;
pub mod layers;
pub mod loss;
pub mod raster;
pub mod weights;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::decode::{num_samples, FrameOutputs};
use crate::error::{Error, Result};

pub use fit::{fit_and_predict, fit_heads, FitConfig, FitReport};
pub use layers::{
    cross_attention_fusion, heads_forward, mstcn_forward, receptive_radius, se_fusion,
    sinusoidal_pe, temporal_difference, Attention, HeadOutputs,
};
pub use loss::{
    loss_asl, loss_boundary_bce, loss_multiscale, loss_offset_smooth_l1, total_loss, AslParams,
    Loss, LossWeights, StageGrads, TotalLoss,
};
pub use raster::{rasterize_targets, RasterTargets};
pub use weights::ModelWeights;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionVariant {
    /// Salient features attend to text.
    #[default]
    Single,
    /// Additionally text attends to salient features; both results are summed.
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub stages: usize,
    pub layers: usize,
    pub channels: usize,
    pub num_classes: usize,
    pub se_reduction: usize,
    pub attn_dim: usize,
    pub attn_heads: usize,
    pub seed: u64,
    pub frame_dim: usize,
    pub audio_dim: usize,
    pub text_dim: usize,
    pub fusion: FusionVariant,
    /// Scale on the initialization bound of residual output projections.
    pub residual_gain: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            stages: 2,
            layers: 4,
            channels: 32,
            num_classes: 82,
            se_reduction: 4,
            attn_dim: 16,
            attn_heads: 4,
            seed: 0,
            frame_dim: 16,
            audio_dim: 8,
            text_dim: 12,
            fusion: FusionVariant::Single,
            residual_gain: 0.25,
        }
    }
}

impl ModelConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stages == 0 || self.layers == 0 {
            return bad(format!(
                "stages ({}) and layers ({}) must be at least 1",
                self.stages, self.layers
            ));
        }
        if self.layers > 16 {
            return bad(format!("layers = {} gives an absurd dilation", self.layers));
        }
        if [
            self.channels,
            self.num_classes,
            self.frame_dim,
            self.audio_dim,
            self.text_dim,
            self.attn_dim,
        ]
        .contains(&0)
        {
            return bad("all widths must be positive".into());
        }
        if !(self.residual_gain >= 0.0 && self.residual_gain.is_finite()) {
            return bad(format!(
                "residual_gain must be finite and non-negative, got {}",
                self.residual_gain
            ));
        }
        if self.se_reduction == 0 || !self.channels.is_multiple_of(self.se_reduction) {
            return bad(format!(
                "channels {} not divisible by se_reduction {}",
                self.channels, self.se_reduction
            ));
        }
        if self.attn_heads == 0 || !self.attn_dim.is_multiple_of(self.attn_heads) {
            return bad(format!(
                "attn_dim {} not divisible by attn_heads {}",
                self.attn_dim, self.attn_heads
            ));
        }
        Ok(())
    }

    /// Width of the concatenated frame + audio stream.
    pub fn salient_dim(&self) -> usize {
        self.frame_dim + self.audio_dim
    }

    pub fn se_hidden(&self) -> usize {
        self.salient_dim().div_ceil(self.se_reduction)
    }

    /// Main-branch dilation of layer `l` (1-based).
    pub fn dilation(&self, l: usize) -> usize {
        1 << (l - 1)
    }

    /// Partner-branch dilation of layer `l` in the first stage.
    pub fn dual_dilation(&self, l: usize) -> usize {
        1 << (self.layers - l)
    }
}

/// Per-sample features of one video in three modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub frame: Array2<f64>,
    pub audio: Array2<f64>,
    pub text: Array2<f64>,
    pub fps: f64,
    pub duration_s: f64,
}

impl FeatureBundle {
    pub fn new(
        frame: Array2<f64>,
        audio: Array2<f64>,
        text: Array2<f64>,
        fps: f64,
        duration_s: f64,
    ) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite() && duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::Config(format!(
                "fps {fps} and duration {duration_s} must be positive"
            )));
        }
        let t = num_samples(duration_s, fps);
        if frame.nrows() != t || audio.nrows() != t || text.nrows() != t {
            return Err(Error::shape(
                "feature bundle",
                format!("{t} rows in every modality"),
                format!(
                    "frame {}, audio {}, text {}",
                    frame.nrows(),
                    audio.nrows(),
                    text.nrows()
                ),
            ));
        }
        if !frame
            .iter()
            .chain(audio.iter())
            .chain(text.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::Config("features must be finite".into()));
        }
        Ok(FeatureBundle {
            frame,
            audio,
            text,
            fps,
            duration_s,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.frame.nrows()
    }

    fn check_dims(&self, cfg: &ModelConfig) -> Result<()> {
        let got = (self.frame.ncols(), self.audio.ncols(), self.text.ncols());
        let want = (cfg.frame_dim, cfg.audio_dim, cfg.text_dim);
        if got != want {
            return Err(Error::shape(
                "feature widths",
                format!("{want:?}"),
                format!("{got:?}"),
            ));
        }
        Ok(())
    }
}

/// Everything the forward pass produces, per stage.
#[derive(Debug, Clone)]
pub struct ForwardOutputs {
    /// Stage features `h`, each `T × channels`.
    pub hidden: Vec<Array2<f64>>,
    /// Temporal differences `d` of each stage's features.
    pub diffs: Vec<Array2<f64>>,
    pub heads: Vec<HeadOutputs>,
}

/// Full forward pass from features to per-stage head outputs.
pub fn forward(
    bundle: &FeatureBundle,
    cfg: &ModelConfig,
    w: &ModelWeights,
) -> Result<ForwardOutputs> {
    cfg.check()?;
    bundle.check_dims(cfg)?;
    let salient = se_fusion(&bundle.frame, &bundle.audio, w)?;
    let fused = cross_attention_fusion(&salient, &bundle.text, cfg, w)?;
    let x = layers::linear(&fused, w.get("input.w")?, w.get("input.b")?)?;
    let hidden = mstcn_forward(&x, cfg, w)?;
    let diffs: Vec<Array2<f64>> = hidden.iter().map(temporal_difference).collect();
    let heads = hidden
        .iter()
        .zip(&diffs)
        .enumerate()
        .map(|(s, (h, d))| heads_forward(h, d, s + 1, bundle.fps, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardOutputs {
        hidden,
        diffs,
        heads,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Converts the last stage's head outputs into decodable frame outputs.
pub fn to_frame_outputs(heads: &HeadOutputs, fps: f64, duration_s: f64) -> Result<FrameOutputs> {
    let scores = heads.label_logits.mapv(sigmoid);
    let prob: Array1<f64> = heads.boundary_logits.mapv(sigmoid);
    FrameOutputs::new(fps, duration_s, scores, prob, heads.offsets_s.clone())
}

/// `forward` followed by [`to_frame_outputs`] on the final stage.
pub fn predict(
    bundle: &FeatureBundle,
    cfg: &ModelConfig,
    w: &ModelWeights,
) -> Result<FrameOutputs> {
    let out = forward(bundle, cfg, w)?;
    let last = out.heads.last().expect("at least one stage");
    to_frame_outputs(last, bundle.fps, bundle.duration_s)
}
