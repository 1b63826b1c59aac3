//! Parameter storage keyed by layer path, seeded initialization and the
//! on-disk manifest + tensor files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FusionVariant, ModelConfig};
use crate::annotation_io::{load_matrix, save_matrix, ContainerKind, SCHEMA_VERSION};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Expected parameter list in initialization order: `(path, rows, cols, fan_in)`.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, usize, usize, usize)> {
    let mut out = Vec::new();
    let mut linear = |name: &str, din: usize, dout: usize| {
        out.push((format!("{name}.w"), din, dout, din));
        out.push((format!("{name}.b"), 1, dout, din));
    };
    let (ds, dt, a, ch) = (cfg.salient_dim(), cfg.text_dim, cfg.attn_dim, cfg.channels);
    linear("se.reduce", ds, cfg.se_hidden());
    linear("se.expand", cfg.se_hidden(), ds);
    linear("xattn.q", ds, a);
    linear("xattn.k", dt, a);
    linear("xattn.v", dt, a);
    linear("xattn.o", a, a);
    if cfg.fusion == FusionVariant::Dual {
        linear("xattn_rev.q", dt, a);
        linear("xattn_rev.k", ds, a);
        linear("xattn_rev.v", ds, a);
        linear("xattn_rev.o", a, a);
    }
    linear("input", ds + a, ch);
    for s in 1..=cfg.stages {
        for l in 1..=cfg.layers {
            linear(&format!("stage{s}.layer{l}.conv_a"), 3 * ch, ch);
            if s == 1 {
                linear(&format!("stage{s}.layer{l}.conv_b"), 3 * ch, ch);
            }
            linear(&format!("stage{s}.layer{l}.out"), ch, ch);
        }
        linear(&format!("stage{s}.head.cls"), ch, cfg.num_classes);
        linear(&format!("stage{s}.head.bnd"), ch, 1);
        linear(&format!("stage{s}.head.off"), ch, 1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelWeights {
    tensors: BTreeMap<String, Array2<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    file: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    config: ModelConfig,
    tensors: Vec<ManifestEntry>,
}

impl ModelWeights {
    /// Uniform `±1/√fan_in` for every tensor, drawn in [`param_shapes`] order
    /// from ChaCha8 seeded with `cfg.seed`. Residual output projections are
    /// further scaled by `cfg.residual_gain`.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let tensors = param_shapes(cfg)
            .into_iter()
            .map(|(path, rows, cols, fan_in)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let gain = if path.contains(".out.") {
                    cfg.residual_gain
                } else {
                    1.0
                };
                let m = Array2::from_shape_simple_fn((rows, cols), || {
                    gain * rng.random_range(-bound..bound)
                });
                (path, m)
            })
            .collect();
        Ok(ModelWeights { tensors })
    }

    pub fn get(&self, path: &str) -> Result<&Array2<f64>> {
        self.tensors
            .get(path)
            .ok_or_else(|| Error::Config(format!("missing weight tensor `{path}`")))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Array2<f64>> {
        self.tensors
            .get_mut(path)
            .ok_or_else(|| Error::Config(format!("missing weight tensor `{path}`")))
    }

    /// Replaces an existing tensor; the shape must not change.
    pub fn set(&mut self, path: &str, value: Array2<f64>) -> Result<()> {
        let slot = self.get_mut(path)?;
        if slot.dim() != value.dim() {
            return Err(Error::shape(
                path.to_string(),
                format!("{:?}", slot.dim()),
                format!("{:?}", value.dim()),
            ));
        }
        *slot = value;
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Every expected tensor present with the expected shape, nothing extra.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let shapes = param_shapes(cfg);
        for (path, rows, cols, _) in &shapes {
            let t = self.get(path)?;
            if t.dim() != (*rows, *cols) {
                return Err(Error::shape(
                    path.clone(),
                    format!("({rows}, {cols})"),
                    format!("{:?}", t.dim()),
                ));
            }
        }
        if self.tensors.len() != shapes.len() {
            let known: Vec<&String> = shapes.iter().map(|s| &s.0).collect();
            let extra: Vec<&String> = self.tensors.keys().filter(|k| !known.contains(k)).collect();
            return Err(Error::Config(format!(
                "unexpected weight tensors {extra:?}"
            )));
        }
        Ok(())
    }

    /// Writes `manifest.json` and one tensor container per parameter.
    pub fn save(&self, dir: impl AsRef<Path>, cfg: &ModelConfig) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (path, m) in &self.tensors {
            let file = format!("{path}.bin");
            save_matrix(dir.join(&file), ContainerKind::Tensor, m, 0.0, 0.0)?;
            entries.push(ManifestEntry {
                path: path.clone(),
                file,
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            config: cfg.clone(),
            tensors: entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    /// Loads a weight directory, returning the stored config with it.
    pub fn load(dir: impl AsRef<Path>) -> Result<(ModelConfig, Self)> {
        let dir = dir.as_ref();
        let bytes = fs::read(dir.join(MANIFEST_FILE))?;
        let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|source| Error::Parse {
            what: "weight manifest",
            source,
        })?;
        let mut tensors = BTreeMap::new();
        for e in manifest.tensors {
            let (header, m) = load_matrix(dir.join(&e.file))?;
            if header.kind != ContainerKind::Tensor || m.dim() != (e.rows, e.cols) {
                return Err(Error::Container(format!(
                    "tensor file {} does not match its manifest entry",
                    e.file
                )));
            }
            tensors.insert(e.path, m);
        }
        let w = ModelWeights { tensors };
        w.check(&manifest.config)?;
        Ok((manifest.config, w))
    }
}
