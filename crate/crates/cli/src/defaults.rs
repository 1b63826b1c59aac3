//! Optional TOML file supplying flag defaults. Explicit flags win.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use crate::status::input;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub taxonomy: Option<PathBuf>,
    pub f1_strategy: Option<String>,
    pub thr: Option<f64>,
    pub nms_window: Option<f64>,
    pub mode: Option<String>,
    pub snap_eps: Option<f64>,
    pub seed: Option<u64>,
    pub num_videos: Option<usize>,
    pub feature_noise: Option<f64>,
    pub label_noise: Option<f64>,
}

impl Defaults {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Defaults::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut d: Defaults = toml::from_str(&text)
            .map_err(|e| input(format!("defaults file {}: {e}", path.display())))?;
        // Relative taxonomy paths are taken from the file's directory.
        if let (Some(t), Some(dir)) = (&d.taxonomy, path.parent()) {
            if t.is_relative() {
                d.taxonomy = Some(dir.join(t));
            }
        }
        Ok(d)
    }
}

/// Flag value, else the defaults-file value parsed with `FromStr`, else `None`.
pub fn pick_parsed<T: std::str::FromStr>(
    flag: Option<T>,
    file: &Option<String>,
    key: &str,
) -> anyhow::Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match file {
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|e| input(format!("defaults file key `{key}`: {e}"))),
        None => Ok(None),
    }
}
