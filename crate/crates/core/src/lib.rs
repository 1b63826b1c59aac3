//! Multi-label temporal scene segmentation: annotation formats, evaluation
//! metrics, output decoding, a reference forward model and a synthetic
//! corpus generator.

pub mod annotation_io;
pub mod decode;
pub mod error;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod taxonomy;
pub mod types;
pub mod validate;

pub use error::{Error, Result};
pub use taxonomy::{ClassLabel, Taxonomy};
pub use types::{tiou, Interval, PredictedScene, PredictedSceneSet, Scene, VideoAnnotation};
pub use validate::{validate_annotation, ValidationReport, Violation};
