//! File formats (annotations, predictions, shots, binary containers),
//! shot snapping and corpus statistics.

pub mod container;
pub mod documents;
pub mod snap;
pub mod stats;

pub use container::{
    load_frame_outputs, load_matrix, read_frame_outputs, read_matrix, save_frame_outputs,
    save_matrix, write_frame_outputs, write_matrix, ContainerKind, Header,
};
pub use documents::{
    normalize_split, parse_annotations, parse_annotations_lenient, parse_predictions, parse_shots,
    round_time, serialize_annotations, serialize_predictions, serialize_shots, DatasetSplit,
    ShotBoundarySet, SplitName, SCHEMA_VERSION,
};
pub use snap::{snap_to_shots, BoundaryMove, SnapOutcome, SnapWarning, DEFAULT_SNAP_EPS_S};
pub use stats::{dataset_stats, StatsReport};
