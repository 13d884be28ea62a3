//! Bit-exact file I/O: PLY clouds/meshes, DPM1 depth maps, metrics CSV,
//! SVG charts, model checkpoints, and run manifests.

pub mod checkpoint;
pub mod dpm;
pub mod manifest;
pub mod metrics_csv;
pub mod ply;
pub mod svg;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use dpm::{read_depth_map, write_depth_map};
pub use manifest::{RunManifest, TOOLKIT_VERSION};
pub use metrics_csv::{read_metrics_csv, write_metrics_csv, MetricsRow};
pub use ply::{read_cloud, read_cloud_or_mesh, read_mesh, write_cloud, write_mesh, PlyFormat};
pub use svg::write_line_chart;
