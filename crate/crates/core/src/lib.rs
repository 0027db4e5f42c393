//! Semi-automatic semantic labelling of urban triangle meshes.
//!
//! The crate covers the full pre-labelling loop for textured city meshes:
//!
//! - [`mesh_io`]: PLY meshes with per-face labels, segment ids and colour samples
//! - [`segmentation`]: region-growing planar over-segmentation and segment edits
//! - [`features`]: the 44-dimensional per-segment descriptor
//! - [`forest`]: random-forest classifier with class probabilities
//! - [`metrics`]: area-weighted confusion matrices and reports
//! - [`sampling`]: mesh to coloured point cloud conversion
//! - [`workflow`]: tile ranking, data splits, the train/predict pipeline and studies
//! - [`session`]: editable annotation sessions with an append-only edit log
//!
//! Coordinates are metres, right handed, +Z up.

pub mod features;
pub mod forest;
pub mod digest;
pub mod geometry;
pub mod mesh_io;
pub mod metrics;
pub mod sampling;
pub mod segmentation;
pub mod session;
pub mod spatial;
pub mod synthetic;
pub mod workflow;

pub use mesh_io::{ClassId, ColorSample, TriangleMesh};
pub use segmentation::{Segment, SegmentSet, SegmentationParams};
