//! Deterministic RGB-D geometry engine for multi-camera driving rigs.
//!
//! The crate covers the non-learned backbone of a metric-depth data pipeline:
//!
//! - [`geometry`]: pinhole projection and SE(3) pose algebra;
//! - [`cloud`]: point-cloud containers and curation-side cloud operations
//!   (transform, dynamic removal, height filtering, voxel downsampling,
//!   multi-frame aggregation);
//! - [`render`]: z-buffer point splatting into sparse RGB-D condition frames
//!   and hidden-point removal;
//! - [`curation`]: fusion of LiDAR and MVS depth into prompts, nearest-neighbor
//!   densification, sky assignment, and the pluggable completion backend seam;
//! - [`nvs`]: condition construction for temporal offsets and novel viewpoints,
//!   trajectory perturbation, and self-supervised cycle-consistency round trips;
//! - [`metrics`]: depth evaluation (Abs.Rel., RMSE, threshold accuracy) with
//!   and without median scaling;
//! - [`synth`]: analytic ray-cast scenes used as ground truth in tests and
//!   fixtures;
//! - [`io`]: PLY / PFM / PNG / JSON interchange and the on-disk bundle layout.
//!
//! Everything is pure and deterministic: identical inputs produce bitwise
//! identical outputs, and all randomness flows from explicit seeds.

pub mod cloud;
pub mod config;
pub mod curation;
pub mod fixture;
pub mod geometry;
pub mod hull;
pub mod io;
pub mod metrics;
pub mod nvs;
pub mod render;
pub mod seeding;
pub mod synth;
pub mod testutil;
