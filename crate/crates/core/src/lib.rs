//! Vessel-wall kinematics from volumetric image pairs.
//!
//! The crate estimates wall displacement between two 3D image frames with
//! TV-regularized parametric registration, derives local circumferential
//! strain from the normal displacement and the local radius of curvature,
//! and verifies the whole measurement chain against a synthetic phantom
//! warped by an analytically known displacement field.
//!
//! Top-level map:
//!
//! * [`volume`] — 3D scalar volumes, file I/O, interpolation, smoothing.
//! * [`registration`] — LCC + TV objective, control grids, multiresolution
//!   quasi-Newton registration.
//! * [`surface`] — wall point clouds, k-NN, PCA normals, MSAC cylinder fits
//!   for the local radius of curvature.
//! * [`kinematics`] — normal/tangential decomposition, strain, Green-tensor
//!   diagonal, percentile summaries.
//! * [`synthetic`] — phantom vessels, analytic displacement fields, warped
//!   ground-truth image pairs.
//! * [`verify`] — registration-vs-truth metrics and the consolidated report.
//! * [`pipeline`] — file-based orchestration used by the `vesselkin` binary.
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `cargo run --release --example verification_report`.

pub mod error;
pub mod kinematics;
pub mod pipeline;
pub mod registration;
pub mod surface;
pub mod synthetic;
pub mod verify;
pub mod volume;

pub use error::{Error, Result};
