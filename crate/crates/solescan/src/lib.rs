//! Reconstruction toolkit for partial surface scans.
//!
//! The crate covers the full desk-scale pipeline: a virtual depth scanner
//! produces partial, noisy, arbitrarily posed point clouds from meshes;
//! landmark-guided Procrustes + ICP canonicalizes them against a template;
//! an attention-based coarse-to-fine network completes the missing
//! geometry; and screened Poisson reconstruction turns the completed cloud
//! back into a watertight mesh. A procedural "footoid" shape family with
//! known deformation coefficients supplies ground truth for training and
//! evaluation, and a PCA shape-model baseline is included for comparison.
//!
//! Start with the runnable programs in `examples/` — there is one per major
//! capability — or the `solescan` binary, which exposes the same pipeline
//! as subcommands.

pub mod align;
pub mod autodiff;
pub mod commands;
pub mod completion;
pub mod error;
pub mod geom;
pub mod io;
pub mod meshing;
pub mod metrics;
pub mod rng;
pub mod scanner;
pub mod shapegen;

#[cfg(test)]
pub mod testutil;

pub use error::{Error, Result};
