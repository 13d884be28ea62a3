//! Procedural foot-like ("footoid") shape family with known deformation
//! coefficients, plus the PCA shape model and its fitting baseline.

mod basis;
mod dataset;
mod fit;
mod pca;
pub mod template;

pub use basis::{
    basis_field, deformed_vertices, has_self_intersection, synthesize, FootoidParams,
    FootoidSample, GENERATIVE_MODES, MODE_NAMES, MODE_STDDEVS,
};
pub use dataset::{
    read_sample_mesh, read_sample_params, read_split, sample_dataset, split_80_20, write_dataset,
};
pub use fit::{fit_pca, surface_sample_pattern, FitOptions, FitResult};
pub use pca::{build_pca, PcaShapeModel};
pub use template::{template_landmarks, template_mesh};
