//! Normal estimation and screened-Poisson surface reconstruction.

mod marching;
mod normals;
mod poisson;

pub use marching::marching_cubes;
pub use normals::estimate_normals;
pub use poisson::{poisson_reconstruct, PoissonOutput, PoissonParams, PoissonStats};

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Node-centered scalar field on a uniform grid.
#[derive(Clone, Debug)]
pub struct ScalarGrid {
    /// Node counts per axis.
    pub resolution: (usize, usize, usize),
    pub origin: Point3<f64>,
    pub spacing: f64,
    /// Row-major with x fastest: index = (k * ny + j) * nx + i.
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn validate(&self) -> Result<()> {
        let (nx, ny, nz) = self.resolution;
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(Error::Config("grid needs at least 2 nodes per axis".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::Config("grid spacing must be positive".into()));
        }
        if self.values.len() != nx * ny * nz {
            return Err(Error::Config(format!(
                "grid holds {} values for {}x{}x{} nodes",
                self.values.len(),
                nx,
                ny,
                nz
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalError("scalar grid"));
        }
        Ok(())
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn node_position_for(&self, linear: usize) -> Point3<f64> {
        let (nx, ny, _) = self.resolution;
        let i = linear % nx;
        let j = (linear / nx) % ny;
        let k = linear / (nx * ny);
        self.node_position(i, j, k)
    }
}
