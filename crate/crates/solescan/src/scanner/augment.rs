//! Spatial augmentation: seeded random similarity transforms applied to a
//! mesh, with the transforms returned for ground-truth bookkeeping.

use nalgebra::{Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::geom::{Sim3Transform, TriangleMesh};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug)]
pub struct AugmentConfig {
    /// None draws rotations uniformly over SO(3); Some(b) draws a uniform
    /// axis with the angle uniform in [0, b] degrees.
    pub rot_bound_deg: Option<f64>,
    /// Scale drawn log-uniformly in this range.
    pub scale_range: (f64, f64),
    /// Shift drawn uniformly in +-(fraction * bounding diagonal) per axis.
    pub shift_frac: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rot_bound_deg: None,
            scale_range: (0.8, 1.25),
            shift_frac: 0.1,
        }
    }
}

pub fn random_rotation(rng: &mut Rng, bound_deg: Option<f64>) -> Rotation3<f64> {
    match bound_deg {
        None => {
            // Normalized 4D Gaussian -> uniform quaternion -> uniform SO(3).
            let q = nalgebra::Quaternion::new(
                rng.gaussian(),
                rng.gaussian(),
                rng.gaussian(),
                rng.gaussian(),
            );
            nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix()
        }
        Some(bound) => {
            let axis = Unit::new_normalize(rng.unit_vector());
            let angle = rng.uniform_in(0.0, bound.to_radians());
            Rotation3::from_axis_angle(&axis, angle)
        }
    }
}

pub fn random_sim3(rng: &mut Rng, cfg: &AugmentConfig, diag: f64) -> Sim3Transform {
    let rotation = random_rotation(rng, cfg.rot_bound_deg);
    let scale = rng
        .uniform_in(cfg.scale_range.0.ln(), cfg.scale_range.1.ln())
        .exp();
    let shift = cfg.shift_frac * diag;
    let translation = Vector3::new(
        rng.uniform_in(-shift, shift),
        rng.uniform_in(-shift, shift),
        rng.uniform_in(-shift, shift),
    );
    Sim3Transform {
        scale,
        rotation,
        translation,
    }
}

/// Draw `n_transforms` similarity transforms and apply each to the mesh.
pub fn augment(
    mesh: &TriangleMesh,
    n_transforms: usize,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<Vec<(Sim3Transform, TriangleMesh)>> {
    if n_transforms == 0 {
        return Err(Error::InvalidInput("n_transforms must be >= 1".into()));
    }
    let diag = mesh.bounding_diagonal();
    let mut rng = Rng::seed_from_u64(seed);
    Ok((0..n_transforms)
        .map(|_| {
            let t = random_sim3(&mut rng, cfg, diag);
            (t, mesh.transformed(&t))
        })
        .collect())
}
