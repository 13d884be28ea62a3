//! Rigid and similarity transforms.
//!
//! A `Sim3Transform` acts on points as `s * (R * x) + t`; the translation is
//! not scaled. Rigid transforms are the `s = 1` case.

use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::geom::PointCloud;

pub const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Rotation + translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// Build from a raw matrix, verifying orthonormality and det +1.
    pub fn from_matrix(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let rtr = rotation.transpose() * rotation;
        let dev = (rtr - Matrix3::identity()).abs().max();
        if dev > ORTHONORMALITY_TOL {
            return Err(Error::DegenerateConfiguration(format!(
                "rotation is not orthonormal (|R'R - I| = {dev:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMALITY_TOL {
            return Err(Error::DegenerateConfiguration(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(RigidTransform {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        })
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> RigidTransform {
        let rot_inv = self.rotation.inverse();
        RigidTransform {
            rotation: rot_inv,
            translation: -(rot_inv * self.translation),
        }
    }

    /// self ∘ other: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_sim3(&self) -> Sim3Transform {
        Sim3Transform {
            scale: 1.0,
            rotation: self.rotation,
            translation: self.translation,
        }
    }

    /// Rotation angle in radians (geodesic distance from identity).
    pub fn rotation_angle(&self) -> f64 {
        safe_rotation_angle(&self.rotation)
    }
}

/// acos of the clamped trace formula; `Rotation3::angle` itself returns
/// NaN when rounding pushes the trace past 3.
pub fn safe_rotation_angle(r: &Rotation3<f64>) -> f64 {
    (((r.matrix().trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
}

/// Scale + rotation + translation, acting as `s * (R * x) + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3Transform {
    pub scale: f64,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Sim3Transform {
    pub fn identity() -> Self {
        Sim3Transform {
            scale: 1.0,
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: Rotation3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::DegenerateConfiguration(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Sim3Transform {
            scale,
            rotation,
            translation,
        })
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p).coords + self.translation)
    }

    pub fn inverse(&self) -> Sim3Transform {
        let rot_inv = self.rotation.inverse();
        Sim3Transform {
            scale: 1.0 / self.scale,
            rotation: rot_inv,
            translation: -(rot_inv * self.translation) / self.scale,
        }
    }

    /// self ∘ other: apply `other` first.
    pub fn compose(&self, other: &Sim3Transform) -> Sim3Transform {
        Sim3Transform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    /// Homogeneous 4x4 matrix of the action `s R x + t`.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.scale * self.rotation.matrix()));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Deviation from identity: (rotation angle rad, |t|, |ln s|).
    pub fn deviation_from_identity(&self) -> (f64, f64, f64) {
        (
            safe_rotation_angle(&self.rotation),
            self.translation.norm(),
            self.scale.ln().abs(),
        )
    }
}

/// Transform all points of a cloud; normals are rotated and re-normalized,
/// view ids pass through untouched.
pub fn apply_transform(t: &Sim3Transform, cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    let points = cloud
        .points
        .iter()
        .map(|p| t.apply_point(p))
        .collect::<Vec<_>>();
    let normals = cloud.normals.as_ref().map(|ns| {
        ns.iter()
            .map(|n| (t.rotation * n).normalize())
            .collect::<Vec<_>>()
    });
    PointCloud::with_attributes(points, normals, cloud.view_ids.clone())
}

/// Rigid convenience wrapper over [`apply_transform`].
pub fn apply_rigid(t: &RigidTransform, cloud: &PointCloud) -> Result<PointCloud> {
    apply_transform(&t.to_sim3(), cloud)
}
