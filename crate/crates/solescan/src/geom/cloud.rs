//! Point clouds with optional per-point normals and source-view ids.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub const NORMAL_UNIT_TOL: f64 = 1e-6;

/// An ordered set of 3D points in meters. Immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub view_ids: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn empty() -> Self {
        PointCloud {
            points: Vec::new(),
            normals: None,
            view_ids: None,
        }
    }

    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        Self::with_attributes(points, None, None)
    }

    pub fn with_attributes(
        points: Vec<Point3<f64>>,
        normals: Option<Vec<Vector3<f64>>>,
        view_ids: Option<Vec<u32>>,
    ) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "point {i} has non-finite coordinates"
                )));
            }
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(Error::InvalidInput(format!(
                    "normal count {} does not match point count {}",
                    ns.len(),
                    points.len()
                )));
            }
            for (i, n) in ns.iter().enumerate() {
                if (n.norm() - 1.0).abs() > NORMAL_UNIT_TOL {
                    return Err(Error::InvalidInput(format!(
                        "normal {i} has length {}, expected 1",
                        n.norm()
                    )));
                }
            }
        }
        if let Some(ids) = &view_ids {
            if ids.len() != points.len() {
                return Err(Error::InvalidInput(format!(
                    "view id count {} does not match point count {}",
                    ids.len(),
                    points.len()
                )));
            }
        }
        Ok(PointCloud {
            points,
            normals,
            view_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let mut acc = Vector3::zeros();
        for p in &self.points {
            acc += p.coords;
        }
        Point3::from(acc / self.points.len().max(1) as f64)
    }

    /// Axis-aligned bounding box as (min, max). Cloud must be non-empty.
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        assert!(!self.is_empty(), "bounding box of empty cloud");
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn bounding_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Select a subset by (not necessarily sorted) indices, carrying
    /// normals and view ids along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| indices.iter().map(|&i| ns[i]).collect()),
            view_ids: self
                .view_ids
                .as_ref()
                .map(|ids| indices.iter().map(|&i| ids[i]).collect()),
        }
    }

    /// Concatenate, keeping optional attributes only when every part has
    /// them.
    pub fn concat(parts: &[PointCloud]) -> PointCloud {
        let points = parts.iter().flat_map(|c| c.points.iter().copied()).collect();
        let normals = if parts.iter().all(|c| c.normals.is_some()) && !parts.is_empty() {
            Some(
                parts
                    .iter()
                    .flat_map(|c| c.normals.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        let view_ids = if parts.iter().all(|c| c.view_ids.is_some()) && !parts.is_empty() {
            Some(
                parts
                    .iter()
                    .flat_map(|c| c.view_ids.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        PointCloud {
            points,
            normals,
            view_ids,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attribute_length_mismatch_rejected() {
        let pts = vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)];
        assert!(PointCloud::with_attributes(pts.clone(), Some(vec![Vector3::z()]), None).is_err());
        assert!(PointCloud::with_attributes(pts, None, Some(vec![0])).is_err());
    }

    #[test]
    fn non_unit_normal_rejected() {
        let pts = vec![Point3::origin()];
        let bad = vec![Vector3::new(0.0, 0.0, 2.0)];
        assert!(PointCloud::with_attributes(pts, Some(bad), None).is_err());
    }

    #[test]
    fn non_finite_point_rejected() {
        let pts = vec![Point3::new(f64::NAN, 0.0, 0.0)];
        assert!(PointCloud::new(pts).is_err());
    }

    #[test]
    fn select_carries_attributes() {
        let pts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ];
        let normals = vec![Vector3::z(), Vector3::x(), Vector3::y()];
        let cloud = PointCloud::with_attributes(pts, Some(normals), Some(vec![0, 1, 2])).unwrap();
        let sub = cloud.select(&[2, 0]);
        assert_eq!(sub.points[0], Point3::new(2.0, 0.0, 0.0));
        assert_eq!(sub.normals.as_ref().unwrap()[0], Vector3::y());
        assert_eq!(sub.view_ids.as_ref().unwrap(), &vec![2, 0]);
    }
}
