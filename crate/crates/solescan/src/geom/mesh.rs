//! Triangle meshes and surface utilities.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{PointCloud, Sim3Transform};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        for (i, v) in vertices.iter().enumerate() {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "vertex {i} has non-finite coordinates"
                )));
            }
        }
        let n = vertices.len() as u32;
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!(
                    "face {i} references vertex out of range"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidInput(format!(
                    "face {i} references the same vertex twice"
                )));
            }
        }
        Ok(TriangleMesh { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, f: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(f);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::z()
        }
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        assert!(!self.vertices.is_empty());
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn bounding_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    pub fn transformed(&self, t: &Sim3Transform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.apply_point(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Every edge shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }

    /// V - E + F; equals 2 for a genus-0 closed surface.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    /// Uniform area-weighted surface samples with outward face normals.
    pub fn sample_surface(&self, n: usize, seed: u64) -> PointCloud {
        assert!(!self.faces.is_empty(), "cannot sample an empty mesh");
        let mut cumulative = Vec::with_capacity(self.faces.len());
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            total += self.face_area(f);
            cumulative.push(total);
        }
        let mut rng = Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for _ in 0..n {
            let target = rng.uniform() * total;
            let f = match cumulative.binary_search_by(|c| c.partial_cmp(&target).unwrap()) {
                Ok(i) => i,
                Err(i) => i.min(self.faces.len() - 1),
            };
            let [a, b, c] = self.triangle(f);
            // Uniform barycentric sample.
            let mut u = rng.uniform();
            let mut v = rng.uniform();
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let p = a + (b - a) * u + (c - a) * v;
            points.push(p);
            normals.push(self.face_normal(f));
        }
        PointCloud {
            points,
            normals: Some(normals),
            view_ids: None,
        }
    }
}

/// Squared distance from a point to a triangle (Ericson's method).
pub fn point_triangle_distance_sq(p: &Point3<f64>, tri: &[Point3<f64>; 3]) -> f64 {
    let [a, b, c] = tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm_squared();
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm_squared();
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * w).norm_squared();
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm_squared()
}

/// Exact distance from a point to the mesh surface (linear scan over faces;
/// intended for tests and small meshes).
pub fn point_mesh_distance(p: &Point3<f64>, mesh: &TriangleMesh) -> f64 {
    (0..mesh.faces.len())
        .map(|f| point_triangle_distance_sq(p, &mesh.triangle(f)))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetrahedron() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn tetrahedron_is_watertight_genus_zero() {
        let m = tetrahedron();
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn face_index_out_of_range_rejected() {
        let r = TriangleMesh::new(vec![Point3::origin()], vec![[0, 0, 1]]);
        assert!(r.is_err());
    }

    #[test]
    fn degenerate_face_rejected() {
        let r = TriangleMesh::new(
            vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)],
            vec![[0, 1, 0]],
        );
        assert!(r.is_err());
    }

    #[test]
    fn surface_samples_lie_on_mesh() {
        let m = tetrahedron();
        let cloud = m.sample_surface(500, 7);
        assert_eq!(cloud.len(), 500);
        for p in &cloud.points {
            assert!(point_mesh_distance(p, &m) < 1e-12);
        }
    }

    #[test]
    fn point_triangle_distance_cases() {
        let tri = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        // Above the interior.
        let d = point_triangle_distance_sq(&Point3::new(0.2, 0.2, 1.0), &tri).sqrt();
        assert!((d - 1.0).abs() < 1e-12);
        // Closest to a vertex.
        let d = point_triangle_distance_sq(&Point3::new(-1.0, -1.0, 0.0), &tri).sqrt();
        assert!((d - 2.0f64.sqrt()).abs() < 1e-12);
        // Closest to an edge.
        let d = point_triangle_distance_sq(&Point3::new(0.5, -1.0, 0.0), &tri).sqrt();
        assert!((d - 1.0).abs() < 1e-12);
        // Closest to the hypotenuse.
        let d = point_triangle_distance_sq(&Point3::new(1.0, 1.0, 0.0), &tri).sqrt();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn area_weighted_sampling_is_deterministic() {
        let m = tetrahedron();
        let a = m.sample_surface(100, 3);
        let b = m.sample_surface(100, 3);
        assert_eq!(a.points, b.points);
    }
}
