//! Shared helpers for unit tests.

use nalgebra::{Point3, Vector3};

use crate::geom::TriangleMesh;

/// Closed UV sphere.
pub fn uv_sphere(center: Point3<f64>, r: f64, rings: usize, segs: usize) -> TriangleMesh {
    let mut vertices = vec![center + Vector3::new(0.0, 0.0, r)];
    for i in 1..rings {
        let theta = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segs {
            let phi = std::f64::consts::TAU * j as f64 / segs as f64;
            vertices.push(
                center
                    + Vector3::new(
                        r * theta.sin() * phi.cos(),
                        r * theta.sin() * phi.sin(),
                        r * theta.cos(),
                    ),
            );
        }
    }
    vertices.push(center + Vector3::new(0.0, 0.0, -r));
    let last = vertices.len() as u32 - 1;
    let ring = |i: usize, j: usize| -> u32 { (1 + (i - 1) * segs + (j % segs)) as u32 };
    let mut faces = Vec::new();
    for j in 0..segs {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
        faces.push([last, ring(rings - 1, j + 1), ring(rings - 1, j)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segs {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, d, b]);
            faces.push([a, c, d]);
        }
    }
    let mesh = TriangleMesh::new(vertices, faces).unwrap();
    debug_assert!(outward_fraction(&mesh) > 0.99);
    mesh
}

/// Fraction of faces whose normal points away from the centroid.
pub fn outward_fraction(mesh: &TriangleMesh) -> f64 {
    let centroid = Point3::from(
        mesh.vertices.iter().map(|v| v.coords).sum::<Vector3<f64>>() / mesh.vertices.len() as f64,
    );
    let outward = (0..mesh.face_count())
        .filter(|&f| {
            let [a, b, c] = mesh.triangle(f);
            let fc = Point3::from((a.coords + b.coords + c.coords) / 3.0);
            mesh.face_normal(f).dot(&(fc - centroid)) > 0.0
        })
        .count();
    outward as f64 / mesh.face_count() as f64
}

/// Asymmetric closed surface whose registration optimum is unique.
pub fn bumpy_mesh() -> TriangleMesh {
    bumpy_mesh_with(24, 48)
}

/// Finer tessellation for accuracy-sensitive tests.
pub fn bumpy_mesh_fine() -> TriangleMesh {
    bumpy_mesh_with(48, 96)
}

fn bumpy_mesh_with(rings: usize, segs: usize) -> TriangleMesh {
    // Poles follow the same radial profile as the rings (no spike).
    let mut vertices = vec![Point3::new(0.0, 0.0, 0.11 * 1.12)];
    for i in 1..rings {
        let theta = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segs {
            let phi = std::f64::consts::TAU * j as f64 / segs as f64;
            let bump = 1.0 + 0.17 * (3.0 * phi).sin() * theta.sin() + 0.12 * (2.0 * theta).cos();
            vertices.push(Point3::new(
                0.12 * bump * theta.sin() * phi.cos(),
                0.08 * bump * theta.sin() * phi.sin(),
                0.11 * bump * theta.cos(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, -0.11 * 1.12));
    let last = vertices.len() as u32 - 1;
    let ring = |i: usize, j: usize| -> u32 { (1 + (i - 1) * segs + (j % segs)) as u32 };
    let mut faces = Vec::new();
    for j in 0..segs {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
        faces.push([last, ring(rings - 1, j + 1), ring(rings - 1, j)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segs {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, d, b]);
            faces.push([a, c, d]);
        }
    }
    let mesh = TriangleMesh::new(vertices, faces).unwrap();
    debug_assert!(outward_fraction(&mesh) > 0.99);
    mesh
}

/// Landmarks at coordinate extremes of a mesh (distinct vertices).
pub fn extreme_landmarks(mesh: &TriangleMesh) -> crate::align::LandmarkSet {
    let pick = |f: &dyn Fn(&Point3<f64>) -> f64| -> Point3<f64> {
        *mesh
            .vertices
            .iter()
            .max_by(|a, b| f(a).total_cmp(&f(b)))
            .unwrap()
    };
    let points = vec![
        pick(&|p| p.x),
        pick(&|p| -p.x),
        pick(&|p| p.y),
        pick(&|p| -p.y),
        pick(&|p| p.z),
        pick(&|p| p.x + p.z),
    ];
    let labels = ["px", "nx", "py", "ny", "pz", "pxz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    crate::align::LandmarkSet::new(points, labels).unwrap()
}
