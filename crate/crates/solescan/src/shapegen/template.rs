//! The footoid template: a deterministic, watertight, stylized foot-like
//! mesh that serves as the canonical reference shape.
//!
//! Axes: +x toe-ward, y across the foot (+y medial), +z dorsal. The
//! bounding box is roughly 0.26 x 0.10 x 0.12 meters.

use nalgebra::{Point3, Vector3};

use crate::align::LandmarkSet;
use crate::geom::TriangleMesh;

pub const TEMPLATE_RINGS: usize = 38;
pub const TEMPLATE_SEGS: usize = 64;

fn gauss_bump(x: f64, center: f64, width: f64) -> f64 {
    let d = (x - center) / width;
    (-0.5 * d * d).exp()
}

/// Half-width profile along the foot (xi: 0 heel, 1 toe).
fn width_profile(xi: f64) -> f64 {
    0.050
        * (0.76 + 0.27 * gauss_bump(xi, 0.70, 0.16) - 0.13 * gauss_bump(xi, 0.40, 0.14)
            + 0.08 * gauss_bump(xi, 0.07, 0.12))
}

/// Dorsal height profile.
fn top_profile(xi: f64) -> f64 {
    0.062 * (1.05 + 0.22 * gauss_bump(xi, 0.12, 0.22) - 0.38 * smoothstep((xi - 0.55) / 0.4))
}

/// Plantar depth profile: deep heel and ball pads, shallow arch.
fn bottom_profile(xi: f64) -> f64 {
    0.085
        * (0.92 + 0.13 * gauss_bump(xi, 0.10, 0.13) + 0.11 * gauss_bump(xi, 0.72, 0.15)
            - 0.10 * gauss_bump(xi, 0.42, 0.12))
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Soft compression of the plantar extreme so the sole is flattish.
fn sole_flatten(c: f64) -> f64 {
    if c >= 0.0 {
        c
    } else {
        c + 0.38 * (-c).powi(3)
    }
}

/// Position of the surface point at (theta, phi) in f64.
fn surface_point(theta: f64, phi: f64) -> Point3<f64> {
    let c = theta.cos(); // +1 toe, -1 heel
    let rho = theta.sin();
    let xi = (c + 1.0) / 2.0;

    // Slight midfoot compression makes toe and heel blunter.
    let x = 0.128 * c * (1.0 - 0.10 * (1.0 - c * c)) + 0.005;

    let y = width_profile(xi) * rho * phi.sin();

    let cz = phi.cos(); // +1 dorsal, -1 plantar
    let blend = (1.0 + cz) / 2.0;
    let scale_z = blend * top_profile(xi) + (1.0 - blend) * bottom_profile(xi);
    let mut z = scale_z * rho * sole_flatten(cz);

    // Arch concavity: lift the plantar midfoot, stronger on the medial
    // (+y) side.
    let plantar = (0.5 - 0.5 * cz).powi(2);
    let medial = 0.55 + 0.45 * phi.sin();
    z += 0.022 * gauss_bump(xi, 0.42, 0.13) * plantar * medial * rho;

    // Gentle global sole reference: bias the shape upward so the box is
    // split roughly -0.05..+0.07.
    z += 0.008;

    Point3::new(x, y, z)
}

/// Deterministic watertight template mesh (~2500 vertices). Vertices are
/// computed in f64 and rounded to f32 so the result is byte-identical
/// across platforms.
pub fn template_mesh() -> TriangleMesh {
    let rings = TEMPLATE_RINGS;
    let segs = TEMPLATE_SEGS;
    let mut vertices: Vec<Point3<f64>> = Vec::with_capacity((rings - 1) * segs + 2);
    // Toe pole (theta = 0).
    vertices.push(surface_point(0.0, 0.0));
    for i in 1..rings {
        let theta = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segs {
            let phi = std::f64::consts::TAU * j as f64 / segs as f64;
            vertices.push(surface_point(theta, phi));
        }
    }
    // Heel pole (theta = pi).
    vertices.push(surface_point(std::f64::consts::PI, 0.0));

    let vertices: Vec<Point3<f64>> = vertices
        .into_iter()
        .map(|p| Point3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64))
        .collect();

    let last = vertices.len() as u32 - 1;
    let ring = |i: usize, j: usize| -> u32 { (1 + (i - 1) * segs + (j % segs)) as u32 };
    let mut faces = Vec::new();
    // The long axis is +x at the toe pole; phi winds from +z over +y.
    // With theta measured from the +x pole, the outward orientation is
    // the mirror of the z-pole convention used elsewhere.
    for j in 0..segs {
        faces.push([0, ring(1, j + 1), ring(1, j)]);
        faces.push([last, ring(rings - 1, j), ring(rings - 1, j + 1)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segs {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("template construction is static")
}

/// Map a template vertex to the (theta, phi) sphere parameters it was
/// built from; used by the deformation basis fields.
pub fn vertex_xi(p: &Point3<f64>) -> f64 {
    // Invert the length coordinate approximately: xi grows with x.
    ((p.x - 0.005) / 0.128 / 2.0 + 0.5).clamp(0.0, 1.0)
}

/// The six default landmarks: prominent, well-spread template positions.
pub fn template_landmarks() -> LandmarkSet {
    let mesh = template_mesh();
    let v = &mesh.vertices;
    let arg = |score: &dyn Fn(&Point3<f64>) -> f64| -> Point3<f64> {
        *v.iter()
            .max_by(|a, b| score(a).total_cmp(&score(b)))
            .unwrap()
    };
    let toe_tip = arg(&|p| p.x);
    let heel_apex = arg(&|p| -p.x);
    // Ball of the foot: widest extremes in the forefoot band.
    let medial_ball = arg(&|p| p.y - 4.0 * (p.x - 0.055).abs());
    let lateral_ball = arg(&|p| -p.y - 4.0 * (p.x - 0.055).abs());
    // Ankle front: dorsal high point toward the rear.
    let ankle_front = arg(&|p| p.z - 2.0 * (p.x + 0.04).abs());
    // Dorsal midfoot ridge (visible counterpart of the arch region).
    let dorsal_mid = arg(&|p| p.z - 4.0 * (p.x - 0.03).abs() - 2.0 * p.y.abs());
    LandmarkSet::new(
        vec![
            toe_tip,
            heel_apex,
            medial_ball,
            lateral_ball,
            ankle_front,
            dorsal_mid,
        ],
        vec![
            "toe_tip".into(),
            "heel_apex".into(),
            "medial_ball".into(),
            "lateral_ball".into(),
            "ankle_front".into(),
            "dorsal_mid".into(),
        ],
    )
    .expect("template landmarks are well-spread")
}

/// Outward templates normals are needed by tests; expose the centroid for
/// orientation checks.
pub fn template_centroid() -> Point3<f64> {
    let mesh = template_mesh();
    let sum: Vector3<f64> = mesh.vertices.iter().map(|v| v.coords).sum();
    Point3::from(sum / mesh.vertices.len() as f64)
}
