//! The footoid deformation family: eight fixed smooth displacement fields
//! over the template, combined affinely by the shape coefficients.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::TriangleMesh;
use crate::shapegen::template::{template_mesh, vertex_xi};

pub const GENERATIVE_MODES: usize = 8;

/// Per-mode standard deviations in meters: displacement of one standard
/// coefficient unit. Kept small enough that |w| <= 3 never
/// self-intersects.
pub const MODE_STDDEVS: [f64; GENERATIVE_MODES] = [
    0.008, // length stretch
    0.005, // forefoot widening
    0.004, // arch raise
    0.004, // toe splay
    0.004, // heel inflation
    0.005, // dorsal height
    0.006, // pronation twist
    0.004, // toe-box lift
];

pub const MODE_NAMES: [&str; GENERATIVE_MODES] = [
    "length_stretch",
    "forefoot_width",
    "arch_raise",
    "toe_splay",
    "heel_inflation",
    "dorsal_height",
    "pronation_twist",
    "toe_box_lift",
];

fn gauss_bump(x: f64, center: f64, width: f64) -> f64 {
    let d = (x - center) / width;
    (-0.5 * d * d).exp()
}

/// Smooth positive part, zero at and below 0.
fn soft_pos(a: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        a * a / (0.3 + a * a).sqrt()
    }
}

/// Unit-coefficient displacement of mode `k` at template position `p`
/// (meters per standard deviation, before the sigma scaling).
pub fn basis_field(k: usize, p: &Point3<f64>) -> Vector3<f64> {
    let xi = vertex_xi(p);
    let y_hat = p.y / 0.053;
    let z_hat = p.z / 0.065;
    match k {
        // Length stretch: displace along x proportionally to x.
        0 => Vector3::new(p.x / 0.13, 0.0, 0.0),
        // Forefoot widening around the ball.
        1 => Vector3::new(0.0, y_hat * gauss_bump(xi, 0.70, 0.18), 0.0),
        // Arch raise: plantar midfoot lifted, stronger medially.
        2 => Vector3::new(
            0.0,
            0.0,
            gauss_bump(xi, 0.42, 0.15) * soft_pos(-z_hat) * (0.6 + 0.4 * y_hat.tanh()),
        ),
        // Toe splay: widen near the toes.
        3 => Vector3::new(0.0, y_hat * gauss_bump(xi, 0.93, 0.10), 0.0),
        // Heel inflation: radial growth around the heel center.
        4 => {
            let center = Point3::new(-0.105, 0.0, 0.01);
            (p - center) * (gauss_bump(xi, 0.05, 0.14) / 0.06)
        }
        // Dorsal height: raise the instep.
        5 => Vector3::new(0.0, 0.0, soft_pos(z_hat) * gauss_bump(xi, 0.50, 0.22)),
        // Pronation twist: rotation about the long axis, growing toe-ward.
        6 => {
            let strength = xi - 0.35;
            Vector3::new(0.0, -p.z / 0.065 * strength, p.y / 0.053 * strength) * 0.6
        }
        // Toe-box lift.
        7 => Vector3::new(0.0, 0.0, gauss_bump(xi, 0.92, 0.10)),
        _ => panic!("basis index {k} out of range"),
    }
}

/// Coefficients of one footoid: `w` weights the basis fields (|w_k| <= 3),
/// `scale` is a global similarity factor.
#[derive(Clone, Debug, PartialEq)]
pub struct FootoidParams {
    w: Vec<f64>,
    scale: f64,
}

impl FootoidParams {
    pub fn new(w: Vec<f64>, scale: f64) -> Result<Self> {
        if w.len() != GENERATIVE_MODES {
            return Err(Error::InvalidInput(format!(
                "expected {GENERATIVE_MODES} coefficients, got {}",
                w.len()
            )));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite() || v.abs() > 3.0) {
            return Err(Error::InvalidInput(format!(
                "coefficient {bad} outside the +-3 prior range"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("scale must be positive, got {scale}")));
        }
        Ok(FootoidParams { w, scale })
    }

    /// Bypasses the prior-range validation; synthesis still runs the
    /// geometric self-intersection check.
    pub fn new_unchecked(w: Vec<f64>, scale: f64) -> Self {
        FootoidParams { w, scale }
    }

    pub fn zero() -> Self {
        FootoidParams {
            w: vec![0.0; GENERATIVE_MODES],
            scale: 1.0,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.w
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// A synthesized footoid: parameters plus the deformed mesh (template
/// topology, per-vertex correspondence by index).
#[derive(Clone, Debug)]
pub struct FootoidSample {
    pub params: FootoidParams,
    pub mesh: TriangleMesh,
}

/// Deformed vertex positions for the given coefficients (scale applied).
pub fn deformed_vertices(params: &FootoidParams) -> Vec<Point3<f64>> {
    let template = template_mesh();
    template
        .vertices
        .iter()
        .map(|p| {
            let mut disp = Vector3::zeros();
            for (k, &wk) in params.w.iter().enumerate() {
                disp += basis_field(k, p) * (wk * MODE_STDDEVS[k]);
            }
            Point3::from((p.coords + disp) * params.scale)
        })
        .collect()
}

/// Exact edge-vs-triangle intersection test between two triangles.
fn triangles_intersect(a: &[Point3<f64>; 3], b: &[Point3<f64>; 3]) -> bool {
    let edge_hits = |t1: &[Point3<f64>; 3], t2: &[Point3<f64>; 3]| -> bool {
        for k in 0..3 {
            let origin = t1[k];
            let dir = t1[(k + 1) % 3] - t1[k];
            if let Some(t) = crate::scanner::ray_triangle(&origin, &dir, &t2[0], &t2[1], &t2[2])
            {
                if t < 1.0 - 1e-9 {
                    return true;
                }
            }
        }
        false
    };
    edge_hits(a, b) || edge_hits(b, a)
}

/// Self-intersection detection: bin faces into a uniform grid and run
/// exact edge-triangle tests between non-adjacent faces sharing a cell.
pub fn has_self_intersection(mesh: &TriangleMesh) -> bool {
    let (lo, hi) = mesh.bounding_box();
    let extent = hi - lo;
    let cell = (extent.norm() / 40.0).max(1e-9);
    let dims = [
        ((extent.x / cell).ceil() as usize).max(1),
        ((extent.y / cell).ceil() as usize).max(1),
        ((extent.z / cell).ceil() as usize).max(1),
    ];
    let index = |p: &Point3<f64>| -> [usize; 3] {
        [
            (((p.x - lo.x) / cell) as usize).min(dims[0] - 1),
            (((p.y - lo.y) / cell) as usize).min(dims[1] - 1),
            (((p.z - lo.z) / cell) as usize).min(dims[2] - 1),
        ]
    };
    let mut cells: std::collections::HashMap<[usize; 3], Vec<u32>> = std::collections::HashMap::new();
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.triangle(f);
        let clo = index(&Point3::new(
            a.x.min(b.x).min(c.x),
            a.y.min(b.y).min(c.y),
            a.z.min(b.z).min(c.z),
        ));
        let chi = index(&Point3::new(
            a.x.max(b.x).max(c.x),
            a.y.max(b.y).max(c.y),
            a.z.max(b.z).max(c.z),
        ));
        for i in clo[0]..=chi[0] {
            for j in clo[1]..=chi[1] {
                for k in clo[2]..=chi[2] {
                    cells.entry([i, j, k]).or_default().push(f as u32);
                }
            }
        }
    }
    let shares_vertex = |f: usize, g: usize| -> bool {
        let fa = mesh.faces[f];
        let fb = mesh.faces[g];
        fa.iter().any(|v| fb.contains(v))
    };
    let mut tested = std::collections::HashSet::new();
    for faces in cells.values() {
        for (i, &f) in faces.iter().enumerate() {
            for &g in &faces[i + 1..] {
                let key = (f.min(g), f.max(g));
                if !tested.insert(key) || shares_vertex(f as usize, g as usize) {
                    continue;
                }
                if triangles_intersect(&mesh.triangle(f as usize), &mesh.triangle(g as usize)) {
                    return true;
                }
            }
        }
    }
    false
}

/// Synthesize a footoid; fails with `DegenerateShape` when the deformed
/// surface self-intersects.
pub fn synthesize(params: &FootoidParams) -> Result<FootoidSample> {
    let template = template_mesh();
    let vertices = deformed_vertices(params);
    let mesh = TriangleMesh::new(vertices, template.faces)?;
    if has_self_intersection(&mesh) {
        return Err(Error::DegenerateShape);
    }
    Ok(FootoidSample {
        params: params.clone(),
        mesh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn zero_coefficients_give_the_template() {
        let sample = synthesize(&FootoidParams::zero()).unwrap();
        let template = template_mesh();
        assert_eq!(sample.mesh.vertices, template.vertices);
        assert_eq!(sample.mesh.faces, template.faces);
    }

    #[test]
    fn synthesis_is_affine_in_coefficients() {
        let mut rng = Rng::seed_from_u64(1);
        let draw = |rng: &mut Rng| -> Vec<f64> {
            (0..GENERATIVE_MODES).map(|_| rng.uniform_in(-1.5, 1.5)).collect()
        };
        let w1 = draw(&mut rng);
        let w2 = draw(&mut rng);
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let v1 = deformed_vertices(&FootoidParams::new_unchecked(w1, 1.0));
        let v2 = deformed_vertices(&FootoidParams::new_unchecked(w2, 1.0));
        let vs = deformed_vertices(&FootoidParams::new_unchecked(sum, 1.0));
        let template = template_mesh();
        for i in 0..vs.len() {
            let expect = v1[i].coords + v2[i].coords - template.vertices[i].coords;
            assert!((vs[i].coords - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn random_valid_coefficients_stay_watertight_and_clean() {
        let mut rng = Rng::seed_from_u64(2);
        for seed in 0..100 {
            let w: Vec<f64> = (0..GENERATIVE_MODES)
                .map(|_| (rng.gaussian()).clamp(-3.0, 3.0))
                .collect();
            let params = FootoidParams::new(w, 1.0).unwrap();
            let sample = synthesize(&params)
                .unwrap_or_else(|e| panic!("seed {seed}: synthesis failed: {e}"));
            assert!(sample.mesh.is_watertight());
            assert_eq!(sample.mesh.euler_characteristic(), 2);
        }
    }

    #[test]
    fn coefficient_range_is_enforced() {
        let mut w = vec![0.0; GENERATIVE_MODES];
        w[3] = 3.5;
        assert!(FootoidParams::new(w, 1.0).is_err());
        assert!(FootoidParams::new(vec![0.0; 4], 1.0).is_err());
        assert!(FootoidParams::new(vec![0.0; GENERATIVE_MODES], -1.0).is_err());
    }

    #[test]
    fn extreme_coefficients_self_intersect_and_are_rejected() {
        // Far outside the prior the heel inflation mode turns the heel
        // inside out.
        let mut w = vec![0.0; GENERATIVE_MODES];
        w[4] = -60.0;
        let params = FootoidParams::new_unchecked(w, 1.0);
        match synthesize(&params) {
            Err(Error::DegenerateShape) => {}
            other => panic!("expected DegenerateShape, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn scale_is_applied_globally() {
        let params = FootoidParams::new(vec![0.0; GENERATIVE_MODES], 1.2).unwrap();
        let sample = synthesize(&params).unwrap();
        let template = template_mesh();
        for (v, t) in sample.mesh.vertices.iter().zip(template.vertices.iter()) {
            assert!((v.coords - t.coords * 1.2).norm() < 1e-12);
        }
    }
}
