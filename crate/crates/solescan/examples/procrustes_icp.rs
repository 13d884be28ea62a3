//! Alignment primitives: recover a known similarity with Umeyama, then a
//! rigid perturbation with trimmed ICP.
//!
//! ```bash
//! cargo run --release --example procrustes_icp
//! ```

use nalgebra::{Rotation3, Unit, Vector3};
use solescan::align::{icp, umeyama, IcpParams};
use solescan::geom::{apply_rigid, RigidTransform, Sim3Transform};
use solescan::rng::Rng;
use solescan::shapegen::template_mesh;

fn main() -> solescan::Result<()> {
    let mut rng = Rng::seed_from_u64(1);

    // Umeyama: exact recovery from correspondences.
    let source: Vec<_> = (0..10)
        .map(|_| {
            nalgebra::Point3::new(
                rng.uniform_in(-0.1, 0.1),
                rng.uniform_in(-0.1, 0.1),
                rng.uniform_in(-0.1, 0.1),
            )
        })
        .collect();
    let truth = Sim3Transform {
        scale: 1.18,
        rotation: Rotation3::from_axis_angle(&Unit::new_normalize(rng.unit_vector()), 0.9),
        translation: Vector3::new(0.2, -0.1, 0.05),
    };
    let target: Vec<_> = source.iter().map(|p| truth.apply_point(p)).collect();
    let recovered = umeyama(&source, &target, true)?;
    println!(
        "umeyama: scale error {:.2e}, rotation error {:.2e} rad, translation error {:.2e} m",
        (recovered.scale - truth.scale).abs(),
        (recovered.rotation.matrix() - truth.rotation.matrix()).abs().max(),
        (recovered.translation - truth.translation).norm()
    );

    // Trimmed ICP: recover a 8-degree rigid perturbation on the template.
    let mesh = template_mesh();
    let target_samples = mesh.sample_surface(50_000, 2);
    let perturb = RigidTransform::new(
        Rotation3::from_axis_angle(&Unit::new_normalize(rng.unit_vector()), 8f64.to_radians()),
        rng.unit_vector() * 0.02 * mesh.bounding_diagonal(),
    );
    let source_cloud = apply_rigid(&perturb, &mesh.sample_surface(4000, 3))?;
    let result = icp(
        &source_cloud,
        &target_samples,
        &IcpParams::default(),
        &RigidTransform::identity(),
    )?;
    let residual = result.transform.compose(&perturb);
    let (rot, tr, _) = residual.to_sim3().deviation_from_identity();
    println!(
        "icp: {} iterations, residual rotation {:.3} deg, translation {:.2e} m, rms {:.2e}",
        result.iterations,
        rot.to_degrees(),
        tr,
        result.rms
    );
    Ok(())
}
