//! Scramble a scan with a random similarity and undo it with the
//! landmark + Procrustes + ICP canonicalization.
//!
//! ```bash
//! cargo run --release --example canonicalize_scan
//! ```

use nalgebra::Point3;
use solescan::align::{canonicalize, CanonicalizeOptions, IcpParams};
use solescan::rng::Rng;
use solescan::scanner::{random_sim3, virtual_scan, AugmentConfig, RigSpec, ScanNoise};
use solescan::shapegen::{template_landmarks, template_mesh};

fn main() -> solescan::Result<()> {
    let mesh = template_mesh();
    let landmarks = template_landmarks();
    let (lo, hi) = mesh.bounding_box();
    let target = Point3::from((lo.coords + hi.coords) / 2.0);
    let diag = mesh.bounding_diagonal();

    let mut rng = Rng::seed_from_u64(9);
    let scramble = random_sim3(
        &mut rng,
        &AugmentConfig {
            rot_bound_deg: None,
            scale_range: (0.8, 1.25),
            shift_frac: 0.5,
        },
        diag,
    );
    println!(
        "scramble: scale {:.3}, rotation {:.1} deg, shift {:.3} m",
        scramble.scale,
        scramble.rotation.angle().to_degrees(),
        scramble.translation.norm()
    );

    let mut spec = RigSpec::default_for_target(target, 180.0);
    spec.n_views = 12;
    let noise = ScanNoise {
        depth_sigma: 0.001,
        dropout_rate: 0.0,
        vpp_rot_sigma_deg: 1.0,
        vpp_trans_sigma: 0.003,
        seed: 4,
    };
    let (partial, views) = virtual_scan(&mesh, &spec, &noise, Some(&scramble))?;
    println!("scan: {} points in the scrambled frame", partial.len());

    let result = canonicalize(
        &mesh,
        &landmarks,
        &views,
        &partial,
        &IcpParams::default(),
        &CanonicalizeOptions::default(),
    )?;
    let residual = result.composed.compose(&scramble);
    let (rot, tr, ls) = residual.deviation_from_identity();
    println!(
        "recovered inverse: rotation error {:.2e} rad, translation {:.2e} diag, log-scale {:.2e}",
        rot,
        tr / diag,
        ls
    );
    for (label, (res, views)) in landmarks.labels.iter().zip(
        result
            .per_landmark_residual
            .iter()
            .zip(&result.views_used_per_landmark),
    ) {
        println!("  landmark {label:<13} residual {res:.2e} m from {views} views");
    }
    println!(
        "icp: rms {:.2e} after {} iterations",
        result.icp_rms, result.icp_iterations
    );
    Ok(())
}
