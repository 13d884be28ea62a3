//! The full pipeline at desk scale: dataset, scrambled partial scan,
//! canonicalization, completion training, inference, Poisson meshing, and
//! evaluation — all in one sitting.
//!
//! ```bash
//! cargo run --release --example end_to_end
//! ```

use nalgebra::Point3;
use solescan::align::{canonicalize, CanonicalizeOptions, IcpParams};
use solescan::completion::{complete, train, CompletionConfig, CompletionModel, TrainOptions};
use solescan::metrics::{chamfer, hausdorff};
use solescan::meshing::{poisson_reconstruct, PoissonParams};
use solescan::rng::Rng;
use solescan::scanner::{random_sim3, virtual_scan, AugmentConfig, RigSpec, ScanNoise};
use solescan::shapegen::{sample_dataset, template_landmarks, template_mesh};

fn rig(target: Point3<f64>, theta: f64, views: usize) -> RigSpec {
    let mut spec = RigSpec::default_for_target(target, theta);
    spec.n_views = views;
    spec.image_width = 160;
    spec.image_height = 160;
    spec.focal_px = 220.0;
    spec.per_view_budget = 1024;
    spec
}

fn main() -> solescan::Result<()> {
    // 1. Shapes with exact ground truth.
    let shapes = sample_dataset(10, 3)?;
    let (train_shapes, test_shape) = shapes.split_at(9);
    let gt_mesh = &test_shape[0].mesh;
    println!("[1/6] {} training footoids + 1 held-out", train_shapes.len());

    // 2. Train a small completion network on plantar-occluded scans.
    let cfg = CompletionConfig {
        n_in: 256,
        n_scaffold: 48,
        n_gen_coarse: 48,
        n_fine: 768,
        latent_dim: 48,
        n_heads: 4,
        n_encoder_blocks: 1,
        n_refine_blocks: 1,
        seed: 0,
    };
    let pairs: Vec<_> = train_shapes
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let (lo, hi) = s.mesh.bounding_box();
            let target = Point3::from((lo.coords + hi.coords) / 2.0);
            [(90.0, 2 * i), (150.0, 2 * i + 1)].map(|(theta, seed)| {
                let (cloud, _) =
                    virtual_scan(&s.mesh, &rig(target, theta, 6), &ScanNoise::none(seed as u64), None)
                        .unwrap();
                (cloud, s.mesh.clone())
            })
        })
        .collect();
    let mut model = CompletionModel::init(&cfg)?;
    let report = train(
        &pairs,
        &mut model,
        &TrainOptions {
            epochs: 25,
            batch_size: 4,
            lr: 2e-3,
            seed: 1,
            ..Default::default()
        },
    )?;
    println!(
        "[2/6] trained {} steps in {:.1}s (best epoch loss {:.2e})",
        report.step_count, report.wall_seconds, report.best_epoch_loss
    );

    // 3. A scrambled partial scan of the held-out foot.
    let template = template_mesh();
    let landmarks = template_landmarks();
    let (lo, hi) = gt_mesh.bounding_box();
    let target = Point3::from((lo.coords + hi.coords) / 2.0);
    let mut rng = Rng::seed_from_u64(17);
    let scramble = random_sim3(
        &mut rng,
        &AugmentConfig::default(),
        gt_mesh.bounding_diagonal(),
    );
    let noise = ScanNoise {
        depth_sigma: 0.0005,
        dropout_rate: 0.01,
        vpp_rot_sigma_deg: 1.0,
        vpp_trans_sigma: 0.003,
        seed: 5,
    };
    let (partial, views) = virtual_scan(gt_mesh, &rig(target, 90.0, 10), &noise, Some(&scramble))?;
    println!(
        "[3/6] scrambled plantar-occluded scan: {} points (scale {:.2}, rot {:.0} deg)",
        partial.len(),
        scramble.scale,
        scramble.rotation.angle().to_degrees()
    );

    // 4. Canonicalize against the template.
    let aligned = canonicalize(
        &template,
        &landmarks,
        &views,
        &partial,
        &IcpParams::default(),
        &CanonicalizeOptions::default(),
    )?;
    let inv_err = aligned.composed.compose(&scramble).deviation_from_identity();
    println!(
        "[4/6] canonicalized: inverse-scramble error rot {:.1e} rad, |t| {:.1e} m, lnS {:.1e}",
        inv_err.0, inv_err.1, inv_err.2
    );

    // 5. Complete and mesh.
    let completed = complete(&model, &aligned.aligned)?;
    let with_normals = solescan::meshing::estimate_normals(&completed, 16, None)?;
    let recon = poisson_reconstruct(&with_normals, &PoissonParams::default())?;
    println!(
        "[5/6] completed {} points -> mesh with {} faces (watertight: {})",
        completed.len(),
        recon.mesh.face_count(),
        recon.mesh.is_watertight()
    );

    // 6. Evaluate everything against the canonical-frame ground truth.
    let gt_aligned = gt_mesh
        .transformed(&aligned.composed)
        .sample_surface(8192, 0);
    let partial_cd = chamfer(&aligned.aligned, &gt_aligned, false)?.cd;
    let completed_cd = chamfer(&completed, &gt_aligned, false)?.cd;
    let mesh_cd = chamfer(&recon.mesh.sample_surface(8192, 1), &gt_aligned, false)?.cd;
    println!(
        "[6/6] cd vs ground truth: partial {:.2} mm | completed {:.2} mm | meshed {:.2} mm | hd {:.2} mm",
        1000.0 * partial_cd,
        1000.0 * completed_cd,
        1000.0 * mesh_cd,
        1000.0 * hausdorff(&completed, &gt_aligned)?
    );
    Ok(())
}
