//! Train a small completion network on plantar-occluded footoid scans and
//! measure how far completion beats the raw partials.
//!
//! ```bash
//! cargo run --release --example train_completion
//! ```

use nalgebra::Point3;
use solescan::completion::{
    complete, resample_points, train, CompletionConfig, CompletionModel, TrainOptions,
};
use solescan::geom::PointCloud;
use solescan::metrics::chamfer;
use solescan::scanner::{virtual_scan, RigSpec, ScanNoise};
use solescan::shapegen::sample_dataset;

fn scan_of(mesh: &solescan::geom::TriangleMesh, theta: f64, seed: u64) -> (PointCloud, Point3<f64>) {
    let (lo, hi) = mesh.bounding_box();
    let target = Point3::from((lo.coords + hi.coords) / 2.0);
    let mut spec = RigSpec::default_for_target(target, theta);
    spec.n_views = 6;
    spec.image_width = 128;
    spec.image_height = 128;
    spec.focal_px = 170.0;
    spec.per_view_budget = 512;
    let (cloud, _) = virtual_scan(mesh, &spec, &ScanNoise::none(seed), None).unwrap();
    (cloud, target)
}

fn main() -> solescan::Result<()> {
    let cfg = CompletionConfig {
        n_in: 384,
        n_scaffold: 64,
        n_gen_coarse: 64,
        n_fine: 1024,
        latent_dim: 48,
        n_heads: 4,
        n_encoder_blocks: 2,
        n_refine_blocks: 1,
        seed: 0,
    };
    let train_shapes = sample_dataset(12, 100)?;
    let test_shapes = sample_dataset(4, 200)?;

    let pairs: Vec<_> = train_shapes
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            [90.0, 150.0].into_iter().enumerate().map(move |(j, theta)| {
                let (cloud, _) = scan_of(&s.mesh, theta, (i * 10 + j) as u64);
                (cloud, s.mesh.clone())
            })
        })
        .collect();
    println!("training on {} pairs", pairs.len());

    let mut model = CompletionModel::init(&cfg)?;
    let opts = TrainOptions {
        epochs: 30,
        batch_size: 4,
        lr: 2e-3,
        seed: 5,
        ..Default::default()
    };
    let report = train(&pairs, &mut model, &opts)?;
    println!(
        "trained {} steps in {:.1}s, best epoch loss {:.3e}",
        report.step_count, report.wall_seconds, report.best_epoch_loss
    );

    let mut wins = 0;
    for (i, s) in test_shapes.iter().enumerate() {
        let (partial, _) = scan_of(&s.mesh, 90.0, 900 + i as u64);
        let completed = complete(&model, &partial)?;
        let gt = s.mesh.sample_surface(8192, 3);
        let partial_resampled =
            PointCloud::new(resample_points(&partial.points, cfg.n_fine, 0))?;
        let cd_partial = chamfer(&partial_resampled, &gt, false)?.cd;
        let cd_completed = chamfer(&completed, &gt, false)?.cd;
        if cd_completed < cd_partial {
            wins += 1;
        }
        println!(
            "test shape {i}: partial cd {:.2} mm, completed cd {:.2} mm",
            1000.0 * cd_partial,
            1000.0 * cd_completed
        );
    }
    println!("completion beat the partial on {wins}/{} shapes", test_shapes.len());
    Ok(())
}
