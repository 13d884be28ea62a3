//! Robustness to partial views: completion error as a function of the
//! maximum camera angle, with the CSV + SVG outputs.
//!
//! ```bash
//! cargo run --release --example angle_sweep
//! ```

use nalgebra::Point3;
use solescan::completion::{complete, train, CompletionConfig, CompletionModel, TrainOptions};
use solescan::io::{write_line_chart, write_metrics_csv, MetricsRow};
use solescan::metrics::chamfer;
use solescan::scanner::{virtual_scan, RigSpec, ScanNoise};
use solescan::shapegen::sample_dataset;

fn rig(target: Point3<f64>, theta: f64) -> RigSpec {
    let mut spec = RigSpec::default_for_target(target, theta);
    spec.n_views = 8;
    spec.image_width = 128;
    spec.image_height = 128;
    spec.focal_px = 170.0;
    spec.per_view_budget = 600;
    spec
}

fn main() -> solescan::Result<()> {
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
    let shapes = sample_dataset(12, 50)?;
    let (train_shapes, test_shapes) = shapes.split_at(9);

    let pairs: Vec<_> = train_shapes
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let (lo, hi) = s.mesh.bounding_box();
            let t = Point3::from((lo.coords + hi.coords) / 2.0);
            [60.0, 90.0, 150.0].map(|theta| {
                let (cloud, _) =
                    virtual_scan(&s.mesh, &rig(t, theta), &ScanNoise::none(i as u64), None).unwrap();
                (cloud, s.mesh.clone())
            })
        })
        .collect();
    let mut model = CompletionModel::init(&cfg)?;
    train(
        &pairs,
        &mut model,
        &TrainOptions {
            epochs: 25,
            batch_size: 4,
            lr: 2e-3,
            seed: 2,
            ..Default::default()
        },
    )?;
    println!("model trained on {} pairs", pairs.len());

    let angles = [30.0, 60.0, 90.0, 120.0, 180.0];
    let mut rows = Vec::new();
    let mut chart = Vec::new();
    for theta in angles {
        let mut sum = 0.0;
        for (i, s) in test_shapes.iter().enumerate() {
            let (lo, hi) = s.mesh.bounding_box();
            let t = Point3::from((lo.coords + hi.coords) / 2.0);
            let (partial, _) =
                virtual_scan(&s.mesh, &rig(t, theta), &ScanNoise::none(800 + i as u64), None)?;
            let completed = complete(&model, &partial)?;
            let gt = s.mesh.sample_surface(8192, 0);
            sum += chamfer(&completed, &gt, false)?.cd;
        }
        let mean = sum / test_shapes.len() as f64;
        println!("theta_max {theta:>5.0} deg: mean completed cd {:.2} mm", 1000.0 * mean);
        rows.push(MetricsRow::new(format!("theta_{theta}"), mean, f64::NAN).with_extra("angle", theta));
        chart.push((theta, mean));
    }

    let dir = std::env::temp_dir().join("solescan_example_sweep");
    std::fs::create_dir_all(&dir).ok();
    write_metrics_csv(&rows, dir.join("sweep.csv"))?;
    write_line_chart(
        &chart,
        "max viewing angle (deg)",
        "mean chamfer distance (m)",
        "completion error vs scan coverage",
        dir.join("sweep.svg"),
    )?;
    println!("csv + svg written to {}", dir.display());
    Ok(())
}
