//! Chamfer and Hausdorff distances between clouds, plus the metrics CSV.
//!
//! ```bash
//! cargo run --release --example evaluate_metrics
//! ```

use solescan::io::{write_metrics_csv, MetricsRow};
use solescan::metrics::{chamfer, hausdorff};
use solescan::rng::Rng;
use solescan::shapegen::sample_dataset;

fn main() -> solescan::Result<()> {
    let shapes = sample_dataset(2, 8)?;
    let a = shapes[0].mesh.sample_surface(4096, 1);
    let b = shapes[1].mesh.sample_surface(4096, 2);

    let self_cd = chamfer(&a, &a, false)?;
    println!("cd(A, A) = {} (identity)", self_cd.cd);

    let report = chamfer(&a, &b, false)?;
    println!(
        "cd(A, B) = {:.3} mm (directed {:.3} + {:.3})",
        1000.0 * report.cd,
        1000.0 * report.directed_pq,
        1000.0 * report.directed_qp
    );
    println!("hd(A, B) = {:.3} mm", 1000.0 * hausdorff(&a, &b)?);

    // Noise sensitivity: CD grows with perturbation scale.
    let mut rng = Rng::seed_from_u64(3);
    for sigma in [0.0005, 0.002, 0.008] {
        let noisy = solescan::geom::PointCloud::new(
            a.points
                .iter()
                .map(|p| {
                    nalgebra::Point3::new(
                        p.x + sigma * rng.gaussian(),
                        p.y + sigma * rng.gaussian(),
                        p.z + sigma * rng.gaussian(),
                    )
                })
                .collect(),
        )?;
        println!(
            "cd(A, A + noise {:.1} mm) = {:.3} mm",
            1000.0 * sigma,
            1000.0 * chamfer(&a, &noisy, false)?.cd
        );
    }

    let out = std::env::temp_dir().join("solescan_example_metrics.csv");
    write_metrics_csv(
        &[MetricsRow::new("a_vs_b", report.cd, hausdorff(&a, &b)?)],
        &out,
    )?;
    println!("csv written to {}", out.display());
    Ok(())
}
