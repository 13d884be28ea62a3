//! Build the PCA shape model and fit it to a target cloud by Adam on the
//! squared Chamfer distance.
//!
//! ```bash
//! cargo run --release --example pca_baseline
//! ```

use solescan::metrics::chamfer;
use solescan::shapegen::{build_pca, fit_pca, sample_dataset, FitOptions};

fn main() -> solescan::Result<()> {
    let train = sample_dataset(24, 11)?;
    let model = build_pca(&train, 8)?;
    println!(
        "pca model: {} vertices, {} modes, stddevs {:?}",
        model.vertex_count(),
        model.mode_count(),
        model
            .mode_stddevs
            .iter()
            .map(|s| format!("{s:.4}"))
            .collect::<Vec<_>>()
    );

    // Fit to a held-out shape.
    let held_out = sample_dataset(30, 77)?.pop().unwrap();
    let target = held_out.mesh.sample_surface(6000, 2);
    let opts = FitOptions {
        steps: 300,
        lr: 0.02,
        ..Default::default()
    };
    let fit = fit_pca(&model, &target, &opts)?;
    println!(
        "fit: final sampled cd {:.2} mm after {} steps (loss {:.2e} -> {:.2e})",
        1000.0 * fit.final_cd,
        fit.loss_trace.len(),
        fit.loss_trace.first().unwrap(),
        fit.loss_trace.last().unwrap()
    );

    // Compare fitted surface against the true surface.
    let fitted = fit.fitted_mesh.transformed(&fit.pose);
    let cd = chamfer(
        &fitted.sample_surface(8000, 5),
        &held_out.mesh.sample_surface(8000, 5),
        false,
    )?
    .cd;
    println!("fitted-surface vs true-surface cd: {:.2} mm", 1000.0 * cd);
    Ok(())
}
