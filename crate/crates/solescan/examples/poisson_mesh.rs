//! Estimate normals for an unoriented cloud and reconstruct a watertight
//! mesh with screened Poisson.
//!
//! ```bash
//! cargo run --release --example poisson_mesh
//! ```

use solescan::geom::{point_mesh_distance, PointCloud};
use solescan::io::{write_mesh, PlyFormat};
use solescan::meshing::{estimate_normals, poisson_reconstruct, PoissonParams};
use solescan::shapegen::template_mesh;

fn main() -> solescan::Result<()> {
    let gt = template_mesh();
    let bare = PointCloud::new(gt.sample_surface(20_000, 1).points)?;
    println!("input: {} unoriented points", bare.len());

    let oriented = estimate_normals(&bare, 16, None)?;
    let output = poisson_reconstruct(&oriented, &PoissonParams::default())?;
    println!(
        "poisson: {} vertices, {} faces, watertight: {}, CG {} iterations (residual {:.1e})",
        output.mesh.vertex_count(),
        output.mesh.face_count(),
        output.mesh.is_watertight(),
        output.stats.iterations,
        output.stats.relative_residual
    );

    // Surface error of the reconstruction against the ground truth.
    let probe = output.mesh.sample_surface(2000, 2);
    let mut worst = 0.0f64;
    let mut mean = 0.0;
    for p in &probe.points {
        let d = point_mesh_distance(p, &gt);
        worst = worst.max(d);
        mean += d;
    }
    mean /= probe.len() as f64;
    println!(
        "reconstruction error vs ground truth: mean {:.2} mm, worst {:.2} mm",
        1000.0 * mean,
        1000.0 * worst
    );

    let out = std::env::temp_dir().join("solescan_example_poisson.ply");
    write_mesh(&output.mesh, &out, PlyFormat::BinaryLittleEndian)?;
    println!("mesh written to {}", out.display());
    Ok(())
}
