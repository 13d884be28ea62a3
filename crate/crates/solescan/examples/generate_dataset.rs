//! Generate a footoid dataset and inspect its shape statistics.
//!
//! ```bash
//! cargo run --release --example generate_dataset
//! ```

use solescan::shapegen::{sample_dataset, template_mesh, write_dataset, MODE_NAMES};

fn main() -> solescan::Result<()> {
    let out = std::env::temp_dir().join("solescan_example_dataset");
    let n = 20;
    let samples = sample_dataset(n, 42)?;
    write_dataset(&samples, &out)?;

    let template = template_mesh();
    println!(
        "template: {} vertices, {} faces, watertight: {}",
        template.vertex_count(),
        template.face_count(),
        template.is_watertight()
    );
    let (lo, hi) = template.bounding_box();
    println!("template bbox: {:.3} x {:.3} x {:.3} m", hi.x - lo.x, hi.y - lo.y, hi.z - lo.z);

    for (k, name) in MODE_NAMES.iter().enumerate() {
        let mean: f64 =
            samples.iter().map(|s| s.params.coefficients()[k]).sum::<f64>() / n as f64;
        println!("mode {k} ({name}): sample mean {mean:+.3}");
    }
    println!("dataset written to {}", out.display());
    Ok(())
}
