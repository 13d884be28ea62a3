//! Render a virtual depth scan of a footoid and write the bundle.
//!
//! ```bash
//! cargo run --release --example virtual_scan
//! ```

use nalgebra::Point3;
use solescan::scanner::{virtual_scan, write_scan_bundle, RigSpec, ScanBundle, ScanNoise};
use solescan::shapegen::template_mesh;

fn main() -> solescan::Result<()> {
    let mesh = template_mesh();
    let (lo, hi) = mesh.bounding_box();
    let target = Point3::from((lo.coords + hi.coords) / 2.0);

    for theta in [60.0, 90.0, 180.0] {
        let spec = RigSpec::default_for_target(target, theta);
        let noise = ScanNoise {
            depth_sigma: 0.0005,
            dropout_rate: 0.02,
            vpp_rot_sigma_deg: 0.5,
            vpp_trans_sigma: 0.002,
            seed: 7,
        };
        let (cloud, views) = virtual_scan(&mesh, &spec, &noise, None)?;
        // Coverage: fraction of dense surface samples near a scan point.
        let dense = mesh.sample_surface(10_000, 1);
        let tree = solescan::geom::KdTree::build(&cloud.points)?;
        // Coverage radius ~2 scan-point spacings.
        let eps = 0.003;
        let covered = dense
            .points
            .iter()
            .filter(|p| tree.nearest(p).1 < eps)
            .count() as f64
            / dense.len() as f64;
        println!(
            "theta_max {theta:>5.1} deg: {} points from {} views, surface coverage {:.1}%",
            cloud.len(),
            views.len(),
            100.0 * covered
        );
        if theta == 90.0 {
            let out = std::env::temp_dir().join("solescan_example_bundle");
            write_scan_bundle(&ScanBundle { cloud, views }, &out)?;
            println!("  bundle written to {}", out.display());
        }
    }
    Ok(())
}
