//! Measure chamfer floors for perfect completions (dev tool).
use solescan::completion::resample_points;
use solescan::geom::PointCloud;
use solescan::metrics::chamfer;
use solescan::scanner::{virtual_scan, RigSpec, ScanNoise};
use solescan::shapegen::sample_dataset;
use nalgebra::Point3;

fn main() {
    let shapes = sample_dataset(6, 999).unwrap();
    let mut floors = vec![0.0; 3];
    let mut partial_cd = 0.0;
    for (i, s) in shapes.iter().enumerate() {
        let gt = s.mesh.sample_surface(8192, 3);
        for (j, n) in [1024usize, 2048, 4096].into_iter().enumerate() {
            // A perfect completion: n on-surface points, well spread.
            let ideal = PointCloud::new(resample_points(
                &s.mesh.sample_surface(4 * n, 7).points, n, 0,
            )).unwrap();
            floors[j] += chamfer(&ideal, &gt, false).unwrap().cd / shapes.len() as f64;
        }
        let (lo, hi) = s.mesh.bounding_box();
        let t = Point3::from((lo.coords + hi.coords) / 2.0);
        let mut spec = RigSpec::default_for_target(t, 90.0);
        spec.n_views = 6; spec.image_width = 128; spec.image_height = 128;
        spec.focal_px = 170.0; spec.per_view_budget = 512;
        let (partial, _) = virtual_scan(&s.mesh, &spec, &ScanNoise::none(i as u64), None).unwrap();
        let prs = PointCloud::new(resample_points(&partial.points, 2048, 0)).unwrap();
        partial_cd += chamfer(&prs, &gt, false).unwrap().cd / shapes.len() as f64;
    }
    println!("ideal-completion floors: 1024 pts {:.2} mm | 2048 pts {:.2} mm | 4096 pts {:.2} mm",
        1000.0 * floors[0], 1000.0 * floors[1], 1000.0 * floors[2]);
    println!("plantar-occluded partial (resampled 2048) cd: {:.2} mm", 1000.0 * partial_cd);
    println!("required for ratio 0.7: completed cd <= {:.2} mm", 700.0 * partial_cd);
}
