//! Training-efficacy calibration at fixture scale (dev tool).

use nalgebra::Point3;
use solescan::completion::{
    complete, resample_points, train, CompletionConfig, CompletionModel, TrainOptions,
};
use solescan::geom::PointCloud;
use solescan::metrics::chamfer;
use solescan::scanner::{augment, virtual_scan, AugmentConfig, RigSpec, ScanNoise};
use solescan::shapegen::sample_dataset;
use std::time::Instant;

fn rig(target: Point3<f64>, theta: f64) -> RigSpec {
    let mut spec = RigSpec::default_for_target(target, theta);
    spec.n_views = 6;
    spec.image_width = 128;
    spec.image_height = 128;
    spec.focal_px = 170.0;
    spec.per_view_budget = 512;
    spec
}

fn scan_mesh(mesh: &solescan::geom::TriangleMesh, theta: f64, seed: u64) -> Option<PointCloud> {
    let (lo, hi) = mesh.bounding_box();
    let t = Point3::from((lo.coords + hi.coords) / 2.0);
    virtual_scan(mesh, &rig(t, theta), &ScanNoise::none(seed), None)
        .ok()
        .map(|(c, _)| c)
}

fn main() {
    let t0 = Instant::now();
    let cfg = CompletionConfig {
        n_in: 256,
        n_scaffold: 32,
        n_gen_coarse: 224,
        n_fine: 2048,
        latent_dim: 48,
        n_heads: 4,
        n_encoder_blocks: 2,
        n_refine_blocks: 1,
        seed: 0,
    };
    let train_shapes = sample_dataset(40, 11).unwrap();
    let test_shapes = sample_dataset(12, 999).unwrap();

    let aug_cfg = AugmentConfig {
        rot_bound_deg: Some(20.0),
        scale_range: (0.9, 1.12),
        shift_frac: 0.05,
    };
    let noise_of = |seed: u64| ScanNoise {
        depth_sigma: 0.0015,
        dropout_rate: 0.05,
        vpp_rot_sigma_deg: 1.0,
        vpp_trans_sigma: 0.003,
        seed,
    };
    let mut pairs = Vec::new();
    for (i, s) in train_shapes.iter().enumerate() {
        for (ai, (_, am)) in augment(&s.mesh, 2, &aug_cfg, i as u64).unwrap().into_iter().enumerate() {
            for (si, theta) in [75.0, 90.0, 110.0, 150.0].iter().enumerate().take(2) {
                let seed = (i * 100 + ai * 10 + si) as u64;
                let (lo, hi) = am.bounding_box();
                let t = Point3::from((lo.coords + hi.coords) / 2.0);
                if let Ok((c, _)) = virtual_scan(&am, &rig(t, *theta), &noise_of(seed), None) {
                    pairs.push((c, am.clone()));
                }
            }
        }
    }
    println!("pairs: {} (prep {:.0}s)", pairs.len(), t0.elapsed().as_secs_f64());

    let mut model = CompletionModel::init(&cfg).unwrap();
    let lrs = [3e-3, 3e-3, 2e-3, 2e-3, 1.5e-3, 1e-3, 1e-3, 7e-4];
    for round in 0..8 {
        let opts = TrainOptions {
            epochs: 10,
            batch_size: 4,
            lr: lrs[round as usize],
            lr_floor_frac: 1.0,
            seed: round as u64,
            ..Default::default()
        };
        let rt = Instant::now();
        let report = train(&pairs, &mut model, &opts).unwrap();
        // Evaluate on held-out plantar-occluded scans.
        let mut wins = 0;
        let mut sum_p = 0.0;
        let mut sum_c = 0.0;
        let mut sum_c2g = 0.0;
        let mut sum_g2c = 0.0;
        for (i, s) in test_shapes.iter().enumerate() {
            let (lo, hi) = s.mesh.bounding_box();
            let t = Point3::from((lo.coords + hi.coords) / 2.0);
            let partial = virtual_scan(&s.mesh, &rig(t, 90.0), &ScanNoise {
                depth_sigma: 0.0015,
                dropout_rate: 0.05,
                vpp_rot_sigma_deg: 1.0,
                vpp_trans_sigma: 0.003,
                seed: 5000 + i as u64,
            }, None).unwrap().0;
            let completed = complete(&model, &partial).unwrap();
            let gt = s.mesh.sample_surface(8192, 3);
            let partial_rs = PointCloud::new(resample_points(&partial.points, cfg.n_fine, 0)).unwrap();
            let cd_p = chamfer(&partial_rs, &gt, false).unwrap().cd;
            let rep = chamfer(&completed, &gt, false).unwrap();
            if rep.cd < cd_p { wins += 1; }
            sum_p += cd_p;
            sum_c += rep.cd;
            sum_c2g += rep.directed_pq;
            sum_g2c += rep.directed_qp;
        }
        let last = report.steps.last().unwrap();
        println!(
            "round {round}: {} steps in {:.0}s, loss c {:.2e} f {:.2e} | wins {}/12, partial {:.2}mm, completed {:.2}mm (pred {:.2} + cover {:.2}), ratio {:.2}",
            report.step_count, rt.elapsed().as_secs_f64(), last.1, last.2,
            wins, 1000.0 * sum_p / 12.0, 1000.0 * sum_c / 12.0,
            1000.0 * sum_c2g / 12.0, 1000.0 * sum_g2c / 12.0, sum_c / sum_p
        );
    }
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
