//! Overfit-speed probe on a few fixed pairs (dev tool).
use nalgebra::Point3;
use solescan::completion::{train, CompletionConfig, CompletionModel, TrainOptions};
use solescan::scanner::{virtual_scan, RigSpec, ScanNoise};
use solescan::shapegen::sample_dataset;

fn main() {
    let cfg = CompletionConfig {
        n_in: 256,
        n_scaffold: 64,
        n_gen_coarse: 64,
        n_fine: 2048,
        latent_dim: 64,
        n_heads: 4,
        n_encoder_blocks: 2,
        n_refine_blocks: 1,
        seed: 0,
    };
    let shapes = sample_dataset(8, 11).unwrap();
    let pairs: Vec<_> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (lo, hi) = s.mesh.bounding_box();
            let t = Point3::from((lo.coords + hi.coords) / 2.0);
            let mut spec = RigSpec::default_for_target(t, 90.0);
            spec.n_views = 6;
            spec.image_width = 128;
            spec.image_height = 128;
            spec.focal_px = 170.0;
            spec.per_view_budget = 512;
            let (c, _) = virtual_scan(&s.mesh, &spec, &ScanNoise::none(i as u64), None).unwrap();
            (c, s.mesh.clone())
        })
        .collect();

    for lr in [1e-2f64, 3e-3, 1e-3] {
        let mut model = CompletionModel::init(&cfg).unwrap();
        let opts = TrainOptions {
            epochs: 100,
            batch_size: 8,
            lr,
            lr_floor_frac: 1.0,
            seed: 3,
            deterministic: false,
            ..Default::default()
        };
        let report = train(&pairs, &mut model, &opts).unwrap();
        let s = &report.steps;
        let pick = |i: usize| s.get(i).map(|v| v.0).unwrap_or(f64::NAN);
        println!(
            "lr {lr:.0e}: steps {} | loss {:.3e} -> {:.3e} (25) -> {:.3e} (50) -> {:.3e} (99) | coarse {:.2e} fine {:.2e}",
            s.len(),
            pick(0),
            pick(25),
            pick(50),
            pick(99),
            s.last().unwrap().1,
            s.last().unwrap().2
        );
    }
}
