//! Single-pair training throughput for candidate configs (dev tool).
use nalgebra::Point3;
use solescan::completion::{loss_and_grads, resample_input, CompletionConfig, CompletionModel};
use solescan::scanner::{virtual_scan, RigSpec, ScanNoise};
use solescan::shapegen::sample_dataset;
use std::time::Instant;

fn main() {
    let shape = &sample_dataset(1, 3).unwrap()[0];
    let (lo, hi) = shape.mesh.bounding_box();
    let t = Point3::from((lo.coords + hi.coords) / 2.0);
    let mut spec = RigSpec::default_for_target(t, 90.0);
    spec.n_views = 6;
    spec.image_width = 128;
    spec.image_height = 128;
    spec.focal_px = 170.0;
    spec.per_view_budget = 512;
    let (partial, _) = virtual_scan(&shape.mesh, &spec, &ScanNoise::none(1), None).unwrap();

    let mk = |n_in, nsc, ngc, n_fine, d, e, r| CompletionConfig {
        n_in,
        n_scaffold: nsc,
        n_gen_coarse: ngc,
        n_fine,
        latent_dim: d,
        n_heads: 4,
        n_encoder_blocks: e,
        n_refine_blocks: r,
        seed: 0,
    };
    for (tag, cfg) in [
        ("A in192 d48 e1 r1 f2048", mk(192, 64, 64, 2048, 48, 1, 1)),
        ("B in256 d64 e2 r1 f2048", mk(256, 64, 64, 2048, 64, 2, 1)),
        ("C in256 d64 e2 r1 f1024", mk(256, 64, 64, 1024, 64, 2, 1)),
        ("D in384 d64 e2 r2 f2048", mk(384, 128, 128, 2048, 64, 2, 2)),
    ] {
        let model = CompletionModel::init(&cfg).unwrap();
        let (input, norm) = resample_input(&partial, cfg.n_in, 0).unwrap();
        let gt: Vec<_> = shape
            .mesh
            .sample_surface(cfg.n_fine, 5)
            .points
            .iter()
            .map(|p| norm.normalize(p))
            .collect();
        let _ = loss_and_grads::<f32>(&model, &input, &gt).unwrap();
        let t0 = Instant::now();
        let reps = 10;
        for _ in 0..reps {
            let _ = loss_and_grads::<f32>(&model, &input, &gt).unwrap();
        }
        let per = t0.elapsed().as_secs_f64() / reps as f64;
        println!(
            "{tag}: {:.0} ms/pair-eval -> {:.0} evals/min",
            1000.0 * per,
            60.0 / per
        );
    }
}
