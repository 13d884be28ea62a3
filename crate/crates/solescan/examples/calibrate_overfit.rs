//! Fine-stage learning diagnostics on a fixed-target overfit (dev tool).
use nalgebra::Point3;
use solescan::completion::{
    adam_step, forward, loss_and_grads, resample_input, AdamParams, AdamState, CompletionConfig,
    CompletionModel,
};
use solescan::geom::PointCloud;
use solescan::metrics::chamfer;
use solescan::scanner::{virtual_scan, RigSpec, ScanNoise};
use solescan::shapegen::template_mesh;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let up: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(16);
    let half = 384 / up / 2;
    let cfg = CompletionConfig {
        n_in: 96,
        n_scaffold: half,
        n_gen_coarse: half,
        n_fine: 384,
        latent_dim: 32,
        n_heads: 4,
        n_encoder_blocks: 1,
        n_refine_blocks: 1,
        seed: 0,
    };
    println!("up_ratio {}: scaffold/gen {half} each", cfg.up_ratio());
    let mesh = template_mesh();
    let (lo, hi) = mesh.bounding_box();
    let target = Point3::from((lo.coords + hi.coords) / 2.0);
    let mut spec = RigSpec::default_for_target(target, 90.0);
    spec.n_views = 6;
    spec.image_width = 128;
    spec.image_height = 128;
    spec.focal_px = 170.0;
    spec.per_view_budget = 400;
    let (partial, _) = virtual_scan(&mesh, &spec, &ScanNoise::none(3), None).unwrap();
    let (input, norm) = resample_input(&partial, cfg.n_in, 0).unwrap();
    let gt: Vec<Point3<f64>> = mesh
        .sample_surface(cfg.n_fine, 7)
        .points
        .iter()
        .map(|p| norm.normalize(p))
        .collect();
    let gt_cloud = PointCloud::new(gt.clone()).unwrap();

    let mut model = CompletionModel::init(&cfg).unwrap();
    let mut states: Vec<AdamState<f32>> = model
        .tensors
        .iter()
        .map(|(_, t)| AdamState::new(t.data.len()))
        .collect();
    let hp = AdamParams {
        lr: 3e-3,
        ..Default::default()
    };
    let states_index = |model: &CompletionModel, name: &str| -> usize {
        model
            .tensors
            .binary_search_by(|t| t.0.as_str().cmp(name))
            .unwrap()
    };
    for step in 0..1501 {
        if step % 250 == 0 {
            let (coarse, fine) = forward(&model, &input).unwrap();
            let up = cfg.up_ratio();
            let mut disp = 0.0;
            for (f, p) in fine.iter().enumerate() {
                disp += (p - coarse[f / up]).norm();
            }
            disp /= fine.len() as f64;
            let coarse_cloud = PointCloud::new(coarse).unwrap();
            let fine_cloud = PointCloud::new(fine).unwrap();
            let cd_c = chamfer(&coarse_cloud, &gt_cloud, false).unwrap().cd;
            let cd_f = chamfer(&fine_cloud, &gt_cloud, false).unwrap().cd;
            println!(
                "step {step:>5}: coarse cd {cd_c:.4}, fine cd {cd_f:.4}, mean |displacement| {disp:.4}"
            );
        }
        let (_, grads) = loss_and_grads::<f32>(&model, &input, &gt).unwrap();
        for (name, g) in &grads {
            let idx = states_index(&model, name);
            let t = model.tensor_mut(name);
            adam_step(t, g, &mut states[idx], &hp);
        }
    }
}
