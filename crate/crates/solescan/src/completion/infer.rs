//! Input normalization, the public forward pass, and end-to-end
//! completion.

use nalgebra::{Point3, Vector3};

use crate::autodiff::{Scalar, Tape, Tensor};
use crate::completion::model::{forward_on_tape, register_model, CompletionModel};
use crate::error::{Error, Result};
use crate::geom::{farthest_point_indices, PointCloud};
use crate::rng::Rng;

/// Centering and scaling applied before the network; invert to map
/// outputs back to the input frame.
#[derive(Clone, Copy, Debug)]
pub struct Normalizer {
    pub centroid: Point3<f64>,
    /// Bounding-sphere radius around the centroid.
    pub radius: f64,
}

impl Normalizer {
    pub fn fit(points: &[Point3<f64>]) -> Normalizer {
        let mut acc = Vector3::zeros();
        for p in points {
            acc += p.coords;
        }
        let centroid = Point3::from(acc / points.len().max(1) as f64);
        let radius = points
            .iter()
            .map(|p| (p - centroid).norm())
            .fold(0.0, f64::max)
            .max(1e-12);
        Normalizer { centroid, radius }
    }

    pub fn normalize(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((p - self.centroid) / self.radius)
    }

    pub fn denormalize(&self, p: &Point3<f64>) -> Point3<f64> {
        self.centroid + p.coords * self.radius
    }
}

/// Resample to exactly `n_in` points (farthest-point when enough points
/// exist, seeded resampling with replacement otherwise), then center and
/// scale to the unit bounding sphere.
pub fn resample_input(
    cloud: &PointCloud,
    n_in: usize,
    seed: u64,
) -> Result<(Vec<Point3<f64>>, Normalizer)> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    let chosen: Vec<Point3<f64>> = if cloud.len() >= n_in {
        farthest_point_indices(&cloud.points, n_in, seed)?
            .into_iter()
            .map(|i| cloud.points[i])
            .collect()
    } else {
        let mut rng = Rng::seed_from_u64(seed);
        (0..n_in)
            .map(|_| cloud.points[rng.index(cloud.len())])
            .collect()
    };
    let norm = Normalizer::fit(&chosen);
    Ok((chosen.iter().map(|p| norm.normalize(p)).collect(), norm))
}

pub(crate) fn points_to_tensor<T: Scalar>(points: &[Point3<f64>]) -> Tensor<T> {
    let mut data = Vec::with_capacity(points.len() * 3);
    for p in points {
        data.push(T::from_f64(p.x));
        data.push(T::from_f64(p.y));
        data.push(T::from_f64(p.z));
    }
    Tensor::from_vec(points.len(), 3, data)
}

pub(crate) fn tensor_to_points<T: Scalar>(t: &Tensor<T>) -> Vec<Point3<f64>> {
    (0..t.rows)
        .map(|r| {
            let row = t.row(r);
            Point3::new(row[0].to_f64(), row[1].to_f64(), row[2].to_f64())
        })
        .collect()
}

/// Scaffold selection: farthest-point subset of the normalized input,
/// seeded by the model config for reproducibility.
pub(crate) fn scaffold_indices(
    points: &[Point3<f64>],
    n_scaffold: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    farthest_point_indices(points, n_scaffold, seed)
}

/// Forward pass on an exactly-sized normalized input. Returns (coarse,
/// fine) point sets in the normalized frame.
pub fn forward(
    model: &CompletionModel,
    input: &[Point3<f64>],
) -> Result<(Vec<Point3<f64>>, Vec<Point3<f64>>)> {
    model.validate_finite()?;
    let cfg = &model.config;
    if input.len() != cfg.n_in {
        return Err(Error::ShapeError(format!(
            "forward expects {} input points, got {}",
            cfg.n_in,
            input.len()
        )));
    }
    let scaffold = scaffold_indices(input, cfg.n_scaffold, cfg.seed)?;
    let mut tape: Tape<f32> = Tape::new();
    let vars = register_model(model, &mut tape);
    let input_t = points_to_tensor::<f32>(input);
    let (coarse, fine) = forward_on_tape(model, &vars, &mut tape, &input_t, &scaffold)?;
    let coarse_pts = tensor_to_points(tape.value(coarse));
    let fine_pts = tensor_to_points(tape.value(fine));
    for p in fine_pts.iter().chain(coarse_pts.iter()) {
        if !p.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::NumericalError("forward activations"));
        }
    }
    Ok((coarse_pts, fine_pts))
}

/// Complete a partial cloud: resample/normalize, run the network, and map
/// the fine output back to the input frame. Output has exactly `n_fine`
/// points.
pub fn complete(model: &CompletionModel, partial: &PointCloud) -> Result<PointCloud> {
    let (input, norm) = resample_input(partial, model.config.n_in, model.config.seed)?;
    let (_, fine) = forward(model, &input)?;
    PointCloud::new(fine.iter().map(|p| norm.denormalize(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::completion::model::CompletionConfig;
    use crate::rng::Rng;

    fn random_cloud(rng: &mut Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.uniform_in(-0.5, 0.8),
                        rng.uniform_in(-0.2, 0.6),
                        rng.uniform_in(-1.0, 0.1),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn resample_exact_size_is_a_normalized_permutation() {
        let mut rng = Rng::seed_from_u64(1);
        let cloud = random_cloud(&mut rng, 64);
        let (pts, norm) = resample_input(&cloud, 64, 0).unwrap();
        assert_eq!(pts.len(), 64);
        let mut input_set: Vec<String> = cloud
            .points
            .iter()
            .map(|p| format!("{:?}", norm.normalize(p)))
            .collect();
        let mut out_set: Vec<String> = pts.iter().map(|p| format!("{p:?}")).collect();
        input_set.sort();
        out_set.sort();
        assert_eq!(input_set, out_set);
        // Normalized: centroid ~ 0 and max radius 1.
        let max_r = pts.iter().map(|p| p.coords.norm()).fold(0.0, f64::max);
        assert!((max_r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn denormalize_round_trips() {
        let mut rng = Rng::seed_from_u64(2);
        let cloud = random_cloud(&mut rng, 100);
        let (pts, norm) = resample_input(&cloud, 80, 3).unwrap();
        for p in &pts {
            let back = norm.normalize(&norm.denormalize(p));
            assert!((back - p).norm() < 1e-9);
        }
    }

    #[test]
    fn undersized_input_resamples_from_members() {
        let mut rng = Rng::seed_from_u64(3);
        let cloud = random_cloud(&mut rng, 10);
        let (pts, norm) = resample_input(&cloud, 1024, 4).unwrap();
        assert_eq!(pts.len(), 1024);
        let originals: std::collections::HashSet<String> = cloud
            .points
            .iter()
            .map(|p| format!("{:?}", norm.normalize(p)))
            .collect();
        for p in &pts {
            assert!(originals.contains(&format!("{p:?}")));
        }
    }

    #[test]
    fn untrained_fine_equals_parent_coarse_and_scaffold_verbatim() {
        let cfg = CompletionConfig::tiny();
        let model = CompletionModel::init(&cfg).unwrap();
        let mut rng = Rng::seed_from_u64(5);
        let cloud = random_cloud(&mut rng, cfg.n_in);
        let (input, _) = resample_input(&cloud, cfg.n_in, cfg.seed).unwrap();
        let (coarse, fine) = forward(&model, &input).unwrap();
        assert_eq!(coarse.len(), cfg.n_coarse());
        assert_eq!(fine.len(), cfg.n_fine);
        // Zero-init displacement head: every fine point equals its parent.
        let up = cfg.up_ratio();
        for (f, p) in fine.iter().enumerate() {
            let parent = coarse[f / up];
            assert_eq!(p, &parent, "fine {f} differs from its parent");
        }
        // Scaffold points appear verbatim in the coarse output (the
        // network runs in f32, so membership is at f32 precision).
        let q = |p: &Point3<f64>| (p.x as f32, p.y as f32, p.z as f32);
        let input_set: std::collections::HashSet<String> =
            input.iter().map(|p| format!("{:?}", q(p))).collect();
        for p in &coarse[cfg.n_gen_coarse..] {
            assert!(
                input_set.contains(&format!("{:?}", q(p))),
                "scaffold point {p:?} not an input member"
            );
        }
    }

    #[test]
    fn output_shapes_for_random_configs() {
        let mut rng = Rng::seed_from_u64(6);
        for trial in 0..10 {
            let heads = 1 << rng.index(3); // 1, 2, or 4
            let latent = heads * (2 + rng.index(5));
            let n_scaffold = 4 + rng.index(8);
            let n_gen = 4 + rng.index(8);
            let up = 1 + rng.index(4);
            let cfg = CompletionConfig {
                n_in: (n_scaffold + n_gen).max(16 + rng.index(32)),
                n_scaffold,
                n_gen_coarse: n_gen,
                n_fine: (n_scaffold + n_gen) * up,
                latent_dim: latent,
                n_heads: heads,
                n_encoder_blocks: 1 + rng.index(2),
                n_refine_blocks: 1 + rng.index(2),
                seed: trial,
            };
            cfg.validate().unwrap();
            let model = CompletionModel::init(&cfg).unwrap();
            let cloud = random_cloud(&mut Rng::seed_from_u64(trial), cfg.n_in);
            let (input, _) = resample_input(&cloud, cfg.n_in, 0).unwrap();
            let (coarse, fine) = forward(&model, &input).unwrap();
            assert_eq!(coarse.len(), cfg.n_coarse());
            assert_eq!(fine.len(), cfg.n_fine);
        }
    }

    #[test]
    fn encoder_is_permutation_invariant() {
        // Permuting the input leaves the fine output set unchanged (the
        // latent is pooled permutation-invariantly and the scaffold is
        // permutation-covariant).
        let cfg = CompletionConfig::tiny();
        let model = CompletionModel::init(&cfg).unwrap();
        let mut rng = Rng::seed_from_u64(7);
        let cloud = random_cloud(&mut rng, cfg.n_in);
        let (input, _) = resample_input(&cloud, cfg.n_in, cfg.seed).unwrap();
        let mut perm: Vec<usize> = (0..cfg.n_in).collect();
        rng.shuffle(&mut perm);
        let permuted: Vec<Point3<f64>> = perm.iter().map(|&i| input[i]).collect();

        let (coarse_a, fine_a) = forward(&model, &input).unwrap();
        let (coarse_b, fine_b) = forward(&model, &permuted).unwrap();

        // f32 reductions reorder under permutation; the sets must agree
        // to 1e-5 of the cloud scale.
        let match_sets = |a: &[Point3<f64>], b: &[Point3<f64>]| {
            assert_eq!(a.len(), b.len());
            for p in a {
                let nearest = b
                    .iter()
                    .map(|q| (p - q).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(nearest < 1e-5, "point {p:?} unmatched ({nearest:.2e})");
            }
        };
        match_sets(&coarse_a, &coarse_b);
        match_sets(&fine_a, &fine_b);
    }

    #[test]
    fn complete_outputs_n_fine_for_any_input_size() {
        let cfg = CompletionConfig::tiny();
        let model = CompletionModel::init(&cfg).unwrap();
        let mut rng = Rng::seed_from_u64(8);
        for n in [10usize, 500, 5000] {
            let cloud = random_cloud(&mut rng, n);
            let out = complete(&model, &cloud).unwrap();
            assert_eq!(out.len(), cfg.n_fine);
        }
    }

    #[test]
    fn completion_is_equivariant_to_uniform_rescaling() {
        let cfg = CompletionConfig::tiny();
        let model = CompletionModel::init(&cfg).unwrap();
        let mut rng = Rng::seed_from_u64(9);
        let cloud = random_cloud(&mut rng, 200);
        let scaled = PointCloud::new(
            cloud.points.iter().map(|p| Point3::from(p.coords * 3.7)).collect(),
        )
        .unwrap();
        let a = complete(&model, &cloud).unwrap();
        let b = complete(&model, &scaled).unwrap();
        for (pa, pb) in a.points.iter().zip(b.points.iter()) {
            let expect = pa.coords * 3.7;
            let rel = (pb.coords - expect).norm() / expect.norm().max(1e-9);
            assert!(rel < 1e-5, "rescaling broke equivariance: {rel}");
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let cfg = CompletionConfig::tiny();
        let model = CompletionModel::init(&cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("solescan_model_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ssck");
        crate::io::write_checkpoint(&model.to_checkpoint(), &path).unwrap();
        let back = CompletionModel::from_checkpoint(&crate::io::read_checkpoint(&path).unwrap())
            .unwrap();
        let mut rng = Rng::seed_from_u64(10);
        let cloud = random_cloud(&mut rng, cfg.n_in);
        let (input, _) = resample_input(&cloud, cfg.n_in, cfg.seed).unwrap();
        let (_, fine_a) = forward(&model, &input).unwrap();
        let (_, fine_b) = forward(&back, &input).unwrap();
        assert_eq!(fine_a, fine_b);
    }
}
