//! Training loop: squared-Chamfer supervision at the coarse and fine
//! stages, Adam updates, deterministic seeding.

use std::time::Instant;

use nalgebra::Point3;
use rayon::prelude::*;

use crate::autodiff::{Tape, Tensor};
use crate::completion::adam::{adam_step, AdamParams, AdamState};
use crate::completion::infer::{
    points_to_tensor, resample_input, scaffold_indices,
};
use crate::completion::model::{forward_on_tape, register_model, CompletionModel};
use crate::error::{Error, Result};
use crate::geom::{farthest_point_indices, PointCloud, TriangleMesh};
use crate::metrics::chamfer;
use crate::rng::Rng;

/// Resample a point list to exactly n (farthest-point or seeded
/// with-replacement), without normalization.
pub fn resample_points(points: &[Point3<f64>], n: usize, seed: u64) -> Vec<Point3<f64>> {
    if points.len() >= n {
        farthest_point_indices(points, n, seed)
            .expect("n <= len")
            .into_iter()
            .map(|i| points[i])
            .collect()
    } else {
        let mut rng = Rng::seed_from_u64(seed);
        (0..n).map(|_| points[rng.index(points.len())]).collect()
    }
}

/// Supervision losses for one prediction: squared Chamfer of the coarse
/// set against an FPS-reduced ground truth, plus squared Chamfer of the
/// fine set against the ground truth resampled to its size.
/// Returns (total, cd_coarse, cd_fine).
pub fn loss(
    coarse: &PointCloud,
    fine: &PointCloud,
    ground_truth: &PointCloud,
) -> Result<(f64, f64, f64)> {
    if ground_truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let gt_fine = PointCloud::new(resample_points(
        &ground_truth.points,
        fine.len(),
        LOSS_RESAMPLE_SEED,
    ))?;
    let gt_coarse = PointCloud::new(resample_points(
        &gt_fine.points,
        coarse.len().min(gt_fine.len()),
        LOSS_RESAMPLE_SEED,
    ))?;
    let cd_coarse = chamfer(coarse, &gt_coarse, true)?.cd;
    let cd_fine = chamfer(fine, &gt_fine, true)?.cd;
    Ok((cd_coarse + cd_fine, cd_coarse, cd_fine))
}

const LOSS_RESAMPLE_SEED: u64 = 0x10_55;

/// Per-parameter gradients of the training loss for one (input, target)
/// pair; names follow the model tensors, frozen tensors are absent.
pub fn backward(
    model: &CompletionModel,
    input: &[Point3<f64>],
    ground_truth: &[Point3<f64>],
) -> Result<Vec<(String, Tensor<f32>)>> {
    let (_, grads) = loss_and_grads::<f32>(model, input, ground_truth)?;
    Ok(grads)
}

/// Forward + loss + backward on one tape. Exposed generically so the
/// gradient check can run the same path in f64.
pub fn loss_and_grads<T: crate::autodiff::Scalar>(
    model: &CompletionModel,
    input: &[Point3<f64>],
    ground_truth: &[Point3<f64>],
) -> Result<((f64, f64, f64), Vec<(String, Tensor<T>)>)> {
    let (totals, grads, _) = loss_and_grads_inner(model, input, ground_truth, None)?;
    Ok((totals, grads))
}

/// Nearest-neighbor selections of the two chamfer terms.
pub type ChamferSelections = ((Vec<u32>, Vec<u32>), (Vec<u32>, Vec<u32>));

/// As [`loss_and_grads`] but optionally evaluating the smooth branch of
/// fixed chamfer correspondences, returning the selections actually used.
/// The min-index selection is treated as piecewise-constant: gradients
/// flow through selected pairs only.
pub fn loss_and_grads_inner<T: crate::autodiff::Scalar>(
    model: &CompletionModel,
    input: &[Point3<f64>],
    ground_truth: &[Point3<f64>],
    fixed: Option<&ChamferSelections>,
) -> Result<((f64, f64, f64), Vec<(String, Tensor<T>)>, ChamferSelections)> {
    let cfg = &model.config;
    let scaffold = scaffold_indices(input, cfg.n_scaffold, cfg.seed)?;
    // The fine target keeps the caller's density: denser ground truth
    // lowers the sampling floor of the supervision signal.
    let gt_fine = ground_truth.to_vec();
    let gt_coarse = resample_points(&gt_fine, cfg.n_coarse().min(gt_fine.len()), LOSS_RESAMPLE_SEED);

    let mut tape: Tape<T> = Tape::new();
    let vars = register_model(model, &mut tape);
    let input_t = points_to_tensor::<T>(input);
    let (coarse, fine) = forward_on_tape(model, &vars, &mut tape, &input_t, &scaffold)?;

    let to_arr = |pts: &[Point3<f64>]| -> Vec<[f64; 3]> {
        pts.iter().map(|p| [p.x, p.y, p.z]).collect()
    };
    let (cd_coarse, cd_fine) = match fixed {
        None => (
            tape.chamfer_sq_to(coarse, to_arr(&gt_coarse))?,
            tape.chamfer_sq_to(fine, to_arr(&gt_fine))?,
        ),
        Some((sel_c, sel_f)) => (
            tape.chamfer_sq_fixed(coarse, to_arr(&gt_coarse), sel_c.clone())?,
            tape.chamfer_sq_fixed(fine, to_arr(&gt_fine), sel_f.clone())?,
        ),
    };
    let total = tape.add(cd_coarse, cd_fine)?;

    let totals = (
        tape.value(total).data[0].to_f64(),
        tape.value(cd_coarse).data[0].to_f64(),
        tape.value(cd_fine).data[0].to_f64(),
    );
    let selections = (
        tape.chamfer_selection(cd_coarse).expect("chamfer node"),
        tape.chamfer_selection(cd_fine).expect("chamfer node"),
    );
    let grad_slots = tape.backward(total)?;
    let mut grads = Vec::new();
    for (name, var) in vars.names.iter().zip(&vars.vars) {
        if let Some(g) = &grad_slots[var.0] {
            grads.push((name.clone(), g.clone()));
        }
    }
    Ok((totals, grads, selections))
}

#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Cosine-decay floor as a fraction of `lr` (1.0 = constant).
    pub lr_floor_frac: f64,
    /// Ground-truth targets are sampled at `gt_oversample * n_fine`
    /// points per pair per epoch; denser supervision keeps gradients
    /// informative below the n_fine sampling floor.
    pub gt_oversample: usize,
    pub seed: u64,
    /// Force strictly sequential batch evaluation. The parallel path sums
    /// per-item gradients in index order, so results are identical; this
    /// is for single-threaded golden runs.
    pub deterministic: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 20,
            batch_size: 4,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_floor_frac: 0.1,
            gt_oversample: 4,
            seed: 0,
            deterministic: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// (total, cd_coarse, cd_fine) per optimizer step (batch means).
    pub steps: Vec<(f64, f64, f64)>,
    pub step_count: usize,
    pub wall_seconds: f64,
    /// Mean epoch loss of the retained best model.
    pub best_epoch_loss: f64,
    /// Where the model was saved, when the caller persisted it.
    pub final_model_path: Option<std::path::PathBuf>,
}

/// Precomputed training pair: a normalized input with its ground-truth
/// surface points in the same normalized frame.
struct PreparedPair {
    input: Vec<Point3<f64>>,
    /// Surface point pool to resample targets from, normalized.
    gt_pool: TriangleMesh,
    normalizer: crate::completion::infer::Normalizer,
}

/// Train on (partial cloud, ground-truth mesh) pairs. Ground-truth
/// targets are re-sampled from the mesh every epoch with a deterministic
/// per-(pair, epoch) seed; the best-epoch model is retained.
pub fn train(
    pairs: &[(PointCloud, TriangleMesh)],
    model: &mut CompletionModel,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be positive".into()));
    }
    let start = Instant::now();
    let cfg = model.config;

    // Normalize each pair once; targets are sampled per epoch.
    let prepared: Vec<PreparedPair> = pairs
        .iter()
        .enumerate()
        .map(|(i, (partial, mesh))| {
            let (input, normalizer) =
                resample_input(partial, cfg.n_in, opts.seed ^ (i as u64).wrapping_mul(0x9E37))?;
            Ok(PreparedPair {
                input,
                gt_pool: mesh.clone(),
                normalizer,
            })
        })
        .collect::<Result<_>>()?;

    let mut states: Vec<AdamState<f32>> = model
        .tensors
        .iter()
        .map(|(_, t)| AdamState::new(t.data.len()))
        .collect();
    let mut hp = AdamParams {
        lr: opts.lr,
        beta1: opts.beta1,
        beta2: opts.beta2,
        eps: opts.eps,
    };

    let mut report = TrainReport::default();
    let mut shuffle_rng = Rng::seed_from_u64(opts.seed ^ 0x5348_5546);
    let mut best: Option<(f64, CompletionModel)> = None;
    let total_steps = opts.epochs * pairs.len().div_ceil(opts.batch_size);

    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;

        for batch in order.chunks(opts.batch_size) {
            // Per-item losses and gradients, order-stable.
            let item = |&idx: &usize| -> Result<((f64, f64, f64), Vec<(String, Tensor<f32>)>)> {
                let pair = &prepared[idx];
                let gt_seed = opts
                    .seed
                    .wrapping_mul(0x9E3779B97F4A7C15)
                    .wrapping_add((idx as u64) << 20)
                    .wrapping_add(epoch as u64);
                let gt_world = pair
                    .gt_pool
                    .sample_surface(cfg.n_fine * opts.gt_oversample.max(1), gt_seed);
                let gt_norm: Vec<Point3<f64>> = gt_world
                    .points
                    .iter()
                    .map(|p| pair.normalizer.normalize(p))
                    .collect();
                loss_and_grads::<f32>(model, &pair.input, &gt_norm)
            };
            let results: Vec<((f64, f64, f64), Vec<(String, Tensor<f32>)>)> =
                if opts.deterministic {
                    batch.iter().map(item).collect::<Result<_>>()?
                } else {
                    batch
                        .par_iter()
                        .map(item)
                        .collect::<std::result::Result<_, _>>()?
                };

            // Fixed-order accumulation.
            let inv = 1.0 / results.len() as f64;
            let mut mean = (0.0, 0.0, 0.0);
            let mut grad_acc: Option<Vec<(String, Tensor<f32>)>> = None;
            for (losses, grads) in results {
                mean.0 += losses.0 * inv;
                mean.1 += losses.1 * inv;
                mean.2 += losses.2 * inv;
                match &mut grad_acc {
                    None => grad_acc = Some(grads),
                    Some(acc) => {
                        for ((_, a), (_, g)) in acc.iter_mut().zip(&grads) {
                            a.add_in_place(g);
                        }
                    }
                }
            }
            if !mean.0.is_finite() {
                return Err(Error::DivergedTraining {
                    step: report.step_count,
                });
            }
            report.steps.push(mean);
            epoch_loss += mean.0;
            epoch_batches += 1;

            // Cosine decay.
            let t = report.step_count as f64 / total_steps.max(1) as f64;
            let floor = opts.lr_floor_frac.clamp(0.0, 1.0);
            hp.lr = opts.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()));

            let scale = (inv) as f32;
            if let Some(mut grads) = grad_acc {
                for ((name, g), state) in grads.iter_mut().zip(states.iter_mut()) {
                    for v in g.data.iter_mut() {
                        *v *= scale;
                    }
                    debug_assert_eq!(name, &model.tensors[states_index(model, name)].0);
                    let t = model.tensor_mut(name);
                    adam_step(t, g, state, &hp);
                }
            }
            report.step_count += 1;
        }

        let mean_epoch = epoch_loss / epoch_batches.max(1) as f64;
        if best.as_ref().map_or(true, |(b, _)| mean_epoch < *b) {
            best = Some((mean_epoch, model.clone()));
        }
    }

    if let Some((loss, best_model)) = best {
        report.best_epoch_loss = loss;
        *model = best_model;
    }
    model.validate_finite()?;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn states_index(model: &CompletionModel, name: &str) -> usize {
    model
        .tensors
        .binary_search_by(|t| t.0.as_str().cmp(name))
        .expect("tensor exists")
}
