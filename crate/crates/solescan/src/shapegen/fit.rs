//! Chamfer-fitting baseline: jointly optimize PCA coefficients and a
//! similarity pose by Adam on the squared Chamfer distance between
//! sampled model-surface points and the target cloud.

use nalgebra::{Point3, Rotation3, Vector3};

use crate::autodiff::{Tape, Tensor, Var};
use crate::completion::{adam_step, AdamParams, AdamState};
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Sim3Transform, TriangleMesh};
use crate::metrics::chamfer;
use crate::rng::Rng;
use crate::shapegen::pca::PcaShapeModel;

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Model-surface points compared against the target each step.
    pub n_surface_samples: usize,
    /// Coefficients are clamped to +- this many mode standard deviations.
    pub coeff_bound_sigma: f64,
    /// Cosine-decay the learning rate to this fraction of `lr` by the
    /// final step (1.0 keeps it constant).
    pub lr_floor_frac: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            steps: 400,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            n_surface_samples: 2048,
            coeff_bound_sigma: 3.0,
            lr_floor_frac: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    /// Maps model frame to target frame.
    pub pose: Sim3Transform,
    /// Unsquared symmetric Chamfer distance of the posed fitted samples
    /// against the target cloud.
    pub final_cd: f64,
    pub loss_trace: Vec<f64>,
    pub fitted_mesh: TriangleMesh,
}

/// Fixed barycentric sampling pattern over the model's faces,
/// area-weighted on the mean shape.
pub fn surface_sample_pattern(
    model: &PcaShapeModel,
    n: usize,
    seed: u64,
) -> Vec<([u32; 3], f64, f64)> {
    let mesh = TriangleMesh::new(model.mean_vertices.clone(), model.faces.clone())
        .expect("model mean is a valid mesh");
    let mut cumulative = Vec::with_capacity(mesh.face_count());
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    let mut rng = Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = rng.uniform() * total;
            let f = match cumulative.binary_search_by(|c| c.partial_cmp(&t).unwrap()) {
                Ok(i) => i,
                Err(i) => i.min(mesh.face_count() - 1),
            };
            let mut u = rng.uniform();
            let mut v = rng.uniform();
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            (mesh.faces[f], u, v)
        })
        .collect()
}

struct FitParams {
    coeffs: Tensor<f64>,
    axis_angle: Tensor<f64>,
    translation: Tensor<f64>,
    scale: Tensor<f64>,
}

fn pose_of(p: &FitParams) -> Sim3Transform {
    let aa = Vector3::new(
        p.axis_angle.data[0],
        p.axis_angle.data[1],
        p.axis_angle.data[2],
    );
    Sim3Transform {
        scale: p.scale.data[0],
        rotation: Rotation3::from_scaled_axis(aa),
        translation: Vector3::new(
            p.translation.data[0],
            p.translation.data[1],
            p.translation.data[2],
        ),
    }
}

/// Jointly fit shape coefficients and a Sim(3) pose to the target cloud.
pub fn fit_pca(model: &PcaShapeModel, target: &PointCloud, opts: &FitOptions) -> Result<FitResult> {
    if target.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = model.mode_count();
    let dim = model.vertex_count() * 3;

    // Constants reused across steps.
    let mean_flat: Vec<f64> = model
        .mean_vertices
        .iter()
        .flat_map(|p| [p.x, p.y, p.z])
        .collect();
    let modes_flat: Vec<f64> = model.basis.iter().flatten().copied().collect();
    let samples = surface_sample_pattern(model, opts.n_surface_samples, opts.seed);
    let target_pts: Vec<[f64; 3]> = target.points.iter().map(|p| [p.x, p.y, p.z]).collect();

    let mut params = FitParams {
        coeffs: Tensor::zeros(1, m.max(1)),
        axis_angle: Tensor::zeros(1, 3),
        translation: Tensor::zeros(1, 3),
        scale: Tensor::from_f64_slice(1, 1, &[1.0]),
    };
    let mut states = [
        AdamState::new(params.coeffs.data.len()),
        AdamState::new(3),
        AdamState::new(3),
        AdamState::new(1),
    ];
    let mut hp = AdamParams {
        lr: opts.lr,
        beta1: opts.beta1,
        beta2: opts.beta2,
        eps: opts.eps,
    };

    let mut loss_trace = Vec::with_capacity(opts.steps);
    let clone_params = |p: &FitParams| FitParams {
        coeffs: p.coeffs.clone(),
        axis_angle: p.axis_angle.clone(),
        translation: p.translation.clone(),
        scale: p.scale.clone(),
    };
    // Zero-step budgets return the mean-shape fit at identity pose.
    let mut best: Option<(f64, FitParams)> = Some((f64::INFINITY, clone_params(&params)));

    for step in 0..opts.steps {
        let mut tape: Tape<f64> = Tape::new();
        let v_coeffs = tape.param(params.coeffs.clone());
        let v_aa = tape.param(params.axis_angle.clone());
        let v_t = tape.param(params.translation.clone());
        let v_s = tape.param(params.scale.clone());

        let loss_var = build_loss(
            &mut tape,
            model,
            &mean_flat,
            &modes_flat,
            &samples,
            &target_pts,
            v_coeffs,
            v_aa,
            v_t,
            v_s,
            dim,
        )?;
        let loss = tape.value(loss_var).data[0];
        if !loss.is_finite() {
            return Err(Error::DivergedFit { step });
        }
        loss_trace.push(loss);
        if best.as_ref().map_or(true, |(b, _)| loss < *b) {
            best = Some((loss, clone_params(&params)));
        }

        // Cosine decay toward the floor fraction.
        let t = step as f64 / opts.steps.max(1) as f64;
        let floor = opts.lr_floor_frac.clamp(0.0, 1.0);
        hp.lr = opts.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()));

        let grads = tape.backward(loss_var)?;
        let take = |v: Var, grads: &[Option<Tensor<f64>>]| -> Tensor<f64> {
            grads[v.0].clone().expect("parameter gradient present")
        };
        if m > 0 {
            adam_step(
                &mut params.coeffs,
                &take(v_coeffs, &grads),
                &mut states[0],
                &hp,
            );
        }
        adam_step(&mut params.axis_angle, &take(v_aa, &grads), &mut states[1], &hp);
        adam_step(&mut params.translation, &take(v_t, &grads), &mut states[2], &hp);
        adam_step(&mut params.scale, &take(v_s, &grads), &mut states[3], &hp);

        // Prior bound on the shape coefficients, scale kept positive.
        for (k, c) in params.coeffs.data.iter_mut().enumerate() {
            if k < m {
                let bound = opts.coeff_bound_sigma * model.mode_stddevs[k].max(1e-12);
                *c = c.clamp(-bound, bound);
            }
        }
        params.scale.data[0] = params.scale.data[0].clamp(0.2, 5.0);
    }

    let (_, best_params) = best.ok_or(Error::DivergedFit { step: 0 })?;
    let coefficients: Vec<f64> = best_params.coeffs.data[..m].to_vec();
    let pose = pose_of(&best_params);
    let fitted_mesh = model.reconstruct(&coefficients)?;

    // Report the unsquared CD of the posed fitted samples vs the target.
    let sample_cloud = {
        let mut tape: Tape<f64> = Tape::new();
        let verts_flat: Vec<f64> = fitted_mesh
            .vertices
            .iter()
            .flat_map(|p| [p.x, p.y, p.z])
            .collect();
        let v = tape.constant(Tensor::from_f64_slice(fitted_mesh.vertex_count(), 3, &{
            verts_flat
        }));
        let pts = tape.face_samples(v, samples.clone())?;
        let vals = tape.value(pts);
        PointCloud::new(
            (0..vals.rows)
                .map(|r| {
                    let row = vals.row(r);
                    pose.apply_point(&Point3::new(row[0], row[1], row[2]))
                })
                .collect(),
        )?
    };
    let final_cd = chamfer(&sample_cloud, target, false)?.cd;

    Ok(FitResult {
        coefficients,
        pose,
        final_cd,
        loss_trace,
        fitted_mesh,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_loss(
    tape: &mut Tape<f64>,
    model: &PcaShapeModel,
    mean_flat: &[f64],
    modes_flat: &[f64],
    samples: &[([u32; 3], f64, f64)],
    target_pts: &[[f64; 3]],
    v_coeffs: Var,
    v_aa: Var,
    v_t: Var,
    v_s: Var,
    dim: usize,
) -> Result<Var> {
    let m = model.mode_count();
    let vcount = model.vertex_count();
    let mean = tape.constant(Tensor::from_f64_slice(vcount, 3, mean_flat));
    let verts = if m > 0 {
        let modes = tape.constant(Tensor::from_f64_slice(m, dim, modes_flat));
        let disp_flat = tape.matmul(v_coeffs, modes)?; // [1, dim]
        let disp = tape.reshape(disp_flat, vcount, 3)?;
        tape.add(mean, disp)?
    } else {
        mean
    };
    let pts = tape.face_samples(verts, samples.to_vec())?;
    let rotated = tape.rotate_points(pts, v_aa)?;
    let scaled = tape.mul_scalar_var(rotated, v_s)?;
    let moved = tape.add_row(scaled, v_t)?;
    tape.chamfer_sq_to(moved, target_pts.to_vec())
}
