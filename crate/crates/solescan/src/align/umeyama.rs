//! Closed-form least-squares similarity alignment between corresponded
//! point sets (Umeyama's method), with reflection correction.

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::geom::Sim3Transform;

pub const COLLINEARITY_TOL: f64 = 1e-9;

/// Smallest singular value of the centered source matrix; used to reject
/// (near-)collinear configurations where the rotation is not determined.
pub fn configuration_spread(points: &[Point3<f64>]) -> f64 {
    let n = points.len() as f64;
    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += p.coords;
    }
    centroid /= n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    let svd = cov.svd(false, false);
    // Singular values of the covariance are squared spreads.
    svd.singular_values[2].max(0.0).sqrt()
}

/// Least-squares similarity (or rigid, when `with_scale` is false)
/// minimizing sum ||s R src_j + t - tgt_j||^2.
pub fn umeyama(
    source: &[Point3<f64>],
    target: &[Point3<f64>],
    with_scale: bool,
) -> Result<Sim3Transform> {
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::InsufficientLandmarks {
            got: source.len().min(target.len()),
        });
    }
    if source.len() != target.len() {
        return Err(Error::InvalidInput(format!(
            "correspondence count mismatch: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    if configuration_spread(source) <= COLLINEARITY_TOL {
        return Err(Error::DegenerateConfiguration(
            "source points are (near-)collinear".into(),
        ));
    }

    let n = source.len() as f64;
    let mut src_mean = Vector3::zeros();
    let mut tgt_mean = Vector3::zeros();
    for (s, t) in source.iter().zip(target.iter()) {
        src_mean += s.coords;
        tgt_mean += t.coords;
    }
    src_mean /= n;
    tgt_mean /= n;

    let mut cov = Matrix3::zeros(); // cross-covariance tgt x src
    let mut src_var = 0.0;
    for (s, t) in source.iter().zip(target.iter()) {
        let ds = s.coords - src_mean;
        let dt = t.coords - tgt_mean;
        cov += dt * ds.transpose();
        src_var += ds.norm_squared();
    }
    cov /= n;
    src_var /= n;

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or(Error::NumericalError("umeyama SVD"))?;
    let v_t = svd.v_t.ok_or(Error::NumericalError("umeyama SVD"))?;
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        // Reflection case: flip the smallest singular direction.
        d.z = -1.0;
    }
    let rotation_mat = u * Matrix3::from_diagonal(&d) * v_t;
    let rotation = Rotation3::from_matrix_unchecked(rotation_mat);

    let scale = if with_scale {
        let trace_ds = svd.singular_values.dot(&d);
        trace_ds / src_var
    } else {
        1.0
    };
    let translation = tgt_mean - scale * (rotation_mat * src_mean);
    Sim3Transform::new(scale, rotation, translation)
}

/// Sum of squared residuals of a similarity fit.
pub fn alignment_residual_sq(
    t: &Sim3Transform,
    source: &[Point3<f64>],
    target: &[Point3<f64>],
) -> f64 {
    source
        .iter()
        .zip(target.iter())
        .map(|(s, g)| (t.apply_point(s) - g).norm_squared())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::scanner::{random_rotation, random_sim3, AugmentConfig};

    fn random_landmarks(rng: &mut Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.uniform_in(-1.0, 1.0),
                    rng.uniform_in(-1.0, 1.0),
                    rng.uniform_in(-1.0, 1.0),
                )
            })
            .collect()
    }

    #[test]
    fn identity_when_target_equals_source() {
        let mut rng = Rng::seed_from_u64(1);
        let src = random_landmarks(&mut rng, 8);
        let t = umeyama(&src, &src, true).unwrap();
        assert!((t.rotation.matrix() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
        assert!((t.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubled_target_gives_scale_two() {
        let mut rng = Rng::seed_from_u64(2);
        let src = random_landmarks(&mut rng, 10);
        let tgt: Vec<_> = src.iter().map(|p| Point3::from(p.coords * 2.0)).collect();
        let t = umeyama(&src, &tgt, true).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-12);
        assert!((t.rotation.matrix() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn recovers_random_similarity_within_1e9() {
        let mut rng = Rng::seed_from_u64(3);
        let cfg = AugmentConfig {
            rot_bound_deg: None,
            scale_range: (0.5, 2.0),
            shift_frac: 1.0,
        };
        for trial in 0..100 {
            let truth = random_sim3(&mut rng, &cfg, 1.0);
            let src = random_landmarks(&mut rng, 10);
            let tgt: Vec<_> = src.iter().map(|p| truth.apply_point(p)).collect();
            let got = umeyama(&src, &tgt, true).unwrap();
            assert!(
                (got.scale - truth.scale).abs() < 1e-9,
                "trial {trial} scale"
            );
            assert!(
                (got.rotation.matrix() - truth.rotation.matrix()).abs().max() < 1e-9,
                "trial {trial} rotation"
            );
            assert!(
                (got.translation - truth.translation).norm() < 1e-9,
                "trial {trial} translation"
            );
        }
    }

    #[test]
    fn rigid_mode_fixes_scale_to_one() {
        let mut rng = Rng::seed_from_u64(4);
        let src = random_landmarks(&mut rng, 12);
        let rot = random_rotation(&mut rng, None);
        let shift = Vector3::new(0.3, -0.2, 0.9);
        let tgt: Vec<_> = src.iter().map(|p| rot * p + shift).collect();
        let t = umeyama(&src, &tgt, false).unwrap();
        assert_eq!(t.scale, 1.0);
        assert!((t.rotation.matrix() - rot.matrix()).abs().max() < 1e-9);
        assert!((t.translation - shift).norm() < 1e-9);
    }

    #[test]
    fn reflection_corrected_to_proper_rotation() {
        // A target that is a mirrored copy: the best proper rotation must
        // still come out with det +1.
        let mut rng = Rng::seed_from_u64(5);
        let src = random_landmarks(&mut rng, 16);
        let tgt: Vec<_> = src.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let t = umeyama(&src, &tgt, true).unwrap();
        assert!((t.rotation.matrix().determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_or_collinear_points_rejected() {
        let p = |x: f64| Point3::new(x, 0.0, 0.0);
        assert!(matches!(
            umeyama(&[p(0.0), p(1.0)], &[p(0.0), p(1.0)], true),
            Err(Error::InsufficientLandmarks { .. })
        ));
        let line: Vec<_> = (0..5).map(|i| p(i as f64)).collect();
        assert!(matches!(
            umeyama(&line, &line, true),
            Err(Error::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn residual_is_a_global_minimum_under_perturbation() {
        let mut rng = Rng::seed_from_u64(6);
        let src = random_landmarks(&mut rng, 10);
        // Noisy target so the optimum is not exactly zero.
        let truth = random_sim3(
            &mut rng,
            &AugmentConfig {
                rot_bound_deg: None,
                scale_range: (0.8, 1.2),
                shift_frac: 0.3,
            },
            1.0,
        );
        let tgt: Vec<_> = src
            .iter()
            .map(|p| {
                let mut q = truth.apply_point(p);
                q.x += 0.01 * rng.gaussian();
                q.y += 0.01 * rng.gaussian();
                q.z += 0.01 * rng.gaussian();
                q
            })
            .collect();
        let best = umeyama(&src, &tgt, true).unwrap();
        let best_res = alignment_residual_sq(&best, &src, &tgt);
        for _ in 0..1000 {
            let eps = 10f64.powf(rng.uniform_in(-4.0, -1.0));
            let axis = nalgebra::Unit::new_normalize(rng.unit_vector());
            let perturbed = Sim3Transform {
                scale: best.scale * (1.0 + eps * rng.gaussian()),
                rotation: Rotation3::from_axis_angle(&axis, eps) * best.rotation,
                translation: best.translation + rng.unit_vector() * eps,
            };
            let res = alignment_residual_sq(&perturbed, &src, &tgt);
            assert!(
                res >= best_res - 1e-12,
                "perturbation undercut the optimum: {res} < {best_res}"
            );
        }
    }
}
