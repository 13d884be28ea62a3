//! Trimmed point-to-point ICP.

use nalgebra::Point3;
use rayon::prelude::*;

use crate::align::umeyama::umeyama;
use crate::error::{Error, Result};
use crate::geom::{KdTree, PointCloud, RigidTransform};

#[derive(Clone, Copy, Debug)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Terminate when the kept-correspondence RMS changes by less than
    /// this between iterations (meters).
    pub convergence_tol: f64,
    /// Fraction of the worst correspondences rejected each iteration.
    pub trim_fraction: f64,
    /// Correspondences farther than this are discarded entirely.
    /// `f64::INFINITY` disables the bound.
    pub max_correspondence_dist: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 200,
            convergence_tol: 1e-8,
            trim_fraction: 0.2,
            max_correspondence_dist: f64::INFINITY,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("icp needs at least one iteration".into()));
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return Err(Error::Config("trim fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct IcpResult {
    /// Rigid motion mapping the (init-transformed) source onto the target,
    /// composed with `init`: apply this to raw source points.
    pub transform: RigidTransform,
    /// RMS over kept correspondences at the final iteration.
    pub rms: f64,
    pub iterations: usize,
}

/// Iterate nearest-neighbor correspondence + rigid Umeyama until the kept
/// RMS stabilizes. Returns the full composition including `init`.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    params: &IcpParams,
    init: &RigidTransform,
) -> Result<IcpResult> {
    params.validate()?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput);
    }
    let tree = KdTree::build(&target.points)?;
    let mut current = *init;
    let mut prev_rms = f64::INFINITY;
    let mut iterations = 0;

    for iter in 0..params.max_iterations {
        iterations = iter + 1;
        let moved: Vec<Point3<f64>> = source
            .points
            .par_iter()
            .map(|p| current.apply_point(p))
            .collect();
        // (source index, target index, distance), bounded by max dist.
        let mut pairs: Vec<(usize, usize, f64)> = moved
            .par_iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let (j, d) = tree.nearest(p);
                (d <= params.max_correspondence_dist).then_some((i, j, d))
            })
            .collect();
        if pairs.is_empty() {
            return Err(Error::NoCorrespondences);
        }
        if params.trim_fraction > 0.0 {
            pairs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
            let keep = ((pairs.len() as f64) * (1.0 - params.trim_fraction)).ceil() as usize;
            pairs.truncate(keep.max(3));
        }

        let rms = (pairs.iter().map(|(_, _, d)| d * d).sum::<f64>() / pairs.len() as f64).sqrt();

        let src_kept: Vec<Point3<f64>> = pairs.iter().map(|&(i, _, _)| moved[i]).collect();
        let tgt_kept: Vec<Point3<f64>> = pairs.iter().map(|&(_, j, _)| target.points[j]).collect();
        let update = match umeyama(&src_kept, &tgt_kept, false) {
            Ok(t) => RigidTransform::new(t.rotation, t.translation),
            // Degenerate kept set (e.g. all matched to one point): stop.
            Err(_) => break,
        };
        current = update.compose(&current);

        if (prev_rms - rms).abs() < params.convergence_tol {
            prev_rms = rms;
            break;
        }
        prev_rms = rms;
    }

    Ok(IcpResult {
        transform: current,
        rms: prev_rms,
        iterations,
    })
}

/// Kept-correspondence RMS of `source` under `transform` against `target`
/// (same trimming rule as [`icp`]); exposed for convergence diagnostics.
pub fn icp_rms(
    source: &PointCloud,
    target_tree: &KdTree,
    transform: &RigidTransform,
    params: &IcpParams,
) -> Result<f64> {
    let mut dists: Vec<f64> = source
        .points
        .par_iter()
        .map(|p| target_tree.nearest(&transform.apply_point(p)).1)
        .filter(|&d| d <= params.max_correspondence_dist)
        .collect();
    if dists.is_empty() {
        return Err(Error::NoCorrespondences);
    }
    dists.sort_by(f64::total_cmp);
    let keep = (((dists.len() as f64) * (1.0 - params.trim_fraction)).ceil() as usize).max(3);
    dists.truncate(keep);
    Ok((dists.iter().map(|d| d * d).sum::<f64>() / dists.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{apply_rigid, Sim3Transform};
    use crate::testutil::bumpy_mesh;
    use crate::rng::Rng;
    use nalgebra::{Rotation3, Unit, Vector3};

    #[test]
    fn aligned_source_converges_immediately() {
        let mesh = bumpy_mesh();
        let target = mesh.sample_surface(20_000, 1);
        let source = target.select(&(0..2000).collect::<Vec<_>>());
        let res = icp(&source, &target, &IcpParams::default(), &RigidTransform::identity())
            .unwrap();
        assert!(res.iterations <= 2, "took {} iterations", res.iterations);
        let (rot, tr, _) = res.transform.to_sim3().deviation_from_identity();
        assert!(rot < 1e-6 && tr < 1e-6, "rot {rot:e} tr {tr:e}");
        assert!(res.rms < 1e-9);
    }

    #[test]
    fn recovers_small_rigid_perturbation() {
        let mesh = bumpy_mesh();
        let target = mesh.sample_surface(50_000, 2);
        let diag = mesh.bounding_diagonal();
        let mut rng = Rng::seed_from_u64(3);
        for trial in 0..10 {
            let axis = Unit::new_normalize(rng.unit_vector());
            let angle = rng.uniform_in(-1.0, 1.0) * 10f64.to_radians();
            let shift = rng.unit_vector() * 0.03 * diag;
            let perturb = RigidTransform::new(Rotation3::from_axis_angle(&axis, angle), shift);
            let source_cloud = mesh.sample_surface(4000, 100 + trial);
            let source = apply_rigid(&perturb, &source_cloud).unwrap();

            let res = icp(&source, &target, &IcpParams::default(), &RigidTransform::identity())
                .unwrap();
            let residual = res.transform.compose(&perturb);
            let (rot, tr, _) = residual.to_sim3().deviation_from_identity();
            assert!(
                rot.to_degrees() < 0.5,
                "trial {trial}: rotation residual {} deg",
                rot.to_degrees()
            );
            assert!(
                tr < 1e-3 * diag,
                "trial {trial}: translation residual {tr} vs diag {diag}"
            );
        }
    }

    #[test]
    fn disjoint_clouds_give_no_correspondences() {
        let a = PointCloud::new(vec![Point3::origin(), Point3::new(0.01, 0.0, 0.0), Point3::new(0.0, 0.01, 0.0)]).unwrap();
        let b = PointCloud::new(vec![Point3::new(10.0, 0.0, 0.0), Point3::new(10.01, 0.0, 0.0), Point3::new(10.0, 0.01, 0.0)]).unwrap();
        let params = IcpParams {
            max_correspondence_dist: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            icp(&a, &b, &params, &RigidTransform::identity()),
            Err(Error::NoCorrespondences)
        ));
    }

    #[test]
    fn kept_rms_is_non_increasing_across_iterations() {
        // Run ICP one iteration at a time and track the same RMS metric.
        let mesh = bumpy_mesh();
        let target = mesh.sample_surface(30_000, 5);
        let tree = KdTree::build(&target.points).unwrap();
        let mut rng = Rng::seed_from_u64(7);
        let axis = Unit::new_normalize(rng.unit_vector());
        let perturb = RigidTransform::new(
            Rotation3::from_axis_angle(&axis, 0.15),
            rng.unit_vector() * 0.01,
        );
        let source = apply_rigid(&perturb, &mesh.sample_surface(3000, 6)).unwrap();

        let params = IcpParams::default();
        let mut transform = RigidTransform::identity();
        let mut prev = f64::INFINITY;
        for _ in 0..12 {
            let one_step = IcpParams {
                max_iterations: 1,
                convergence_tol: 0.0,
                ..params
            };
            let res = icp(&source, &target, &one_step, &transform).unwrap();
            transform = res.transform;
            let rms = icp_rms(&source, &tree, &transform, &params).unwrap();
            assert!(
                rms <= prev * (1.0 + 1e-12),
                "kept RMS increased: {prev} -> {rms}"
            );
            prev = rms;
        }
    }

    #[test]
    fn respects_initial_transform() {
        let mesh = bumpy_mesh();
        let target = mesh.sample_surface(20_000, 8);
        let mut rng = Rng::seed_from_u64(9);
        let axis = Unit::new_normalize(rng.unit_vector());
        let perturb = RigidTransform::new(Rotation3::from_axis_angle(&axis, 0.4), Vector3::new(0.05, -0.02, 0.01));
        let source = apply_rigid(&perturb, &mesh.sample_surface(2000, 10)).unwrap();
        // Start from the exact inverse: stays at the sampling-noise
        // equilibrium near the optimum.
        let init = perturb.inverse();
        let res = icp(&source, &target, &IcpParams::default(), &init).unwrap();
        let residual = res.transform.compose(&perturb);
        let (rot, tr, _) = residual.to_sim3().deviation_from_identity();
        let diag = mesh.bounding_diagonal();
        assert!(
            rot.to_degrees() < 0.5 && tr < 1e-3 * diag,
            "rot {} deg, tr {tr}",
            rot.to_degrees()
        );
    }

    #[test]
    fn trimming_survives_outlier_contamination() {
        let mesh = bumpy_mesh();
        let target = mesh.sample_surface(30_000, 11);
        let mut rng = Rng::seed_from_u64(12);
        let clean = mesh.sample_surface(3000, 13);
        // Contaminate 15% of the source with far-away junk.
        let mut points = clean.points.clone();
        for p in points.iter_mut().take(450) {
            *p = Point3::new(
                rng.uniform_in(0.3, 0.5),
                rng.uniform_in(0.3, 0.5),
                rng.uniform_in(0.3, 0.5),
            );
        }
        let axis = Unit::new_normalize(rng.unit_vector());
        let perturb = RigidTransform::new(
            Rotation3::from_axis_angle(&axis, 0.1),
            rng.unit_vector() * 0.01,
        );
        let source = apply_rigid(&perturb, &PointCloud::new(points).unwrap()).unwrap();
        let res = icp(&source, &target, &IcpParams::default(), &RigidTransform::identity())
            .unwrap();
        let residual = res.transform.compose(&perturb);
        let (rot, tr, _) = residual.to_sim3().deviation_from_identity();
        assert!(
            rot.to_degrees() < 1.0 && tr < 0.005,
            "outliers broke the fit: {} deg, {} m",
            rot.to_degrees(),
            tr
        );
    }

    #[test]
    fn sim3_convenience_identity() {
        // to_sim3 on an identity rigid behaves as identity.
        let id = RigidTransform::identity().to_sim3();
        let (r, t, s) = Sim3Transform::identity().compose(&id).deviation_from_identity();
        assert!(r == 0.0 && t == 0.0 && s == 0.0);
    }
}
