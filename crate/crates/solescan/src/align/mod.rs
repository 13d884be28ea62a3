//! Procrustes, ICP, and the full landmark-guided canonicalization.

mod canonicalize;
mod icp;
mod umeyama;

pub use canonicalize::{
    canonicalize, CanonicalizationResult, CanonicalizeOptions, LandmarkSet,
};
pub use icp::{icp, icp_rms, IcpParams, IcpResult};
pub use umeyama::{alignment_residual_sq, configuration_spread, umeyama};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{apply_transform, PointCloud, RigidTransform, Sim3Transform};
    use crate::metrics::chamfer;
    use crate::rng::Rng;
    use crate::scanner::{random_sim3, virtual_scan, AugmentConfig, RigSpec, ScanNoise, ScanView};
    use crate::testutil::{bumpy_mesh, bumpy_mesh_fine, extreme_landmarks};
    use nalgebra::Point3;

    fn scan_rig(n_views: usize) -> RigSpec {
        let mut spec = RigSpec::default_for_target(Point3::new(0.0, 0.0, 0.015), 180.0);
        spec.n_views = n_views;
        spec.radius = 0.5;
        spec.image_width = 192;
        spec.image_height = 192;
        spec.focal_px = 320.0;
        spec.per_view_budget = 2048;
        spec
    }

    fn hires_rig(n_views: usize) -> RigSpec {
        let mut spec = RigSpec::default_for_target(Point3::new(0.0, 0.0, 0.015), 180.0);
        spec.n_views = n_views;
        spec.radius = 0.5;
        spec.image_width = 512;
        spec.image_height = 512;
        spec.focal_px = 900.0;
        spec.per_view_budget = 3000;
        spec
    }

    fn scramble_cfg() -> AugmentConfig {
        AugmentConfig {
            rot_bound_deg: None,
            scale_range: (0.8, 1.25),
            shift_frac: 0.5,
        }
    }

    /// Relative deviation of `composed o scramble` from the identity.
    fn inversion_error(composed: &Sim3Transform, scramble: &Sim3Transform, diag: f64) -> f64 {
        let residual = composed.compose(scramble);
        let (rot, tr, ls) = residual.deviation_from_identity();
        rot.max(tr / diag).max(ls)
    }

    #[test]
    fn noise_free_scramble_is_inverted() {
        // The fine mesh and hi-res rig keep depth-interpolation bias at
        // the few-micron level; the strict 1e-4 end-to-end bound is
        // exercised in the acceptance suite on the template shape.
        let mesh = bumpy_mesh_fine();
        let landmarks = extreme_landmarks(&mesh);
        let diag = mesh.bounding_diagonal();
        let mut rng = Rng::seed_from_u64(21);
        let opts = CanonicalizeOptions {
            surface_samples: 400_000,
            ..Default::default()
        };
        let scramble = random_sim3(&mut rng, &scramble_cfg(), diag);
        let (partial, views) =
            virtual_scan(&mesh, &hires_rig(20), &ScanNoise::none(50), Some(&scramble)).unwrap();
        let res = canonicalize(
            &mesh,
            &landmarks,
            &views,
            &partial,
            &IcpParams::default(),
            &opts,
        )
        .unwrap();
        let err = inversion_error(&res.composed, &scramble, diag);
        assert!(err < 3e-4, "inversion error {err:.2e}");

        // Aligned cloud is as close to the reference surface as the
        // unscrambled scan itself, up to the recovered-transform error.
        let (reference_scan, _) =
            virtual_scan(&mesh, &hires_rig(20), &ScanNoise::none(50), None).unwrap();
        let dense = mesh.sample_surface(30_000, 1);
        let cd_aligned = chamfer(&res.aligned, &dense, false).unwrap().cd;
        let cd_reference = chamfer(&reference_scan, &dense, false).unwrap().cd;
        assert!(
            cd_aligned <= cd_reference + 2.0 * err * diag + 1e-6,
            "aligned cd {cd_aligned} vs reference {cd_reference} (err {err:.2e})"
        );
    }

    #[test]
    fn all_landmarks_behind_camera_is_insufficient() {
        let mesh = bumpy_mesh();
        let landmarks = extreme_landmarks(&mesh);
        let (partial, views) =
            virtual_scan(&mesh, &scan_rig(1), &ScanNoise::none(3), None).unwrap();
        // Flip the VPP camera to look away: every projection lands behind.
        let mut view = views[0].clone();
        let flip = RigidTransform::new(
            nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::x_axis(), std::f64::consts::PI),
            nalgebra::Vector3::new(0.0, 0.0, -2.0),
        );
        view.vpp_camera.world_to_camera = flip.compose(&view.vpp_camera.world_to_camera);
        let err = canonicalize(
            &mesh,
            &landmarks,
            &[view],
            &partial,
            &IcpParams::default(),
            &CanonicalizeOptions::default(),
        );
        assert!(matches!(
            err,
            Err(crate::error::Error::InsufficientLandmarks { .. })
        ));
    }

    #[test]
    fn icp_stage_improves_on_procrustes_under_noise() {
        let mesh = bumpy_mesh();
        let landmarks = extreme_landmarks(&mesh);
        let diag = mesh.bounding_diagonal();
        let dense = mesh.sample_surface(30_000, 2);
        let mut rng = Rng::seed_from_u64(33);
        let mut improved = 0;
        let trials = 10;
        for trial in 0..trials {
            let scramble = random_sim3(&mut rng, &scramble_cfg(), diag);
            let noise = ScanNoise {
                depth_sigma: 0.001,
                dropout_rate: 0.0,
                vpp_rot_sigma_deg: 1.0,
                vpp_trans_sigma: 0.003,
                seed: 400 + trial,
            };
            let (partial, views) =
                virtual_scan(&mesh, &scan_rig(12), &noise, Some(&scramble)).unwrap();
            let res = canonicalize(
                &mesh,
                &landmarks,
                &views,
                &partial,
                &IcpParams::default(),
                &CanonicalizeOptions::default(),
            )
            .unwrap();
            let procrustes_only = apply_transform(&res.similarity, &partial).unwrap();
            let cd_proc = chamfer(&procrustes_only, &dense, false).unwrap().cd;
            let cd_final = chamfer(&res.aligned, &dense, false).unwrap().cd;
            if cd_final < cd_proc {
                improved += 1;
            }
        }
        assert!(
            improved * 10 >= trials * 9,
            "ICP improved only {improved}/{trials} trials"
        );
    }

    #[test]
    fn equivariant_under_rigid_motion_of_the_scan_frame() {
        let mesh = bumpy_mesh();
        let landmarks = extreme_landmarks(&mesh);
        let mut rng = Rng::seed_from_u64(44);
        let scramble = random_sim3(&mut rng, &scramble_cfg(), mesh.bounding_diagonal());
        let noise = ScanNoise {
            depth_sigma: 0.0005,
            dropout_rate: 0.0,
            vpp_rot_sigma_deg: 0.5,
            vpp_trans_sigma: 0.002,
            seed: 7,
        };
        let (partial, views) = virtual_scan(&mesh, &scan_rig(8), &noise, Some(&scramble)).unwrap();

        let base = canonicalize(
            &mesh,
            &landmarks,
            &views,
            &partial,
            &IcpParams::default(),
            &CanonicalizeOptions::default(),
        )
        .unwrap();

        // Move the whole scan frame by a rigid G: cloud by G, scan cameras
        // by G^-1 on the world side. VPP cameras live in the canonical
        // frame and stay put.
        let g_axis = nalgebra::Unit::new_normalize(rng.unit_vector());
        let g = RigidTransform::new(
            nalgebra::Rotation3::from_axis_angle(&g_axis, 0.9),
            nalgebra::Vector3::new(0.4, -0.2, 0.1),
        );
        let moved_partial = apply_transform(&g.to_sim3(), &partial).unwrap();
        let moved_views: Vec<ScanView> = views
            .iter()
            .map(|v| {
                let mut m = v.clone();
                m.sfm_camera.world_to_camera = v.sfm_camera.world_to_camera.compose(&g.inverse());
                m
            })
            .collect();
        let moved = canonicalize(
            &mesh,
            &landmarks,
            &moved_views,
            &moved_partial,
            &IcpParams::default(),
            &CanonicalizeOptions::default(),
        )
        .unwrap();

        assert_eq!(base.aligned.len(), moved.aligned.len());
        for (a, b) in base.aligned.points.iter().zip(moved.aligned.points.iter()) {
            assert!((a - b).norm() < 1e-6, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn landmark_bookkeeping_shapes() {
        let mesh = bumpy_mesh();
        let landmarks = extreme_landmarks(&mesh);
        let (partial, views) =
            virtual_scan(&mesh, &scan_rig(6), &ScanNoise::none(5), None).unwrap();
        let res = canonicalize(
            &mesh,
            &landmarks,
            &views,
            &partial,
            &IcpParams::default(),
            &CanonicalizeOptions::default(),
        )
        .unwrap();
        assert_eq!(res.per_landmark_residual.len(), landmarks.len());
        assert_eq!(res.views_used_per_landmark.len(), landmarks.len());
        // Determinism: a second run is bit-identical.
        let res2 = canonicalize(
            &mesh,
            &landmarks,
            &views,
            &partial,
            &IcpParams::default(),
            &CanonicalizeOptions::default(),
        )
        .unwrap();
        assert_eq!(res.aligned.points, res2.aligned.points);
        // Observed landmarks have small residuals on a noise-free scan.
        for (r, &n) in res
            .per_landmark_residual
            .iter()
            .zip(&res.views_used_per_landmark)
        {
            if n > 0 {
                assert!(*r < 2e-3, "landmark residual {r}");
            }
        }
    }

    #[test]
    fn landmark_set_round_trip_and_validation() {
        let mesh = bumpy_mesh();
        let lm = extreme_landmarks(&mesh);
        let dir = std::env::temp_dir().join(format!("solescan_lm_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("landmarks.txt");
        lm.write(&p).unwrap();
        let back = LandmarkSet::read(&p).unwrap();
        assert_eq!(back.labels, lm.labels);
        for (a, b) in back.points.iter().zip(lm.points.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        // Collinear landmark sets are rejected.
        let line: Vec<Point3<f64>> = (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let labels = (0..4).map(|i| format!("l{i}")).collect();
        assert!(LandmarkSet::new(line, labels).is_err());
    }

    #[test]
    fn empty_partial_rejected() {
        let mesh = bumpy_mesh();
        let landmarks = extreme_landmarks(&mesh);
        let (_, views) = virtual_scan(&mesh, &scan_rig(2), &ScanNoise::none(6), None).unwrap();
        let empty = PointCloud::empty();
        assert!(canonicalize(
            &mesh,
            &landmarks,
            &views,
            &empty,
            &IcpParams::default(),
            &CanonicalizeOptions::default(),
        )
        .is_err());
    }
}
