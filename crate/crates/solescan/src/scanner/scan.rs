//! Virtual scanning: render, corrupt, back-project, merge.

use nalgebra::{Point2, Rotation3, Unit, Vector3};
#[cfg(test)]
use nalgebra::Point3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{PinholeCamera, PointCloud, RigidTransform, Sim3Transform, TriangleMesh};
use crate::rng::Rng;
use crate::scanner::render::render_depth_faces;
use crate::scanner::{make_rig, DepthMap, RigSpec, ScanNoise};

/// One view of a scan bundle: the true scan-frame camera `sfm_camera`
/// (C_i), the canonical-frame pose estimate `vpp_camera` (C-hat_i), and the
/// rendered depth map.
#[derive(Clone, Debug)]
pub struct ScanView {
    pub sfm_camera: PinholeCamera,
    pub vpp_camera: PinholeCamera,
    pub depth: DepthMap,
}

/// Express a canonical-frame camera in the scrambled frame: the rigid
/// world-to-camera that maps `scramble(p)` to `scale * w2c(p)`. Scale is
/// absorbed into camera-frame depth, the way scanning a rescaled object
/// yields rescaled depths.
fn camera_in_scrambled_frame(cam: &PinholeCamera, scramble: &Sim3Transform) -> PinholeCamera {
    let r = cam.world_to_camera.rotation * scramble.rotation.inverse();
    let t = scramble.scale * cam.world_to_camera.translation - r * scramble.translation;
    let mut out = *cam;
    out.world_to_camera = RigidTransform::new(r, t);
    out
}

/// Perturb a camera pose on the camera side: w2c' = noise * w2c.
fn perturb_camera(cam: &PinholeCamera, rot_sigma_deg: f64, trans_sigma: f64, rng: &mut Rng) -> PinholeCamera {
    if rot_sigma_deg == 0.0 && trans_sigma == 0.0 {
        return *cam;
    }
    let axis = Unit::new_normalize(rng.unit_vector());
    let angle = (rng.gaussian() * rot_sigma_deg).to_radians();
    let rot = Rotation3::from_axis_angle(&axis, angle);
    let trans = Vector3::new(
        rng.gaussian() * trans_sigma,
        rng.gaussian() * trans_sigma,
        rng.gaussian() * trans_sigma,
    );
    let noise = RigidTransform::new(rot, trans);
    let mut out = *cam;
    out.world_to_camera = noise.compose(&cam.world_to_camera);
    out
}

/// Render a virtual scan of `mesh`.
///
/// Per camera: render depth, apply per-pixel dropout and Gaussian depth
/// noise (displacing points along their viewing ray), subsample valid
/// pixels to the per-view budget, and back-project. Points carry the view
/// index and the hit triangle's outward normal.
///
/// With a `scramble`, the returned cloud and the `sfm_camera`s live in the
/// scrambled frame while the `vpp_camera`s stay canonical-frame poses
/// perturbed by the VPP noise model — the frame mismatch canonicalization
/// has to undo.
pub fn virtual_scan(
    mesh: &TriangleMesh,
    spec: &RigSpec,
    noise: &ScanNoise,
    scramble: Option<&Sim3Transform>,
) -> Result<(PointCloud, Vec<ScanView>)> {
    spec.validate()?;
    noise.validate()?;
    let canonical_cams = make_rig(spec, noise.seed)?;

    let scan_mesh;
    let scan_cams: Vec<PinholeCamera> = match scramble {
        Some(s) => {
            scan_mesh = mesh.transformed(s);
            canonical_cams
                .iter()
                .map(|c| camera_in_scrambled_frame(c, s))
                .collect()
        }
        None => {
            scan_mesh = mesh.clone();
            canonical_cams.clone()
        }
    };

    let rendered: Vec<(DepthMap, Vec<Option<u32>>)> = scan_cams
        .par_iter()
        .map(|cam| render_depth_faces(&scan_mesh, cam))
        .collect();

    let mut views = Vec::with_capacity(scan_cams.len());
    let mut clouds = Vec::with_capacity(scan_cams.len());
    let base_rng = Rng::seed_from_u64(noise.seed);

    for (i, (mut depth, faces)) in rendered.into_iter().enumerate() {
        let mut view_rng = base_rng.derive(i as u64);
        if noise.dropout_rate > 0.0 || noise.depth_sigma > 0.0 {
            for d in depth.depth.iter_mut() {
                if d.is_nan() {
                    continue;
                }
                if noise.dropout_rate > 0.0 && view_rng.uniform() < noise.dropout_rate {
                    *d = f64::NAN;
                    continue;
                }
                if noise.depth_sigma > 0.0 {
                    let noisy = *d + noise.depth_sigma * view_rng.gaussian();
                    *d = if noisy > 0.0 { noisy } else { f64::NAN };
                }
            }
        }

        let valid: Vec<usize> = (0..depth.depth.len())
            .filter(|&p| !depth.depth[p].is_nan())
            .collect();
        let picked: Vec<usize> = if valid.len() > spec.per_view_budget {
            view_rng
                .sample_indices(valid.len(), spec.per_view_budget)
                .into_iter()
                .map(|k| valid[k])
                .collect()
        } else {
            valid
        };

        let cam = &scan_cams[i];
        let mut points = Vec::with_capacity(picked.len());
        let mut normals = Vec::with_capacity(picked.len());
        let mut ids = Vec::with_capacity(picked.len());
        for p in picked {
            let col = (p % depth.width as usize) as f64 + 0.5;
            let row = (p / depth.width as usize) as f64 + 0.5;
            let world = cam.back_project(&Point2::new(col, row), depth.depth[p])?;
            let face = faces[p].expect("valid pixel must have a hit face") as usize;
            let mut n = scan_mesh.face_normal(face);
            // First hits of a closed mesh face the camera; guard anyway.
            if n.dot(&(cam.position() - world)) < 0.0 {
                n = -n;
            }
            points.push(world);
            normals.push(n);
            ids.push(i as u32);
        }
        clouds.push(PointCloud {
            points,
            normals: Some(normals),
            view_ids: Some(ids),
        });

        let mut vpp_rng = base_rng.derive(0x5650_0000 ^ i as u64);
        let vpp_camera = perturb_camera(
            &canonical_cams[i],
            noise.vpp_rot_sigma_deg,
            noise.vpp_trans_sigma,
            &mut vpp_rng,
        );
        views.push(ScanView {
            sfm_camera: *cam,
            vpp_camera,
            depth,
        });
    }

    let merged = PointCloud::concat(&clouds);
    if merged.is_empty() {
        return Err(Error::EmptyScan);
    }
    Ok((merged, views))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::point_mesh_distance;
    use crate::metrics::chamfer;
    use crate::rng::Rng;

    fn sphere_mesh(center: Point3<f64>, r: f64) -> TriangleMesh {
        crate::testutil::uv_sphere(center, r, 32, 64)
    }

    fn full_rig(n: usize) -> RigSpec {
        let mut s = RigSpec::default_for_target(Point3::origin(), 180.0);
        s.n_views = n;
        s.radius = 0.5;
        s.image_width = 160;
        s.image_height = 160;
        s.focal_px = 280.0;
        s
    }

    #[test]
    fn zero_noise_no_scramble_gives_identical_camera_pairs() {
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let (_, views) = virtual_scan(&mesh, &full_rig(4), &ScanNoise::none(1), None).unwrap();
        for v in &views {
            assert_eq!(v.sfm_camera.world_to_camera, v.vpp_camera.world_to_camera);
        }
    }

    #[test]
    fn identity_scramble_matches_no_scramble() {
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let id = Sim3Transform::identity();
        let (c1, v1) = virtual_scan(&mesh, &full_rig(3), &ScanNoise::none(2), Some(&id)).unwrap();
        let (c2, v2) = virtual_scan(&mesh, &full_rig(3), &ScanNoise::none(2), None).unwrap();
        assert_eq!(c1.points, c2.points);
        for (a, b) in v1.iter().zip(v2.iter()) {
            let da = a.sfm_camera.world_to_camera;
            let db = b.sfm_camera.world_to_camera;
            assert!((da.translation - db.translation).norm() < 1e-12);
        }
    }

    #[test]
    fn dense_scan_covers_the_surface() {
        // Oracle: the scan must be no worse than ~1.5x an ideal random
        // surface sampling of the same size, measured by symmetric
        // chamfer distance against dense reference samples.
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let mut spec = full_rig(12);
        spec.per_view_budget = 3000;
        let (scan, _) = virtual_scan(&mesh, &spec, &ScanNoise::none(3), None).unwrap();
        let reference = mesh.sample_surface(50_000, 99);
        let ideal = mesh.sample_surface(scan.len(), 7);
        let cd_scan = chamfer(&scan, &reference, false).unwrap().cd;
        let cd_ideal = chamfer(&ideal, &reference, false).unwrap().cd;
        assert!(
            cd_scan < 1.5 * cd_ideal,
            "scan cd {cd_scan} vs ideal sampling cd {cd_ideal}"
        );
        // And every scan point is genuinely on the surface.
        for p in scan.points.iter().step_by(37) {
            assert!(point_mesh_distance(p, &mesh) < 1e-9);
        }
    }

    #[test]
    fn restricted_angle_hides_the_underside() {
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let mut spec = full_rig(10);
        spec.max_view_angle_deg = 60.0;
        let (scan, _) = virtual_scan(&mesh, &spec, &ScanNoise::none(4), None).unwrap();
        // Visibility oracle for a sphere of radius r seen from distance R
        // with camera directions within theta of +z: a point with outward
        // normal n is visible iff max over allowed d of n.d > r/R, i.e.
        // sqrt(1-nz^2) sin(theta) + nz cos(theta) > r/R. Solve for the
        // lowest visible nz by bisection.
        let (r, bigr, theta) = (0.1f64, spec.radius, 60f64.to_radians());
        let reach = |nz: f64| (1.0 - nz * nz).sqrt() * theta.sin() + nz * theta.cos();
        let (mut lo, mut hi) = (-1.0f64, 0.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if reach(mid) > r / bigr {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let nz_min = lo; // below this the point is provably invisible
        let normals = scan.normals.as_ref().unwrap();
        for n in normals {
            assert!(
                n.z >= nz_min - 1e-9,
                "normal {n:?} belongs to the unreachable underside (bound {nz_min:.4})"
            );
        }
        // And the unreachable polar cap stays uncovered.
        let cap_z = r * nz_min;
        for p in &scan.points {
            assert!(p.z >= cap_z - 1e-9);
        }
    }

    #[test]
    fn plantar_surface_hidden_at_60_degrees() {
        // On the foot-like template, a 60-degree rig leaves the sole
        // essentially unscanned while a full rig covers it.
        let mesh = crate::shapegen::template_mesh();
        let (lo, hi) = mesh.bounding_box();
        let target = nalgebra::Point3::from((lo.coords + hi.coords) / 2.0);
        let dense = mesh.sample_surface(8000, 1);
        let plantar: Vec<usize> = (0..dense.len())
            .filter(|&i| dense.normals.as_ref().unwrap()[i].z < -0.7)
            .collect();
        assert!(plantar.len() > 500, "template has a plantar region");
        let coverage = |theta: f64| -> f64 {
            let mut spec = RigSpec::default_for_target(target, theta);
            spec.n_views = 10;
            spec.image_width = 160;
            spec.image_height = 160;
            spec.focal_px = 280.0;
            let (scan, _) = virtual_scan(&mesh, &spec, &ScanNoise::none(3), None).unwrap();
            let tree = crate::geom::KdTree::build(&scan.points).unwrap();
            let eps = 0.004;
            plantar
                .iter()
                .filter(|&&i| tree.nearest(&dense.points[i]).1 < eps)
                .count() as f64
                / plantar.len() as f64
        };
        let restricted = coverage(60.0);
        let full = coverage(180.0);
        assert!(restricted < 0.05, "plantar coverage {restricted:.3} at 60 deg");
        assert!(full > 0.95, "plantar coverage {full:.3} at 180 deg");
    }

    #[test]
    fn coverage_non_decreasing_in_view_angle() {
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let reference = mesh.sample_surface(10_000, 5);
        let eps = 0.004;
        for seed in [11u64, 12] {
            let mut prev = -1.0f64;
            for theta in [60.0, 90.0, 120.0, 180.0] {
                let mut spec = full_rig(10);
                spec.max_view_angle_deg = theta;
                let (scan, _) =
                    virtual_scan(&mesh, &spec, &ScanNoise::none(seed), None).unwrap();
                let tree = crate::geom::KdTree::build(&scan.points).unwrap();
                let covered = reference
                    .points
                    .iter()
                    .filter(|p| tree.nearest(p).1 < eps)
                    .count() as f64
                    / reference.len() as f64;
                assert!(
                    covered >= prev - 1e-9,
                    "coverage dropped from {prev} to {covered} at {theta}"
                );
                prev = covered;
            }
            assert!(prev > 0.95, "full sphere rig should cover almost all");
        }
    }

    #[test]
    fn budget_caps_points_and_view_ids_are_valid() {
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let mut spec = full_rig(5);
        spec.per_view_budget = 500;
        let (scan, views) = virtual_scan(&mesh, &spec, &ScanNoise::none(6), None).unwrap();
        assert!(scan.len() <= 5 * 500);
        assert_eq!(views.len(), 5);
        for &id in scan.view_ids.as_ref().unwrap() {
            assert!((id as usize) < views.len());
        }
    }

    #[test]
    fn scramble_moves_cloud_and_cameras_consistently() {
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let mut rng = Rng::seed_from_u64(8);
        let axis = Unit::new_normalize(rng.unit_vector());
        let scramble = Sim3Transform::new(
            1.3,
            Rotation3::from_axis_angle(&axis, 0.7),
            Vector3::new(0.2, -0.1, 0.33),
        )
        .unwrap();
        let spec = full_rig(6);
        let (scan, views) = virtual_scan(&mesh, &spec, &ScanNoise::none(9), Some(&scramble)).unwrap();
        let unscrambled = crate::geom::apply_transform(&scramble.inverse(), &scan).unwrap();
        for p in unscrambled.points.iter().step_by(53) {
            assert!(point_mesh_distance(p, &mesh) < 1e-9);
        }
        // Re-projecting scan points through their own sfm camera matches
        // the stored depth map.
        let v = &views[0];
        for (p, &id) in scan.points.iter().zip(scan.view_ids.as_ref().unwrap()).take(200) {
            if id != 0 {
                continue;
            }
            let (px, d) = v.sfm_camera.project(p).unwrap();
            let stored = v.depth.at(px.x as u32, px.y as u32);
            assert!(
                (stored - d).abs() < 1e-9,
                "depth mismatch {stored} vs {d}"
            );
        }
    }

    #[test]
    fn noise_perturbs_along_the_ray() {
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let mut spec = full_rig(2);
        spec.per_view_budget = 2000;
        let noise = ScanNoise {
            depth_sigma: 0.002,
            dropout_rate: 0.0,
            vpp_rot_sigma_deg: 0.0,
            vpp_trans_sigma: 0.0,
            seed: 10,
        };
        let (noisy, views) = virtual_scan(&mesh, &spec, &noise, None).unwrap();
        // Points leave the surface by roughly sigma on average but stay on
        // their pixel ray (re-projection is exact).
        let mut off_surface = 0.0;
        for p in &noisy.points {
            off_surface += point_mesh_distance(p, &mesh);
        }
        off_surface /= noisy.len() as f64;
        assert!(off_surface > 0.0005 && off_surface < 0.004, "{off_surface}");
        let v = &views[0];
        for (p, &id) in noisy.points.iter().zip(noisy.view_ids.as_ref().unwrap()).take(50) {
            if id != 0 {
                continue;
            }
            let (px, _) = v.sfm_camera.project(p).unwrap();
            // Ray through the pixel center: fractional part is 0.5.
            assert!((px.x.fract() - 0.5).abs() < 1e-6);
            assert!((px.y.fract() - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn all_dropped_pixels_is_empty_scan() {
        let mesh = sphere_mesh(Point3::new(10.0, 10.0, 10.0), 0.01); // far away
        let spec = full_rig(2);
        match virtual_scan(&mesh, &spec, &ScanNoise::none(11), None) {
            Err(Error::EmptyScan) => {}
            other => panic!("expected EmptyScan, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let mesh = sphere_mesh(Point3::origin(), 0.1);
        let spec = full_rig(3);
        let noise = ScanNoise {
            depth_sigma: 0.001,
            dropout_rate: 0.1,
            vpp_rot_sigma_deg: 1.0,
            vpp_trans_sigma: 0.003,
            seed: 12,
        };
        let (c1, v1) = virtual_scan(&mesh, &spec, &noise, None).unwrap();
        let (c2, v2) = virtual_scan(&mesh, &spec, &noise, None).unwrap();
        assert_eq!(c1.points, c2.points);
        for (a, b) in v1.iter().zip(v2.iter()) {
            // Bitwise comparison: NaN pixels must match too.
            let bits = |v: &[f64]| v.iter().map(|d| d.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.depth.depth), bits(&b.depth.depth));
            assert_eq!(a.vpp_camera.world_to_camera, b.vpp_camera.world_to_camera);
        }
    }
}
