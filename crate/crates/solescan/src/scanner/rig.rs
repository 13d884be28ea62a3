//! Camera rig construction.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::PinholeCamera;
use crate::rng::Rng;
use crate::scanner::RigSpec;

/// Place `spec.n_views` cameras on the sphere of radius `spec.radius`
/// around `spec.target`, looking at the target.
///
/// Positions are stratified with a golden-ratio lattice over the feasible
/// angular region: the elevation band intersected with the cone of
/// half-angle `max_view_angle_deg` around +z, and the azimuth range. The
/// seed jitters the lattice phase.
pub fn make_rig(spec: &RigSpec, seed: u64) -> Result<Vec<PinholeCamera>> {
    spec.validate()?;
    let (el_lo, el_hi) = spec.elevation_range_deg;
    // Camera directions within theta_max of +z means elevation at least
    // 90 - theta_max.
    let el_lo = el_lo.max(90.0 - spec.max_view_angle_deg);
    if el_lo > el_hi {
        return Err(Error::InfeasibleRig);
    }
    let (az_lo, az_hi) = spec.azimuth_range_deg;
    if az_lo > az_hi {
        return Err(Error::InfeasibleRig);
    }
    let z_lo = el_lo.to_radians().sin();
    let z_hi = el_hi.to_radians().sin();

    let mut rng = Rng::seed_from_u64(seed);
    let phase = rng.uniform();
    let golden = 0.618_033_988_749_894_9_f64;
    let full_circle = (az_hi - az_lo) >= 360.0 - 1e-9;

    let mut cameras = Vec::with_capacity(spec.n_views);
    for i in 0..spec.n_views {
        // Stratified in z = sin(elevation) (area-uniform on the sphere).
        let tz = (i as f64 + 0.5) / spec.n_views as f64;
        let z = z_lo + tz * (z_hi - z_lo);
        let az_frac = (i as f64 * golden + phase).fract();
        let az = if full_circle {
            az_lo + az_frac * 360.0
        } else {
            az_lo + az_frac * (az_hi - az_lo)
        };
        let (az_sin, az_cos) = az.to_radians().sin_cos();
        let xy = (1.0 - z * z).max(0.0).sqrt();
        let dir = Vector3::new(xy * az_cos, xy * az_sin, z);
        let eye = spec.target + dir * spec.radius;
        let cam = PinholeCamera::look_at(
            spec.focal_px,
            spec.focal_px,
            spec.image_width as f64 / 2.0,
            spec.image_height as f64 / 2.0,
            spec.image_width,
            spec.image_height,
            &eye,
            &spec.target,
            &Vector3::z(),
        )?;
        cameras.push(cam);
    }
    Ok(cameras)
}

/// Direction from the target to the camera (the "camera direction" the
/// max-view-angle constraint is measured on).
pub fn camera_direction(cam: &PinholeCamera, target: &Point3<f64>) -> Vector3<f64> {
    (cam.position() - target).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, theta: f64) -> RigSpec {
        let mut s = RigSpec::default_for_target(Point3::new(0.0, 0.0, 0.05), theta);
        s.n_views = n;
        s
    }

    #[test]
    fn all_cameras_point_at_target() {
        let s = spec(8, 180.0);
        let cams = make_rig(&s, 0).unwrap();
        assert_eq!(cams.len(), 8);
        for cam in &cams {
            let (px, _) = cam.project(&s.target).unwrap();
            let center = nalgebra::Point2::new(
                s.image_width as f64 / 2.0,
                s.image_height as f64 / 2.0,
            );
            assert!((px - center).norm() < 1e-9);
            assert!((cam.position() - s.target).norm() - s.radius < 1e-9);
        }
    }

    #[test]
    fn max_view_angle_constrains_directions() {
        let s = spec(16, 30.0);
        let cams = make_rig(&s, 3).unwrap();
        for cam in &cams {
            let dir = camera_direction(cam, &s.target);
            let angle = dir.dot(&Vector3::z()).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle <= 30.0 + 1e-9, "camera at {angle} deg");
            // Equivalently the view direction is within 30 deg of -z.
            let vd = cam.view_direction();
            let va = vd.dot(&(-Vector3::z())).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(va <= 30.0 + 1e-9);
        }
    }

    #[test]
    fn stratification_keeps_cameras_apart() {
        // Pairwise angular separation stays above half the ideal uniform
        // spacing for the spherical cap, across seeds.
        for seed in 0..20u64 {
            let n = 12usize;
            let theta = 70.0f64;
            let s = spec(n, theta);
            let cams = make_rig(&s, seed).unwrap();
            let cap_area = std::f64::consts::TAU * (1.0 - theta.to_radians().cos());
            // Ideal spacing: each view owns a cap of area cap_area / n.
            let ideal = (cap_area / n as f64 / std::f64::consts::PI).sqrt() * 2.0;
            let dirs: Vec<Vector3<f64>> = cams
                .iter()
                .map(|c| camera_direction(c, &s.target))
                .collect();
            let mut min_sep = f64::INFINITY;
            for i in 0..n {
                for j in (i + 1)..n {
                    let ang = dirs[i].dot(&dirs[j]).clamp(-1.0, 1.0).acos();
                    min_sep = min_sep.min(ang);
                }
            }
            assert!(
                min_sep >= ideal / 2.0,
                "seed {seed}: min separation {min_sep:.3} < half ideal {:.3}",
                ideal / 2.0
            );
        }
    }

    #[test]
    fn infeasible_region_rejected() {
        let mut s = spec(4, 5.0);
        s.elevation_range_deg = (-80.0, 60.0); // cone needs >= 85 degrees
        assert!(matches!(make_rig(&s, 0), Err(Error::InfeasibleRig)));
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(6, 120.0);
        let a = make_rig(&s, 9).unwrap();
        let b = make_rig(&s, 9).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.world_to_camera, y.world_to_camera);
        }
    }
}
