//! Pinhole camera model.
//!
//! Convention: right-handed, the camera looks along +z of its own frame,
//! image origin top-left, and "depth" is camera-frame z (not ray length).

use nalgebra::{Point2, Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::RigidTransform;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: RigidTransform,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: RigidTransform,
    ) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image dimensions must be positive".into()));
        }
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(Error::InvalidInput(format!(
                "principal point ({cx}, {cy}) outside image {width}x{height}"
            )));
        }
        Ok(PinholeCamera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
        })
    }

    /// Camera position in world coordinates.
    pub fn position(&self) -> Point3<f64> {
        let inv = self.world_to_camera.inverse();
        Point3::from(inv.translation)
    }

    /// Unit viewing direction in world coordinates (+z of the camera frame).
    pub fn view_direction(&self) -> Vector3<f64> {
        self.world_to_camera.rotation.inverse() * Vector3::z()
    }

    /// Project a world point to (pixel, depth). Depth is camera-frame z.
    pub fn project(&self, p: &Point3<f64>) -> Result<(Point2<f64>, f64)> {
        let cam = self.world_to_camera.apply_point(p);
        if cam.z <= 0.0 {
            return Err(Error::BehindCamera { z: cam.z });
        }
        let px = self.fx * cam.x / cam.z + self.cx;
        let py = self.fy * cam.y / cam.z + self.cy;
        if !(0.0..self.width as f64).contains(&px) || !(0.0..self.height as f64).contains(&py) {
            return Err(Error::OutOfFrame {
                x: px,
                y: py,
                depth: cam.z,
            });
        }
        Ok((Point2::new(px, py), cam.z))
    }

    /// Invert [`project`](Self::project): pixel + depth back to a world point.
    pub fn back_project(&self, pixel: &Point2<f64>, depth: f64) -> Result<Point3<f64>> {
        if depth <= 0.0 || !depth.is_finite() {
            return Err(Error::InvalidDepth(depth));
        }
        let cam = Point3::new(
            (pixel.x - self.cx) * depth / self.fx,
            (pixel.y - self.cy) * depth / self.fy,
            depth,
        );
        Ok(self.world_to_camera.inverse().apply_point(&cam))
    }

    /// World-space ray through the center of pixel (col, row), scaled so
    /// that advancing the parameter by 1 advances camera-frame z by 1.
    /// Returns (origin, direction).
    pub fn pixel_ray(&self, col: u32, row: u32) -> (Point3<f64>, Vector3<f64>) {
        let u = col as f64 + 0.5;
        let v = row as f64 + 0.5;
        let dir_cam = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let inv = self.world_to_camera.inverse();
        (Point3::from(inv.translation), inv.rotation * dir_cam)
    }

    /// Look-at constructor: camera at `eye` looking toward `target`.
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        eye: &Point3<f64>,
        target: &Point3<f64>,
        up_hint: &Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidInput("camera eye coincides with target".into()))?;
        let mut up = up_hint - forward * up_hint.dot(&forward);
        if up.norm() < 1e-9 {
            // Degenerate hint; fall back to the least-aligned axis.
            let alt = if forward.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            up = alt - forward * alt.dot(&forward);
        }
        let up = up.normalize();
        // Right-handed basis with +z forward, +y down (image rows grow down).
        let down = -up;
        let right = down.cross(&forward).normalize();
        let rot = nalgebra::Matrix3::from_columns(&[right, down, forward]);
        // rot maps camera axes into the world; world_to_camera is its inverse.
        let r_wc = rot.transpose();
        let t_wc = -(r_wc * eye.coords);
        let w2c = RigidTransform::from_matrix(r_wc, t_wc)?;
        PinholeCamera::new(fx, fy, cx, cy, width, height, w2c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn basic_camera() -> PinholeCamera {
        PinholeCamera::new(
            100.0,
            100.0,
            50.0,
            50.0,
            100,
            100,
            RigidTransform::identity(),
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let cam = basic_camera();
        let (px, depth) = cam.project(&Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(px, Point2::new(50.0, 50.0));
        assert_eq!(depth, 1.0);
    }

    #[test]
    fn closed_form_projection() {
        let cam = basic_camera();
        let (px, depth) = cam.project(&Point3::new(0.1, 0.0, 1.0)).unwrap();
        assert!((px.x - 60.0).abs() < 1e-12);
        assert!((px.y - 50.0).abs() < 1e-12);
        assert!((depth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_rejected() {
        let cam = basic_camera();
        assert!(matches!(
            cam.project(&Point3::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn out_of_frame_is_distinct_and_carries_payload() {
        let cam = basic_camera();
        match cam.project(&Point3::new(10.0, 0.0, 1.0)) {
            Err(Error::OutOfFrame { x, depth, .. }) => {
                assert!((x - 1050.0).abs() < 1e-9);
                assert!((depth - 1.0).abs() < 1e-12);
            }
            other => panic!("expected OutOfFrame, got {other:?}"),
        }
    }

    #[test]
    fn back_project_principal_point() {
        let cam = basic_camera();
        let p = cam.back_project(&Point2::new(50.0, 50.0), 2.5).unwrap();
        assert!((p - Point3::new(0.0, 0.0, 2.5)).norm() < 1e-12);
    }

    #[test]
    fn zero_depth_rejected() {
        let cam = basic_camera();
        assert!(matches!(
            cam.back_project(&Point2::new(50.0, 50.0), 0.0),
            Err(Error::InvalidDepth(_))
        ));
    }

    #[test]
    fn project_back_project_round_trip() {
        let mut rng = Rng::seed_from_u64(11);
        for trial in 0..1000 {
            let eye = Point3::new(
                rng.uniform_in(-2.0, 2.0),
                rng.uniform_in(-2.0, 2.0),
                rng.uniform_in(-2.0, 2.0),
            );
            let target = Point3::new(
                rng.uniform_in(-0.5, 0.5),
                rng.uniform_in(-0.5, 0.5),
                rng.uniform_in(-0.5, 0.5),
            );
            if (target - eye).norm() < 0.1 {
                continue;
            }
            let cam = PinholeCamera::look_at(
                220.0, 230.0, 127.5, 120.0, 256, 240, &eye, &target, &Vector3::z(),
            )
            .unwrap();
            let pixel = Point2::new(rng.uniform_in(0.0, 256.0), rng.uniform_in(0.0, 240.0));
            let depth = rng.uniform_in(0.05, 5.0);
            let world = cam.back_project(&pixel, depth).unwrap();
            let (pixel2, depth2) = cam.project(&world).unwrap();
            assert!(
                (pixel2 - pixel).norm() < 1e-9 && (depth2 - depth).abs() < 1e-9,
                "trial {trial}: {pixel:?}/{depth} vs {pixel2:?}/{depth2}"
            );
            // And the other direction: project then back-project.
            let world2 = cam.back_project(&pixel2, depth2).unwrap();
            assert!((world2 - world).norm() < 1e-9);
        }
    }

    #[test]
    fn look_at_points_camera_at_target() {
        let eye = Point3::new(1.0, 2.0, 3.0);
        let target = Point3::new(0.2, -0.1, 0.4);
        let cam = PinholeCamera::look_at(
            100.0, 100.0, 64.0, 64.0, 128, 128, &eye, &target, &Vector3::z(),
        )
        .unwrap();
        let (px, _) = cam.project(&target).unwrap();
        assert!((px - Point2::new(64.0, 64.0)).norm() < 1e-9);
        assert!((cam.position() - eye).norm() < 1e-9);
        let dir = cam.view_direction();
        let expect = (target - eye).normalize();
        assert!((dir - expect).norm() < 1e-9);
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(PinholeCamera::new(
            0.0,
            1.0,
            0.0,
            0.0,
            10,
            10,
            RigidTransform::identity()
        )
        .is_err());
        assert!(PinholeCamera::new(
            1.0,
            1.0,
            20.0,
            0.0,
            10,
            10,
            RigidTransform::identity()
        )
        .is_err());
    }
}
