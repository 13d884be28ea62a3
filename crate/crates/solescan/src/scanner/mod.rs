//! Virtual depth scanner: renders depth maps from camera rigs, applies
//! noise models, and back-projects to partial point clouds.

mod augment;
mod bundle;
mod render;
mod rig;
mod scan;

pub use augment::{augment, random_rotation, random_sim3, AugmentConfig};
pub use bundle::{read_scan_bundle, write_scan_bundle, ScanBundle};
pub use render::{ray_triangle, render_depth};
pub use rig::{camera_direction, make_rig};
pub use scan::{virtual_scan, ScanView};

use crate::error::{Error, Result};

/// A rendered depth image. Values are camera-frame z in meters; NaN marks
/// pixels where no surface was hit.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    /// Row-major, `width * height` entries.
    pub depth: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != (width as usize) * (height as usize) {
            return Err(Error::InvalidInput(format!(
                "depth buffer has {} entries for a {}x{} image",
                depth.len(),
                width,
                height
            )));
        }
        for (i, d) in depth.iter().enumerate() {
            if !d.is_nan() && (!d.is_finite() || *d <= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "depth[{i}] = {d}; valid depths must be finite and positive"
                )));
            }
        }
        Ok(DepthMap {
            width,
            height,
            depth,
        })
    }

    pub fn at(&self, col: u32, row: u32) -> f64 {
        self.depth[row as usize * self.width as usize + col as usize]
    }

    /// Bilinear sample at a continuous pixel position (pixel centers at
    /// integer + 0.5). Any NaN among the four neighbors, or a position
    /// outside the center grid, yields NaN.
    pub fn sample_bilinear(&self, px: f64, py: f64) -> f64 {
        let x = px - 0.5;
        let y = py - 0.5;
        if x < 0.0 || y < 0.0 || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return f64::NAN;
        }
        let x0 = x.floor().min((self.width - 1) as f64);
        let y0 = y.floor().min((self.height - 1) as f64);
        let x1 = (x0 + 1.0).min((self.width - 1) as f64);
        let y1 = (y0 + 1.0).min((self.height - 1) as f64);
        let fx = x - x0;
        let fy = y - y0;
        let v00 = self.at(x0 as u32, y0 as u32);
        let v10 = self.at(x1 as u32, y0 as u32);
        let v01 = self.at(x0 as u32, y1 as u32);
        let v11 = self.at(x1 as u32, y1 as u32);
        v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| !d.is_nan()).count()
    }
}

/// Camera rig specification: `n_views` cameras on a sphere of `radius`
/// around `target`, restricted to the given elevation/azimuth ranges and to
/// viewing directions within `max_view_angle_deg` of the reference axis
/// (the template's dorsal +z axis).
#[derive(Clone, Debug)]
pub struct RigSpec {
    pub n_views: usize,
    pub radius: f64,
    /// Degrees above the xy-plane, (lo, hi).
    pub elevation_range_deg: (f64, f64),
    /// Degrees around +z from +x, (lo, hi).
    pub azimuth_range_deg: (f64, f64),
    pub target: nalgebra::Point3<f64>,
    /// Maximum angle between the camera direction (target -> camera) and
    /// the +z reference axis, in degrees.
    pub max_view_angle_deg: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Focal length in pixels (fx = fy).
    pub focal_px: f64,
    /// Valid pixels kept per view before merging (uniform seeded
    /// subsampling).
    pub per_view_budget: usize,
}

impl RigSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_views == 0 {
            return Err(Error::Config("rig needs at least one view".into()));
        }
        if self.radius <= 0.0 {
            return Err(Error::Config("rig radius must be positive".into()));
        }
        if !(0.0 < self.max_view_angle_deg && self.max_view_angle_deg <= 180.0) {
            return Err(Error::Config(
                "max view angle must lie in (0, 180] degrees".into(),
            ));
        }
        Ok(())
    }

    /// Default rig for a desk-scale object at the origin.
    pub fn default_for_target(target: nalgebra::Point3<f64>, max_view_angle_deg: f64) -> RigSpec {
        RigSpec {
            n_views: 8,
            radius: 0.6,
            elevation_range_deg: (-80.0, 80.0),
            azimuth_range_deg: (0.0, 360.0),
            target,
            max_view_angle_deg,
            image_width: 256,
            image_height: 256,
            focal_px: 340.0,
            per_view_budget: 4096,
        }
    }
}

/// Noise model for a virtual scan: per-pixel depth noise along the ray,
/// per-pixel dropout, and the pose error of the estimated cameras relative
/// to the true ones.
#[derive(Clone, Copy, Debug)]
pub struct ScanNoise {
    pub depth_sigma: f64,
    pub dropout_rate: f64,
    pub vpp_rot_sigma_deg: f64,
    pub vpp_trans_sigma: f64,
    pub seed: u64,
}

impl ScanNoise {
    pub fn none(seed: u64) -> Self {
        ScanNoise {
            depth_sigma: 0.0,
            dropout_rate: 0.0,
            vpp_rot_sigma_deg: 0.0,
            vpp_trans_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth_sigma < 0.0
            || !(0.0..1.0).contains(&self.dropout_rate)
            || self.vpp_rot_sigma_deg < 0.0
            || self.vpp_trans_sigma < 0.0
        {
            return Err(Error::Config("noise parameters must be non-negative".into()));
        }
        Ok(())
    }
}
