//! Scan bundle directory layout: `scan.ply`, `cameras.txt`, `depth_###.dpm`.
//!
//! `cameras.txt` has one line per view: view id, `fx fy cx cy w h`, then 12
//! floats (row-major 3x4 world-to-camera) for the scan camera C_i, then 12
//! floats for the VPP estimate.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{PinholeCamera, PointCloud, RigidTransform};
use crate::io::{dpm, ply};
use crate::scanner::ScanView;

#[derive(Clone, Debug)]
pub struct ScanBundle {
    pub cloud: PointCloud,
    pub views: Vec<ScanView>,
}

fn write_pose(out: &mut String, t: &RigidTransform) {
    let r = t.rotation.matrix();
    for row in 0..3 {
        for col in 0..3 {
            out.push_str(&format!(" {}", r[(row, col)]));
        }
        out.push_str(&format!(" {}", t.translation[row]));
    }
}

fn parse_pose(vals: &[f64]) -> Result<RigidTransform> {
    let m = Matrix3::new(
        vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
    );
    let t = Vector3::new(vals[3], vals[7], vals[11]);
    RigidTransform::from_matrix(m, t)
}

pub fn write_scan_bundle(bundle: &ScanBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    ply::write_cloud(
        &bundle.cloud,
        dir.join("scan.ply"),
        ply::PlyFormat::BinaryLittleEndian,
    )?;
    let mut cams = String::new();
    for (i, view) in bundle.views.iter().enumerate() {
        let c = &view.sfm_camera;
        cams.push_str(&format!(
            "{i} {} {} {} {} {} {}",
            c.fx, c.fy, c.cx, c.cy, c.width, c.height
        ));
        write_pose(&mut cams, &c.world_to_camera);
        write_pose(&mut cams, &view.vpp_camera.world_to_camera);
        cams.push('\n');
        dpm::write_depth_map(&view.depth, dir.join(format!("depth_{i:03}.dpm")))?;
    }
    let cams_path = dir.join("cameras.txt");
    fs::write(&cams_path, cams).map_err(|e| Error::io(&cams_path, e))
}

pub fn read_scan_bundle(dir: impl AsRef<Path>) -> Result<ScanBundle> {
    let dir = dir.as_ref();
    let cloud = ply::read_cloud(dir.join("scan.ply"))?;
    let cams_path = dir.join("cameras.txt");
    let text = fs::read_to_string(&cams_path).map_err(|e| Error::io(&cams_path, e))?;
    let mut views = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: cams_path.clone(),
            location: format!("line {}", lineno + 1),
            message: msg,
        };
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(e.to_string()))?;
        if vals.len() != 7 + 24 {
            return Err(perr(format!("expected 31 fields, got {}", vals.len())));
        }
        let idx = vals[0] as usize;
        if idx != views.len() {
            return Err(perr(format!("view ids must be consecutive, got {idx}")));
        }
        let (fx, fy, cx, cy) = (vals[1], vals[2], vals[3], vals[4]);
        let (w, h) = (vals[5] as u32, vals[6] as u32);
        let sfm_pose = parse_pose(&vals[7..19])?;
        let vpp_pose = parse_pose(&vals[19..31])?;
        let sfm_camera = PinholeCamera::new(fx, fy, cx, cy, w, h, sfm_pose)?;
        let vpp_camera = PinholeCamera::new(fx, fy, cx, cy, w, h, vpp_pose)?;
        let depth = dpm::read_depth_map(dir.join(format!("depth_{idx:03}.dpm")))?;
        if depth.width != w || depth.height != h {
            return Err(perr("depth map dimensions do not match camera".into()));
        }
        views.push(ScanView {
            sfm_camera,
            vpp_camera,
            depth,
        });
    }
    if views.is_empty() {
        return Err(Error::Parse {
            path: cams_path,
            location: "line 1".into(),
            message: "bundle has no views".into(),
        });
    }
    Ok(ScanBundle { cloud, views })
}
