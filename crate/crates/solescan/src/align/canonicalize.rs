//! Canonicalization: map an arbitrarily posed partial scan into the
//! template's reference frame via landmark projection, similarity
//! Procrustes, and rigid ICP refinement.

use std::fs;
use std::path::Path;

use nalgebra::Point3;

use crate::align::icp::{icp, IcpParams, IcpResult};
use crate::align::umeyama::{configuration_spread, umeyama, COLLINEARITY_TOL};
use crate::error::{Error, Result};
use crate::geom::{apply_rigid, apply_transform, PointCloud, RigidTransform, Sim3Transform, TriangleMesh};
use crate::scanner::ScanView;

/// Named reference positions on the template mesh.
#[derive(Clone, Debug)]
pub struct LandmarkSet {
    pub points: Vec<Point3<f64>>,
    pub labels: Vec<String>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point3<f64>>, labels: Vec<String>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InsufficientLandmarks { got: points.len() });
        }
        if points.len() != labels.len() {
            return Err(Error::InvalidInput(
                "landmark labels and points must have equal length".into(),
            ));
        }
        if configuration_spread(&points) <= COLLINEARITY_TOL {
            return Err(Error::DegenerateConfiguration(
                "landmarks are (near-)collinear".into(),
            ));
        }
        Ok(LandmarkSet { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Plain-text format: one `label x y z` line per landmark.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (label, p) in self.labels.iter().zip(self.points.iter()) {
            out.push_str(&format!("{label} {} {} {}\n", p.x, p.y, p.z));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let perr = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}", i + 1),
                message: msg,
            };
            let label = it.next().ok_or_else(|| perr("missing label".into()))?;
            let mut coords = [0.0f64; 3];
            for c in coords.iter_mut() {
                *c = it
                    .next()
                    .ok_or_else(|| perr("expected 3 coordinates".into()))?
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| perr(e.to_string()))?;
            }
            if it.next().is_some() {
                return Err(perr("trailing fields".into()));
            }
            labels.push(label.to_string());
            points.push(Point3::new(coords[0], coords[1], coords[2]));
        }
        LandmarkSet::new(points, labels)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CanonicalizeOptions {
    /// Occlusion threshold as a fraction of the partial cloud's bounding
    /// diagonal.
    pub occlusion_frac: f64,
    /// Surface samples of the reference mesh used as the ICP target.
    pub surface_samples: usize,
    /// Seed for the target sampling.
    pub seed: u64,
    /// Keep a landmark observation only when the view is within this
    /// incidence angle of the landmark's surface normal. Grazing views
    /// put the landmark on the depth map's silhouette, where interpolated
    /// depth is unreliable; the Procrustes scale estimate needs the
    /// near-frontal views.
    pub max_incidence_deg: f64,
}

impl Default for CanonicalizeOptions {
    fn default() -> Self {
        CanonicalizeOptions {
            occlusion_frac: 0.02,
            surface_samples: 50_000,
            seed: 0,
            max_incidence_deg: 45.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CanonicalizationResult {
    pub aligned: PointCloud,
    /// Similarity from the Procrustes stage (scan frame -> canonical).
    pub similarity: Sim3Transform,
    /// Rigid ICP refinement applied after the similarity.
    pub refinement: RigidTransform,
    /// Refinement o similarity; apply this to scan-frame geometry.
    pub composed: Sim3Transform,
    /// Distance of each landmark's triangulated estimate to its template
    /// position after alignment; NaN for landmarks without observations.
    pub per_landmark_residual: Vec<f64>,
    pub views_used_per_landmark: Vec<usize>,
    pub icp_rms: f64,
    pub icp_iterations: usize,
}

/// Outward surface normal at each landmark, taken from the nearest face
/// of the reference mesh.
fn landmark_normals(landmarks: &LandmarkSet, mesh: &TriangleMesh) -> Vec<nalgebra::Vector3<f64>> {
    landmarks
        .points
        .iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0usize);
            for f in 0..mesh.faces.len() {
                let d = crate::geom::point_triangle_distance_sq(p, &mesh.triangle(f));
                if d < best.0 {
                    best = (d, f);
                }
            }
            mesh.face_normal(best.1)
        })
        .collect()
}

/// Recover each landmark's scan-frame position: project it with the VPP
/// camera, look the depth up in that view's depth map, back-project with
/// the scan camera, and average over views. Observations are kept only
/// when the landmark faces the camera (incidence filter), the sampled
/// depth is valid, and the depth is consistent with the landmark's own
/// depth (occlusion filter). Returns per-landmark centroids plus
/// observation counts.
fn triangulate_landmarks(
    landmarks: &LandmarkSet,
    normals: &[nalgebra::Vector3<f64>],
    views: &[ScanView],
    occlusion_threshold: f64,
    max_incidence_deg: f64,
) -> (Vec<Option<Point3<f64>>>, Vec<usize>) {
    let k = landmarks.len();
    let min_cos = max_incidence_deg.to_radians().cos();
    // (landmark, view) -> back-projected estimate; fixed iteration order.
    let mut estimates: Vec<Vec<Point3<f64>>> = vec![Vec::new(); k];

    for view in views {
        let cam_pos = view.vpp_camera.position();
        // Candidate observations in this view.
        let mut obs: Vec<(usize, nalgebra::Point2<f64>, f64, f64)> = Vec::new();
        for (j, p) in landmarks.points.iter().enumerate() {
            let to_cam = (cam_pos - p).normalize();
            if normals[j].dot(&to_cam) < min_cos {
                continue; // grazing or back-facing in this view
            }
            let (pixel, landmark_depth) = match view.vpp_camera.project(p) {
                Ok(x) => x,
                Err(_) => continue, // behind camera or out of frame
            };
            let sampled = view.depth.sample_bilinear(pixel.x, pixel.y);
            if sampled.is_nan() {
                continue;
            }
            obs.push((j, pixel, sampled, landmark_depth));
        }
        if obs.is_empty() {
            continue;
        }
        // The depth map lives in the scan frame whose global scale is
        // unknown; calibrate the comparison with the median depth ratio
        // before applying the occlusion threshold.
        let mut ratios: Vec<f64> = obs.iter().map(|(_, _, d, dh)| d / dh).collect();
        ratios.sort_by(f64::total_cmp);
        let rho = ratios[ratios.len() / 2];
        for (j, pixel, sampled, landmark_depth) in obs {
            if (sampled - rho * landmark_depth).abs() > occlusion_threshold {
                continue;
            }
            if let Ok(world) = view.sfm_camera.back_project(&pixel, sampled) {
                estimates[j].push(world);
            }
        }
    }

    let counts: Vec<usize> = estimates.iter().map(Vec::len).collect();
    let centroids = estimates
        .into_iter()
        .map(|pts| {
            if pts.is_empty() {
                None
            } else {
                let mut acc = nalgebra::Vector3::zeros();
                for p in &pts {
                    acc += p.coords;
                }
                Some(Point3::from(acc / pts.len() as f64))
            }
        })
        .collect();
    (centroids, counts)
}

/// Full canonicalization of a partial scan against a reference mesh.
pub fn canonicalize(
    ref_mesh: &TriangleMesh,
    landmarks: &LandmarkSet,
    views: &[ScanView],
    partial: &PointCloud,
    icp_params: &IcpParams,
    opts: &CanonicalizeOptions,
) -> Result<CanonicalizationResult> {
    if views.is_empty() {
        return Err(Error::InvalidInput("canonicalize needs at least one view".into()));
    }
    if partial.is_empty() {
        return Err(Error::EmptyInput);
    }

    let occlusion_threshold = opts.occlusion_frac * partial.bounding_diagonal();
    let normals = landmark_normals(landmarks, ref_mesh);
    let (centroids, counts) = triangulate_landmarks(
        landmarks,
        &normals,
        views,
        occlusion_threshold,
        opts.max_incidence_deg,
    );

    let mut src = Vec::new(); // scan-frame landmark estimates
    let mut tgt = Vec::new(); // template positions
    for (j, c) in centroids.iter().enumerate() {
        if let Some(p) = c {
            src.push(*p);
            tgt.push(landmarks.points[j]);
        }
    }
    if src.len() < 3 {
        return Err(Error::InsufficientLandmarks { got: src.len() });
    }

    // Scan frame -> canonical frame, with scale.
    let similarity = umeyama(&src, &tgt, true)?;
    let transformed = apply_transform(&similarity, partial)?;

    let target = ref_mesh.sample_surface(opts.surface_samples, opts.seed);
    let IcpResult {
        transform: refinement,
        rms: icp_rms,
        iterations: icp_iterations,
    } = icp(&transformed, &target, icp_params, &RigidTransform::identity())?;

    let aligned = apply_rigid(&refinement, &transformed)?;
    let composed = refinement.to_sim3().compose(&similarity);

    let per_landmark_residual: Vec<f64> = centroids
        .iter()
        .enumerate()
        .map(|(j, c)| match c {
            Some(p) => (composed.apply_point(p) - landmarks.points[j]).norm(),
            None => f64::NAN,
        })
        .collect();

    Ok(CanonicalizationResult {
        aligned,
        similarity,
        refinement,
        composed,
        per_landmark_residual,
        views_used_per_landmark: counts,
        icp_rms,
        icp_iterations,
    })
}
