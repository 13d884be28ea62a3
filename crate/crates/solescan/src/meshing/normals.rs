//! Per-point normal estimation with consistent orientation.

use nalgebra::{Matrix3, Vector3};
#[cfg(test)]
use nalgebra::Point3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{KdTree, PinholeCamera, PointCloud};

/// PCA normals from the k-nearest-neighbor covariance. Orientation: when
/// cameras and per-point view ids are available, normals face their
/// source camera; otherwise orientation propagates along a minimum
/// spanning tree of the k-NN graph, seeded at the point of maximal z
/// (oriented +z).
pub fn estimate_normals(
    cloud: &PointCloud,
    k: usize,
    cameras: Option<&[PinholeCamera]>,
) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::Config("normal estimation needs k >= 3".into()));
    }
    if cloud.len() <= k {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            got: cloud.len(),
        });
    }
    let tree = KdTree::build(&cloud.points)?;

    // Raw (unoriented) normals + neighbor lists.
    let per_point: Vec<(Vector3<f64>, Vec<usize>)> = cloud
        .points
        .par_iter()
        .map(|p| {
            let neighbors = tree.knn(p, k + 1); // includes the point itself
            let mut mean = Vector3::zeros();
            for (i, _) in &neighbors {
                mean += cloud.points[*i].coords;
            }
            mean /= neighbors.len() as f64;
            let mut cov = Matrix3::zeros();
            for (i, _) in &neighbors {
                let d = cloud.points[*i].coords - mean;
                cov += d * d.transpose();
            }
            let eig = cov.symmetric_eigen();
            // Smallest eigenvalue's eigenvector.
            let mut smallest = 0;
            for i in 1..3 {
                if eig.eigenvalues[i] < eig.eigenvalues[smallest] {
                    smallest = i;
                }
            }
            let n: Vector3<f64> = eig.eigenvectors.column(smallest).into();
            let n = if n.norm() > 1e-12 {
                n.normalize()
            } else {
                Vector3::z()
            };
            let idx = neighbors.into_iter().map(|(i, _)| i).collect();
            (n, idx)
        })
        .collect();

    let mut normals: Vec<Vector3<f64>> = per_point.iter().map(|(n, _)| *n).collect();

    match (cameras, &cloud.view_ids) {
        (Some(cams), Some(ids)) if !cams.is_empty() => {
            for (i, n) in normals.iter_mut().enumerate() {
                let cam = &cams[(ids[i] as usize).min(cams.len() - 1)];
                if n.dot(&(cam.position() - cloud.points[i])) < 0.0 {
                    *n = -*n;
                }
            }
        }
        _ => {
            orient_by_spanning_tree(cloud, &per_point, &mut normals);
        }
    }

    PointCloud::with_attributes(cloud.points.clone(), Some(normals), cloud.view_ids.clone())
}

/// Hoppe-style orientation propagation: Prim's MST over the k-NN graph
/// with edge weight 1 - |n_i . n_j|, flipping children to agree with their
/// parents. The seed is the highest point, oriented toward +z.
fn orient_by_spanning_tree(
    cloud: &PointCloud,
    per_point: &[(Vector3<f64>, Vec<usize>)],
    normals: &mut [Vector3<f64>],
) {
    let n = cloud.len();
    // Symmetric adjacency.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, (_, nbrs)) in per_point.iter().enumerate() {
        for &j in nbrs {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }

    let seed = (0..n)
        .max_by(|&a, &b| {
            cloud.points[a]
                .z
                .total_cmp(&cloud.points[b].z)
                .then(b.cmp(&a))
        })
        .unwrap();
    if normals[seed].z < 0.0 {
        normals[seed] = -normals[seed];
    }

    // Prim with deterministic tie-breaking.
    let mut in_tree = vec![false; n];
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(u64, usize, usize)>> =
        Default::default();
    let weight_bits = |w: f64| -> u64 { (w.max(0.0) * 1e12) as u64 };
    in_tree[seed] = true;
    for &j in &adj[seed] {
        let w = 1.0 - normals[seed].dot(&normals[j]).abs();
        heap.push(std::cmp::Reverse((weight_bits(w), seed, j)));
    }
    let mut attached = 1;
    while attached < n {
        let Some(std::cmp::Reverse((_, parent, child))) = heap.pop() else {
            // Disconnected k-NN graph: orient remaining components by +z.
            for i in 0..n {
                if !in_tree[i] && normals[i].z < 0.0 {
                    normals[i] = -normals[i];
                }
            }
            break;
        };
        if in_tree[child] {
            continue;
        }
        in_tree[child] = true;
        attached += 1;
        if normals[child].dot(&normals[parent]) < 0.0 {
            normals[child] = -normals[child];
        }
        for &j in &adj[child] {
            if !in_tree[j] {
                let w = 1.0 - normals[child].dot(&normals[j]).abs();
                heap.push(std::cmp::Reverse((weight_bits(w), child, j)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::scanner::{virtual_scan, RigSpec, ScanNoise};
    use crate::testutil::uv_sphere;

    #[test]
    fn plane_normals_are_vertical_and_consistent() {
        let mut rng = Rng::seed_from_u64(1);
        let points: Vec<Point3<f64>> = (0..600)
            .map(|_| Point3::new(rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0), 0.0))
            .collect();
        let cloud = PointCloud::new(points).unwrap();
        let out = estimate_normals(&cloud, 12, None).unwrap();
        let normals = out.normals.unwrap();
        for n in &normals {
            assert!(n.z.abs() > 1.0 - 1e-6, "normal {n:?} not vertical");
        }
        // Consistent orientation: all the same sign.
        let up = normals.iter().filter(|n| n.z > 0.0).count();
        assert!(up == 0 || up == normals.len(), "{up}/{} flipped", normals.len());
    }

    #[test]
    fn sphere_with_camera_rig_has_radial_normals() {
        let mesh = uv_sphere(Point3::origin(), 0.1, 48, 96);
        let mut spec = RigSpec::default_for_target(Point3::origin(), 180.0);
        spec.n_views = 8;
        spec.radius = 0.45;
        spec.per_view_budget = 1400;
        let (scan, views) = virtual_scan(&mesh, &spec, &ScanNoise::none(2), None).unwrap();
        // Strip the scan's own normals to exercise estimation.
        let bare = PointCloud::with_attributes(scan.points.clone(), None, scan.view_ids.clone())
            .unwrap();
        let cams: Vec<_> = views.iter().map(|v| v.sfm_camera).collect();
        let out = estimate_normals(&bare, 16, Some(&cams)).unwrap();
        let normals = out.normals.unwrap();
        let mut good = 0;
        for (p, n) in out.points.iter().zip(&normals) {
            let radial = p.coords.normalize();
            if n.dot(&radial).acos().to_degrees() < 5.0 {
                good += 1;
            }
        }
        let frac = good as f64 / normals.len() as f64;
        assert!(frac >= 0.99, "only {frac:.3} of normals within 5 degrees");
    }

    #[test]
    fn spanning_tree_orientation_is_outward_on_a_sphere() {
        let mesh = uv_sphere(Point3::origin(), 0.1, 40, 80);
        let cloud = mesh.sample_surface(4000, 3);
        let bare = PointCloud::new(cloud.points.clone()).unwrap();
        let out = estimate_normals(&bare, 14, None).unwrap();
        let normals = out.normals.unwrap();
        let outward = out
            .points
            .iter()
            .zip(&normals)
            .filter(|(p, n)| n.dot(&p.coords) > 0.0)
            .count();
        let frac = outward as f64 / normals.len() as f64;
        assert!(frac > 0.97, "only {frac:.3} outward");
    }

    #[test]
    fn too_few_points_rejected() {
        let mut rng = Rng::seed_from_u64(4);
        let points: Vec<Point3<f64>> = (0..10)
            .map(|_| Point3::new(rng.uniform(), rng.uniform(), rng.uniform()))
            .collect();
        let cloud = PointCloud::new(points).unwrap();
        assert!(matches!(
            estimate_normals(&cloud, 10, None),
            Err(Error::InsufficientPoints { .. })
        ));
        assert!(estimate_normals(&cloud, 9, None).is_ok());
    }
}
