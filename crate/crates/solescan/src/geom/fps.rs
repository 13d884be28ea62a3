//! Farthest point sampling.

use crate::error::{Error, Result};
use crate::geom::PointCloud;
use crate::rng::Rng;

/// Greedy farthest-point subset of size k.
///
/// The first point is the one maximizing the projection onto a seeded
/// random direction (ties broken by lowest index), which keeps the result
/// deterministic in (cloud, k, seed) and covariant under permutations of
/// the input. Every further point maximizes the minimum distance to the
/// already-chosen set, again with lowest-index ties.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, seed: u64) -> Result<PointCloud> {
    let indices = farthest_point_indices(&cloud.points, k, seed)?;
    Ok(cloud.select(&indices))
}

/// Index form of [`farthest_point_sample`], in selection order.
pub fn farthest_point_indices(
    points: &[nalgebra::Point3<f64>],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = points.len();
    if k > n {
        return Err(Error::InsufficientPoints { needed: k, got: n });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut rng = Rng::seed_from_u64(seed);
    let dir = rng.unit_vector();
    let mut first = 0usize;
    let mut best = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let proj = p.coords.dot(&dir);
        if proj > best {
            best = proj;
            first = i;
        }
    }

    let mut chosen = Vec::with_capacity(k);
    chosen.push(first);
    let mut min_dist_sq = vec![f64::INFINITY; n];
    let mut last = first;
    while chosen.len() < k {
        let last_p = points[last];
        let mut next = 0usize;
        let mut next_d = f64::NEG_INFINITY;
        for i in 0..n {
            let d = (points[i] - last_p).norm_squared();
            if d < min_dist_sq[i] {
                min_dist_sq[i] = d;
            }
            if min_dist_sq[i] > next_d {
                next_d = min_dist_sq[i];
                next = i;
            }
        }
        chosen.push(next);
        last = next;
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use nalgebra::Point3;

    fn random_cloud(rng: &mut Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Point3::new(
                        rng.uniform_in(-1.0, 1.0),
                        rng.uniform_in(-1.0, 1.0),
                        rng.uniform_in(-1.0, 1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn min_pairwise_distance(points: &[Point3<f64>]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                best = best.min((points[i] - points[j]).norm());
            }
        }
        best
    }

    #[test]
    fn k_equals_n_gives_a_permutation() {
        let mut rng = Rng::seed_from_u64(1);
        let cloud = random_cloud(&mut rng, 50);
        let out = farthest_point_sample(&cloud, 50, 7).unwrap();
        let mut got: Vec<_> = out.points.iter().map(|p| format!("{:?}", p)).collect();
        let mut want: Vec<_> = cloud.points.iter().map(|p| format!("{:?}", p)).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn square_corners_beat_center() {
        let cloud = PointCloud::new(vec![
            Point3::new(-1.0, -1.0, 0.0),
            Point3::new(1.0, -1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(-1.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 0.0),
        ])
        .unwrap();
        for seed in 0..10 {
            let out = farthest_point_sample(&cloud, 4, seed).unwrap();
            assert!(
                !out.points.iter().any(|p| p.coords.norm() < 1e-12),
                "seed {seed} picked the center"
            );
        }
    }

    #[test]
    fn beats_random_subsets_on_spread() {
        // Independent oracle: the min pairwise distance of the FPS subset
        // must be at least that of any random subset of the same size.
        let mut rng = Rng::seed_from_u64(3);
        let cloud = random_cloud(&mut rng, 256);
        let fps = farthest_point_sample(&cloud, 16, 0).unwrap();
        let fps_spread = min_pairwise_distance(&fps.points);
        for _ in 0..50 {
            let idx = rng.sample_indices(256, 16);
            let sub = cloud.select(&idx);
            assert!(fps_spread >= min_pairwise_distance(&sub.points) - 1e-12);
        }
    }

    #[test]
    fn deterministic_in_cloud_k_seed() {
        let mut rng = Rng::seed_from_u64(4);
        let cloud = random_cloud(&mut rng, 128);
        let a = farthest_point_sample(&cloud, 32, 9).unwrap();
        let b = farthest_point_sample(&cloud, 32, 9).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn permutation_covariant() {
        let mut rng = Rng::seed_from_u64(5);
        let cloud = random_cloud(&mut rng, 64);
        let mut perm: Vec<usize> = (0..64).collect();
        rng.shuffle(&mut perm);
        let permuted = cloud.select(&perm);
        let a = farthest_point_sample(&cloud, 16, 2).unwrap();
        let b = farthest_point_sample(&permuted, 16, 2).unwrap();
        let mut sa: Vec<String> = a.points.iter().map(|p| format!("{p:?}")).collect();
        let mut sb: Vec<String> = b.points.iter().map(|p| format!("{p:?}")).collect();
        sa.sort();
        sb.sort();
        assert_eq!(sa, sb);
    }

    #[test]
    fn oversized_k_rejected() {
        let mut rng = Rng::seed_from_u64(6);
        let cloud = random_cloud(&mut rng, 10);
        assert!(matches!(
            farthest_point_sample(&cloud, 11, 0),
            Err(Error::InsufficientPoints { .. })
        ));
    }
}
