//! Chamfer and Hausdorff distances.
//!
//! Nearest-neighbor queries run in parallel; the final means are reduced
//! with Kahan summation in index order, so results do not depend on the
//! thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{KdTree, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChamferReport {
    /// Symmetric distance: `directed_pq + directed_qp`.
    pub cd: f64,
    /// Mean over p of the (possibly squared) distance to the nearest q.
    pub directed_pq: f64,
    /// Mean over q of the (possibly squared) distance to the nearest p.
    pub directed_qp: f64,
    /// Whether the squared variant was used.
    pub squared: bool,
}

fn kahan_mean(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum / values.len() as f64
}

fn directed_distances(from: &PointCloud, to_tree: &KdTree, squared: bool) -> Vec<f64> {
    from.points
        .par_iter()
        .map(|p| {
            let (_, d) = to_tree.nearest(p);
            if squared {
                d * d
            } else {
                d
            }
        })
        .collect()
}

/// Symmetric Chamfer distance between two non-empty clouds. `squared`
/// selects the training variant (mean squared distances); reporting uses
/// the unsquared one.
pub fn chamfer(p: &PointCloud, q: &PointCloud, squared: bool) -> Result<ChamferReport> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyInput);
    }
    let p_tree = KdTree::build(&p.points)?;
    let q_tree = KdTree::build(&q.points)?;
    let pq = directed_distances(p, &q_tree, squared);
    let qp = directed_distances(q, &p_tree, squared);
    let directed_pq = kahan_mean(&pq);
    let directed_qp = kahan_mean(&qp);
    Ok(ChamferReport {
        cd: directed_pq + directed_qp,
        directed_pq,
        directed_qp,
        squared,
    })
}

/// Symmetric Hausdorff distance (max of the two directed maxima).
pub fn hausdorff(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyInput);
    }
    let p_tree = KdTree::build(&p.points)?;
    let q_tree = KdTree::build(&q.points)?;
    let pq = directed_distances(p, &q_tree, false)
        .into_iter()
        .fold(0.0, f64::max);
    let qp = directed_distances(q, &p_tree, false)
        .into_iter()
        .fold(0.0, f64::max);
    Ok(pq.max(qp))
}
