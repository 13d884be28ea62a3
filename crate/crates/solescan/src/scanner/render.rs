//! Depth rendering by exact ray-triangle intersection.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::geom::{PinholeCamera, TriangleMesh};
use crate::scanner::DepthMap;

const EPS: f64 = 1e-12;

/// Möller-Trumbore. Returns the ray parameter t of the intersection, with
/// the ray written as origin + t * dir (dir need not be unit length).
pub fn ray_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < EPS {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    (t > EPS).then_some(t)
}

#[derive(Clone, Copy)]
struct Aabb {
    lo: Point3<f64>,
    hi: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            hi: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        for k in 0..3 {
            self.lo[k] = self.lo[k].min(p[k]);
            self.hi[k] = self.hi[k].max(p[k]);
        }
    }

    fn merge(&mut self, other: &Aabb) {
        for k in 0..3 {
            self.lo[k] = self.lo[k].min(other.lo[k]);
            self.hi[k] = self.hi[k].max(other.hi[k]);
        }
    }

    /// Slab test; returns entry distance when the ray hits within t_max.
    fn hit(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.lo[k] - origin[k]) * inv_dir[k];
            let b = (self.hi[k] - origin[k]) * inv_dir[k];
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

enum BvhNode {
    Leaf { start: usize, len: usize },
    Inner { bbox_left: Aabb, bbox_right: Aabb, left: usize, right: usize },
}

/// Median-split BVH over triangle centroids.
pub struct TriangleBvh<'m> {
    mesh: &'m TriangleMesh,
    order: Vec<u32>,
    nodes: Vec<BvhNode>,
    root_bbox: Aabb,
    root: usize,
}

const BVH_LEAF: usize = 4;

impl<'m> TriangleBvh<'m> {
    pub fn build(mesh: &'m TriangleMesh) -> Self {
        let n = mesh.faces.len();
        let centroids: Vec<Point3<f64>> = (0..n)
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                Point3::from((a.coords + b.coords + c.coords) / 3.0)
            })
            .collect();
        let boxes: Vec<Aabb> = (0..n)
            .map(|f| {
                let mut bb = Aabb::empty();
                for p in mesh.triangle(f) {
                    bb.grow(&p);
                }
                bb
            })
            .collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut bvh = TriangleBvh {
            mesh,
            order: Vec::new(),
            nodes: Vec::new(),
            root_bbox: Aabb::empty(),
            root: 0,
        };
        let (root, root_bbox) = bvh.build_node(&mut order, 0, n, &centroids, &boxes);
        bvh.order = order;
        bvh.root = root;
        bvh.root_bbox = root_bbox;
        bvh
    }

    fn build_node(
        &mut self,
        order: &mut [u32],
        start: usize,
        len: usize,
        centroids: &[Point3<f64>],
        boxes: &[Aabb],
    ) -> (usize, Aabb) {
        let mut bbox = Aabb::empty();
        for &f in &order[start..start + len] {
            bbox.merge(&boxes[f as usize]);
        }
        if len <= BVH_LEAF {
            self.nodes.push(BvhNode::Leaf { start, len });
            return (self.nodes.len() - 1, bbox);
        }
        // Split on the widest centroid axis.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &f in &order[start..start + len] {
            let c = centroids[f as usize];
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap();
        let mid = len / 2;
        order[start..start + len].select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let placeholder = self.nodes.len();
        self.nodes.push(BvhNode::Leaf { start: 0, len: 0 });
        let (left, bb_l) = self.build_node(order, start, mid, centroids, boxes);
        let (right, bb_r) = self.build_node(order, start + mid, len - mid, centroids, boxes);
        self.nodes[placeholder] = BvhNode::Inner {
            bbox_left: bb_l,
            bbox_right: bb_r,
            left,
            right,
        };
        (placeholder, bbox)
    }

    /// Nearest intersection along the ray: (t, face index).
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
        let inv_dir = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        self.root_bbox.hit(origin, &inv_dir, f64::INFINITY)?;
        let mut best: Option<(f64, usize)> = None;
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            match &self.nodes[node] {
                BvhNode::Leaf { start, len } => {
                    for &f in &self.order[*start..*start + *len] {
                        let [a, b, c] = self.mesh.triangle(f as usize);
                        if let Some(t) = ray_triangle(origin, dir, &a, &b, &c) {
                            if best.map_or(true, |(bt, _)| t < bt) {
                                best = Some((t, f as usize));
                            }
                        }
                    }
                }
                BvhNode::Inner {
                    bbox_left,
                    bbox_right,
                    left,
                    right,
                } => {
                    let t_max = best.map_or(f64::INFINITY, |(t, _)| t);
                    let hl = bbox_left.hit(origin, &inv_dir, t_max);
                    let hr = bbox_right.hit(origin, &inv_dir, t_max);
                    // Visit the nearer child last so it is popped first.
                    match (hl, hr) {
                        (Some(tl), Some(tr)) => {
                            if tl < tr {
                                stack.push(*right);
                                stack.push(*left);
                            } else {
                                stack.push(*left);
                                stack.push(*right);
                            }
                        }
                        (Some(_), None) => stack.push(*left),
                        (None, Some(_)) => stack.push(*right),
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

/// Render a depth map: per pixel, the camera-frame z of the nearest
/// ray-triangle intersection through the pixel center; NaN where nothing
/// is hit.
pub fn render_depth(mesh: &TriangleMesh, camera: &PinholeCamera) -> DepthMap {
    let bvh = TriangleBvh::build(mesh);
    render_depth_with_bvh(&bvh, camera)
}

/// Like [`render_depth`] but reusing a prebuilt BVH across views.
pub fn render_depth_with_bvh(bvh: &TriangleBvh<'_>, camera: &PinholeCamera) -> DepthMap {
    let (w, h) = (camera.width, camera.height);
    let depth: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..w).map(move |col| {
                // pixel_ray scales dir so the parameter t equals camera z.
                let (origin, dir) = camera.pixel_ray(col, row);
                match bvh.intersect(&origin, &dir) {
                    Some((t, _)) => t,
                    None => f64::NAN,
                }
            })
        })
        .collect();
    DepthMap {
        width: w,
        height: h,
        depth,
    }
}

/// Render and also report the hit face per pixel (for visibility oracles).
pub fn render_depth_faces(
    mesh: &TriangleMesh,
    camera: &PinholeCamera,
) -> (DepthMap, Vec<Option<u32>>) {
    let bvh = TriangleBvh::build(mesh);
    let bvh = &bvh;
    let (w, h) = (camera.width, camera.height);
    let cells: Vec<(f64, Option<u32>)> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..w).map(move |col| {
                let (origin, dir) = camera.pixel_ray(col, row);
                match bvh.intersect(&origin, &dir) {
                    Some((t, f)) => (t, Some(f as u32)),
                    None => (f64::NAN, None),
                }
            })
        })
        .collect();
    let depth = cells.iter().map(|c| c.0).collect();
    let faces = cells.into_iter().map(|c| c.1).collect();
    (
        DepthMap {
            width: w,
            height: h,
            depth,
        },
        faces,
    )
}
