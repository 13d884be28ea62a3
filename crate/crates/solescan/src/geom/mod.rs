//! Foundational geometric types and spatial queries.

mod camera;
mod cloud;
mod fps;
mod kdtree;
mod mesh;
mod transform;

pub use camera::PinholeCamera;
pub use cloud::PointCloud;
pub use fps::{farthest_point_indices, farthest_point_sample};
pub use kdtree::{nearest_neighbor, KdTree};
pub use mesh::{point_mesh_distance, point_triangle_distance_sq, TriangleMesh};
pub use transform::{apply_rigid, apply_transform, safe_rotation_angle, RigidTransform, Sim3Transform};
