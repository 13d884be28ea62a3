//! Property tests for the file formats and the metric axioms.

use nalgebra::Point3;
use proptest::prelude::*;
use solescan::geom::{PointCloud, TriangleMesh};
use solescan::io::{
    read_cloud, read_depth_map, read_mesh, write_cloud, write_depth_map, write_mesh, PlyFormat,
};
use solescan::metrics::{chamfer, hausdorff};
use solescan::scanner::DepthMap;

fn temp_path(tag: &str) -> std::path::PathBuf {
    static COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!("solescan_prop_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(format!("{tag}_{n}"))
}

fn finite_coord() -> impl Strategy<Value = f64> {
    (-1.0e3f64..1.0e3).prop_map(|v| (v as f32) as f64)
}

prop_compose! {
    fn arb_points(max: usize)(v in prop::collection::vec((finite_coord(), finite_coord(), finite_coord()), 1..max))
        -> Vec<Point3<f64>> {
        v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cloud_ply_round_trip(points in arb_points(200), with_ids in any::<bool>(), binary in any::<bool>()) {
        let view_ids = with_ids.then(|| (0..points.len()).map(|i| (i % 7) as u32).collect());
        let cloud = PointCloud::with_attributes(points, None, view_ids).unwrap();
        let path = temp_path("cloud").with_extension("ply");
        let format = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
        write_cloud(&cloud, &path, format).unwrap();
        let back = read_cloud(&path).unwrap();
        prop_assert_eq!(back.points.len(), cloud.points.len());
        // Coordinates were pre-quantized to f32, so the round trip is exact.
        prop_assert_eq!(back.points, cloud.points);
        prop_assert_eq!(back.view_ids, cloud.view_ids);
    }

    #[test]
    fn mesh_ply_round_trip(points in arb_points(50), binary in any::<bool>()) {
        prop_assume!(points.len() >= 3);
        // Fan triangulation over arbitrary points: valid indices, no
        // degenerate index triples.
        let faces: Vec<[u32; 3]> = (1..points.len() as u32 - 1)
            .map(|i| [0, i, i + 1])
            .collect();
        prop_assume!(!faces.is_empty());
        let mesh = TriangleMesh::new(points, faces).unwrap();
        let path = temp_path("mesh").with_extension("ply");
        let format = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
        write_mesh(&mesh, &path, format).unwrap();
        let back = read_mesh(&path).unwrap();
        prop_assert_eq!(back.vertices, mesh.vertices);
        prop_assert_eq!(back.faces, mesh.faces);
    }

    #[test]
    fn depth_map_round_trip(
        w in 1u32..24,
        h in 1u32..24,
        fill in prop::collection::vec(prop::option::of(0.01f64..10.0), 1..576)
    ) {
        let n = (w * h) as usize;
        let depth: Vec<f64> = (0..n)
            .map(|i| match fill.get(i % fill.len()) {
                Some(Some(d)) => (*d as f32) as f64,
                _ => f64::NAN,
            })
            .collect();
        let map = DepthMap::new(w, h, depth).unwrap();
        let path = temp_path("depth").with_extension("dpm");
        write_depth_map(&map, &path).unwrap();
        let back = read_depth_map(&path).unwrap();
        prop_assert_eq!(back.width, w);
        for (a, b) in map.depth.iter().zip(back.depth.iter()) {
            prop_assert_eq!(a.is_nan(), b.is_nan());
            if !a.is_nan() {
                prop_assert_eq!(*a, *b);
            }
        }
    }

    #[test]
    fn chamfer_symmetry_and_identity(a in arb_points(64), b in arb_points(64)) {
        let pa = PointCloud::new(a).unwrap();
        let pb = PointCloud::new(b).unwrap();
        let ab = chamfer(&pa, &pb, false).unwrap();
        let ba = chamfer(&pb, &pa, false).unwrap();
        prop_assert_eq!(ab.cd, ba.cd);
        prop_assert_eq!(hausdorff(&pa, &pb).unwrap(), hausdorff(&pb, &pa).unwrap());
        prop_assert_eq!(chamfer(&pa, &pa, false).unwrap().cd, 0.0);
        // The squared variant keeps the same zero set.
        let sq = chamfer(&pa, &pb, true).unwrap();
        prop_assert_eq!(sq.cd == 0.0, ab.cd == 0.0);
    }

    #[test]
    fn writers_are_byte_deterministic(points in arb_points(100)) {
        let cloud = PointCloud::new(points).unwrap();
        let p1 = temp_path("det1").with_extension("ply");
        let p2 = temp_path("det2").with_extension("ply");
        write_cloud(&cloud, &p1, PlyFormat::Ascii).unwrap();
        write_cloud(&cloud, &p2, PlyFormat::Ascii).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
