//! Marching cubes over a node-centered scalar grid.
//!
//! The 256-entry case table is generated at first use by marching-squares
//! contouring of each cube face (ambiguous faces resolved by the fixed
//! "separate inside corners" rule, which neighboring cells share), linking
//! the face segments into closed loops, and fanning each loop into
//! triangles. Cracks cannot appear: both cells bounding a face derive the
//! same segments, and every isosurface vertex is welded on its global grid
//! edge.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::TriangleMesh;
use crate::meshing::ScalarGrid;

/// Corner positions of the unit cell, standard ordering.
const CORNERS: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 1.0],
    [0.0, 1.0, 1.0],
];

/// Cell edges as corner pairs, standard ordering.
const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Faces as (cyclic corner quad, the edge between consecutive corners).
const FACES: [([usize; 4], [usize; 4]); 6] = [
    ([0, 1, 2, 3], [0, 1, 2, 3]),    // z = 0
    ([4, 5, 6, 7], [4, 5, 6, 7]),    // z = 1
    ([0, 1, 5, 4], [0, 9, 4, 8]),    // y = 0
    ([3, 2, 6, 7], [2, 10, 6, 11]),  // y = 1
    ([0, 3, 7, 4], [3, 11, 7, 8]),   // x = 0
    ([1, 2, 6, 5], [1, 10, 5, 9]),   // x = 1
];

type CaseTable = Vec<Vec<[u8; 3]>>;

fn build_case(config: u8) -> Vec<[u8; 3]> {
    let inside = |c: usize| (config >> c) & 1 == 1;
    // Segments between crossing edges, gathered per face.
    let mut segments: Vec<(u8, u8)> = Vec::new();
    for (quad, edges) in FACES {
        let crossing: Vec<usize> = (0..4)
            .filter(|&s| inside(quad[s]) != inside(quad[(s + 1) % 4]))
            .collect();
        match crossing.len() {
            0 => {}
            2 => segments.push((edges[crossing[0]] as u8, edges[crossing[1]] as u8)),
            4 => {
                // Ambiguous face: two diagonal inside corners. Separate
                // them: pair the crossings flanking each inside corner.
                for s in 0..4 {
                    if inside(quad[s]) {
                        let before = (s + 3) % 4;
                        segments.push((edges[before] as u8, edges[s] as u8));
                    }
                }
            }
            _ => unreachable!("face crossings come in pairs"),
        }
    }
    if segments.is_empty() {
        return Vec::new();
    }

    // Each crossing edge appears in exactly two segments; walk the loops.
    let mut adjacency: HashMap<u8, Vec<u8>> = HashMap::new();
    for &(a, b) in &segments {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    let mut remaining: Vec<u8> = {
        let mut keys: Vec<u8> = adjacency.keys().copied().collect();
        keys.sort_unstable();
        keys
    };
    let mut triangles = Vec::new();
    let mut visited: std::collections::HashSet<u8> = Default::default();
    while let Some(&start) = remaining.iter().find(|e| !visited.contains(e)) {
        let mut loop_edges = vec![start];
        visited.insert(start);
        let mut prev = start;
        let mut current = adjacency[&start][0];
        while current != start {
            visited.insert(current);
            loop_edges.push(current);
            let next = *adjacency[&current]
                .iter()
                .find(|&&n| n != prev)
                .expect("degree-2 vertices");
            prev = current;
            current = next;
        }
        remaining.retain(|e| !visited.contains(e));

        if loop_edges.len() < 3 {
            continue;
        }
        // Orient the loop so triangle normals point away from the inside
        // (the ">= iso" region).
        let pos = |e: u8| -> Vector3<f64> {
            let [a, b] = EDGES[e as usize];
            Vector3::new(
                (CORNERS[a][0] + CORNERS[b][0]) / 2.0,
                (CORNERS[a][1] + CORNERS[b][1]) / 2.0,
                (CORNERS[a][2] + CORNERS[b][2]) / 2.0,
            )
        };
        let centroid: Vector3<f64> =
            loop_edges.iter().map(|&e| pos(e)).sum::<Vector3<f64>>() / loop_edges.len() as f64;
        // Newell normal.
        let mut normal = Vector3::zeros();
        for i in 0..loop_edges.len() {
            let p = pos(loop_edges[i]) - centroid;
            let q = pos(loop_edges[(i + 1) % loop_edges.len()]) - centroid;
            normal += p.cross(&q);
        }
        // Direction toward the inside region, weighted by proximity to
        // this loop.
        let mut inside_dir = Vector3::zeros();
        for c in 0..8 {
            let cp = Vector3::new(CORNERS[c][0], CORNERS[c][1], CORNERS[c][2]);
            let w = 1.0 / (0.05 + (cp - centroid).norm_squared());
            let sign = if inside(c) { 1.0 } else { -1.0 };
            inside_dir += (cp - centroid) * (w * sign);
        }
        if normal.dot(&inside_dir) > 0.0 {
            loop_edges.reverse();
        }
        for i in 1..loop_edges.len() - 1 {
            triangles.push([loop_edges[0], loop_edges[i], loop_edges[i + 1]]);
        }
    }
    triangles
}

fn case_table() -> &'static CaseTable {
    static TABLE: OnceLock<CaseTable> = OnceLock::new();
    TABLE.get_or_init(|| (0..=255u8).map(build_case).collect())
}

/// Extract the isosurface of a scalar grid.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    grid.validate()?;
    let (nx, ny, nz) = grid.resolution;
    let table = case_table();

    // Welded vertex per crossing grid edge: key = (node index, axis).
    let mut edge_vertices: HashMap<(usize, u8), u32> = HashMap::new();
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    let node = |i: usize, j: usize, k: usize| -> usize { (k * ny + j) * nx + i };
    let axis_step = [1usize, nx, nx * ny];

    let mut cell_corner_nodes = [0usize; 8];
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                for (c, corner) in CORNERS.iter().enumerate() {
                    cell_corner_nodes[c] = node(
                        i + corner[0] as usize,
                        j + corner[1] as usize,
                        k + corner[2] as usize,
                    );
                }
                let mut config = 0u8;
                for (c, &n) in cell_corner_nodes.iter().enumerate() {
                    if grid.values[n] > iso {
                        config |= 1 << c;
                    }
                }
                if config == 0 || config == 255 {
                    continue;
                }
                for tri in &table[config as usize] {
                    let mut ids = [0u32; 3];
                    for (t, &edge) in tri.iter().enumerate() {
                        let [ca, cb] = EDGES[edge as usize];
                        let (na, nb) = (cell_corner_nodes[ca], cell_corner_nodes[cb]);
                        // Canonical key: lower node + axis of the edge.
                        let (lo, hi) = if na < nb { (na, nb) } else { (nb, na) };
                        let axis = match hi - lo {
                            d if d == axis_step[0] => 0u8,
                            d if d == axis_step[1] => 1u8,
                            d if d == axis_step[2] => 2u8,
                            _ => unreachable!("edge between non-adjacent nodes"),
                        };
                        let id = *edge_vertices.entry((lo, axis)).or_insert_with(|| {
                            let va = grid.values[lo];
                            let vb = grid.values[hi];
                            let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
                            let pa = grid.node_position_for(lo);
                            let pb = grid.node_position_for(hi);
                            let p = pa + (pb - pa) * t;
                            vertices.push(p);
                            (vertices.len() - 1) as u32
                        });
                        ids[t] = id;
                    }
                    // Degenerate (zero-area) triangles can appear when the
                    // iso value hits a node exactly; drop them.
                    if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                        faces.push(ids);
                    }
                }
            }
        }
    }

    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    TriangleMesh::new(vertices, faces)
}
