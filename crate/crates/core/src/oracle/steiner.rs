//! Steiner-refined graph geodesics.
//!
//! Every mesh edge receives `k` evenly spaced Steiner points. Inside each
//! triangle, every pair of boundary points that do not lie on a common edge is
//! joined by a straight segment; consecutive points along an edge and the
//! original mesh edges are kept as well. Shortest paths in this graph are an
//! upper bound on the polyhedral geodesic distance and approach it as `k`
//! grows.

use std::collections::HashMap;

use super::dijkstra::{shortest_paths, WeightedGraph};
use crate::mesh::{TriangleMesh, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SteinerGraph {
    graph: WeightedGraph,
    mesh_vertices: usize,
    points_per_edge: usize,
}

impl SteinerGraph {
    pub fn new(mesh: &TriangleMesh, points_per_edge: usize) -> Self {
        let k = points_per_edge;
        let nv = mesh.vertex_count();
        let edges = mesh.edges();
        let edge_index: HashMap<(u32, u32), usize> =
            edges.iter().enumerate().map(|(e, &key)| (key, e)).collect();

        let mut positions: Vec<Vec3> = mesh.positions().to_vec();
        positions.reserve(edges.len() * k);
        for &(a, b) in &edges {
            let (pa, pb) = (mesh.positions()[a as usize], mesh.positions()[b as usize]);
            for s in 1..=k {
                let t = s as f64 / (k + 1) as f64;
                positions.push(pa + (pb - pa) * t);
            }
        }
        // Nodes along edge `e` from its lower to its higher endpoint.
        let chain = |e: usize| -> Vec<u32> {
            let (a, b) = edges[e];
            let mut nodes = Vec::with_capacity(k + 2);
            nodes.push(a);
            nodes.extend((0..k).map(|s| (nv + e * k + s) as u32));
            nodes.push(b);
            nodes
        };
        let len = |u: u32, v: u32| (positions[u as usize] - positions[v as usize]).norm();

        let mut arcs: Vec<(u32, u32, f64)> = Vec::new();
        for (e, &(a, b)) in edges.iter().enumerate() {
            arcs.push((a, b, len(a, b)));
            if k > 0 {
                let nodes = chain(e);
                for w in nodes.windows(2) {
                    arcs.push((w[0], w[1], len(w[0], w[1])));
                }
            }
        }
        if k > 0 {
            for f in mesh.faces() {
                // Boundary points of the triangle with a bitmask of the
                // triangle edges they lie on.
                let mut points: Vec<(u32, u8)> = Vec::with_capacity(3 + 3 * k);
                for (slot, &corner) in f.iter().enumerate() {
                    // Corner `slot` touches triangle edges `slot` and `slot + 2`
                    // (edge `s` joins corners s and s+1).
                    points.push((corner, (1 << slot) | (1 << ((slot + 2) % 3))));
                }
                for s in 0..3 {
                    let (a, b) = (f[s], f[(s + 1) % 3]);
                    let e = edge_index[&(a.min(b), a.max(b))];
                    for t in 0..k {
                        points.push(((nv + e * k + t) as u32, 1 << s));
                    }
                }
                for x in 0..points.len() {
                    for y in x + 1..points.len() {
                        let ((u, mu), (v, mv)) = (points[x], points[y]);
                        if mu & mv == 0 {
                            arcs.push((u, v, len(u, v)));
                        }
                    }
                }
            }
        }
        SteinerGraph {
            graph: WeightedGraph::from_undirected(positions.len(), &arcs),
            mesh_vertices: nv,
            points_per_edge: k,
        }
    }

    pub fn mesh_vertex_count(&self) -> usize {
        self.mesh_vertices
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn points_per_edge(&self) -> usize {
        self.points_per_edge
    }

    /// Distances from mesh vertex `source` to every mesh vertex.
    pub fn distances(&self, source: usize) -> Result<Vec<f64>> {
        if source >= self.mesh_vertices {
            return Err(Error::IndexOutOfRange {
                index: source,
                len: self.mesh_vertices,
            });
        }
        let mut d = shortest_paths(&self.graph, source);
        d.truncate(self.mesh_vertices);
        Ok(d)
    }
}

/// One-shot Steiner-refined distance field; `points_per_edge = 0` is plain
/// edge Dijkstra.
pub fn steiner_refined_distances(
    mesh: &TriangleMesh,
    source: usize,
    points_per_edge: usize,
) -> Result<Vec<f64>> {
    SteinerGraph::new(mesh, points_per_edge).distances(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::oracle::dijkstra_distances;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_points_reduces_to_dijkstra() {
        let mesh = shapes::torus(12, 7, 1.0, 0.4);
        let g = mesh.build_graph();
        for s in [0, 17, 50] {
            assert_eq!(
                steiner_refined_distances(&mesh, s, 0).unwrap(),
                dijkstra_distances(&g, s).unwrap()
            );
        }
    }

    #[test]
    fn refinement_never_lengthens() {
        let mesh = shapes::bumpy_sphere(2, 0.2, 3.0);
        let base = dijkstra_distances(&mesh.build_graph(), 5).unwrap();
        for k in [1, 2, 3] {
            let refined = steiner_refined_distances(&mesh, 5, k).unwrap();
            for (r, b) in refined.iter().zip(&base) {
                assert!(r <= b);
            }
        }
    }

    #[test]
    fn planar_grid_is_nearly_euclidean_for_far_pairs() {
        let mesh = shapes::grid(20, 20, 1.0, 1.0);
        let graph = SteinerGraph::new(&mesh, 3);
        let idx = |i: usize, j: usize| j * 21 + i;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (mut worst, mut total): (f64, f64) = (0.0, 0.0);
        for _ in 0..40 {
            let (a, b) = (idx(rng.gen_range(0..5), rng.gen_range(0..21)), idx(rng.gen_range(15..21), rng.gen_range(0..21)));
            let d = graph.distances(a).unwrap()[b];
            let e = (mesh.positions()[a] - mesh.positions()[b]).norm();
            worst = worst.max((d - e) / e);
            total += (d - e) / e;
        }
        let mean = total / 40.0;
        assert!(mean < 0.015 && worst < 0.03, "relative excess mean {mean}, worst {worst}");
    }

    #[test]
    fn node_count_matches_layout() {
        let mesh = shapes::icosphere(1);
        let g = SteinerGraph::new(&mesh, 3);
        assert_eq!(g.node_count(), 42 + 120 * 3);
    }
}
