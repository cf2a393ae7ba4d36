use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::mesh::VertexGraph;
use crate::{Error, Result};

/// CSR graph with nonnegative edge weights.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

impl WeightedGraph {
    /// Builds from undirected weighted edges; each becomes two arcs.
    pub fn from_undirected(node_count: usize, edges: &[(u32, u32, f64)]) -> Self {
        let mut degree = vec![0usize; node_count + 1];
        for &(a, b, _) in edges {
            degree[a as usize + 1] += 1;
            degree[b as usize + 1] += 1;
        }
        for i in 0..node_count {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[node_count]];
        let mut weights = vec![0f64; offsets[node_count]];
        for &(a, b, w) in edges {
            for (u, v) in [(a, b), (b, a)] {
                let slot = &mut fill[u as usize];
                targets[*slot] = v;
                weights[*slot] = w;
                *slot += 1;
            }
        }
        WeightedGraph {
            offsets,
            targets,
            weights,
        }
    }

    /// Euclidean edge lengths of a vertex graph.
    pub fn from_vertex_graph(graph: &VertexGraph) -> Self {
        let edges: Vec<(u32, u32, f64)> = graph
            .edges()
            .map(|(i, j)| (i, j, graph.edge_length(i as usize, j as usize)))
            .collect();
        Self::from_undirected(graph.vertex_count(), &edges)
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn arc_count(&self) -> usize {
        self.targets.len()
    }

    pub(crate) fn check_source(&self, source: usize) -> Result<()> {
        if source >= self.node_count() {
            return Err(Error::IndexOutOfRange {
                index: source,
                len: self.node_count(),
            });
        }
        Ok(())
    }
}

#[derive(PartialEq)]
struct Entry(f64, u32);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance.
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest paths. Unreachable nodes get `f64::INFINITY`.
///
/// Panics if `source` is out of range.
pub fn shortest_paths(graph: &WeightedGraph, source: usize) -> Vec<f64> {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source as u32));
    while let Some(Entry(d, u)) = heap.pop() {
        let u = u as usize;
        if d > dist[u] {
            continue;
        }
        for k in graph.offsets[u]..graph.offsets[u + 1] {
            let v = graph.targets[k] as usize;
            let nd = d + graph.weights[k];
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v as u32));
            }
        }
    }
    dist
}

/// Shortest-path distances along graph edges weighted by Euclidean length.
pub fn dijkstra_distances(graph: &VertexGraph, source: usize) -> Result<Vec<f64>> {
    let weighted = WeightedGraph::from_vertex_graph(graph);
    weighted.check_source(source)?;
    Ok(shortest_paths(&weighted, source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{shapes, Vec3};
    use proptest::prelude::*;

    #[test]
    fn equilateral_triangle_single_edge() {
        let h = 3f64.sqrt() / 2.0;
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, h, 0.0)];
        let g = VertexGraph::from_edges(pts.clone(), pts, [(0, 1), (1, 2), (2, 0)]);
        let d = dijkstra_distances(&g, 0).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn path_graph_sums_edges() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 0.0)];
        let g = VertexGraph::from_edges(pts.clone(), pts, [(0, 1), (1, 2)]);
        assert_eq!(dijkstra_distances(&g, 0).unwrap()[2], 3.0);
    }

    #[test]
    fn unreachable_and_bad_source() {
        let m = shapes::two_spheres(1, 5.0);
        let g = m.build_graph();
        let d = dijkstra_distances(&g, 0).unwrap();
        assert!(d[..42].iter().all(|x| x.is_finite()));
        assert!(d[42..].iter().all(|x| x.is_infinite()));
        assert!(matches!(
            dijkstra_distances(&g, 84),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn triangle_inequality_on_graph_metric(a in 0usize..162, b in 0usize..162, c in 0usize..162) {
            let g = shapes::icosphere(2).build_graph();
            let da = dijkstra_distances(&g, a).unwrap();
            let db = dijkstra_distances(&g, b).unwrap();
            prop_assert!(da[c] <= da[b] + db[c] + 1e-12);
            prop_assert!((da[b] - db[a]).abs() < 1e-12);
        }
    }
}
