use super::Vec3;

/// Undirected vertex graph with per-vertex geometry, stored as CSR.
///
/// Adjacency is symmetric with no self-loops and no duplicate edges.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexGraph {
    positions: Vec<Vec3>,
    normals: Vec<Vec3>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl VertexGraph {
    /// Builds a graph from undirected index pairs. Self-loops are ignored and
    /// duplicates (in either orientation) collapse.
    pub fn from_edges(
        positions: Vec<Vec3>,
        normals: Vec<Vec3>,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Self {
        assert_eq!(positions.len(), normals.len());
        let n = positions.len();
        let mut directed: Vec<(u32, u32)> = Vec::new();
        for (a, b) in edges {
            assert!((a as usize) < n && (b as usize) < n, "edge ({a}, {b}) out of range");
            if a != b {
                directed.push((a, b));
                directed.push((b, a));
            }
        }
        directed.sort_unstable();
        directed.dedup();
        let mut offsets = vec![0usize; n + 1];
        for &(a, _) in &directed {
            offsets[a as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = directed.into_iter().map(|(_, b)| b).collect();
        VertexGraph {
            positions,
            normals,
            offsets,
            neighbors,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Undirected edges with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.vertex_count()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| (i as u32) < j)
                .map(move |&j| (i as u32, j))
        })
    }

    pub fn edge_length(&self, i: usize, j: usize) -> f64 {
        (self.positions[i] - self.positions[j]).norm()
    }

    pub fn component_labels(&self) -> Vec<usize> {
        let n = self.vertex_count();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &w in self.neighbors(u) {
                    let w = w as usize;
                    if label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Disjoint union; vertices of `other` are shifted by `self.vertex_count()`.
    pub fn disjoint_union(graphs: &[&VertexGraph]) -> VertexGraph {
        let mut positions = Vec::new();
        let mut normals = Vec::new();
        let mut offsets = vec![0usize];
        let mut neighbors = Vec::new();
        for g in graphs {
            let shift = positions.len() as u32;
            let base = neighbors.len();
            positions.extend_from_slice(&g.positions);
            normals.extend_from_slice(&g.normals);
            neighbors.extend(g.neighbors.iter().map(|&j| j + shift));
            offsets.extend(g.offsets[1..].iter().map(|&o| o + base));
        }
        VertexGraph {
            positions,
            normals,
            offsets,
            neighbors,
        }
    }
}
