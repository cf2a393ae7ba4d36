//! Ground-truth distances for supervision and evaluation.

mod dijkstra;
mod samples;
mod spectral;
mod steiner;

use crate::mesh::{TriangleMesh, Vec3};
use crate::{Error, Result};

pub use dijkstra::{dijkstra_distances, shortest_paths, WeightedGraph};
pub use samples::{sample_pairs, GeodesicSampleSet, SamplePair, SampledPairs};
pub use spectral::{biharmonic_distances, build_spectral_basis, SpectralBasis};
pub use steiner::{steiner_refined_distances, SteinerGraph};

/// Default number of Steiner points inserted per mesh edge.
pub const DEFAULT_STEINER_POINTS: usize = 3;

/// A single-source distance field provider bound to one mesh.
pub trait DistanceOracle {
    fn vertex_count(&self) -> usize;

    fn mesh_checksum(&self) -> u64;

    /// Distances from `source` to every vertex; unreachable vertices are
    /// `f64::INFINITY`.
    fn distance_field(&self, source: usize) -> Result<Vec<f64>>;

    /// Distances for arbitrary pairs, in order. The default computes one
    /// field per distinct first index.
    fn pair_distances(&self, pairs: &[(u32, u32)]) -> Result<Vec<f64>> {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.sort_by_key(|&k| pairs[k].0);
        let mut out = vec![0.0; pairs.len()];
        let mut current: Option<(u32, Vec<f64>)> = None;
        for k in order {
            let (i, j) = pairs[k];
            if current.as_ref().map_or(true, |(s, _)| *s != i) {
                current = Some((i, self.distance_field(i as usize)?));
            }
            let field = &current.as_ref().expect("set above").1;
            out[k] = *field.get(j as usize).ok_or(Error::IndexOutOfRange {
                index: j as usize,
                len: field.len(),
            })?;
        }
        Ok(out)
    }
}

/// Straight-line distance between vertex positions. Exact geodesics on
/// planar meshes; a metric baseline elsewhere.
pub struct EuclideanOracle {
    positions: Vec<Vec3>,
    checksum: u64,
}

impl EuclideanOracle {
    pub fn new(mesh: &TriangleMesh) -> Self {
        EuclideanOracle {
            positions: mesh.positions().to_vec(),
            checksum: mesh.checksum(),
        }
    }

    fn check(&self, i: usize) -> Result<()> {
        if i < self.positions.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.positions.len(),
            })
        }
    }
}

impl DistanceOracle for EuclideanOracle {
    fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    fn mesh_checksum(&self) -> u64 {
        self.checksum
    }

    fn distance_field(&self, source: usize) -> Result<Vec<f64>> {
        self.check(source)?;
        let p = self.positions[source];
        Ok(self.positions.iter().map(|q| (q - p).norm()).collect())
    }

    fn pair_distances(&self, pairs: &[(u32, u32)]) -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|&(i, j)| {
                self.check(i as usize)?;
                self.check(j as usize)?;
                Ok((self.positions[i as usize] - self.positions[j as usize]).norm())
            })
            .collect()
    }
}

/// Edge-length Dijkstra on the mesh graph.
pub struct GraphOracle {
    graph: WeightedGraph,
    checksum: u64,
}

impl GraphOracle {
    pub fn new(mesh: &TriangleMesh) -> Self {
        GraphOracle {
            graph: WeightedGraph::from_vertex_graph(&mesh.build_graph()),
            checksum: mesh.checksum(),
        }
    }
}

impl DistanceOracle for GraphOracle {
    fn vertex_count(&self) -> usize {
        self.graph.node_count()
    }

    fn mesh_checksum(&self) -> u64 {
        self.checksum
    }

    fn distance_field(&self, source: usize) -> Result<Vec<f64>> {
        self.graph.check_source(source)?;
        Ok(shortest_paths(&self.graph, source))
    }
}

/// Dijkstra on the Steiner-augmented graph.
pub struct SteinerOracle {
    graph: SteinerGraph,
    checksum: u64,
}

impl SteinerOracle {
    pub fn new(mesh: &TriangleMesh, points_per_edge: usize) -> Self {
        SteinerOracle {
            graph: SteinerGraph::new(mesh, points_per_edge),
            checksum: mesh.checksum(),
        }
    }

    pub fn graph(&self) -> &SteinerGraph {
        &self.graph
    }
}

impl DistanceOracle for SteinerOracle {
    fn vertex_count(&self) -> usize {
        self.graph.mesh_vertex_count()
    }

    fn mesh_checksum(&self) -> u64 {
        self.checksum
    }

    fn distance_field(&self, source: usize) -> Result<Vec<f64>> {
        self.graph.distances(source)
    }
}

/// Truncated-spectrum biharmonic distance.
pub struct BiharmonicOracle {
    basis: SpectralBasis,
}

impl BiharmonicOracle {
    pub fn new(basis: SpectralBasis) -> Self {
        BiharmonicOracle { basis }
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }
}

impl DistanceOracle for BiharmonicOracle {
    fn vertex_count(&self) -> usize {
        self.basis.vertex_count()
    }

    fn mesh_checksum(&self) -> u64 {
        self.basis.mesh_checksum()
    }

    fn distance_field(&self, source: usize) -> Result<Vec<f64>> {
        self.basis.distances_from(source)
    }
}
