//! Triangle meshes, vertex normals and the level-0 vertex graph.

mod graph;
pub mod io;
pub mod shapes;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub use graph::VertexGraph;
pub use io::{load_mesh, write_ply_with_quality, LoadReport, MeshFormat};

pub type Vec3 = Vector3<f64>;

/// Fallback normal for vertices whose area-weighted normal sum vanishes.
pub const FALLBACK_NORMAL: Vec3 = Vector3::new(0.0, 0.0, 1.0);

/// Indexed triangle mesh with per-vertex unit normals.
///
/// Faces never repeat an index and never have zero area; both are removed at
/// construction. Normals are recomputed whenever positions change.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    positions: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    normals: Vec<Vec3>,
}

impl TriangleMesh {
    /// Builds a mesh, dropping degenerate faces. Returns the mesh and the
    /// number of faces dropped.
    pub fn with_report(positions: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<(Self, usize)> {
        let n = positions.len();
        for (k, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i as usize >= n) {
                return Err(Error::InvalidArgument(format!(
                    "face {k} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
        }
        let area_floor = area_tolerance(&positions);
        let before = faces.len();
        let faces: Vec<[u32; 3]> = faces
            .into_iter()
            .filter(|f| {
                f[0] != f[1]
                    && f[1] != f[2]
                    && f[0] != f[2]
                    && triangle_double_area(&positions, f) > area_floor
            })
            .collect();
        let dropped = before - faces.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate face(s)");
        }
        if faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let normals = compute_vertex_normals(&positions, &faces);
        Ok((
            TriangleMesh {
                positions,
                faces,
                normals,
            },
            dropped,
        ))
    }

    pub fn new(positions: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        Self::with_report(positions, faces).map(|(mesh, _)| mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Translates by the bounding-box centre and scales uniformly so the
    /// longest axis-aligned extent is exactly 2.
    pub fn normalized(&self) -> Result<Self> {
        let (lo, hi) = bounding_box(&self.positions);
        let extent = (hi - lo).max();
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::DegenerateGeometry(
                "all vertices coincide; cannot normalize".into(),
            ));
        }
        let center = (lo + hi) * 0.5;
        let scale = 2.0 / extent;
        let positions = self
            .positions
            .iter()
            .map(|p| (p - center) * scale)
            .collect();
        Ok(TriangleMesh {
            positions,
            faces: self.faces.clone(),
            normals: self.normals.clone(),
        })
    }

    /// Same connectivity, new positions; normals are recomputed.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::Shape(format!(
                "expected {} positions, got {}",
                self.positions.len(),
                positions.len()
            )));
        }
        let normals = compute_vertex_normals(&positions, &self.faces);
        Ok(TriangleMesh {
            positions,
            faces: self.faces.clone(),
            normals,
        })
    }

    /// 64-bit fingerprint over positions quantised to a 1e-6 grid and the
    /// face indices. Embedding tables and sample sets carry it so they cannot
    /// be used against a different mesh.
    pub fn checksum(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update((self.positions.len() as u64).to_le_bytes());
        for p in &self.positions {
            for c in p.iter() {
                hasher.update(((c * 1e6).round() as i64).to_le_bytes());
            }
        }
        hasher.update((self.faces.len() as u64).to_le_bytes());
        for f in &self.faces {
            for i in f {
                hasher.update(i.to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted and deduplicated.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Level-0 graph: one edge per pair of vertices sharing a face.
    pub fn build_graph(&self) -> VertexGraph {
        VertexGraph::from_edges(
            self.positions.clone(),
            self.normals.clone(),
            self.edges(),
        )
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * triangle_double_area(&self.positions, &self.faces[face])
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.faces[face].map(|i| self.positions[i as usize]);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            FALLBACK_NORMAL
        }
    }

    /// Connected components of the vertex graph, as a label per vertex.
    pub fn component_labels(&self) -> Vec<usize> {
        self.build_graph().component_labels()
    }
}

/// Area-weighted vertex normals: normalised sum of incident face normals,
/// each scaled by its face area. Vertices whose sum is shorter than 1e-12
/// (isolated or cancelling) get [`FALLBACK_NORMAL`].
pub fn compute_vertex_normals(positions: &[Vec3], faces: &[[u32; 3]]) -> Vec<Vec3> {
    let mut sums = vec![Vec3::zeros(); positions.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| positions[i as usize]);
        // |cross| is twice the area, so the raw cross product is already
        // area-weighted.
        let n = (b - a).cross(&(c - a));
        for &i in f {
            sums[i as usize] += n;
        }
    }
    sums.into_iter()
        .map(|s| {
            let len = s.norm();
            if len < 1e-12 {
                FALLBACK_NORMAL
            } else {
                s / len
            }
        })
        .collect()
}

pub(crate) fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn triangle_double_area(positions: &[Vec3], f: &[u32; 3]) -> f64 {
    let [a, b, c] = f.map(|i| positions[i as usize]);
    (b - a).cross(&(c - a)).norm()
}

/// Faces whose doubled area falls below this are treated as zero-area.
fn area_tolerance(positions: &[Vec3]) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let (lo, hi) = bounding_box(positions);
    let diag = (hi - lo).norm();
    1e-14 * diag * diag
}
