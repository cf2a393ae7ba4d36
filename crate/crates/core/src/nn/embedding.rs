use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::mesh::TriangleMesh;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GEMB";
const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 8 + 8 + 4;

/// Per-vertex embeddings of one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vectors: Array2<f32>,
    checksum: u64,
}

impl EmbeddingTable {
    pub fn new(vectors: Array2<f32>, checksum: u64) -> Result<Self> {
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite embedding entry at row {}",
                pos / vectors.ncols().max(1)
            )));
        }
        Ok(EmbeddingTable {
            vectors: vectors.as_standard_layout().into_owned(),
            checksum,
        })
    }

    pub fn vectors(&self) -> &Array2<f32> {
        &self.vectors
    }

    pub fn vertex_count(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn width(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn mesh_checksum(&self) -> u64 {
        self.checksum
    }

    /// Fails unless the table was computed for `mesh`.
    pub fn check_mesh(&self, mesh: &TriangleMesh) -> Result<()> {
        let expected = mesh.checksum();
        if expected != self.checksum {
            return Err(Error::StaleChecksum {
                expected,
                found: self.checksum,
            });
        }
        if mesh.vertex_count() != self.vertex_count() {
            return Err(Error::Shape(format!(
                "table has {} rows, mesh has {} vertices",
                self.vertex_count(),
                mesh.vertex_count()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 4 * self.vectors.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.checksum.to_le_bytes());
        out.extend_from_slice(&(self.vertex_count() as u64).to_le_bytes());
        out.extend_from_slice(&(self.width() as u32).to_le_bytes());
        for v in self.vectors.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Binary(format!("GEMB: {m}"));
        if bytes.len() < HEADER || &bytes[..4] != MAGIC {
            return Err(bad("missing magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let checksum = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let rows = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;
        let body = &bytes[HEADER..];
        let expected = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| bad("size overflow".into()))?;
        if body.len() != expected {
            return Err(bad(format!(
                "{rows}x{cols} table needs {expected} bytes, found {}",
                body.len()
            )));
        }
        let data: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let vectors = Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(e.to_string()))?;
        EmbeddingTable::new(vectors, checksum)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
