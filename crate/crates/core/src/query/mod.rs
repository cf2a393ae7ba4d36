//! Precompute once, query many: embedding tables, query sessions,
//! evaluation and timing.

mod bench;
mod eval;

use ndarray::Array2;

use crate::mesh::TriangleMesh;
use crate::nn::{batched_decode, decode_distance, euclidean_decode, DistMlp, EmbeddingTable, Model};
use crate::oracle::DistanceOracle;
use crate::{Error, Result};

pub use bench::{benchmark, time_precompute, time_queries, BenchmarkConfig, BenchmarkReport};
pub use eval::{evaluate_mre, triangle_violations, violation_mask, VIOLATION_SLACK};

/// Runs the embedding network once over `mesh`.
pub fn precompute_embedding(model: &Model<f32>, mesh: &TriangleMesh) -> Result<EmbeddingTable> {
    let vectors: Array2<f32> = model.embed_graph(&mesh.build_graph())?;
    EmbeddingTable::new(vectors, mesh.checksum())
}

/// How a session turns two embeddings into a distance.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoder {
    Mlp(DistMlp<f32>),
    Euclidean,
}

/// An embedding table paired with the decoder that reads it. Immutable, so
/// it can be shared across threads.
#[derive(Debug, Clone)]
pub struct QuerySession {
    table: EmbeddingTable,
    decoder: Decoder,
}

impl QuerySession {
    /// Session for a table produced by `model`.
    pub fn new(table: EmbeddingTable, model: &Model<f32>) -> Result<Self> {
        let decoder = match &model.dist {
            Some(mlp) => Decoder::Mlp(mlp.clone()),
            None => Decoder::Euclidean,
        };
        Self::with_decoder(table, decoder)
    }

    pub fn with_decoder(table: EmbeddingTable, decoder: Decoder) -> Result<Self> {
        if let Decoder::Mlp(mlp) = &decoder {
            if mlp.input_width() != table.width() {
                return Err(Error::Shape(format!(
                    "decoder expects width {}, table has {}",
                    mlp.input_width(),
                    table.width()
                )));
            }
        }
        Ok(QuerySession { table, decoder })
    }

    /// Session bound to `mesh`; fails if the table was computed for a
    /// different mesh.
    pub fn for_mesh(table: EmbeddingTable, model: &Model<f32>, mesh: &TriangleMesh) -> Result<Self> {
        table.check_mesh(mesh)?;
        Self::new(table, model)
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    fn check_index(&self, i: u32) -> Result<usize> {
        let v = self.table.vertex_count();
        if (i as usize) < v {
            Ok(i as usize)
        } else {
            Err(Error::IndexOutOfRange { index: i as usize, len: v })
        }
    }

    /// Distance between vertices `i` and `j`.
    pub fn query(&self, i: u32, j: u32) -> Result<f32> {
        let rows = self.table.vectors();
        let (p, q) = (rows.row(self.check_index(i)?), rows.row(self.check_index(j)?));
        match &self.decoder {
            Decoder::Mlp(mlp) => decode_distance(p, q, mlp),
            Decoder::Euclidean => Ok(euclidean_decode(p, q)),
        }
    }

    /// Distances for many pairs, in order.
    pub fn query_batch(&self, pairs: &[(u32, u32)]) -> Result<Vec<f32>> {
        match &self.decoder {
            Decoder::Mlp(mlp) => batched_decode(&self.table, pairs, mlp),
            Decoder::Euclidean => pairs.iter().map(|&(i, j)| self.query(i, j)).collect(),
        }
    }
}

impl DistanceOracle for QuerySession {
    fn vertex_count(&self) -> usize {
        self.table.vertex_count()
    }

    fn mesh_checksum(&self) -> u64 {
        self.table.mesh_checksum()
    }

    fn distance_field(&self, source: usize) -> Result<Vec<f64>> {
        let s = self.check_index(source as u32)? as u32;
        let pairs: Vec<(u32, u32)> = (0..self.vertex_count() as u32).map(|k| (s, k)).collect();
        Ok(self.query_batch(&pairs)?.into_iter().map(f64::from).collect())
    }

    fn pair_distances(&self, pairs: &[(u32, u32)]) -> Result<Vec<f64>> {
        Ok(self.query_batch(pairs)?.into_iter().map(f64::from).collect())
    }
}
