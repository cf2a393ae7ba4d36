//! Learned geodesic embeddings for triangle meshes.
//!
//! A graph U-Net maps every mesh vertex to a 256-dimensional embedding in a
//! single forward pass. A small MLP then decodes the squared difference of two
//! embeddings into a geodesic distance, so each query costs a fixed amount of
//! work regardless of mesh size.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: loading, normalisation, normals and the level-0 vertex graph.
//! - [`oracle`]: ground-truth distances (graph Dijkstra, Steiner-refined
//!   Dijkstra, spectral biharmonic distances) and sampled training pairs.
//! - [`nn`]: the convolution, pooling, residual blocks, U-Net and decoder,
//!   each with a hand-written backward pass.
//! - [`train`]: relative-error loss, AdamW with polynomial decay, training and
//!   finetuning loops, checkpoints.
//! - [`query`]: precomputed embedding tables, query sessions, evaluation and
//!   benchmarks.
//! - [`apps`]: geodesic path tracing and shape distributions.

pub mod apps;
pub mod error;
pub mod mesh;
pub mod nn;
pub mod oracle;
pub mod query;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
