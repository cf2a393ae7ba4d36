//! Applications of constant-time distance queries: geodesic path tracing
//! and distance-histogram shape descriptors.

mod path;
mod shape;

pub use path::{trace_geodesic_path, GeodesicPath, PathPoint};
pub use shape::{compare_distributions, shape_distribution, ShapeDistribution};
