use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;

use super::{precompute_embedding, QuerySession};
use crate::mesh::TriangleMesh;
use crate::nn::Model;
use crate::rng;
use crate::{Error, Result};

/// Timing protocol: one untimed warm-up, then the median of `repeats` runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub batch_sizes: Vec<usize>,
    /// Random pairs decoded per timed run.
    pub queries: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            batch_sizes: vec![1, 100, 10_000],
            queries: 1_000_000,
            repeats: 5,
            seed: 0,
        }
    }
}

/// One record per batch size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub precompute_seconds: f64,
    pub queries_per_second: f64,
    pub batch_size: usize,
    pub vertex_count: usize,
    pub queries: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn check_repeats(repeats: usize) -> Result<()> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("at least one timed run is needed".into()));
    }
    Ok(())
}

/// Median wall time of the embedding forward pass over `mesh`.
pub fn time_precompute(model: &Model<f32>, mesh: &TriangleMesh, repeats: usize) -> Result<f64> {
    check_repeats(repeats)?;
    precompute_embedding(model, mesh)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        precompute_embedding(model, mesh)?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(times))
}

/// Median wall time of decoding `pairs` in calls of `batch_size` pairs.
pub fn time_queries(
    session: &QuerySession,
    pairs: &[(u32, u32)],
    batch_size: usize,
    repeats: usize,
) -> Result<f64> {
    check_repeats(repeats)?;
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if let Some(first) = pairs.chunks(batch_size).next() {
        session.query_batch(first)?;
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        for chunk in pairs.chunks(batch_size) {
            std::hint::black_box(session.query_batch(chunk)?);
        }
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(times))
}

/// Times precomputation and query throughput for each configured batch size.
pub fn benchmark(model: &Model<f32>, mesh: &TriangleMesh, config: &BenchmarkConfig) -> Result<Vec<BenchmarkReport>> {
    if config.queries == 0 {
        return Err(Error::InvalidArgument("query count must be positive".into()));
    }
    let precompute_seconds = time_precompute(model, mesh, config.repeats)?;
    let session = QuerySession::new(precompute_embedding(model, mesh)?, model)?;
    let v = mesh.vertex_count() as u32;
    let mut rng = rng::stream(config.seed, "benchmark");
    let pairs: Vec<(u32, u32)> = (0..config.queries)
        .map(|_| (rng.gen_range(0..v), rng.gen_range(0..v)))
        .collect();
    config
        .batch_sizes
        .iter()
        .map(|&batch_size| {
            let seconds = time_queries(&session, &pairs, batch_size, config.repeats)?;
            Ok(BenchmarkReport {
                precompute_seconds,
                queries_per_second: config.queries as f64 / seconds.max(f64::MIN_POSITIVE),
                batch_size,
                vertex_count: mesh.vertex_count(),
                queries: config.queries,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::nn::NetConfig;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn reports_cover_every_batch_size() {
        let mesh = shapes::icosphere(1);
        let model = Model::<f32>::new(NetConfig::default(), 0).unwrap();
        let config = BenchmarkConfig {
            batch_sizes: vec![1, 64],
            queries: 500,
            repeats: 3,
            seed: 1,
        };
        let reports = benchmark(&model, &mesh, &config).unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            assert_eq!(r.vertex_count, mesh.vertex_count());
            assert!(r.precompute_seconds > 0.0 && r.queries_per_second > 0.0);
        }
    }
}
