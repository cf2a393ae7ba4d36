use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;

use crate::oracle::DistanceOracle;
use crate::rng;
use crate::{Error, Result};

/// Histogram of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDistribution {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
}

impl ShapeDistribution {
    /// Histogram of `values` over `[0, max(values)]` with `bins` equal bins.
    /// The maximum lands in the last bin.
    pub fn from_values(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("a histogram needs at least one bin".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid distance {v}")));
        }
        let max = values.iter().copied().fold(0.0, f64::max);
        let hi = if max > 0.0 { max } else { 1.0 };
        let bin_edges: Vec<f64> = (0..=bins).map(|k| hi * k as f64 / bins as f64).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            let k = ((v / hi * bins as f64) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(ShapeDistribution { bin_edges, counts })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Number of samples; the normalisation constant.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts divided by the total.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Two columns per line: bin centre and normalised count.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, p) in self.normalized().into_iter().enumerate() {
            let centre = 0.5 * (self.bin_edges[k] + self.bin_edges[k + 1]);
            let _ = writeln!(out, "{centre} {p}");
        }
        out
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Probability density on the bin containing `x`, zero outside.
    fn density(&self, x: f64) -> f64 {
        let edges = &self.bin_edges;
        if x < edges[0] || x >= edges[edges.len() - 1] {
            return 0.0;
        }
        let k = edges.partition_point(|&e| e <= x) - 1;
        let total = self.total() as f64;
        self.counts[k] as f64 / total / (edges[k + 1] - edges[k])
    }
}

/// Histogram of `num_pairs` vertex-pair distances over `[0, max]`.
///
/// When `num_pairs` reaches the number of unordered vertex pairs every pair
/// is used once; otherwise pairs of distinct vertices are drawn at random.
pub fn shape_distribution(
    distances: &dyn DistanceOracle,
    num_pairs: usize,
    bins: usize,
    seed: u64,
) -> Result<ShapeDistribution> {
    let v = distances.vertex_count();
    if num_pairs == 0 {
        return Err(Error::InvalidArgument("at least one pair is needed".into()));
    }
    if v < 2 {
        return Err(Error::InvalidArgument("at least two vertices are needed".into()));
    }
    let all = v * (v - 1) / 2;
    let pairs: Vec<(u32, u32)> = if num_pairs >= all {
        (0..v as u32).flat_map(|i| (i + 1..v as u32).map(move |j| (i, j))).collect()
    } else {
        let mut rng = rng::stream(seed, "shape_distribution");
        (0..num_pairs)
            .map(|_| {
                let i = rng.gen_range(0..v as u32);
                let j = rng.gen_range(0..v as u32 - 1);
                (i, if j >= i { j + 1 } else { j })
            })
            .collect()
    };
    let values = distances.pair_distances(&pairs)?;
    if values.iter().any(|d| d.is_infinite()) {
        return Err(Error::InvalidArgument("sampled pair is unreachable".into()));
    }
    ShapeDistribution::from_values(&values, bins)
}

/// L1 distance between normalised histograms, in `[0, 2]`.
///
/// Each histogram is read as a piecewise-constant density over its range
/// and both are compared on the union of their bin edges, so histograms
/// with different ranges or bin counts are comparable and the result is a
/// metric.
pub fn compare_distributions(a: &ShapeDistribution, b: &ShapeDistribution) -> Result<f64> {
    if a.total() == 0 || b.total() == 0 {
        return Err(Error::InvalidArgument("cannot compare an empty distribution".into()));
    }
    let mut edges: Vec<f64> = a.bin_edges.iter().chain(&b.bin_edges).copied().collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let l1: f64 = edges
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (a.density(mid) - b.density(mid)).abs() * (w[1] - w[0])
        })
        .sum();
    Ok(l1.min(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(values: &[f64], bins: usize) -> ShapeDistribution {
        ShapeDistribution::from_values(values, bins).unwrap()
    }

    #[test]
    fn equal_values_fill_one_bin() {
        let d = dist(&[2.0; 10], 8);
        assert_eq!(d.counts().iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(d.total(), 10);
        assert!(d.bin_edges().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn comparison_bounds() {
        let a = dist(&[0.1, 0.5, 0.9, 1.0], 4);
        assert_eq!(compare_distributions(&a, &a).unwrap(), 0.0);
        let lo = ShapeDistribution {
            bin_edges: vec![0.0, 1.0],
            counts: vec![5],
        };
        let hi = ShapeDistribution {
            bin_edges: vec![2.0, 3.0],
            counts: vec![7],
        };
        assert!((compare_distributions(&lo, &hi).unwrap() - 2.0).abs() < 1e-12);
        let empty = ShapeDistribution {
            bin_edges: vec![0.0, 1.0],
            counts: vec![0],
        };
        assert!(compare_distributions(&a, &empty).is_err());
    }

    #[test]
    fn text_export_has_two_columns() {
        let text = dist(&[0.2, 1.0], 2).to_text();
        assert_eq!(text, "0.25 0.5\n0.75 0.5\n");
    }
}
