use rand::seq::index;

use crate::oracle::DistanceOracle;
use crate::rng;
use crate::{Error, Result};

/// Slack in the triangle-inequality test.
pub const VIOLATION_SLACK: f64 = 1e-6;

/// Mean relative error of `predictor` against `reference` over all pairs
/// `(s, v)` with `v != s` for `num_sources` random sources `s`. Pairs the
/// reference cannot reach are skipped.
pub fn evaluate_mre(
    predictor: &dyn DistanceOracle,
    reference: &dyn DistanceOracle,
    num_sources: usize,
    seed: u64,
    epsilon: f64,
) -> Result<f64> {
    let v = reference.vertex_count();
    if predictor.mesh_checksum() != reference.mesh_checksum() {
        return Err(Error::StaleChecksum {
            expected: reference.mesh_checksum(),
            found: predictor.mesh_checksum(),
        });
    }
    if num_sources == 0 || num_sources > v {
        return Err(Error::InvalidArgument(format!(
            "{num_sources} sources requested on a mesh with {v} vertices"
        )));
    }
    let sources = index::sample(&mut rng::stream(seed, "evaluate"), v, num_sources);
    let (mut total, mut count) = (0.0, 0usize);
    for s in sources {
        let gt = reference.distance_field(s)?;
        let pred = predictor.distance_field(s)?;
        for (k, (&g, &p)) in gt.iter().zip(&pred).enumerate() {
            if k != s && g.is_finite() {
                total += (p - g).abs() / (g + epsilon);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no reachable pairs to evaluate".into()));
    }
    Ok(total / count as f64)
}

/// Vertices `x` with `d(p, q) > d(p, x) + d(q, x) + slack`.
pub fn triangle_violations(distances: &dyn DistanceOracle, p: usize, q: usize) -> Result<Vec<usize>> {
    let from_p = distances.distance_field(p)?;
    let from_q = distances.distance_field(q)?;
    let pq = *from_p.get(q).ok_or(Error::IndexOutOfRange {
        index: q,
        len: from_p.len(),
    })?;
    Ok(from_p
        .iter()
        .zip(&from_q)
        .enumerate()
        .filter(|(_, (a, b))| pq > *a + *b + VIOLATION_SLACK)
        .map(|(x, _)| x)
        .collect())
}

/// Per-vertex 0/1 field marking `violations`, for PLY export.
pub fn violation_mask(violations: &[usize], vertex_count: usize) -> Vec<f64> {
    let mut mask = vec![0.0; vertex_count];
    for &x in violations {
        mask[x] = 1.0;
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::oracle::{GraphOracle, SteinerOracle};

    struct Zero(usize, u64);

    impl DistanceOracle for Zero {
        fn vertex_count(&self) -> usize {
            self.0
        }

        fn mesh_checksum(&self) -> u64 {
            self.1
        }

        fn distance_field(&self, _: usize) -> Result<Vec<f64>> {
            Ok(vec![0.0; self.0])
        }
    }

    #[test]
    fn oracle_against_itself_is_exact() {
        let mesh = shapes::icosphere(2);
        let oracle = GraphOracle::new(&mesh);
        assert_eq!(evaluate_mre(&oracle, &oracle, 20, 0, 0.001).unwrap(), 0.0);
    }

    #[test]
    fn zero_predictor_is_near_one() {
        let mesh = shapes::icosphere(2);
        let oracle = GraphOracle::new(&mesh);
        let zero = Zero(mesh.vertex_count(), mesh.checksum());
        let mre = evaluate_mre(&zero, &oracle, 20, 0, 0.001).unwrap();
        // Every term is d / (d + eps) with d at least one edge length.
        assert!(mre < 1.0 && mre > 0.98, "{mre}");
        assert!(evaluate_mre(&zero, &oracle, mesh.vertex_count() + 1, 0, 0.001).is_err());
    }

    #[test]
    fn metric_oracles_have_no_violations() {
        let mesh = shapes::bumpy_sphere(2, 0.15, 3.0);
        for oracle in [
            Box::new(GraphOracle::new(&mesh)) as Box<dyn DistanceOracle>,
            Box::new(SteinerOracle::new(&mesh, 2)),
        ] {
            assert!(triangle_violations(oracle.as_ref(), 0, 100).unwrap().is_empty());
            assert!(triangle_violations(oracle.as_ref(), 7, 7).unwrap().is_empty());
        }
    }

    #[test]
    fn violations_of_a_broken_metric_are_found() {
        // d(0, 1) = 10 but both are 1 away from vertex 2.
        struct Broken;
        impl DistanceOracle for Broken {
            fn vertex_count(&self) -> usize {
                3
            }
            fn mesh_checksum(&self) -> u64 {
                0
            }
            fn distance_field(&self, s: usize) -> Result<Vec<f64>> {
                Ok(match s {
                    0 => vec![0.0, 10.0, 1.0],
                    1 => vec![10.0, 0.0, 1.0],
                    _ => vec![1.0, 1.0, 0.0],
                })
            }
        }
        assert_eq!(triangle_violations(&Broken, 0, 1).unwrap(), vec![2]);
        assert_eq!(violation_mask(&[2], 3), vec![0.0, 0.0, 1.0]);
    }
}
