use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::index;

use super::DistanceOracle;
use crate::mesh::TriangleMesh;
use crate::rng;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"GSET";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePair {
    pub i: u32,
    pub j: u32,
    pub distance: f32,
}

/// Supervision pairs for one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSampleSet {
    pairs: Vec<SamplePair>,
    checksum: u64,
}

impl GeodesicSampleSet {
    pub fn new(pairs: Vec<SamplePair>, checksum: u64) -> Result<Self> {
        if let Some(p) = pairs.iter().find(|p| p.i == p.j) {
            return Err(Error::InvalidArgument(format!("pair ({}, {}) repeats a vertex", p.i, p.j)));
        }
        if let Some(p) = pairs.iter().find(|p| !(p.distance >= 0.0) || !p.distance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pair ({}, {}) has invalid distance {}",
                p.i, p.j, p.distance
            )));
        }
        Ok(GeodesicSampleSet { pairs, checksum })
    }

    pub fn pairs(&self) -> &[SamplePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn mesh_checksum(&self) -> u64 {
        self.checksum
    }

    pub fn check_mesh(&self, mesh: &TriangleMesh) -> Result<()> {
        let expected = mesh.checksum();
        if expected != self.checksum {
            return Err(Error::StaleChecksum {
                expected,
                found: self.checksum,
            });
        }
        if let Some(p) = self
            .pairs
            .iter()
            .find(|p| p.i.max(p.j) as usize >= mesh.vertex_count())
        {
            return Err(Error::IndexOutOfRange {
                index: p.i.max(p.j) as usize,
                len: mesh.vertex_count(),
            });
        }
        Ok(())
    }

    /// Stored distance for an unordered pair.
    pub fn distance(&self, i: u32, j: u32) -> Option<f32> {
        self.pairs
            .iter()
            .find(|p| (p.i, p.j) == (i, j) || (p.i, p.j) == (j, i))
            .map(|p| p.distance)
    }

    /// Splits into (matching, rest) by a predicate on pairs.
    pub fn partition(&self, mut keep: impl FnMut(&SamplePair) -> bool) -> (Self, Self) {
        let (a, b): (Vec<_>, Vec<_>) = self.pairs.iter().partition(|p| keep(p));
        (
            GeodesicSampleSet {
                pairs: a,
                checksum: self.checksum,
            },
            GeodesicSampleSet {
                pairs: b,
                checksum: self.checksum,
            },
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 12 * self.pairs.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.checksum.to_le_bytes());
        out.extend_from_slice(&(self.pairs.len() as u64).to_le_bytes());
        for p in &self.pairs {
            out.extend_from_slice(&p.i.to_le_bytes());
            out.extend_from_slice(&p.j.to_le_bytes());
            out.extend_from_slice(&p.distance.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Binary(format!("GSET: {m}"));
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let checksum = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let body = &bytes[24..];
        if body.len() != count.checked_mul(12).ok_or_else(|| bad("count overflow"))? {
            return Err(bad(&format!(
                "expected {count} records ({} bytes), found {} bytes",
                count * 12,
                body.len()
            )));
        }
        let pairs = body
            .chunks_exact(12)
            .map(|r| SamplePair {
                i: u32::from_le_bytes(r[0..4].try_into().unwrap()),
                j: u32::from_le_bytes(r[4..8].try_into().unwrap()),
                distance: f32::from_le_bytes(r[8..12].try_into().unwrap()),
            })
            .collect();
        GeodesicSampleSet::new(pairs, checksum)
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

/// Result of [`sample_pairs`].
#[derive(Debug, Clone)]
pub struct SampledPairs {
    pub set: GeodesicSampleSet,
    /// Pairs discarded because the oracle reported them unreachable.
    pub dropped: usize,
}

/// Source-grouped sampling: `num_sources` distinct sources, and for each
/// `dests_per_source` distinct destinations (capped at `V - 1`), all drawn
/// uniformly. Every sampled pair is stored once; unreachable pairs are
/// dropped and counted. A pair sampled in both orientations carries the same
/// distance in both records.
pub fn sample_pairs(
    mesh: &TriangleMesh,
    num_sources: usize,
    dests_per_source: usize,
    oracle: &dyn DistanceOracle,
    seed: u64,
) -> Result<SampledPairs> {
    let n = mesh.vertex_count();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 vertices to sample pairs".into()));
    }
    if num_sources == 0 || dests_per_source == 0 {
        return Err(Error::InvalidArgument("source and destination counts must be positive".into()));
    }
    if num_sources > n {
        return Err(Error::InvalidArgument(format!(
            "{num_sources} sources requested from a {n}-vertex mesh"
        )));
    }
    let checksum = mesh.checksum();
    if oracle.mesh_checksum() != checksum {
        return Err(Error::StaleChecksum {
            expected: checksum,
            found: oracle.mesh_checksum(),
        });
    }
    let dests = dests_per_source.min(n - 1);
    if dests < dests_per_source {
        log::warn!("capping destinations per source at {dests} (mesh has {n} vertices)");
    }
    let mut rng = rng::stream(seed, "sample_pairs");
    let sources = index::sample(&mut rng, n, num_sources).into_vec();
    let mut seen: HashMap<(u32, u32), f32> = HashMap::new();
    let mut pairs = Vec::with_capacity(num_sources * dests);
    let mut dropped = 0;
    for &s in &sources {
        let field = oracle.distance_field(s)?;
        for k in index::sample(&mut rng, n - 1, dests).into_iter() {
            // Skip over the source itself.
            let t = if k >= s { k + 1 } else { k };
            let d = field[t];
            if !d.is_finite() {
                dropped += 1;
                continue;
            }
            let (i, j) = (s as u32, t as u32);
            let d = *seen.entry((i.min(j), i.max(j))).or_insert(d as f32);
            pairs.push(SamplePair { i, j, distance: d });
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} unreachable pair(s)");
    }
    Ok(SampledPairs {
        set: GeodesicSampleSet::new(pairs, checksum)?,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::oracle::{GraphOracle, SteinerOracle};

    #[test]
    fn one_full_field() {
        let mesh = shapes::icosphere(1);
        let oracle = GraphOracle::new(&mesh);
        let out = sample_pairs(&mesh, 1, mesh.vertex_count() - 1, &oracle, 1).unwrap();
        assert_eq!(out.set.len(), 41);
        let src = out.set.pairs()[0].i;
        let field = oracle.distance_field(src as usize).unwrap();
        for p in out.set.pairs() {
            assert_eq!(p.i, src);
            assert_eq!(p.distance, field[p.j as usize] as f32);
        }
    }

    #[test]
    fn same_seed_same_set() {
        let mesh = shapes::torus(10, 6, 1.0, 0.3);
        let oracle = SteinerOracle::new(&mesh, 1);
        let a = sample_pairs(&mesh, 5, 7, &oracle, 9).unwrap().set;
        let b = sample_pairs(&mesh, 5, 7, &oracle, 9).unwrap().set;
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = sample_pairs(&mesh, 5, 7, &oracle, 10).unwrap().set;
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn cross_component_pairs_are_dropped() {
        let mesh = shapes::two_spheres(1, 4.0);
        let oracle = GraphOracle::new(&mesh);
        let labels = mesh.component_labels();
        let out = sample_pairs(&mesh, 20, 30, &oracle, 4).unwrap();
        // Re-draw the same indices to count cross-component samples directly.
        let mut rng = rng::stream(4, "sample_pairs");
        let n = mesh.vertex_count();
        let sources = index::sample(&mut rng, n, 20).into_vec();
        let mut cross = 0;
        for &s in &sources {
            for k in index::sample(&mut rng, n - 1, 30).into_iter() {
                let t = if k >= s { k + 1 } else { k };
                cross += (labels[s] != labels[t]) as usize;
            }
        }
        assert!(cross > 0);
        assert_eq!(out.dropped, cross);
        assert_eq!(out.set.len(), 600 - cross);
    }

    #[test]
    fn symmetric_lookup_and_validation() {
        let set = GeodesicSampleSet::new(
            vec![SamplePair { i: 0, j: 2, distance: 1.5 }],
            7,
        )
        .unwrap();
        assert_eq!(set.distance(2, 0), Some(1.5));
        assert_eq!(set.distance(0, 1), None);
        assert!(GeodesicSampleSet::new(vec![SamplePair { i: 1, j: 1, distance: 0.0 }], 0).is_err());
    }

    #[test]
    fn binary_layout() {
        let set = GeodesicSampleSet::new(
            vec![SamplePair { i: 1, j: 2, distance: 0.25 }],
            0x0102030405060708,
        )
        .unwrap();
        let bytes = set.to_bytes();
        assert_eq!(&bytes[..4], b"GSET");
        assert_eq!(bytes.len(), 24 + 12);
        assert_eq!(&bytes[8..16], &0x0102030405060708u64.to_le_bytes());
        assert_eq!(GeodesicSampleSet::from_bytes(&bytes).unwrap(), set);
        assert!(GeodesicSampleSet::from_bytes(&bytes[..30]).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let mesh = shapes::icosphere(0);
        let oracle = GraphOracle::new(&mesh);
        assert!(sample_pairs(&mesh, 13, 1, &oracle, 0).is_err());
        let other = shapes::icosphere(1);
        assert!(matches!(
            sample_pairs(&other, 1, 1, &oracle, 0),
            Err(Error::StaleChecksum { .. })
        ));
    }
}
