use std::collections::HashMap;
use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Real;
use crate::mesh::{VertexGraph, Vec3, FALLBACK_NORMAL};
use crate::{Error, Result};

/// Cell sizes of the pooling grid at the finest level; both double after
/// every pooling step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSchedule {
    pub position: f64,
    /// `None` ignores normals, giving plain 3D grid pooling.
    pub normal: Option<f64>,
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        SigmaSchedule {
            position: 1.0 / 16.0,
            normal: Some(3.0 / 16.0),
        }
    }
}

impl SigmaSchedule {
    /// `(sigma_position, sigma_normal)` used when pooling from `level`.
    pub fn at(&self, level: usize) -> (f64, f64) {
        let scale = (1u64 << level) as f64;
        (
            self.position * scale,
            self.normal.map_or(f64::INFINITY, |s| s * scale),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s > 0.0 && !s.is_nan();
        if !ok(self.position) || !self.normal.map_or(true, ok) {
            return Err(Error::Config(format!("pooling cell sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

fn cell(v: f64, size: f64) -> i64 {
    (v / size).floor() as i64
}

/// Clusters vertices by their 6D grid cell and builds the coarse graph.
fn pool_graph(graph: &VertexGraph, sigma_c: f64, sigma_n: f64) -> (VertexGraph, Vec<u32>) {
    let mut index: HashMap<[i64; 6], u32> = HashMap::new();
    let mut map = Vec::with_capacity(graph.vertex_count());
    for (p, n) in graph.positions().iter().zip(graph.normals()) {
        let key = [
            cell(p.x, sigma_c),
            cell(p.y, sigma_c),
            cell(p.z, sigma_c),
            cell(n.x, sigma_n),
            cell(n.y, sigma_n),
            cell(n.z, sigma_n),
        ];
        let next = index.len() as u32;
        map.push(*index.entry(key).or_insert(next));
    }
    let m = index.len();
    let mut positions = vec![Vec3::zeros(); m];
    let mut normals = vec![Vec3::zeros(); m];
    let mut counts = vec![0usize; m];
    for (i, &c) in map.iter().enumerate() {
        positions[c as usize] += graph.positions()[i];
        normals[c as usize] += graph.normals()[i];
        counts[c as usize] += 1;
    }
    for c in 0..m {
        positions[c] /= counts[c] as f64;
        let len = normals[c].norm();
        normals[c] = if len > 1e-12 { normals[c] / len } else { FALLBACK_NORMAL };
    }
    let edges: Vec<(u32, u32)> = graph
        .edges()
        .map(|(i, j)| (map[i as usize], map[j as usize]))
        .filter(|(a, b)| a != b)
        .collect();
    (VertexGraph::from_edges(positions, normals, edges), map)
}

fn cluster_sizes(map: &[u32], clusters: usize) -> Vec<usize> {
    let mut counts = vec![0usize; clusters];
    for &c in map {
        counts[c as usize] += 1;
    }
    counts
}

/// Mean of member rows per cluster.
pub(crate) fn pool_features<T: Real>(x: &Array2<T>, map: &[u32], clusters: usize) -> Array2<T> {
    let counts = cluster_sizes(map, clusters);
    let mut out = Array2::<T>::zeros((clusters, x.ncols()));
    for (i, &c) in map.iter().enumerate() {
        let mut row = out.row_mut(c as usize);
        row += &x.row(i);
    }
    for (c, mut row) in out.rows_mut().into_iter().enumerate() {
        row /= T::lit(counts[c] as f64);
    }
    out
}

pub(crate) fn pool_features_backward<T: Real>(dy: &Array2<T>, map: &[u32]) -> Array2<T> {
    let counts = cluster_sizes(map, dy.nrows());
    let mut dx = Array2::<T>::zeros((map.len(), dy.ncols()));
    for (i, &c) in map.iter().enumerate() {
        let scale = T::one() / T::lit(counts[c as usize] as f64);
        dx.row_mut(i).assign(&(&dy.row(c as usize) * scale));
    }
    dx
}

pub(crate) fn unpool_features<T: Real>(x: &Array2<T>, map: &[u32]) -> Array2<T> {
    let mut out = Array2::<T>::zeros((map.len(), x.ncols()));
    for (i, &c) in map.iter().enumerate() {
        out.row_mut(i).assign(&x.row(c as usize));
    }
    out
}

pub(crate) fn unpool_features_backward<T: Real>(dy: &Array2<T>, map: &[u32], clusters: usize) -> Array2<T> {
    let mut dx = Array2::<T>::zeros((clusters, dy.ncols()));
    for (i, &c) in map.iter().enumerate() {
        let mut row = dx.row_mut(c as usize);
        row += &dy.row(i);
    }
    dx
}

/// Pools a graph and its features on a grid over position and normal.
///
/// Vertices whose `(position / sigma_c, normal / sigma_n)` fall in the same
/// cell merge. Coarse vertices are numbered by first appearance, carry the
/// mean position, the renormalised mean normal and the mean feature row, and
/// are adjacent iff some fine edge joins their members. `sigma_n = inf`
/// ignores normals.
pub fn geo_pool<T: Real>(
    graph: &VertexGraph,
    features: &Array2<T>,
    sigma_c: f64,
    sigma_n: f64,
) -> Result<(VertexGraph, Array2<T>, Vec<u32>)> {
    if !(sigma_c > 0.0) || !(sigma_n > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cell sizes must be positive, got {sigma_c} and {sigma_n}"
        )));
    }
    if features.nrows() != graph.vertex_count() {
        return Err(Error::Shape(format!(
            "{} feature rows for a {}-vertex graph",
            features.nrows(),
            graph.vertex_count()
        )));
    }
    let (coarse, map) = pool_graph(graph, sigma_c, sigma_n);
    let pooled = pool_features(features, &map, coarse.vertex_count());
    Ok((coarse, pooled, map))
}

/// Copies each coarse row back to its fine members.
pub fn geo_unpool<T: Real>(coarse: &Array2<T>, map: &[u32]) -> Result<Array2<T>> {
    if let Some(&bad) = map.iter().find(|&&c| c as usize >= coarse.nrows()) {
        return Err(Error::Shape(format!(
            "cluster index {bad} but only {} coarse rows",
            coarse.nrows()
        )));
    }
    Ok(unpool_features(coarse, map))
}

/// Precomputed pooling pyramid.
///
/// `levels[0]` is the input graph; `maps[l][i]` is the level `l + 1` cluster
/// of level-`l` vertex `i`. `segments[l]` lists the vertex ranges of each
/// mesh at level `l` when several meshes are batched together.
#[derive(Debug, Clone)]
pub struct GraphHierarchy {
    levels: Vec<VertexGraph>,
    maps: Vec<Vec<u32>>,
    segments: Vec<Vec<Range<usize>>>,
}

impl GraphHierarchy {
    pub fn build(graph: &VertexGraph, depth: usize, sigmas: &SigmaSchedule) -> Self {
        let mut levels = vec![graph.clone()];
        let mut maps = Vec::with_capacity(depth);
        for l in 0..depth {
            let (sc, sn) = sigmas.at(l);
            let (coarse, map) = pool_graph(&levels[l], sc, sn);
            levels.push(coarse);
            maps.push(map);
        }
        let segments = levels.iter().map(|g| vec![0..g.vertex_count()]).collect();
        GraphHierarchy {
            levels,
            maps,
            segments,
        }
    }

    /// Disjoint union of per-mesh hierarchies of equal depth. Clusters never
    /// span meshes because each part was pooled on its own.
    pub fn batch(parts: &[&GraphHierarchy]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidArgument("cannot batch zero hierarchies".into()));
        };
        let depth = first.depth();
        if parts.iter().any(|h| h.depth() != depth) {
            return Err(Error::Shape("hierarchies of different depth".into()));
        }
        let mut levels = Vec::with_capacity(depth + 1);
        let mut segments = Vec::with_capacity(depth + 1);
        for l in 0..=depth {
            let graphs: Vec<&VertexGraph> = parts.iter().map(|h| &h.levels[l]).collect();
            levels.push(VertexGraph::disjoint_union(&graphs));
            let mut segs = Vec::new();
            let mut base = 0;
            for h in parts {
                segs.extend(h.segments[l].iter().map(|r| r.start + base..r.end + base));
                base += h.levels[l].vertex_count();
            }
            segments.push(segs);
        }
        let mut maps = Vec::with_capacity(depth);
        for l in 0..depth {
            let mut map = Vec::new();
            let mut base = 0u32;
            for h in parts {
                map.extend(h.maps[l].iter().map(|&c| c + base));
                base += h.levels[l + 1].vertex_count() as u32;
            }
            maps.push(map);
        }
        Ok(GraphHierarchy {
            levels,
            maps,
            segments,
        })
    }

    pub fn depth(&self) -> usize {
        self.maps.len()
    }

    pub fn level(&self, l: usize) -> &VertexGraph {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[VertexGraph] {
        &self.levels
    }

    pub fn cluster_map(&self, l: usize) -> &[u32] {
        &self.maps[l]
    }

    pub fn segments(&self, l: usize) -> &[Range<usize>] {
        &self.segments[l]
    }
}
