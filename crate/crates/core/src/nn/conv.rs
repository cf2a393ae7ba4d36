use ndarray::{s, Array2, ArrayView2};

use super::params::key;
use super::{fan_in_uniform, ParamSet, Real, Tensor, TensorMut};
use crate::mesh::VertexGraph;
use crate::rng::Rng;
use crate::{Error, Result};

/// How neighbour messages are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
    Sum,
}

/// Graph convolution with edge geometry.
///
/// For vertex `i` with neighbours `j`:
/// `out_i = W_self f_i + agg_j W_nbr [f_j, p_i - p_j, |p_i - p_j|]`,
/// reduced channelwise. A vertex without neighbours gets a zero aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoConv<T> {
    /// `C_out x C_in`.
    pub w_self: Array2<T>,
    /// `C_out x (C_in + 4)`; the last four columns weight the edge geometry.
    pub w_nbr: Array2<T>,
}

/// State saved by [`GeoConv::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: Array2<T>,
    /// Winning neighbour per (vertex, channel) under max aggregation,
    /// `u32::MAX` for vertices without neighbours. Empty otherwise.
    argmax: Vec<u32>,
}

const NO_NEIGHBOR: u32 = u32::MAX;

impl<T> ConvCache<T> {
    #[cfg(test)]
    pub(crate) fn pattern(&self, out: &mut Vec<u32>) {
        out.extend_from_slice(&self.argmax);
    }
}

fn edge_geometry<T: Real>(graph: &VertexGraph, i: usize, j: usize) -> [T; 4] {
    let d = graph.positions()[i] - graph.positions()[j];
    [T::lit(d.x), T::lit(d.y), T::lit(d.z), T::lit(d.norm())]
}

impl<T: Real> GeoConv<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        GeoConv {
            w_self: fan_in_uniform(outputs, inputs, inputs, rng),
            w_nbr: fan_in_uniform(outputs, inputs + 4, inputs + 4, rng),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        GeoConv {
            w_self: Array2::zeros((outputs, inputs)),
            w_nbr: Array2::zeros((outputs, inputs + 4)),
        }
    }

    /// Builds from explicit matrices, checking their shapes agree.
    pub fn from_weights(w_self: Array2<T>, w_nbr: Array2<T>) -> Result<Self> {
        if w_nbr.nrows() != w_self.nrows() || w_nbr.ncols() != w_self.ncols() + 4 {
            return Err(Error::Shape(format!(
                "self weights {:?} need neighbour weights ({}, {}), got {:?}",
                w_self.dim(),
                w_self.nrows(),
                w_self.ncols() + 4,
                w_nbr.dim()
            )));
        }
        Ok(GeoConv { w_self, w_nbr })
    }

    pub fn inputs(&self) -> usize {
        self.w_self.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w_self.nrows()
    }

    fn check(&self, x: &Array2<T>, graph: &VertexGraph) -> Result<()> {
        if x.ncols() != self.inputs() {
            return Err(Error::Shape(format!(
                "convolution expects {} channels, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        if x.nrows() != graph.vertex_count() {
            return Err(Error::Shape(format!(
                "{} feature rows for a {}-vertex graph",
                x.nrows(),
                graph.vertex_count()
            )));
        }
        Ok(())
    }

    /// Geometry weights transposed to `4 x C_out` for contiguous access.
    fn geometry_weights(&self) -> Array2<T> {
        let cin = self.inputs();
        self.w_nbr.slice(s![.., cin..]).t().as_standard_layout().into_owned()
    }

    pub fn forward(
        &self,
        x: &Array2<T>,
        graph: &VertexGraph,
        agg: Aggregation,
    ) -> Result<(Array2<T>, ConvCache<T>)> {
        self.check(x, graph)?;
        let cin = self.inputs();
        let cout = self.outputs();
        let n = x.nrows();
        let messages = x.dot(&self.w_nbr.slice(s![.., ..cin]).t());
        let messages = messages.as_slice().expect("fresh array is contiguous");
        let mut out = x.dot(&self.w_self.t());
        let geo = self.geometry_weights();
        let geo = geo.as_slice().unwrap();
        let (gx, rest) = geo.split_at(cout);
        let (gy, rest) = rest.split_at(cout);
        let (gz, gl) = rest.split_at(cout);

        let mut argmax = if agg == Aggregation::Max {
            vec![NO_NEIGHBOR; n * cout]
        } else {
            Vec::new()
        };
        let mut acc = vec![T::zero(); cout];
        let out_slice = out.as_slice_mut().unwrap();
        for i in 0..n {
            let nbrs = graph.neighbors(i);
            if nbrs.is_empty() {
                continue;
            }
            let init = if agg == Aggregation::Max {
                T::neg_infinity()
            } else {
                T::zero()
            };
            acc.fill(init);
            for &j in nbrs {
                let [ex, ey, ez, el] = edge_geometry::<T>(graph, i, j as usize);
                let row = &messages[j as usize * cout..(j as usize + 1) * cout];
                match agg {
                    Aggregation::Max => {
                        let winners = &mut argmax[i * cout..(i + 1) * cout];
                        for c in 0..cout {
                            let m = row[c] + gx[c] * ex + gy[c] * ey + gz[c] * ez + gl[c] * el;
                            if m > acc[c] {
                                acc[c] = m;
                                winners[c] = j;
                            }
                        }
                    }
                    Aggregation::Mean | Aggregation::Sum => {
                        for c in 0..cout {
                            acc[c] += row[c] + gx[c] * ex + gy[c] * ey + gz[c] * ez + gl[c] * el;
                        }
                    }
                }
            }
            let scale = if agg == Aggregation::Mean {
                T::one() / T::lit(nbrs.len() as f64)
            } else {
                T::one()
            };
            let dst = &mut out_slice[i * cout..(i + 1) * cout];
            for c in 0..cout {
                dst[c] += acc[c] * scale;
            }
        }
        Ok((
            out,
            ConvCache {
                input: x.clone(),
                argmax,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        graph: &VertexGraph,
        agg: Aggregation,
        dy: &Array2<T>,
        grad: &mut Self,
    ) -> Array2<T> {
        let x = &cache.input;
        let cin = self.inputs();
        let cout = self.outputs();
        let n = x.nrows();
        grad.w_self += &dy.t().dot(x);
        let mut dx = dy.dot(&self.w_self);

        let dy_std = dy.as_standard_layout();
        let dy_slice = dy_std.as_slice().unwrap();
        let mut d_messages = Array2::<T>::zeros((n, cout));
        let dm = d_messages.as_slice_mut().unwrap();
        let mut d_geo = Array2::<T>::zeros((4, cout));
        {
            let dg = d_geo.as_slice_mut().unwrap();
            let (dgx, rest) = dg.split_at_mut(cout);
            let (dgy, rest) = rest.split_at_mut(cout);
            let (dgz, dgl) = rest.split_at_mut(cout);
            for i in 0..n {
                let nbrs = graph.neighbors(i);
                if nbrs.is_empty() {
                    continue;
                }
                let up = &dy_slice[i * cout..(i + 1) * cout];
                match agg {
                    Aggregation::Max => {
                        let winners = &cache.argmax[i * cout..(i + 1) * cout];
                        for c in 0..cout {
                            let j = winners[c];
                            if j == NO_NEIGHBOR {
                                continue;
                            }
                            let [ex, ey, ez, el] = edge_geometry::<T>(graph, i, j as usize);
                            let g = up[c];
                            dm[j as usize * cout + c] += g;
                            dgx[c] += g * ex;
                            dgy[c] += g * ey;
                            dgz[c] += g * ez;
                            dgl[c] += g * el;
                        }
                    }
                    Aggregation::Mean | Aggregation::Sum => {
                        let scale = if agg == Aggregation::Mean {
                            T::one() / T::lit(nbrs.len() as f64)
                        } else {
                            T::one()
                        };
                        for &j in nbrs {
                            let [ex, ey, ez, el] = edge_geometry::<T>(graph, i, j as usize);
                            let dst = &mut dm[j as usize * cout..(j as usize + 1) * cout];
                            for c in 0..cout {
                                let g = up[c] * scale;
                                dst[c] += g;
                                dgx[c] += g * ex;
                                dgy[c] += g * ey;
                                dgz[c] += g * ez;
                                dgl[c] += g * el;
                            }
                        }
                    }
                }
            }
        }
        {
            let mut feature_part = grad.w_nbr.slice_mut(s![.., ..cin]);
            feature_part += &d_messages.t().dot(x);
        }
        {
            let mut geometry_part = grad.w_nbr.slice_mut(s![.., cin..]);
            geometry_part += &d_geo.t();
        }
        let w_feat: ArrayView2<T> = self.w_nbr.slice(s![.., ..cin]);
        dx += &d_messages.dot(&w_feat);
        dx
    }
}

impl<T: Real> ParamSet<T> for GeoConv<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>) {
        out.push(Tensor::new(key(prefix, "w_self"), &self.w_self));
        out.push(Tensor::new(key(prefix, "w_nbr"), &self.w_nbr));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>) {
        out.push(TensorMut::new(key(prefix, "w_self"), &mut self.w_self));
        out.push(TensorMut::new(key(prefix, "w_nbr"), &mut self.w_nbr));
    }
}

/// Max-aggregated graph convolution of `features` over `graph`.
pub fn geo_conv<T: Real>(
    features: &Array2<T>,
    graph: &VertexGraph,
    params: &GeoConv<T>,
) -> Result<Array2<T>> {
    Ok(params.forward(features, graph, Aggregation::Max)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{shapes, Vec3};
    use crate::rng;
    use ndarray::array;
    use rand::Rng as _;

    fn two_vertex_graph() -> VertexGraph {
        let p = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        VertexGraph::from_edges(p.clone(), p, [(0, 1)])
    }

    fn random_features(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::stream(seed, "features");
        Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-1.0..1.0))
    }

    #[test]
    fn hand_example() {
        let conv = GeoConv::from_weights(array![[1.0]], array![[1.0, 1.0, 1.0, 1.0, 1.0]]).unwrap();
        let out = geo_conv(&array![[1.0], [2.0]], &two_vertex_graph(), &conv).unwrap();
        assert_eq!(out[[0, 0]], 3.0);
        // Vertex 1 sees vertex 0 with offset (+1, 0, 0): 2 + (1 + 1 + 0 + 0 + 1).
        assert_eq!(out[[1, 0]], 5.0);
    }

    #[test]
    fn isolated_vertex_keeps_self_term() {
        let p = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let g = VertexGraph::from_edges(p.clone(), p, [(0, 1)]);
        let mut r = rng::stream(1, "w");
        let conv = GeoConv::<f64>::new(3, 5, &mut r);
        let x = random_features(3, 3, 2);
        for agg in [Aggregation::Max, Aggregation::Mean, Aggregation::Sum] {
            let (out, _) = conv.forward(&x, &g, agg).unwrap();
            let expected = conv.w_self.dot(&x.row(2));
            assert!((&out.row(2) - &expected).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn shape_errors() {
        let conv = GeoConv::<f64>::zeros(2, 3);
        assert!(matches!(
            geo_conv(&Array2::zeros((2, 3)), &two_vertex_graph(), &conv),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            geo_conv(&Array2::zeros((3, 2)), &two_vertex_graph(), &conv),
            Err(Error::Shape(_))
        ));
        assert!(GeoConv::from_weights(Array2::<f64>::zeros((3, 2)), Array2::zeros((3, 5))).is_err());
    }

    #[test]
    fn translation_invariant() {
        let mesh = shapes::bumpy_sphere(1, 0.1, 2.0);
        let g = mesh.build_graph();
        let shifted: Vec<Vec3> = g.positions().iter().map(|p| p + Vec3::new(0.3, -2.0, 5.0)).collect();
        let moved = VertexGraph::from_edges(shifted, g.normals().to_vec(), g.edges());
        let conv = GeoConv::<f64>::new(4, 8, &mut rng::stream(3, "w"));
        let x = random_features(g.vertex_count(), 4, 4);
        let a = geo_conv(&x, &g, &conv).unwrap();
        let b = geo_conv(&x, &moved, &conv).unwrap();
        assert!((a - b).iter().all(|d| d.abs() < 1e-5));
    }

    #[test]
    fn max_aggregate_grows_with_neighbourhood() {
        let mesh = shapes::icosphere(1);
        let g = mesh.build_graph();
        let conv = GeoConv::<f64>::new(3, 6, &mut rng::stream(5, "w"));
        let x = random_features(g.vertex_count(), 3, 6);
        let mut extra: Vec<(u32, u32)> = g.edges().collect();
        extra.extend([(0, 20), (0, 33), (5, 40)]);
        let bigger = VertexGraph::from_edges(g.positions().to_vec(), g.normals().to_vec(), extra);
        let a = geo_conv(&x, &g, &conv).unwrap();
        let b = geo_conv(&x, &bigger, &conv).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(a, b)| b >= a));
        assert!(a != b);
    }
}
