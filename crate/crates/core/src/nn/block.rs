use std::ops::Range;

use ndarray::Array2;

use super::params::key;
use super::{
    relu, relu_backward, Aggregation, ConvCache, GeoConv, GroupNorm, NormCache, ParamSet, Real,
    Tensor, TensorMut, WIDTH,
};
use crate::mesh::VertexGraph;
use crate::rng::Rng;
use crate::{Error, Result};

/// Residual block: `x + conv2(norm2(relu(conv1(norm1(relu(x))))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock<T> {
    pub norm1: GroupNorm<T>,
    pub conv1: GeoConv<T>,
    pub norm2: GroupNorm<T>,
    pub conv2: GeoConv<T>,
}

#[derive(Debug, Clone)]
pub struct ResBlockCache<T> {
    input: Array2<T>,
    norm1: NormCache<T>,
    conv1: ConvCache<T>,
    hidden: Array2<T>,
    norm2: NormCache<T>,
    conv2: ConvCache<T>,
}

impl<T: Real> ResBlockCache<T> {
    #[cfg(test)]
    pub(crate) fn pattern(&self, out: &mut Vec<u32>) {
        super::sign_pattern(&self.input, out);
        super::sign_pattern(&self.hidden, out);
        self.conv1.pattern(out);
        self.conv2.pattern(out);
    }
}

impl<T: Real> ResBlock<T> {
    pub fn new(groups: usize, rng: &mut Rng) -> Result<Self> {
        Ok(ResBlock {
            norm1: GroupNorm::new(WIDTH, groups)?,
            conv1: GeoConv::new(WIDTH, WIDTH, rng),
            norm2: GroupNorm::new(WIDTH, groups)?,
            conv2: GeoConv::new(WIDTH, WIDTH, rng),
        })
    }

    pub fn forward(
        &self,
        x: &Array2<T>,
        graph: &VertexGraph,
        segments: &[Range<usize>],
        agg: Aggregation,
    ) -> Result<(Array2<T>, ResBlockCache<T>)> {
        if x.ncols() != WIDTH {
            return Err(Error::Shape(format!(
                "residual block needs width {WIDTH}, got {}",
                x.ncols()
            )));
        }
        let (n1, norm1) = self.norm1.forward(&relu(x), segments)?;
        let (hidden, conv1) = self.conv1.forward(&n1, graph, agg)?;
        let (n2, norm2) = self.norm2.forward(&relu(&hidden), segments)?;
        let (c2, conv2) = self.conv2.forward(&n2, graph, agg)?;
        let out = x + &c2;
        Ok((
            out,
            ResBlockCache {
                input: x.clone(),
                norm1,
                conv1,
                hidden,
                norm2,
                conv2,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &ResBlockCache<T>,
        graph: &VertexGraph,
        segments: &[Range<usize>],
        agg: Aggregation,
        dy: &Array2<T>,
        grad: &mut Self,
    ) -> Array2<T> {
        let d = self.conv2.backward(&cache.conv2, graph, agg, dy, &mut grad.conv2);
        let mut d = self.norm2.backward(&cache.norm2, segments, &d, &mut grad.norm2);
        relu_backward(&cache.hidden, &mut d);
        let d = self.conv1.backward(&cache.conv1, graph, agg, &d, &mut grad.conv1);
        let mut d = self.norm1.backward(&cache.norm1, segments, &d, &mut grad.norm1);
        relu_backward(&cache.input, &mut d);
        d + dy
    }
}

impl<T: Real> ParamSet<T> for ResBlock<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>) {
        self.norm1.tensors(&key(prefix, "norm1"), out);
        self.conv1.tensors(&key(prefix, "conv1"), out);
        self.norm2.tensors(&key(prefix, "norm2"), out);
        self.conv2.tensors(&key(prefix, "conv2"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>) {
        self.norm1.tensors_mut(&key(prefix, "norm1"), out);
        self.conv1.tensors_mut(&key(prefix, "conv1"), out);
        self.norm2.tensors_mut(&key(prefix, "norm2"), out);
        self.conv2.tensors_mut(&key(prefix, "conv2"), out);
    }
}
