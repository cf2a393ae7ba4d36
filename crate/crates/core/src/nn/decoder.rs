use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::params::key;
use super::{relu, relu_backward, EmbeddingTable, Linear, ParamSet, Real, Tensor, TensorMut};
use crate::rng::Rng;
use crate::{Error, Result};

/// Pairs decoded per matrix product in [`batched_decode`].
const CHUNK: usize = 4096;

/// Three-layer MLP from the squared embedding difference to a distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMlp<T> {
    pub layer1: Linear<T>,
    pub layer2: Linear<T>,
    pub layer3: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct DistMlpCache<T> {
    input: Array2<T>,
    pre1: Array2<T>,
    act1: Array2<T>,
    pre2: Array2<T>,
    act2: Array2<T>,
}

impl<T: Real> DistMlpCache<T> {
    #[cfg(test)]
    pub(crate) fn pattern(&self, out: &mut Vec<u32>) {
        super::sign_pattern(&self.pre1, out);
        super::sign_pattern(&self.pre2, out);
    }
}

impl<T: Real> DistMlp<T> {
    pub fn new(width: usize, hidden: usize, rng: &mut Rng) -> Self {
        DistMlp {
            layer1: Linear::new(width, hidden, rng),
            layer2: Linear::new(hidden, hidden, rng),
            layer3: Linear::new(hidden, 1, rng),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layer1.inputs()
    }

    /// Raw (unclamped) outputs for a batch of squared differences.
    pub fn forward(&self, s: &Array2<T>) -> Result<(Array1<T>, DistMlpCache<T>)> {
        let pre1 = self.layer1.forward(s)?;
        let act1 = relu(&pre1);
        let pre2 = self.layer2.forward(&act1)?;
        let act2 = relu(&pre2);
        let out = self.layer3.forward(&act2)?.remove_axis(Axis(1));
        Ok((
            out,
            DistMlpCache {
                input: s.clone(),
                pre1,
                act1,
                pre2,
                act2,
            },
        ))
    }

    /// Accumulates parameter gradients and returns `dL/ds`.
    pub fn backward(&self, cache: &DistMlpCache<T>, d_out: &Array1<T>, grad: &mut Self) -> Array2<T> {
        let d3 = d_out.view().insert_axis(Axis(1)).to_owned();
        let mut d = self.layer3.backward(&cache.act2, &d3, &mut grad.layer3);
        relu_backward(&cache.pre2, &mut d);
        let mut d = self.layer2.backward(&cache.act1, &d, &mut grad.layer2);
        relu_backward(&cache.pre1, &mut d);
        self.layer1.backward(&cache.input, &d, &mut grad.layer1)
    }

    /// Clamped distance for one squared-difference vector.
    fn eval_one(&self, s: ArrayView1<T>) -> T {
        let h1 = (self.layer1.weight.dot(&s) + &self.layer1.bias).mapv(|v| v.max(T::zero()));
        let h2 = (self.layer2.weight.dot(&h1) + &self.layer2.bias).mapv(|v| v.max(T::zero()));
        let d = self.layer3.weight.row(0).dot(&h2) + self.layer3.bias[0];
        d.max(T::zero())
    }
}

impl<T: Real> ParamSet<T> for DistMlp<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>) {
        self.layer1.tensors(&key(prefix, "layer1"), out);
        self.layer2.tensors(&key(prefix, "layer2"), out);
        self.layer3.tensors(&key(prefix, "layer3"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>) {
        self.layer1.tensors_mut(&key(prefix, "layer1"), out);
        self.layer2.tensors_mut(&key(prefix, "layer2"), out);
        self.layer3.tensors_mut(&key(prefix, "layer3"), out);
    }
}

fn squared_difference<T: Real>(p: ArrayView1<T>, q: ArrayView1<T>) -> Array1<T> {
    let mut s = &p - &q;
    s.mapv_inplace(|v| v * v);
    s
}

/// Distance between two embeddings, clamped at zero. Symmetric bit for bit
/// because `(p - q)^2 == (q - p)^2` in floating point.
pub fn decode_distance<T: Real>(p: ArrayView1<T>, q: ArrayView1<T>, mlp: &DistMlp<T>) -> Result<T> {
    if p.len() != mlp.input_width() || q.len() != mlp.input_width() {
        return Err(Error::Shape(format!(
            "decoder expects width {}, got {} and {}",
            mlp.input_width(),
            p.len(),
            q.len()
        )));
    }
    Ok(mlp.eval_one(squared_difference(p, q).view()))
}

/// Decodes many vertex pairs with batched matrix products.
pub fn batched_decode(table: &EmbeddingTable, pairs: &[(u32, u32)], mlp: &DistMlp<f32>) -> Result<Vec<f32>> {
    let v = table.vertex_count();
    if let Some(&(i, j)) = pairs.iter().find(|(i, j)| (*i.max(j)) as usize >= v) {
        return Err(Error::IndexOutOfRange {
            index: i.max(j) as usize,
            len: v,
        });
    }
    if table.width() != mlp.input_width() {
        return Err(Error::Shape(format!(
            "table width {} does not match decoder width {}",
            table.width(),
            mlp.input_width()
        )));
    }
    let vectors = table.vectors();
    let mut out = Vec::with_capacity(pairs.len());
    let mut s = Array2::<f32>::zeros((CHUNK.min(pairs.len()), table.width()));
    for chunk in pairs.chunks(CHUNK) {
        if s.nrows() != chunk.len() {
            s = Array2::zeros((chunk.len(), table.width()));
        }
        for (mut row, &(i, j)) in s.rows_mut().into_iter().zip(chunk) {
            let (p, q) = (vectors.row(i as usize), vectors.row(j as usize));
            for ((dst, &a), &b) in row.iter_mut().zip(p).zip(q) {
                let d = a - b;
                *dst = d * d;
            }
        }
        let (raw, _) = mlp.forward(&s)?;
        out.extend(raw.iter().map(|d| d.max(0.0)));
    }
    Ok(out)
}

/// Plain Euclidean distance between embeddings.
pub fn euclidean_decode<T: Real>(p: ArrayView1<T>, q: ArrayView1<T>) -> T {
    p.iter().zip(q).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt()
}
