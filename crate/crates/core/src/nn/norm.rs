use std::ops::Range;

use ndarray::{Array1, Array2};

use super::params::key;
use super::{ParamSet, Real, Tensor, TensorMut};
use crate::{Error, Result};

const EPS: f64 = 1e-5;

/// Group normalisation over vertices.
///
/// Statistics are taken per row segment (one segment per mesh in a batch)
/// and per channel group, over all vertices of the segment and all channels
/// of the group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    groups: usize,
}

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    normalized: Array2<T>,
    /// `1 / sqrt(var + eps)` per (segment, group).
    inv_std: Vec<T>,
}

impl<T: Real> GroupNorm<T> {
    pub fn new(channels: usize, groups: usize) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(Error::Shape(format!(
                "{channels} channels cannot be split into {groups} groups"
            )));
        }
        Ok(GroupNorm {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            groups,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn forward(&self, x: &Array2<T>, segments: &[Range<usize>]) -> Result<(Array2<T>, NormCache<T>)> {
        let c = self.channels();
        if x.ncols() != c {
            return Err(Error::Shape(format!("norm expects {c} channels, got {}", x.ncols())));
        }
        let width = c / self.groups;
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().unwrap();
        let mut normalized = Array2::<T>::zeros(x.dim());
        let ns = normalized.as_slice_mut().unwrap();
        let mut inv_std = Vec::with_capacity(segments.len() * self.groups);
        for seg in segments {
            for g in 0..self.groups {
                let cols = g * width..(g + 1) * width;
                let count = T::lit((seg.len() * width).max(1) as f64);
                let mut sum = T::zero();
                for r in seg.clone() {
                    sum += xs[r * c + cols.start..r * c + cols.end].iter().copied().sum::<T>();
                }
                let mean = sum / count;
                let mut var = T::zero();
                for r in seg.clone() {
                    for &v in &xs[r * c + cols.start..r * c + cols.end] {
                        var += (v - mean) * (v - mean);
                    }
                }
                let inv = T::one() / (var / count + T::lit(EPS)).sqrt();
                inv_std.push(inv);
                for r in seg.clone() {
                    for k in cols.clone() {
                        ns[r * c + k] = (xs[r * c + k] - mean) * inv;
                    }
                }
            }
        }
        let y = &normalized * &self.gamma + &self.beta;
        Ok((y, NormCache { normalized, inv_std }))
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(
        &self,
        cache: &NormCache<T>,
        segments: &[Range<usize>],
        dy: &Array2<T>,
        grad: &mut Self,
    ) -> Array2<T> {
        let c = self.channels();
        let width = c / self.groups;
        let xhat = cache.normalized.as_slice().unwrap();
        let dy_std = dy.as_standard_layout();
        let dys = dy_std.as_slice().unwrap();
        let gamma = self.gamma.as_slice().unwrap();
        {
            let gg = grad.gamma.as_slice_mut().unwrap();
            let gb = grad.beta.as_slice_mut().unwrap();
            for r in 0..dy.nrows() {
                for k in 0..c {
                    gg[k] += dys[r * c + k] * xhat[r * c + k];
                    gb[k] += dys[r * c + k];
                }
            }
        }
        let mut dx = Array2::<T>::zeros(dy.dim());
        let dxs = dx.as_slice_mut().unwrap();
        for (s, seg) in segments.iter().enumerate() {
            for g in 0..self.groups {
                let cols = g * width..(g + 1) * width;
                let count = T::lit((seg.len() * width).max(1) as f64);
                let inv = cache.inv_std[s * self.groups + g];
                let (mut sum_d, mut sum_dx) = (T::zero(), T::zero());
                for r in seg.clone() {
                    for k in cols.clone() {
                        let d = dys[r * c + k] * gamma[k];
                        sum_d += d;
                        sum_dx += d * xhat[r * c + k];
                    }
                }
                let (mean_d, mean_dx) = (sum_d / count, sum_dx / count);
                for r in seg.clone() {
                    for k in cols.clone() {
                        let d = dys[r * c + k] * gamma[k];
                        dxs[r * c + k] = inv * (d - mean_d - xhat[r * c + k] * mean_dx);
                    }
                }
            }
        }
        dx
    }
}

impl<T: Real> ParamSet<T> for GroupNorm<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>) {
        out.push(Tensor::new(key(prefix, "gamma"), &self.gamma));
        out.push(Tensor::new(key(prefix, "beta"), &self.beta));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>) {
        out.push(TensorMut::new(key(prefix, "gamma"), &mut self.gamma));
        out.push(TensorMut::new(key(prefix, "beta"), &mut self.beta));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalises_each_segment_separately() {
        let norm = GroupNorm::<f64>::new(2, 1).unwrap();
        let x = array![[1.0, 3.0], [5.0, 7.0], [100.0, 300.0]];
        let (y, _) = norm.forward(&x, &[0..2, 2..3]).unwrap();
        let first: f64 = y.slice(ndarray::s![0..2, ..]).sum();
        assert!(first.abs() < 1e-12);
        let var: f64 = y.slice(ndarray::s![0..2, ..]).iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-5);
        assert!(y.row(2).iter().all(|v| v.abs() < 1.0 + 1e-9));
    }

    #[test]
    fn rejects_uneven_groups() {
        assert!(GroupNorm::<f32>::new(10, 3).is_err());
    }
}
