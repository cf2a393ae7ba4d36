use ndarray::{Array1, Array2, Axis};

use super::params::key;
use super::{fan_in_uniform, ParamSet, Real, Tensor, TensorMut};
use crate::rng::Rng;
use crate::{Error, Result};

/// Affine layer `y = x W^T + b` on row-major batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Linear {
            weight: fan_in_uniform(outputs, inputs, inputs, rng),
            bias: fan_in_uniform(1, outputs, inputs, rng).remove_axis(Axis(0)),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &Array2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.inputs() {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.inputs(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Array2<T>, dy: &Array2<T>, grad: &mut Self) -> Array2<T> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }
}

impl<T: Real> ParamSet<T> for Linear<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>) {
        out.push(Tensor::new(key(prefix, "weight"), &self.weight));
        out.push(Tensor::new(key(prefix, "bias"), &self.bias));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>) {
        out.push(TensorMut::new(key(prefix, "weight"), &mut self.weight));
        out.push(TensorMut::new(key(prefix, "bias"), &mut self.bias));
    }
}
