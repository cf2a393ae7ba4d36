use ndarray::{ArrayBase, Data, DataMut, Dimension};

use super::Real;

/// A named, read-only view of one parameter tensor as a flat slice.
pub struct Tensor<'a, T> {
    pub name: String,
    pub values: &'a [T],
}

impl<'a, T> Tensor<'a, T> {
    pub fn new<S, D>(name: String, array: &'a ArrayBase<S, D>) -> Self
    where
        S: Data<Elem = T>,
        D: Dimension,
    {
        Tensor {
            name,
            values: array.as_slice().expect("parameters are contiguous"),
        }
    }
}

/// A named, mutable view of one parameter tensor as a flat slice.
pub struct TensorMut<'a, T> {
    pub name: String,
    pub values: &'a mut [T],
}

impl<'a, T> TensorMut<'a, T> {
    pub fn new<S, D>(name: String, array: &'a mut ArrayBase<S, D>) -> Self
    where
        S: DataMut<Elem = T>,
        D: Dimension,
    {
        TensorMut {
            name,
            values: array.as_slice_mut().expect("parameters are contiguous"),
        }
    }
}

/// Enumerates parameter tensors in a fixed order with hierarchical names.
///
/// Structures of the same type and configuration always produce the same
/// names in the same order, which is what optimizers and checkpoints rely on.
pub trait ParamSet<T: Real> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a, T>>);

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a, T>>);

    fn named_tensors(&self) -> Vec<Tensor<'_, T>> {
        let mut out = Vec::new();
        self.tensors("", &mut out);
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::new();
        self.tensors_mut("", &mut out);
        out
    }

    fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|t| t.values.len()).sum()
    }

    /// Sets every parameter to zero.
    fn zero(&mut self) {
        for t in self.named_tensors_mut() {
            t.values.fill(T::zero());
        }
    }
}

/// Joins a parent prefix and a child name with a dot.
pub(crate) fn key(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
