use ndarray::IxDyn;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Array, Var};

/// Named tensors in a fixed order. Networks keep their weights here as plain
/// data and bind them to graph leaves for each forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Array] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.values[i])
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Differentiable leaves, one per tensor.
    pub fn bind(&self) -> Vec<Var> {
        self.values.iter().map(|v| Var::param(v.clone())).collect()
    }

    /// Non-differentiable leaves, for inference.
    pub fn bind_frozen(&self) -> Vec<Var> {
        self.values.iter().map(|v| Var::constant(v.clone())).collect()
    }
}

pub(crate) fn normal_init(shape: &[usize], std: f64, rng: &mut impl Rng) -> Array {
    let dist = Normal::new(0.0, std).expect("valid std");
    Array::from_shape_simple_fn(IxDyn(shape), || dist.sample(rng))
}

pub(crate) fn zeros(shape: &[usize]) -> Array {
    Array::zeros(IxDyn(shape))
}

pub(crate) fn ones(shape: &[usize]) -> Array {
    Array::ones(IxDyn(shape))
}
