//! Named parameter collection with matching gradient buffers.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::Matrix;

/// One trainable matrix plus its gradient accumulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

/// Ordered collection of named parameters. Iteration order is insertion
/// order, which makes optimizer updates and serialization deterministic.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter; its gradient buffer starts at zero.
    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        let name = name.into();
        debug_assert!(
            !self.params.iter().any(|p| p.name == name),
            "duplicate parameter {name}"
        );
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Param { name, value, grad });
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| CoreError::Missing(format!("parameter {name}")))
    }

    pub fn value(&self, name: &str) -> Result<&Matrix> {
        self.get(name).map(|p| &p.value)
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Matrix> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.grad)
            .ok_or_else(|| CoreError::Missing(format!("parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Reset every gradient buffer to zero.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// True when every gradient entry is finite.
    pub fn grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.is_finite())
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.params
            .iter()
            .map(|p| p.value.rows() * p.value.cols())
            .sum()
    }

    /// Bitwise equality of parameter values (gradients ignored).
    pub fn values_bitwise_eq(&self, other: &ParamSet) -> bool {
        if self.params.len() != other.params.len() {
            return false;
        }
        self.params.iter().zip(other.params.iter()).all(|(a, b)| {
            a.name == b.name
                && a.value.shape() == b.value.shape()
                && a.value
                    .data()
                    .iter()
                    .zip(b.value.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_buffer_matches_shape() {
        let mut ps = ParamSet::new();
        ps.insert("w", Matrix::zeros(3, 2));
        let p = ps.get("w").unwrap();
        assert_eq!(p.value.shape(), p.grad.shape());
    }

    #[test]
    fn missing_parameter_errors() {
        let ps = ParamSet::new();
        assert!(ps.get("nope").is_err());
    }
}
