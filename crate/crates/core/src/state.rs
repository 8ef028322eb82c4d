//! Ordered multi-component states of a grasped object.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::scalar::{dist, Real};

/// `n` components in R^d, stored flat. Component `i` always refers to the
/// same tracked point of the object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSet<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> StateSet<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(contract(format!(
                "state of {} values cannot hold components of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_components(components: &[Vec<T>]) -> Result<Self> {
        let dim = components.first().map_or(0, Vec::len);
        if components.iter().any(|c| c.len() != dim) {
            return Err(contract("components differ in dimension"));
        }
        Self::new(dim, components.concat())
    }

    /// A single point (n = 1).
    pub fn point(p: &[T]) -> Self {
        assert!(!p.is_empty(), "empty point");
        Self {
            dim: p.len(),
            data: p.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn component(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn components(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.dim == other.dim && self.data.len() == other.data.len()
    }

    /// Mean Euclidean distance between corresponding components.
    pub fn mean_component_distance(&self, other: &Self) -> T {
        let total: T = self
            .components()
            .zip(other.components())
            .map(|(a, b)| dist(a, b))
            .sum();
        total / T::of_usize(self.len())
    }
}
