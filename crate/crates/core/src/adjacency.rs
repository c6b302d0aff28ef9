//! The two channel graphs and their symmetric degree normalization.
//!
//! * Common adjacency `A_C`: one learned `N × N` matrix shared by every
//!   input, kept non-negative by a relu on the raw parameter.
//! * Individual adjacency `A_I`: built per input from node features,
//!   `h = (X·W1)(X·W2)ᵀ` followed by a softmax over the first index, so
//!   each column sums to one.
//!
//! Both feed [`normalize_adjacency`], `D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃`
//! the row sums of `A + I`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng::glorot;
use crate::tensor::Tensor;

/// Upper bound of the uniform initialization of the raw common adjacency.
pub const COMMON_INIT_MAX: f64 = 0.05;

/// Which index the individual-adjacency softmax normalizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftmaxAxis {
    /// Over `i` for each `j`: columns sum to one.
    #[default]
    Column,
    /// Over `j` for each `i`: rows sum to one.
    Row,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonAdjacencyParams {
    pub raw: Tensor,
}

impl CommonAdjacencyParams {
    pub fn init<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self {
            raw: Tensor::from_fn(&[n, n], |_| rng.gen_range(0.0..=COMMON_INIT_MAX)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndividualAdjacencyParams {
    pub w1: Tensor,
    pub w2: Tensor,
}

impl IndividualAdjacencyParams {
    pub fn init<R: Rng + ?Sized>(feature_dim: usize, projection_dim: usize, rng: &mut R) -> Self {
        Self {
            w1: glorot(&[feature_dim, projection_dim], feature_dim, projection_dim, rng),
            w2: glorot(&[feature_dim, projection_dim], feature_dim, projection_dim, rng),
        }
    }
}

/// `A_C = relu(raw)`.
pub fn common_adjacency(g: &mut Graph, raw: Var) -> Result<Var> {
    Ok(g.relu(raw)?)
}

/// `A_I` from node features `x` (`N × F_d`).
pub fn individual_adjacency(g: &mut Graph, x: Var, w1: Var, w2: Var, axis: SoftmaxAxis) -> Result<Var> {
    let left = g.matmul(x, w1)?;
    let right = g.matmul(x, w2)?;
    let right_t = g.transpose(right)?;
    let scores = g.matmul(left, right_t)?;
    let axis = match axis {
        SoftmaxAxis::Column => 0,
        SoftmaxAxis::Row => 1,
    };
    Ok(g.softmax(scores, axis)?)
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}`; rejects negative entries.
pub fn normalize_adjacency(g: &mut Graph, a: Var) -> Result<Var> {
    let value = g.value(a);
    if value.rank() != 2 || value.shape()[0] != value.shape()[1] {
        return Err(Error::Config(format!("adjacency must be square, got {:?}", value.shape())));
    }
    let n = value.shape()[0];
    if let Some(k) = value.data().iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeAdjacency {
            row: k / n,
            col: k % n,
            value: value.data()[k],
        });
    }
    let eye = g.constant(Tensor::eye(n));
    let tilde = g.add(a, eye)?;
    let degree = g.sum_axis(tilde, 1)?;
    let inv_sqrt = g.powf(degree, -0.5)?;
    let col = g.reshape(inv_sqrt, &[n, 1])?;
    let row = g.reshape(inv_sqrt, &[1, n])?;
    let scale = g.matmul(col, row)?;
    Ok(g.mul(tilde, scale)?)
}

/// Plain-tensor form of [`normalize_adjacency`].
pub fn normalized(a: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let v = g.constant(a.clone());
    let out = normalize_adjacency(&mut g, v)?;
    Ok(g.value(out).clone())
}
