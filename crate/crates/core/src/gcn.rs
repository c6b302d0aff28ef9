//! Polynomial graph convolution `Y = Σ_{l=0}^{L} Â^l X W^(l)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng::glorot;
use crate::tensor::Tensor;

/// Weights `W^(0) … W^(L)` of one propagation stack.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnStack {
    pub weights: Vec<Tensor>,
}

impl GcnStack {
    pub fn init<R: Rng + ?Sized>(steps: usize, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weights: (0..=steps)
                .map(|_| glorot(&[in_dim, out_dim], in_dim, out_dim, rng))
                .collect(),
        }
    }

    /// Number of propagation steps `L`.
    pub fn steps(&self) -> usize {
        self.weights.len().saturating_sub(1)
    }

    pub fn out_dim(&self) -> usize {
        self.weights.first().map_or(0, |w| w.shape()[1])
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.weights
            .iter()
            .map(|w| if trainable { g.leaf(w.clone()) } else { g.constant(w.clone()) })
            .collect()
    }
}

/// Applies the stack with `Z_0 = X`, `Z_l = Â·Z_{l-1}`.
pub fn gcn_propagate(g: &mut Graph, a_hat: Var, x: Var, weights: &[Var]) -> Result<Var> {
    let (first, rest) = weights
        .split_first()
        .ok_or_else(|| Error::Config("graph convolution needs at least one weight".into()))?;
    let mut z = x;
    let mut y = g.matmul(z, *first)?;
    for &w in rest {
        z = g.matmul(a_hat, z)?;
        let term = g.matmul(z, w)?;
        y = g.add(y, term)?;
    }
    Ok(y)
}

/// Branch outputs `(Y_C, Y_I)` for whichever branches are present.
pub fn branch_outputs(
    g: &mut Graph,
    x: Var,
    common: Option<(Var, &[Var])>,
    individual: Option<(Var, &[Var])>,
) -> Result<(Option<Var>, Option<Var>)> {
    if let (Some((_, wc)), Some((_, wi))) = (common, individual) {
        let dc = wc.first().map(|&w| g.value(w).shape()[1]);
        let di = wi.first().map(|&w| g.value(w).shape()[1]);
        if dc != di {
            return Err(Error::Config(format!(
                "branch output widths differ: common {dc:?}, individual {di:?}"
            )));
        }
    }
    let yc = common.map(|(a, w)| gcn_propagate(g, a, x, w)).transpose()?;
    let yi = individual.map(|(a, w)| gcn_propagate(g, a, x, w)).transpose()?;
    Ok((yc, yi))
}
