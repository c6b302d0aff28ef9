//! Graph pooling and unpooling: soft channel→region assignment, region-level
//! convolution, projection back to channels, and merge with the branch output.

use rand::Rng;

use crate::adjacency::normalize_adjacency;
use crate::error::{Error, Result};
use crate::gcn::{gcn_propagate, GcnStack};
use crate::graph::{Graph, Var};
use crate::rng::glorot;

#[derive(Debug, Clone, PartialEq)]
pub struct GpumParams {
    /// `F_d × N_r` assignment projection.
    pub q: crate::tensor::Tensor,
    pub region: GcnStack,
}

impl GpumParams {
    pub fn init<R: Rng + ?Sized>(
        feature_dim: usize,
        n_regions: usize,
        region_steps: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            q: glorot(&[feature_dim, n_regions], feature_dim, n_regions, rng),
            region: GcnStack::init(region_steps, feature_dim, out_dim, rng),
        }
    }

    pub fn n_regions(&self) -> usize {
        self.q.shape()[1]
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundGpum {
        let q = if trainable { g.leaf(self.q.clone()) } else { g.constant(self.q.clone()) };
        BoundGpum {
            q,
            region: self.region.bind(g, trainable),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundGpum {
    pub q: Var,
    pub region: Vec<Var>,
}

impl BoundGpum {
    pub fn vars(&self) -> Vec<Var> {
        std::iter::once(self.q).chain(self.region.iter().copied()).collect()
    }
}

/// Intermediate nodes of one pooling pass.
#[derive(Debug, Clone, Copy)]
pub struct GpumOutput {
    /// `R`, `N × N_r`, rows sum to one.
    pub assignment: Var,
    pub pooled_adjacency: Var,
    pub pooled_features: Var,
    pub region_output: Var,
    /// `R·Y_r`, `N × d`.
    pub unpooled: Var,
}

/// `R = softmax_rows(Â·X·Q)`.
pub fn assignment_matrix(g: &mut Graph, a_hat: Var, x: Var, q: Var) -> Result<Var> {
    let ax = g.matmul(a_hat, x)?;
    let scores = g.matmul(ax, q)?;
    Ok(g.softmax(scores, 1)?)
}

/// `(A_r, X_r) = (Rᵀ·A·R, Rᵀ·X)` on the un-normalized adjacency.
pub fn pool(g: &mut Graph, r: Var, a: Var, x: Var) -> Result<(Var, Var)> {
    let rt = g.transpose(r)?;
    let rta = g.matmul(rt, a)?;
    let a_r = g.matmul(rta, r)?;
    let x_r = g.matmul(rt, x)?;
    Ok((a_r, x_r))
}

/// `Y_r = Σ_l Â_r^l X_r W_r^(l)` with `Â_r` the normalized pooled adjacency.
pub fn region_conv(g: &mut Graph, a_r: Var, x_r: Var, weights: &[Var]) -> Result<Var> {
    let a_r_hat = normalize_adjacency(g, a_r)?;
    gcn_propagate(g, a_r_hat, x_r, weights)
}

/// `Y'_r = R·Y_r`.
pub fn unpool(g: &mut Graph, r: Var, y_r: Var) -> Result<Var> {
    Ok(g.matmul(r, y_r)?)
}

/// `[Y_I + Y'_r ∥ Y_C]`, individual half first.
pub fn merge(g: &mut Graph, y_i: Var, y_r_prime: Var, y_c: Var) -> Result<Var> {
    let shapes = [y_i, y_r_prime, y_c].map(|v| g.value(v).shape().to_vec());
    if shapes[0] != shapes[1] || shapes[0] != shapes[2] {
        return Err(Error::Config(format!("merge inputs disagree in shape: {shapes:?}")));
    }
    let y_i_prime = g.add(y_i, y_r_prime)?;
    Ok(g.concat(&[y_i_prime, y_c], 1)?)
}

/// Full pooling pass over one branch graph (`a` raw, `a_hat` normalized).
pub fn apply_gpum(g: &mut Graph, a: Var, a_hat: Var, x: Var, params: &BoundGpum) -> Result<GpumOutput> {
    let assignment = assignment_matrix(g, a_hat, x, params.q)?;
    let (pooled_adjacency, pooled_features) = pool(g, assignment, a, x)?;
    let region_output = region_conv(g, pooled_adjacency, pooled_features, &params.region)?;
    let unpooled = unpool(g, assignment, region_output)?;
    Ok(GpumOutput {
        assignment,
        pooled_adjacency,
        pooled_features,
        region_output,
        unpooled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_q_gives_uniform_rows() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::eye(4));
        let x = g.constant(Tensor::from_fn(&[4, 3], |i| i as f64));
        let q = g.constant(Tensor::zeros(&[3, 5]));
        let r = assignment_matrix(&mut g, a, x, q).unwrap();
        assert!(g.value(r).data().iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn hand_softmax_case() {
        // Â = I, X = I, Q = [[0,1],[1,0]] so Â·X·Q = Q.
        let mut g = Graph::new();
        let a = g.constant(Tensor::eye(2));
        let x = g.constant(Tensor::eye(2));
        let q = g.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        let r = assignment_matrix(&mut g, a, x, q).unwrap();
        let want = [0.2689, 0.7311, 0.7311, 0.2689];
        for (got, w) in g.value(r).data().iter().zip(want) {
            assert!((got - w).abs() < 1e-3);
        }
    }

    #[test]
    fn identity_assignment_pools_to_itself() {
        let mut g = Graph::new();
        let a_t = Tensor::from_fn(&[3, 3], |i| i as f64 * 0.2);
        let x_t = Tensor::from_fn(&[3, 2], |i| i as f64 - 1.0);
        let (r, a, x) = (g.constant(Tensor::eye(3)), g.constant(a_t.clone()), g.constant(x_t.clone()));
        let (a_r, x_r) = pool(&mut g, r, a, x).unwrap();
        assert_eq!(g.value(a_r), &a_t);
        assert_eq!(g.value(x_r), &x_t);
    }

    #[test]
    fn pooled_shapes() {
        let mut g = Graph::new();
        let r = g.constant(Tensor::full(&[19, 5], 0.2));
        let a = g.constant(Tensor::full(&[19, 19], 1.0 / 19.0));
        let x = g.constant(Tensor::zeros(&[19, 32]));
        let (a_r, x_r) = pool(&mut g, r, a, x).unwrap();
        assert_eq!(g.value(a_r).shape(), &[5, 5]);
        assert_eq!(g.value(x_r).shape(), &[5, 32]);
        let y_r = g.constant(Tensor::zeros(&[5, 16]));
        let up = unpool(&mut g, r, y_r).unwrap();
        assert_eq!(g.value(up).shape(), &[19, 16]);
    }

    #[test]
    fn unpool_selection_and_convexity() {
        let mut g = Graph::new();
        let r = g.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let y = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let yv = g.constant(y.clone());
        let up = unpool(&mut g, r, yv).unwrap();
        assert_eq!(g.value(up).row(0), y.row(1));
        assert_eq!(g.value(up).row(1), y.row(0));

        let soft = g.constant(Tensor::from_rows(&[vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap());
        let same = g.constant(Tensor::from_rows(&[vec![2.5, -1.0], vec![2.5, -1.0]]).unwrap());
        let up = unpool(&mut g, soft, same).unwrap();
        for i in 0..2 {
            assert!((g.value(up).at2(i, 0) - 2.5).abs() < 1e-15);
            assert!((g.value(up).at2(i, 1) + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_region_weights_give_zero_output() {
        let mut g = Graph::new();
        let a_r = g.constant(Tensor::full(&[2, 2], 0.3));
        let x_r = g.constant(Tensor::from_fn(&[2, 3], |i| i as f64));
        let w = GcnStack {
            weights: vec![Tensor::zeros(&[3, 4]); 2],
        }
        .bind(&mut g, false);
        let y = region_conv(&mut g, a_r, x_r, &w).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn merge_layout() {
        let mut g = Graph::new();
        let y_i = g.constant(Tensor::from_fn(&[3, 2], |i| i as f64));
        let zero = g.constant(Tensor::zeros(&[3, 2]));
        let y_c = g.constant(Tensor::from_fn(&[3, 2], |i| 10.0 + i as f64 * 0.1));
        let all = merge(&mut g, y_i, zero, y_c).unwrap();
        assert_eq!(g.value(all).shape(), &[3, 4]);
        let left = g.slice(all, 1, 0, 2).unwrap();
        let right = g.slice(all, 1, 2, 4).unwrap();
        assert_eq!(g.value(left), g.value(y_i));
        assert_eq!(g.value(right), g.value(y_c));

        let bad = g.constant(Tensor::zeros(&[3, 3]));
        assert!(merge(&mut g, y_i, bad, y_c).is_err());
    }
}
