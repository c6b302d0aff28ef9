//! Central finite-difference verification of analytic gradients.

use crate::graph::{Graph, Var};
use crate::tensor::{Tensor, TensorError};

/// Outcome of one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max over all parameter entries of
    /// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_relative_error: f64,
    /// Same maximum restricted to each parameter tensor, in input order.
    pub per_param: Vec<f64>,
    /// Smallest relu pre-activation magnitude seen at the unperturbed point.
    pub relu_margin: f64,
    pub attempts: usize,
}

/// Compares `backward` against central differences of `f` at `params`.
///
/// `f` builds a scalar from the parameter leaves it is handed. It is
/// re-run on fresh graphs for every perturbed evaluation.
pub fn gradient_check<F, E>(f: F, params: &[Tensor], eps: f64) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(TensorError::InvalidArgument {
            op: "gradient_check",
            reason: format!("eps {eps} outside (0, 1e-2]"),
        }
        .into());
    }
    let mut graph = Graph::new();
    let leaves: Vec<Var> = params.iter().map(|p| graph.leaf(p.clone())).collect();
    let root = f(&mut graph, &leaves)?;
    graph.backward(root)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&v| graph.grad_or_zeros(v)).collect();
    let relu_margin = graph.relu_margin();

    let eval = |point: &[Tensor]| -> Result<f64, E> {
        let mut g = Graph::new();
        let vars: Vec<Var> = point.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut point = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    for (pi, grad) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for k in 0..params[pi].numel() {
            let orig = params[pi].data()[k];
            point[pi].data_mut()[k] = orig + eps;
            let up = eval(&point)?;
            point[pi].data_mut()[k] = orig - eps;
            let down = eval(&point)?;
            point[pi].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        per_param.push(worst);
    }
    Ok(GradCheckReport {
        max_relative_error: per_param.iter().copied().fold(0.0, f64::max),
        per_param,
        relu_margin,
        attempts: 1,
    })
}

/// Runs [`gradient_check`] at points drawn from `sample`, redrawing while any
/// relu pre-activation lies within `10·eps` of its kink.
pub fn gradient_check_resampled<F, S, E>(
    f: F,
    mut sample: S,
    eps: f64,
    max_attempts: usize,
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, E>,
    S: FnMut(usize) -> Vec<Tensor>,
    E: From<TensorError>,
{
    for attempt in 0..max_attempts.max(1) {
        let params = sample(attempt);
        let mut probe = Graph::new();
        let vars: Vec<Var> = params.iter().map(|p| probe.constant(p.clone())).collect();
        f(&mut probe, &vars)?;
        if probe.relu_margin() < 10.0 * eps && attempt + 1 < max_attempts {
            continue;
        }
        let mut report = gradient_check(&f, &params, eps)?;
        report.attempts = attempt + 1;
        return Ok(report);
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_function_is_exact() {
        let c = Tensor::new(vec![1, 3], vec![0.5, -2.0, 3.0]).unwrap();
        let x = Tensor::new(vec![3, 1], vec![1.0, 2.0, -1.0]).unwrap();
        let report = gradient_check(
            |g, p| {
                let c = g.constant(c.clone());
                let y = g.matmul(c, p[0])?;
                g.sum(y)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-9, "{report:?}");
    }

    #[test]
    fn rejects_bad_eps() {
        let r = gradient_check(|g, p| g.sum(p[0]), &[Tensor::scalar(1.0)], 0.5);
        assert!(r.is_err());
    }
}
