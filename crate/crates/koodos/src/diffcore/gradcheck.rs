//! Central finite-difference gradient checking.
//!
//! The checker treats the graph's forward evaluation as the function under
//! test and compares reverse-mode gradients against `(f(x+h) - f(x-h)) / 2h`
//! per coordinate. The backward pass is never consulted for the reference
//! values, so this is an independent oracle for it.

use super::{DiffError, Graph, NodeId, Tensor};

/// Builder signature: given a fresh graph and the parameter leaves (inserted
/// in the order of the `params` slice), construct and return the scalar loss.
pub type LossBuilder<'a> = dyn FnMut(&mut Graph, &[NodeId]) -> Result<NodeId, DiffError> + 'a;

/// Result of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    pub max_rel_error: f64,
    /// (parameter index, coordinate, analytic, finite-difference) of the
    /// worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Central finite-difference gradients of the built loss w.r.t. `params`.
pub fn finite_difference_gradients(
    build: &mut LossBuilder,
    params: &[Tensor],
    h: f64,
) -> Result<Vec<Tensor>, DiffError> {
    let mut out = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let mut grad = vec![0.0; params[pi].len()];
        for ci in 0..params[pi].len() {
            let plus = eval_perturbed(build, params, pi, ci, h)?;
            let minus = eval_perturbed(build, params, pi, ci, -h)?;
            grad[ci] = (plus - minus) / (2.0 * h);
        }
        let (r, c) = params[pi].shape();
        out.push(Tensor::new(r, c, grad)?);
    }
    Ok(out)
}

fn eval_perturbed(
    build: &mut LossBuilder,
    params: &[Tensor],
    pi: usize,
    ci: usize,
    delta: f64,
) -> Result<f64, DiffError> {
    let mut g = Graph::new();
    let mut ids = Vec::with_capacity(params.len());
    for (k, p) in params.iter().enumerate() {
        let t = if k == pi {
            let mut data = p.data().to_vec();
            data[ci] += delta;
            Tensor::new(p.rows(), p.cols(), data)?
        } else {
            p.clone()
        };
        ids.push(g.param(t));
    }
    let loss = build(&mut g, &ids)?;
    let v = g.value(loss);
    if v.shape() != (1, 1) {
        return Err(DiffError::NonScalarLoss { shape: v.shape() });
    }
    Ok(v.scalar_value())
}

/// Convenience wrapper used throughout the tests.
pub struct GradCheck {
    pub h: f64,
    /// Denominator floor: coordinates where both gradients are below this
    /// are compared absolutely against it.
    pub denom_floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            h: 1e-5,
            denom_floor: 1e-6,
        }
    }
}

impl GradCheck {
    pub fn run(
        &self,
        build: &mut LossBuilder,
        params: &[Tensor],
    ) -> Result<GradCheckReport, DiffError> {
        // analytic gradients
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
        let loss = build(&mut g, &ids)?;
        let grads = g.backward(loss)?;
        let analytic: Vec<&Tensor> = ids
            .iter()
            .map(|id| grads.get(*id))
            .collect::<Result<_, _>>()?;

        let numeric = finite_difference_gradients(build, params, self.h)?;

        let mut report = GradCheckReport {
            coords_checked: 0,
            max_rel_error: 0.0,
            worst: None,
        };
        for (pi, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            for (ci, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
                let denom = av.abs().max(nv.abs()).max(self.denom_floor);
                let rel = (av - nv).abs() / denom;
                report.coords_checked += 1;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some((pi, ci, av, nv));
                }
            }
        }
        Ok(report)
    }
}
