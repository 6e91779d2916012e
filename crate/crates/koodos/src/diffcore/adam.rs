//! Adam optimizer with bias correction.

use super::tensor::check_finite;
use super::{DiffError, Tensor};

/// Adam hyperparameters. Betas and epsilon default to the standard values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams::with_lr(1e-3)
    }
}

/// Per-parameter first/second moment accumulators plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    hp: AdamParams,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)], hp: AdamParams) -> Result<Self, DiffError> {
        if !(hp.lr > 0.0) {
            return Err(DiffError::invalid("adam", format!("lr must be > 0, got {}", hp.lr)));
        }
        Ok(AdamState {
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            step: 0,
            hp,
        })
    }

    pub fn for_params(params: &[Tensor], hp: AdamParams) -> Result<Self, DiffError> {
        let shapes: Vec<_> = params.iter().map(Tensor::shape).collect();
        AdamState::new(&shapes, hp)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn hyperparams(&self) -> AdamParams {
        self.hp
    }

    /// One Adam update over all parameter tensors.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), DiffError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(DiffError::invalid(
                "adam",
                format!(
                    "expected {} parameter/gradient tensors, got {} and {}",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            ));
        }
        for i in 0..params.len() {
            if params[i].shape() != self.m[i].shape() || grads[i].shape() != self.m[i].shape() {
                return Err(DiffError::ShapeMismatch {
                    op: "adam step",
                    lhs: params[i].shape(),
                    rhs: grads[i].shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamParams { lr, beta1, beta2, eps } = self.hp;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].data_mut();
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            check_finite(params[i].data(), "adam-updated parameters")?;
        }
        Ok(())
    }
}
