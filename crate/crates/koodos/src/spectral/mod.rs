//! Spectral analysis and control interface of the learned dynamics:
//! eigenvalues of the operator, stability classification and PCA
//! projection of parameter trajectories.

mod eigen;
mod pca;

pub use eigen::eigenvalues;
pub use pca::{pca_project, PcaProjection};

use crate::diffcore::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("QR iteration did not converge within {sweeps} sweeps (matrix 1-norm {norm:.6e})")]
    NoConvergence { sweeps: usize, norm: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Real parts at or inside this band count as zero for classification.
pub const STABILITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    /// Every eigenvalue has a strictly negative real part: the flow decays.
    Stable,
    /// Some eigenvalue has a positive real part: the flow eventually blows up.
    Unstable,
    /// Real parts sit on the imaginary axis (within tolerance): oscillatory.
    Marginal,
}

/// Eigenvalues of an operator with their stability verdict.
#[derive(Clone, Debug)]
pub struct SpectralReport {
    /// `(re, im)` pairs; complex values appear in conjugate pairs.
    pub eigenvalues: Vec<(f64, f64)>,
    pub classification: Stability,
    pub max_real_part: f64,
}

/// Classify the long-term behavior of `dz/dt = M z` by the eigenvalues
/// of `M`.
pub fn assess_stability(m: &Tensor) -> Result<SpectralReport, SpectralError> {
    let eigenvalues = eigenvalues(m)?;
    let max_real_part = eigenvalues
        .iter()
        .map(|(re, _)| *re)
        .fold(f64::NEG_INFINITY, f64::max);
    let any_positive = eigenvalues.iter().any(|(re, _)| *re > STABILITY_TOL);
    let all_negative = eigenvalues.iter().all(|(re, _)| *re < -STABILITY_TOL);
    let classification = if any_positive {
        Stability::Unstable
    } else if all_negative {
        Stability::Stable
    } else {
        Stability::Marginal
    };
    Ok(SpectralReport {
        eigenvalues,
        classification,
        max_real_part,
    })
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stability::Stable => write!(f, "stable"),
            Stability::Unstable => write!(f, "unstable"),
            Stability::Marginal => write!(f, "marginal"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> Tensor {
        let n = values.len();
        let mut t = Tensor::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            t.data_mut()[i * n + i] = *v;
        }
        t
    }

    #[test]
    fn negative_diagonal_is_stable() {
        let report = assess_stability(&diag(&[-1.0, -2.0])).unwrap();
        assert_eq!(report.classification, Stability::Stable);
        assert!(report.max_real_part < 0.0);
    }

    #[test]
    fn positive_real_part_is_unstable() {
        let report = assess_stability(&diag(&[0.1, -1.0])).unwrap();
        assert_eq!(report.classification, Stability::Unstable);
    }

    #[test]
    fn skew_constructed_operator_is_marginal() {
        use crate::nets::{KoopmanOperator, OperatorKind};
        for seed in 0..5 {
            let op = KoopmanOperator::init(OperatorKind::Skew, 6, seed).unwrap();
            // make the entries larger than the init scale to be meaningful
            let b = op.mats[0].scale(40.0).unwrap();
            let k = b.sub(&b.transpose()).unwrap();
            let report = assess_stability(&k).unwrap();
            assert_eq!(report.classification, Stability::Marginal, "seed {seed}");
            assert!(report.max_real_part.abs() < STABILITY_TOL);
        }
    }

    #[test]
    fn zero_matrix_is_marginal() {
        let report = assess_stability(&Tensor::zeros(3, 3)).unwrap();
        assert_eq!(report.classification, Stability::Marginal);
    }
}
