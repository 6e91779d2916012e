//! Deterministic PCA for trajectory visualization exports.
//!
//! Mean-centered covariance (or Gram, when the feature dimension exceeds
//! the point count) eigendecomposition via cyclic Jacobi rotations.
//! Components are ordered by decreasing variance with a sign convention on
//! the feature-space direction, so projections do not depend on input
//! ordering.

use super::SpectralError;

/// Projected points plus per-component explained variance.
#[derive(Clone, Debug)]
pub struct PcaProjection {
    /// One `dims`-vector per input point, in input order.
    pub points: Vec<Vec<f64>>,
    /// Variance captured by each kept component.
    pub explained_variance: Vec<f64>,
    /// Fraction of total variance captured by each kept component.
    pub explained_variance_ratio: Vec<f64>,
}

/// Project `points` onto their top `dims` principal components.
pub fn pca_project(points: &[Vec<f64>], dims: usize) -> Result<PcaProjection, SpectralError> {
    let m = points.len();
    if m == 0 {
        return Err(SpectralError::Invalid("no points to project".into()));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(SpectralError::Invalid("points have zero dimension".into()));
    }
    if points.iter().any(|p| p.len() != d) {
        return Err(SpectralError::Invalid("points have inconsistent dimensions".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SpectralError::Invalid("points contain non-finite values".into()));
    }
    if dims == 0 {
        return Err(SpectralError::Invalid("dims must be >= 1".into()));
    }
    let available = d.min(m);
    if dims > available {
        return Err(SpectralError::Invalid(format!(
            "requested {dims} components but only {available} are defined for {m} points of dimension {d}"
        )));
    }

    // center
    let mut mean = vec![0.0; d];
    for p in points {
        for (s, v) in mean.iter_mut().zip(p) {
            *s += v;
        }
    }
    for s in mean.iter_mut() {
        *s /= m as f64;
    }
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(v, mu)| v - mu).collect())
        .collect();

    if m == 1 {
        return Ok(PcaProjection {
            points: vec![vec![0.0; dims]],
            explained_variance: vec![0.0; dims],
            explained_variance_ratio: vec![0.0; dims],
        });
    }

    let denom = (m - 1) as f64;
    let (eigvals, components) = if d <= m {
        // covariance route: d x d
        let mut cov = vec![0.0; d * d];
        for p in &centered {
            for i in 0..d {
                for j in i..d {
                    cov[i * d + j] += p[i] * p[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] /= denom;
                cov[j * d + i] = cov[i * d + j];
            }
        }
        let (vals, vecs) = jacobi_eigen(&cov, d)?;
        let order = descending_order(&vals);
        let components: Vec<Vec<f64>> = order
            .iter()
            .take(dims)
            .map(|&k| (0..d).map(|i| vecs[i * d + k]).collect())
            .collect();
        let vals_sorted: Vec<f64> = order.iter().map(|&k| vals[k].max(0.0)).collect();
        (vals_sorted, components)
    } else {
        // Gram route: m x m shares the nonzero spectrum of the covariance
        let mut gram = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                gram[i * m + j] = dot / denom;
                gram[j * m + i] = gram[i * m + j];
            }
        }
        let (vals, vecs) = jacobi_eigen(&gram, m)?;
        let order = descending_order(&vals);
        let mut components = Vec::with_capacity(dims);
        for &k in order.iter().take(dims) {
            let lambda = vals[k].max(0.0);
            let sigma = (lambda * denom).sqrt();
            // feature-space direction v = X^T u / sigma
            let mut v = vec![0.0; d];
            if sigma > 0.0 {
                for (i, p) in centered.iter().enumerate() {
                    let u_i = vecs[i * m + k];
                    for (vj, pj) in v.iter_mut().zip(p) {
                        *vj += u_i * pj / sigma;
                    }
                }
            }
            components.push(v);
        }
        let vals_sorted: Vec<f64> = order.iter().map(|&k| vals[k].max(0.0)).collect();
        (vals_sorted, components)
    };

    // deterministic sign: largest-magnitude feature coordinate is positive
    let mut components = components;
    for v in components.iter_mut() {
        let mut best = 0usize;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[best].abs() {
                best = i;
            }
        }
        if v[best] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }

    let projected: Vec<Vec<f64>> = centered
        .iter()
        .map(|p| {
            components
                .iter()
                .map(|v| p.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();

    let total: f64 = eigvals.iter().sum();
    let kept: Vec<f64> = eigvals.iter().take(dims).copied().collect();
    let ratio: Vec<f64> = kept
        .iter()
        .map(|l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(PcaProjection {
        points: projected,
        explained_variance: kept,
        explained_variance_ratio: ratio,
    })
}

fn descending_order(vals: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap());
    order
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns (eigenvalues, eigenvectors as columns of a row-major n x n).
fn jacobi_eigen(sym: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>), SpectralError> {
    let mut a = sym.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm: f64 = sym.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * norm.max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            let vals = (0..n).map(|i| a[i * n + i]).collect();
            return Ok((vals, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    a[p * n + j] = c * apj - s * aqj;
                    a[q * n + j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    Err(SpectralError::NoConvergence {
        sweeps: 100,
        norm,
    })
}
