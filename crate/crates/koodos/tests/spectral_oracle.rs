//! Oracle equivalence for the eigenvalue solver and PCA: eigenvalue
//! multisets against characteristic-polynomial roots, trace/determinant
//! identities, and PCA variances against closed-form symmetric spectra.

mod common;

use common::{assert_multiset_close, char_poly, lu_det, poly_roots, sym_eigvals_closed_form};
use koodos::spectral::{eigenvalues, pca_project};
use koodos::Tensor;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_square(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let data = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(n, n, data).unwrap()
}

#[test]
fn eigenvalue_multisets_match_char_poly_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let n = rng.gen_range(2..=6);
        let m = random_square(&mut rng, n);
        let eig = eigenvalues(&m).unwrap();
        let roots = poly_roots(&char_poly(&m));
        assert_multiset_close(&eig, &roots, 1e-6, &format!("case {case} (n={n})"));
    }
}

#[test]
fn random_4x4_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..10 {
        let m = random_square(&mut rng, 4);
        let eig = eigenvalues(&m).unwrap();
        let roots = poly_roots(&char_poly(&m));
        assert_multiset_close(&eig, &roots, 1e-6, &format!("4x4 case {case}"));
    }
}

#[test]
fn trace_and_determinant_identities_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..50 {
        let n = rng.gen_range(2..=6);
        let m = random_square(&mut rng, n);
        let eig = eigenvalues(&m).unwrap();

        let trace: f64 = (0..n).map(|i| m.get(i, i)).sum();
        let eig_sum: f64 = eig.iter().map(|e| e.0).sum();
        assert!(
            (trace - eig_sum).abs() < 1e-6,
            "case {case}: trace {trace} vs eigenvalue sum {eig_sum}"
        );

        let (mut pre, mut pim) = (1.0, 0.0);
        for (re, im) in &eig {
            let nre = pre * re - pim * im;
            let nim = pre * im + pim * re;
            pre = nre;
            pim = nim;
        }
        let det = lu_det(&m);
        assert!(pim.abs() < 1e-6, "case {case}: imaginary det part {pim}");
        assert!(
            (pre - det).abs() <= 1e-6 * det.abs().max(1.0),
            "case {case}: det {pre} vs LU det {det}"
        );
    }
}

#[test]
fn pca_variances_match_closed_form_covariance_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..20 {
        let d = rng.gen_range(2..=3usize);
        let m = rng.gen_range(d + 2..=12);
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let proj = pca_project(&pts, d).unwrap();

        // independent oracle: closed-form eigenvalues of the covariance
        let mut mean = vec![0.0; d];
        for p in &pts {
            for (s, v) in mean.iter_mut().zip(p) {
                *s += v / m as f64;
            }
        }
        let mut cov = vec![0.0; d * d];
        for p in &pts {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (m - 1) as f64;
                }
            }
        }
        let oracle = sym_eigvals_closed_form(&cov, d);
        for (k, (got, want)) in proj.explained_variance.iter().zip(&oracle).enumerate() {
            assert!(
                (got - want).abs() < 1e-8,
                "case {case} component {k}: {got} vs {want}"
            );
        }
    }
}
