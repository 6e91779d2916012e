//! Shared test oracles, independent of the library's implementation paths.

#![allow(dead_code)]

use koodos::Tensor;

/// Complex number as (re, im) with just enough arithmetic for root finding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cpx {
    pub re: f64,
    pub im: f64,
}

impl Cpx {
    pub fn new(re: f64, im: f64) -> Self {
        Cpx { re, im }
    }

    pub fn add(self, o: Cpx) -> Cpx {
        Cpx::new(self.re + o.re, self.im + o.im)
    }

    pub fn sub(self, o: Cpx) -> Cpx {
        Cpx::new(self.re - o.re, self.im - o.im)
    }

    pub fn mul(self, o: Cpx) -> Cpx {
        Cpx::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }

    pub fn div(self, o: Cpx) -> Cpx {
        let d = o.re * o.re + o.im * o.im;
        Cpx::new(
            (self.re * o.re + self.im * o.im) / d,
            (self.im * o.re - self.re * o.im) / d,
        )
    }

    pub fn abs(self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Characteristic polynomial coefficients of a square matrix by the
/// Faddeev-LeVerrier recurrence (trace method, no companion matrix).
/// Returns `[1, c1, ..., cn]` for `x^n + c1 x^{n-1} + ... + cn`.
pub fn char_poly(m: &Tensor) -> Vec<f64> {
    let n = m.rows();
    assert_eq!(n, m.cols());
    let mut coeffs = vec![1.0];
    let mut mk = m.clone();
    for k in 1..=n {
        let trace: f64 = (0..n).map(|i| mk.get(i, i)).sum();
        let ck = -trace / k as f64;
        coeffs.push(ck);
        if k == n {
            break;
        }
        // M_{k+1} = A (M_k + c_k I)
        let mut shifted = mk.clone();
        for i in 0..n {
            let v = shifted.get(i, i) + ck;
            let idx = i * n + i;
            let data = shifted.data().to_vec();
            let mut new_data = data;
            new_data[idx] = v;
            shifted = Tensor::new(n, n, new_data).unwrap();
        }
        mk = m.matmul(&shifted).unwrap();
    }
    coeffs
}

/// All complex roots of a real-coefficient monic polynomial via
/// Durand-Kerner (Weierstrass) simultaneous iteration.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Cpx> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let eval = |x: Cpx| {
        let mut acc = Cpx::new(coeffs[0], 0.0);
        for &c in &coeffs[1..] {
            acc = acc.mul(x).add(Cpx::new(c, 0.0));
        }
        acc
    };
    // spread initial guesses on a non-real spiral
    let base = Cpx::new(0.4, 0.9);
    let mut roots: Vec<Cpx> = Vec::with_capacity(n);
    let mut cur = Cpx::new(1.0, 0.0);
    for _ in 0..n {
        cur = cur.mul(base);
        roots.push(cur);
    }
    for _ in 0..2000 {
        let mut max_step = 0.0_f64;
        for i in 0..n {
            let mut denom = Cpx::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom = denom.mul(roots[i].sub(roots[j]));
                }
            }
            let step = eval(roots[i]).div(denom);
            roots[i] = roots[i].sub(step);
            max_step = max_step.max(step.abs());
        }
        if max_step < 1e-13 {
            break;
        }
    }
    roots
}

/// Greedy multiset match: every `got` value must be within `tol` of a
/// distinct `expected` value.
pub fn assert_multiset_close(got: &[(f64, f64)], expected: &[Cpx], tol: f64, context: &str) {
    assert_eq!(got.len(), expected.len(), "{context}: cardinality");
    let mut used = vec![false; expected.len()];
    for &(re, im) in got {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, e) in expected.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (re - e.re).hypot(im - e.im);
            if d < best_d {
                best_d = d;
                best = Some(j);
            }
        }
        let j = best.expect("some unused root");
        assert!(
            best_d < tol,
            "{context}: eigenvalue ({re}, {im}) is {best_d:.3e} from nearest oracle root {:?}",
            expected[j]
        );
        used[j] = true;
    }
}

/// Determinant by LU with partial pivoting (independent of the QR path).
pub fn lu_det(m: &Tensor) -> f64 {
    let n = m.rows();
    let mut a = m.data().to_vec();
    let mut det = 1.0;
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if a[i * n + k].abs() > a[piv * n + k].abs() {
                piv = i;
            }
        }
        if a[piv * n + k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in 0..n {
                a.swap(k * n + j, piv * n + j);
            }
            det = -det;
        }
        det *= a[k * n + k];
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            for j in k..n {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    det
}

/// Eigenvalues of a symmetric 2x2 or 3x3 matrix in closed form
/// (quadratic formula / trigonometric cubic), descending. Independent of
/// the Jacobi implementation; used as the PCA variance oracle.
pub fn sym_eigvals_closed_form(a: &[f64], n: usize) -> Vec<f64> {
    match n {
        1 => vec![a[0]],
        2 => {
            let (p, q, r) = (a[0], a[1], a[3]);
            let mean = (p + r) / 2.0;
            let disc = ((p - r) / 2.0).hypot(q);
            vec![mean + disc, mean - disc]
        }
        3 => {
            // Smith's trigonometric method for symmetric 3x3
            let p1 = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
            let q = (a[0] + a[4] + a[8]) / 3.0;
            if p1 == 0.0 {
                let mut v = vec![a[0], a[4], a[8]];
                v.sort_by(|x, y| y.partial_cmp(x).unwrap());
                return v;
            }
            let p2 = (a[0] - q).powi(2) + (a[4] - q).powi(2) + (a[8] - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            // B = (A - q I)/p, r = det(B)/2
            let b: Vec<f64> = (0..9)
                .map(|i| {
                    let v = if i % 4 == 0 { a[i] - q } else { a[i] };
                    v / p
                })
                .collect();
            let detb = b[0] * (b[4] * b[8] - b[5] * b[7]) - b[1] * (b[3] * b[8] - b[5] * b[6])
                + b[2] * (b[3] * b[7] - b[4] * b[6]);
            let r = (detb / 2.0).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let e1 = q + 2.0 * p * phi.cos();
            let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            let e2 = 3.0 * q - e1 - e3;
            let mut v = vec![e1, e2, e3];
            v.sort_by(|x, y| y.partial_cmp(x).unwrap());
            v
        }
        _ => panic!("closed-form symmetric eigenvalues only for n <= 3"),
    }
}
