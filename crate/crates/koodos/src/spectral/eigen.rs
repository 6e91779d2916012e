//! Dense real eigenvalues: Householder reduction to upper Hessenberg form
//! followed by Francis double-shift QR iteration (the classic EISPACK
//! `hqr` scheme, eigenvalues only). Unblocked; intended for the small
//! operator dimensions this crate works with.

use super::SpectralError;
use crate::diffcore::Tensor;

/// All `n` eigenvalues of a square real matrix as `(re, im)` pairs,
/// unordered; complex values come in exact conjugate pairs.
pub fn eigenvalues(m: &Tensor) -> Result<Vec<(f64, f64)>, SpectralError> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(SpectralError::NotSquare { rows, cols });
    }
    let n = rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut a: Vec<f64> = m.data().to_vec();
    hessenberg_in_place(&mut a, n);
    // 100*n sweeps total before giving up
    francis_qr(&mut a, n, 100 * n, m.one_norm())
}

/// Householder similarity reduction to upper Hessenberg form, in place.
fn hessenberg_in_place(a: &mut [f64], n: usize) {
    for k in 0..n.saturating_sub(2) {
        // column k below the subdiagonal
        let mut norm2 = 0.0;
        for i in k + 1..n {
            norm2 += a[i * n + k] * a[i * n + k];
        }
        let norm = norm2.sqrt();
        if norm <= f64::MIN_POSITIVE {
            continue;
        }
        let x0 = a[(k + 1) * n + k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        // v = x - alpha e1, normalized
        let mut v = vec![0.0; n - k - 1];
        v[0] = x0 - alpha;
        for i in k + 2..n {
            v[i - k - 1] = a[i * n + k];
        }
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm <= f64::MIN_POSITIVE {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }

        // A[k+1.., k..] -= 2 v (v^T A[k+1.., k..])
        for j in k..n {
            let mut dot = 0.0;
            for i in k + 1..n {
                dot += v[i - k - 1] * a[i * n + j];
            }
            let dot2 = 2.0 * dot;
            for i in k + 1..n {
                a[i * n + j] -= dot2 * v[i - k - 1];
            }
        }
        // A[.., k+1..] -= 2 (A[.., k+1..] v) v^T
        for i in 0..n {
            let mut dot = 0.0;
            for j in k + 1..n {
                dot += a[i * n + j] * v[j - k - 1];
            }
            let dot2 = 2.0 * dot;
            for j in k + 1..n {
                a[i * n + j] -= dot2 * v[j - k - 1];
            }
        }
        // exact zeros below the subdiagonal of column k
        a[(k + 1) * n + k] = alpha;
        for i in k + 2..n {
            a[i * n + k] = 0.0;
        }
    }
}

fn sign_of(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, in place.
/// Returns the eigenvalues; errs out if the total sweep budget is spent.
fn francis_qr(
    a: &mut [f64],
    n: usize,
    max_sweeps: usize,
    input_norm: f64,
) -> Result<Vec<(f64, f64)>, SpectralError> {
    let eps = f64::EPSILON;
    let idx = |i: usize, j: usize| i * n + j;
    let mut wri = vec![(0.0, 0.0); n];

    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[idx(i, j)].abs();
        }
    }
    if anorm == 0.0 {
        return Ok(wri); // zero matrix
    }

    let mut total_its = 0usize;
    let mut t = 0.0;
    let mut nn = n as isize - 1;
    while nn >= 0 {
        let mut its = 0;
        loop {
            // find small subdiagonal split point l
            let mut l = nn;
            while l >= 1 {
                let s = a[idx((l - 1) as usize, (l - 1) as usize)].abs()
                    + a[idx(l as usize, l as usize)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if a[idx(l as usize, (l - 1) as usize)].abs() <= eps * s {
                    a[idx(l as usize, (l - 1) as usize)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[idx(nn as usize, nn as usize)];
            if l == nn {
                // one real root
                wri[nn as usize] = (x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[idx((nn - 1) as usize, (nn - 1) as usize)];
            let mut w =
                a[idx(nn as usize, (nn - 1) as usize)] * a[idx((nn - 1) as usize, nn as usize)];
            if l == nn - 1 {
                // a 2x2 block: two roots
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + sign_of(z, p);
                    let r1 = x + z;
                    let r2 = if z != 0.0 { x - w / z } else { x + z };
                    wri[(nn - 1) as usize] = (r1, 0.0);
                    wri[nn as usize] = (r2, 0.0);
                } else {
                    wri[(nn - 1) as usize] = (x + p, z);
                    wri[nn as usize] = (x + p, -z);
                }
                nn -= 2;
                break;
            }
            // no root yet: one double-shift sweep
            total_its += 1;
            if total_its > max_sweeps {
                return Err(SpectralError::NoConvergence {
                    sweeps: max_sweeps,
                    norm: input_norm,
                });
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nn as usize {
                    a[idx(i, i)] -= x;
                }
                let s = a[idx(nn as usize, (nn - 1) as usize)].abs()
                    + a[idx((nn - 1) as usize, (nn - 2) as usize)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;

            let mut m = nn - 2;
            let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
            while m >= l {
                let z = a[idx(m as usize, m as usize)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[idx((m + 1) as usize, m as usize)]
                    + a[idx(m as usize, (m + 1) as usize)];
                q = a[idx((m + 1) as usize, (m + 1) as usize)] - z - rr - ss;
                r = a[idx((m + 2) as usize, (m + 1) as usize)];
                let scale = p.abs() + q.abs() + r.abs();
                p /= scale;
                q /= scale;
                r /= scale;
                if m == l {
                    break;
                }
                let u = a[idx(m as usize, (m - 1) as usize)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[idx((m - 1) as usize, (m - 1) as usize)].abs()
                        + z.abs()
                        + a[idx((m + 1) as usize, (m + 1) as usize)].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                a[idx(i as usize, (i - 2) as usize)] = 0.0;
                if i > m + 2 {
                    a[idx(i as usize, (i - 3) as usize)] = 0.0;
                }
            }
            for k in m..nn {
                if k != m {
                    p = a[idx(k as usize, (k - 1) as usize)];
                    q = a[idx((k + 1) as usize, (k - 1) as usize)];
                    r = if k + 1 != nn {
                        a[idx((k + 2) as usize, (k - 1) as usize)]
                    } else {
                        0.0
                    };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign_of((p * p + q * q + r * r).sqrt(), p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        a[idx(k as usize, (k - 1) as usize)] =
                            -a[idx(k as usize, (k - 1) as usize)];
                    }
                } else {
                    a[idx(k as usize, (k - 1) as usize)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                // row modification
                for j in k as usize..=nn as usize {
                    let mut pj = a[idx(k as usize, j)] + q * a[idx(k as usize + 1, j)];
                    if k + 1 != nn {
                        pj += r * a[idx(k as usize + 2, j)];
                        a[idx(k as usize + 2, j)] -= pj * z;
                    }
                    a[idx(k as usize + 1, j)] -= pj * y;
                    a[idx(k as usize, j)] -= pj * x;
                }
                // column modification
                let mmin = if nn < k + 3 { nn } else { k + 3 };
                for i in l as usize..=mmin as usize {
                    let mut pi = x * a[idx(i, k as usize)] + y * a[idx(i, k as usize + 1)];
                    if k + 1 != nn {
                        pi += z * a[idx(i, k as usize + 2)];
                        a[idx(i, k as usize + 2)] -= pi * r;
                    }
                    a[idx(i, k as usize + 1)] -= pi * q;
                    a[idx(i, k as usize)] -= pi;
                }
            }
        }
    }
    Ok(wri)
}
