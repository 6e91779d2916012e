//! Dense row-major `f64` matrix with finiteness enforced at construction.

use super::DiffError;

/// A dense `rows x cols` matrix of 64-bit floats in row-major order.
///
/// Construction rejects NaN/Inf, so every `Tensor` in the system is finite.
/// Values are immutable through the public API; they are safe to share
/// read-only across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DiffError> {
        if data.len() != rows * cols {
            return Err(DiffError::LengthMismatch {
                len: data.len(),
                shape: (rows, cols),
            });
        }
        check_finite(&data, "tensor construction")?;
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Result<Self, DiffError> {
        Tensor::new(1, 1, vec![value])
    }

    /// 1 x n row vector.
    pub fn row(values: Vec<f64>) -> Result<Self, DiffError> {
        let n = values.len();
        Tensor::new(1, n, values)
    }

    /// n x 1 column vector.
    pub fn column(values: Vec<f64>) -> Result<Self, DiffError> {
        let n = values.len();
        Tensor::new(n, 1, values)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DiffError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(DiffError::ShapeMismatch {
                    op: "from_rows",
                    lhs: (1, c),
                    rhs: (1, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "index out of bounds");
        self.data[r * self.cols + c]
    }

    /// Value of a 1x1 tensor.
    pub fn scalar_value(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "scalar_value on non-scalar tensor");
        self.data[0]
    }

    /// Copy of row `r` as a 1 x cols tensor.
    pub fn extract_row(&self, r: usize) -> Tensor {
        assert!(r < self.rows, "row index out of bounds");
        let start = r * self.cols;
        Tensor {
            rows: 1,
            cols: self.cols,
            data: self.data[start..start + self.cols].to_vec(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, DiffError> {
        if self.cols != rhs.rows {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        gemm(
            1.0, &self.data, self.rows, self.cols, false, &rhs.data, rhs.rows, rhs.cols, false,
            0.0, &mut out,
        );
        check_finite(&out, "matmul result")?;
        Ok(Tensor {
            rows: self.rows,
            cols: rhs.cols,
            data: out,
        })
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, DiffError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, DiffError> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor, DiffError> {
        let data = self.data.iter().map(|v| v * factor).collect();
        Tensor::new(self.rows, self.cols, data)
    }

    fn zip_with(
        &self,
        rhs: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, DiffError> {
        if self.shape() != rhs.shape() {
            return Err(DiffError::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Tensor::new(self.rows, self.cols, data)
    }

    /// Maximum column sum of absolute values (the induced matrix 1-norm).
    pub fn one_norm(&self) -> f64 {
        let mut best = 0.0_f64;
        for c in 0..self.cols {
            let mut sum = 0.0;
            for r in 0..self.rows {
                sum += self.data[r * self.cols + c].abs();
            }
            best = best.max(sum);
        }
        best
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn check_finite(data: &[f64], context: &'static str) -> Result<(), DiffError> {
    for (index, &value) in data.iter().enumerate() {
        if !value.is_finite() {
            return Err(DiffError::NonFinite {
                context,
                index,
                value,
            });
        }
    }
    Ok(())
}

/// `c = alpha * op(a) * op(b) + beta * c`, row-major, with optional
/// transposition expressed through strides (no materialized transpose).
///
/// Large products are split across rows of `c` with rayon; each output row
/// is written by exactly one task, so results are deterministic regardless
/// of scheduling.
pub(crate) fn gemm(
    alpha: f64,
    a: &[f64],
    a_rows: usize,
    a_cols: usize,
    trans_a: bool,
    b: &[f64],
    b_rows: usize,
    b_cols: usize,
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    let (m, k) = if trans_a {
        (a_cols, a_rows)
    } else {
        (a_rows, a_cols)
    };
    let (kb, n) = if trans_b {
        (b_cols, b_rows)
    } else {
        (b_rows, b_cols)
    };
    assert_eq!(k, kb, "gemm inner dimensions must match");
    assert_eq!(c.len(), m * n, "gemm output length mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }

    let (rsa, csa) = if trans_a {
        (1isize, a_cols as isize)
    } else {
        (a_cols as isize, 1isize)
    };
    let (rsb, csb) = if trans_b {
        (1isize, b_cols as isize)
    } else {
        (b_cols as isize, 1isize)
    };

    let threads = rayon::current_num_threads();
    let big_enough = m * k * n >= 1_000_000;
    if big_enough && threads > 1 && m >= 2 * threads {
        let rows_per_chunk = m.div_ceil(threads);
        use rayon::prelude::*;
        c.par_chunks_mut(rows_per_chunk * n)
            .enumerate()
            .for_each(|(chunk, c_chunk)| {
                let row0 = chunk * rows_per_chunk;
                let rows_here = c_chunk.len() / n;
                unsafe {
                    matrixmultiply::dgemm(
                        rows_here,
                        k,
                        n,
                        alpha,
                        a.as_ptr().offset(row0 as isize * rsa),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c_chunk.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            });
    } else {
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}
