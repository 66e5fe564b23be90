//! Dense row-major `f64` matrix.
//!
//! Products go through `matrixmultiply::dgemm`; transposed operands are
//! expressed with strides, never materialized.

use std::fmt;

use crate::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Matrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equally long rows. An empty slice yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::dim(
                    "Matrix::from_rows",
                    cols,
                    format!("{} in row {i}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics; a zero-column matrix has no meaningful rows.
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Gathers the listed rows into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                format!("lhs cols == rhs rows ({})", self.cols),
                other.rows,
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(Operand::plain(self), Operand::plain(other), &mut out, 0.0);
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::dim(
                "matmul_t",
                format!("lhs cols == rhs cols ({})", self.cols),
                other.cols,
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(Operand::plain(self), Operand::transposed(other), &mut out, 0.0);
        Ok(out)
    }

    /// `acc += selfᵀ · other`
    pub fn t_matmul_acc(&self, other: &Matrix, acc: &mut Matrix) -> Result<()> {
        if self.rows != other.rows || acc.shape() != (self.cols, other.cols) {
            return Err(Error::dim(
                "t_matmul_acc",
                format!(
                    "({}x{})ᵀ·({}x{}) into {}x{}",
                    self.rows, self.cols, self.rows, other.cols, self.cols, other.cols
                ),
                format!("rhs {}x{}, acc {}x{}", other.rows, other.cols, acc.rows, acc.cols),
            ));
        }
        gemm(Operand::transposed(self), Operand::plain(other), acc, 1.0);
        Ok(())
    }
}

struct Operand<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    row_stride: isize,
    col_stride: isize,
}

impl<'a> Operand<'a> {
    fn plain(m: &'a Matrix) -> Self {
        Self {
            data: &m.data,
            rows: m.rows,
            cols: m.cols,
            row_stride: m.cols as isize,
            col_stride: 1,
        }
    }

    fn transposed(m: &'a Matrix) -> Self {
        Self {
            data: &m.data,
            rows: m.cols,
            cols: m.rows,
            row_stride: 1,
            col_stride: m.cols as isize,
        }
    }
}

fn gemm(a: Operand<'_>, b: Operand<'_>, out: &mut Matrix, beta: f64) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.shape(), (a.rows, b.cols));
    if out.data.is_empty() {
        return;
    }
    if a.cols == 0 {
        if beta == 0.0 {
            out.data.fill(0.0);
        }
        return;
    }
    // SAFETY: every operand slice covers rows*cols elements addressed through
    // the given strides, and `out` is a distinct, exclusively borrowed buffer
    // of exactly a.rows * b.cols elements.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn transpose(m: &Matrix) -> Matrix {
        let mut t = Matrix::zeros(m.cols(), m.rows());
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                t.set(j, i, m.get(i, j));
            }
        }
        t
    }

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn products_match_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (m, k, n) = (rng.random_range(1..9), rng.random_range(1..9), rng.random_range(1..9));
            let a = random(m, k, &mut rng);
            let b = random(k, n, &mut rng);
            assert_close(&a.matmul(&b).unwrap(), &naive(&a, &b), 1e-12);
            let bt = transpose(&b);
            assert_close(&a.matmul_t(&bt).unwrap(), &naive(&a, &b), 1e-12);
            let mut acc = Matrix::filled(k, n, 0.5);
            let c = random(m, n, &mut rng);
            let at = transpose(&a);
            a.t_matmul_acc(&c, &mut acc).unwrap();
            let expected = naive(&at, &c).map(|v| v + 0.5);
            assert_close(&acc, &expected, 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension { .. })));
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn row_results_do_not_depend_on_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(37, 784, &mut rng);
        let w = random(128, 784, &mut rng);
        let full = x.matmul_t(&w).unwrap();
        for i in [0, 5, 36] {
            let single = x.select_rows(&[i]).matmul_t(&w).unwrap();
            assert_eq!(single.row(0), full.row(i));
        }
    }
}
