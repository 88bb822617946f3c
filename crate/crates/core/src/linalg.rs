//! Dense storage shared by the solver and the oracle: tall column-major
//! blocks of state vectors, small square matrices, and the operator trait.

use rand::Rng;

use crate::error::{Error, Result};

/// A symmetric linear operator applied matrix-free to blocks of vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `out = A * input`. `out` must have the same shape as `input`.
    fn apply(&self, input: &Block, out: &mut Block) -> Result<()>;

    /// Lower bound on the spectrum (Gershgorin discs).
    fn gershgorin_lower_bound(&self) -> f64;

    /// Any rigorous lower bound on the spectrum; operators that know a
    /// tighter one than Gershgorin override this.
    fn spectral_lower_bound(&self) -> f64 {
        self.gershgorin_lower_bound()
    }
}

/// A `rows x cols` block of column vectors, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Block {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            if c.len() != rows {
                return Err(Error::DimensionMismatch { expected: rows, found: c.len() });
            }
            data.extend_from_slice(c);
        }
        Ok(Self { rows, cols: columns.len(), data })
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self { rows: v.len(), cols: 1, data: v }
    }

    /// Columns with entries drawn uniformly from `[-1, 1)`.
    pub fn random<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_columns(self) -> Vec<Vec<f64>> {
        self.data.chunks(self.rows.max(1)).take(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn same_shape(&self, other: &Block) -> Result<()> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch { expected: self.rows, found: other.rows });
        }
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.cols });
        }
        Ok(())
    }

    /// Keeps the first `cols` columns.
    pub fn truncate_cols(&mut self, cols: usize) {
        if cols < self.cols {
            self.cols = cols;
            self.data.truncate(cols * self.rows);
        }
    }

    /// `self^T * other`, a `self.cols x other.cols` matrix.
    pub fn gram(&self, other: &Block) -> Matrix {
        let mut g = Matrix::zeros(self.cols, other.cols);
        for i in 0..self.cols {
            for j in 0..other.cols {
                g[(i, j)] = dot(self.col(i), other.col(j));
            }
        }
        g
    }

    /// `self * coeffs` where `coeffs` is `self.cols x k`.
    pub fn mul_small(&self, coeffs: &Matrix) -> Block {
        assert_eq!(coeffs.rows(), self.cols);
        let mut out = Block::zeros(self.rows, coeffs.cols());
        for j in 0..coeffs.cols() {
            let dst = out.col_mut(j);
            for k in 0..self.cols {
                let c = coeffs[(k, j)];
                if c != 0.0 {
                    axpy(c, &self.data[k * self.rows..(k + 1) * self.rows], dst);
                }
            }
        }
        out
    }
}

/// A small dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], x)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, input: &Block, out: &mut Block) -> Result<()> {
        if input.rows() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: input.rows() });
        }
        input.same_shape(out)?;
        for j in 0..input.cols() {
            let y = self.matvec(input.col(j));
            out.col_mut(j).copy_from_slice(&y);
        }
        Ok(())
    }

    fn gershgorin_lower_bound(&self) -> f64 {
        (0..self.rows)
            .map(|i| {
                let off: f64 = (0..self.cols).filter(|&j| j != i).map(|j| self[(i, j)].abs()).sum();
                self[(i, i)] - off
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators keep the loop vectorizable without changing results
    // between runs.
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a.remainder().iter().zip(chunks_b.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in chunks_a.zip(chunks_b) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `x_k . v` for every column `k` of `x`, in a single pass over `v`.
pub fn column_dots(x: &Block, v: &[f64]) -> Vec<f64> {
    const CHUNK: usize = 512;
    let mut out = vec![0.0; x.cols()];
    for start in (0..v.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(v.len());
        let vs = &v[start..end];
        for (k, o) in out.iter_mut().enumerate() {
            *o += dot(&x.col(k)[start..end], vs);
        }
    }
    out
}

/// `v -= sum_k coeffs[k] x_k`, in a single pass over `v`.
pub fn subtract_columns(x: &Block, coeffs: &[f64], v: &mut [f64]) {
    const CHUNK: usize = 512;
    for start in (0..v.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(v.len());
        let vs = &mut v[start..end];
        for (k, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                axpy(-c, &x.col(k)[start..end], vs);
            }
        }
    }
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_and_mul_small() {
        let b = Block::from_columns(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let g = b.gram(&b);
        assert_eq!(g.as_slice(), &[5.0, 2.0, 2.0, 2.0]);
        let m = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let out = b.mul_small(&m);
        assert_eq!(out.col(0), &[1.0, 0.0, 2.0]);
        assert_eq!(out.col(1), &[1.0, 2.0, 4.0]);
    }

    #[test]
    fn gershgorin_bound_of_dense() {
        let m = Matrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        assert_eq!(m.gershgorin_lower_bound(), 1.0);
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
