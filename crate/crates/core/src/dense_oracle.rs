//! Brute-force reference implementations.
//!
//! Everything here is built the slow, literal way: Kronecker products of
//! Pauli matrices, Householder tridiagonalization followed by implicit QL, and
//! the definitional double sum for partial traces. None of it shares code
//! with the matrix-free paths it is used to check.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::Matrix;

/// Oracle size cap: 2^14 is the largest dimension worth building densely.
pub const MAX_ORACLE_SITES: usize = 14;

fn pauli_x() -> Matrix {
    Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
}

fn pauli_z() -> Matrix {
    Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap()
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `I (x) ... (x) op_site (x) ... (x) I` over `factors`, where `factors[k]` is
/// the single-site operator for site `k + 1` (leftmost factor = site 1).
fn tensor_chain(factors: &[Matrix]) -> Matrix {
    factors.iter().skip(1).fold(factors[0].clone(), |acc, f| kron(&acc, f))
}

fn add_scaled(acc: &mut Matrix, term: &Matrix, scale: f64) {
    for i in 0..acc.rows() {
        for j in 0..acc.cols() {
            acc[(i, j)] += scale * term[(i, j)];
        }
    }
}

/// Explicit `2^N x 2^N` Hamiltonian from Kronecker products.
pub fn dense_hamiltonian(lattice: &Lattice, field: f64) -> Result<Matrix> {
    let n = lattice.n_sites();
    if n > MAX_ORACLE_SITES {
        return Err(Error::TooLarge { n_sites: n, max: MAX_ORACLE_SITES });
    }
    let dim = 1usize << n;
    let identity = Matrix::identity(2);
    let mut h = Matrix::zeros(dim, dim);
    for bond in lattice.bonds() {
        let mut factors = vec![identity.clone(); n];
        factors[bond.i - 1] = pauli_x();
        factors[bond.j - 1] = pauli_x();
        add_scaled(&mut h, &tensor_chain(&factors), -bond.coupling);
    }
    for site in 0..n {
        let mut factors = vec![identity.clone(); n];
        factors[site] = pauli_z();
        add_scaled(&mut h, &tensor_chain(&factors), -field);
    }
    Ok(h)
}

/// Full spectral decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

pub fn dense_eigensolve(m: &Matrix) -> Result<DenseEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
    }
    let asym = m.asymmetry();
    if asym > 1e-12 * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(DenseEigen { eigenvalues: vec![], eigenvectors: Matrix::zeros(0, 0) });
    }
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    implicit_ql(&mut v, &mut d, &mut e)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new)] = v[i][old];
        }
    }
    Ok(DenseEigen { eigenvalues: order.iter().map(|&k| d[k]).collect(), eigenvectors: vectors })
}

// Householder reduction to tridiagonal form, accumulating the transforms in
// `v` (EISPACK tred2 ordering: works from the last row upward).
fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[n - 1][j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in (j + 1)..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit-shift QL on the tridiagonal (d, e), rotating the accumulated basis.
fn implicit_ql(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Numerical("implicit QL did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Two-site reduced density matrix by the definitional sum over the
/// `2^(N-2)` environment configurations. Basis order `|00>, |01>, |10>, |11>`
/// with site `i` as the left qubit.
pub fn dense_partial_trace(psi: &[f64], i: usize, j: usize, n_sites: usize) -> Result<Matrix> {
    if i == j || i == 0 || j == 0 {
        return Err(Error::InvalidPair(i, j));
    }
    if i > n_sites || j > n_sites {
        return Err(Error::SiteOutOfRange { site: i.max(j), n_sites });
    }
    if psi.len() != 1 << n_sites {
        return Err(Error::DimensionMismatch { expected: 1 << n_sites, found: psi.len() });
    }
    let env_sites: Vec<usize> = (1..=n_sites).filter(|&s| s != i && s != j).collect();
    // Spin values of all sites, site 1 first, read as a binary number.
    let index = |a: usize, b: usize, env: usize| -> usize {
        let mut spins = vec![0usize; n_sites];
        spins[i - 1] = a;
        spins[j - 1] = b;
        for (k, &s) in env_sites.iter().enumerate() {
            spins[s - 1] = (env >> (env_sites.len() - 1 - k)) & 1;
        }
        spins.iter().fold(0, |acc, &s| 2 * acc + s)
    };
    let mut rho = Matrix::zeros(4, 4);
    for row in 0..4 {
        for col in 0..4 {
            let mut sum = 0.0;
            for env in 0..(1usize << env_sites.len()) {
                sum += psi[index(row >> 1, row & 1, env)] * psi[index(col >> 1, col & 1, env)];
            }
            rho[(row, col)] = sum;
        }
    }
    Ok(rho)
}

/// Upper-triangle runs of the permutation matrix `k -> k ^ mask`, found by
/// walking every row, as `(first row, first column, length)`, 0-based.
pub fn permutation_runs(mask: usize, dim: usize) -> Vec<(usize, usize, usize)> {
    let mut runs: Vec<(usize, usize, usize)> = Vec::new();
    for row in 0..dim {
        let col = row ^ mask;
        if col <= row {
            continue;
        }
        match runs.last_mut() {
            Some((r0, c0, len)) if *r0 + *len == row && *c0 + *len == col => *len += 1,
            _ => runs.push((row, col, 1)),
        }
    }
    runs
}
