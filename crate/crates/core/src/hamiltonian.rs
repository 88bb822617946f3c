//! Matrix-free transverse-field Ising Hamiltonian
//!
//! `H = -sum_<ij> J_ij X_i X_j - h sum_i Z_i`
//!
//! Site `k` (1-based) lives on bit `N - k` of a basis index, so site 1 is the
//! most significant bit and index order matches `|s_1 s_2 ... s_N>`. The field
//! term is diagonal with entries `-h (N - 2 popcount(k))`; each bond term flips
//! two bits and is applied as `k -> k ^ mask`.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{Block, LinearOperator};

/// Largest system the operator will allocate for (2^26 doubles per vector).
pub const MAX_SITES: usize = 26;

/// Rows handled together by [`HamiltonianOperator::apply`]; one tile of the
/// output stays in L1 while every bond streams over it.
const TILE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BondMask {
    pub mask: usize,
    pub coupling: f64,
}

#[derive(Debug, Clone)]
pub struct HamiltonianOperator {
    n_sites: usize,
    field: f64,
    diag: Vec<f64>,
    bonds: Vec<BondMask>,
}

/// Bit position of 1-based site `site` in an `n_sites`-spin basis index.
pub fn site_bit(site: usize, n_sites: usize) -> usize {
    n_sites - site
}

/// `v[k] = N - 2 popcount(k)`, built by repeated concatenation `v -> (v; v - 2)`.
pub fn field_pattern(n_sites: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 << n_sites);
    v.push(n_sites as f64);
    for _ in 0..n_sites {
        let shifted: Vec<f64> = v.iter().map(|x| x - 2.0).collect();
        v.extend(shifted);
    }
    v
}

impl HamiltonianOperator {
    pub fn new(lattice: &Lattice, field: f64) -> Result<Self> {
        let n = lattice.n_sites();
        if n > MAX_SITES {
            return Err(Error::TooLarge { n_sites: n, max: MAX_SITES });
        }
        if !(field >= 0.0) || !field.is_finite() {
            return Err(Error::InvalidParameter(format!("field h must be non-negative, got {field}")));
        }
        let diag = field_pattern(n).into_iter().map(|v| -field * v).collect();
        let bonds = lattice
            .bonds()
            .iter()
            .map(|b| BondMask { mask: (1 << site_bit(b.i, n)) | (1 << site_bit(b.j, n)), coupling: b.coupling })
            .collect();
        Ok(Self { n_sites: n, field, diag, bonds })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn field(&self) -> f64 {
        self.field
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn bond_masks(&self) -> &[BondMask] {
        &self.bonds
    }

    /// `out = H y` for a single vector.
    pub fn apply_vec(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let dim = self.diag.len();
        if y.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: y.len() });
        }
        if out.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: out.len() });
        }
        let tile = TILE.min(dim);
        let high = !(tile - 1);
        for start in (0..dim).step_by(tile) {
            let dst = &mut out[start..start + tile];
            for ((o, d), v) in dst.iter_mut().zip(&self.diag[start..start + tile]).zip(&y[start..start + tile]) {
                *o = d * v;
            }
            for bond in &self.bonds {
                let src_start = start ^ (bond.mask & high);
                let src = &y[src_start..src_start + tile];
                let low = bond.mask & (tile - 1);
                let c = bond.coupling;
                if low == 0 {
                    sub_scaled(dst, src, c);
                } else if low & 1 == 1 {
                    // Bit 0 flips: neighbours swap pairwise.
                    let rest = low & !1;
                    for (u, pair) in dst.chunks_exact_mut(2).enumerate() {
                        let s = (2 * u) ^ rest;
                        pair[0] -= c * src[s + 1];
                        pair[1] -= c * src[s];
                    }
                } else {
                    // XOR with `low` maps aligned runs of 2^(lowest set bit)
                    // rows onto contiguous source runs.
                    let run = 1usize << low.trailing_zeros();
                    for (u, chunk) in dst.chunks_exact_mut(run).enumerate() {
                        let s = (u * run) ^ low;
                        sub_scaled(chunk, &src[s..s + run], c);
                    }
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn sub_scaled(dst: &mut [f64], src: &[f64], c: f64) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o -= c * v;
    }
}

impl LinearOperator for HamiltonianOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, input: &Block, out: &mut Block) -> Result<()> {
        if input.rows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: input.rows() });
        }
        input.same_shape(out)?;
        for j in 0..input.cols() {
            self.apply_vec(input.col(j), out.col_mut(j))?;
        }
        Ok(())
    }

    fn gershgorin_lower_bound(&self) -> f64 {
        let off: f64 = self.bonds.iter().map(|b| b.coupling.abs()).sum();
        let min_diag = self.diag.iter().copied().fold(f64::INFINITY, f64::min);
        min_diag - off
    }

    /// Splits `H` into one two-site term per bond, each site's field shared
    /// equally among its bonds, and sums the exact two-site ground energies
    /// `-sqrt((h/d_i + h/d_j)^2 + J_ij^2)`. Isolated sites contribute `-h`.
    fn spectral_lower_bound(&self) -> f64 {
        let n = self.n_sites;
        let mut degree = vec![0usize; n];
        for b in &self.bonds {
            for bit in 0..n {
                if b.mask & (1 << bit) != 0 {
                    degree[bit] += 1;
                }
            }
        }
        let h = self.field;
        let mut bound = -h * degree.iter().filter(|&&d| d == 0).count() as f64;
        for b in &self.bonds {
            let bits: Vec<usize> = (0..n).filter(|bit| b.mask & (1 << bit) != 0).collect();
            let field = h / degree[bits[0]] as f64 + h / degree[bits[1]] as f64;
            bound -= field.hypot(b.coupling);
        }
        bound.max(self.gershgorin_lower_bound())
    }
}

/// Run structure of the nonzeros of `X_i X_j` with spins numbered
/// `N-1, ..., 0` from the left (bit positions), `i > j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnStrings {
    /// 1-based column of the nonzero in the first row.
    pub start: usize,
    /// Length of each diagonal run of consecutive nonzeros.
    pub run_length: usize,
    /// Number of runs above the main diagonal.
    pub run_count: usize,
}

pub fn column_string_structure(i: usize, j: usize, n_sites: usize) -> Result<ColumnStrings> {
    if i == j {
        return Err(Error::InvalidPair(i, j));
    }
    if j > i || i >= n_sites {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= j < i < N, got i={i}, j={j}, N={n_sites}"
        )));
    }
    Ok(ColumnStrings { start: 1 + (1 << i) + (1 << j), run_length: 1 << j, run_count: 1 << (n_sites - j - 1) })
}
