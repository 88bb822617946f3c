//! Two-site reduced density matrices read straight off a real state vector.
//!
//! Site `i` (1-based) of an `N`-site register is bit `N - i` of the basis
//! index, so along the basis it alternates in runs of `2^(N-i)` zeros and
//! ones. For a pair `i < j` each period of `i` splits into runs of `j`, which
//! gives contiguous slices for every `(s_i, s_j)` sector. Parity symmetry of
//! the model keeps only the diagonal and the two anti-diagonal coherences.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Allowed deviation of `|psi|` from one.
pub const NORM_TOL: f64 = 1e-10;

/// Run structure of site `i` along the basis of `N` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentGeometry {
    /// One run of zeros followed by one run of ones: `2^(N-i+1)`.
    pub period_length: usize,
    /// `2^(N-i)`; also the index offset that flips site `i`.
    pub segment_length: usize,
    pub period_count: usize,
    pub segment_count: usize,
}

pub fn segment_geometry(site: usize, n_sites: usize) -> Result<SegmentGeometry> {
    if site == 0 || site > n_sites {
        return Err(Error::SiteOutOfRange { site, n_sites });
    }
    if n_sites >= usize::BITS as usize {
        return Err(Error::TooLarge { n_sites, max: usize::BITS as usize - 1 });
    }
    let segment_length = 1usize << (n_sites - site);
    Ok(SegmentGeometry {
        period_length: 2 * segment_length,
        segment_length,
        period_count: 1 << (site - 1),
        segment_count: 1 << site,
    })
}

/// The six X-state entries of `rho(i, j)` in the basis `|00>, |01>, |10>, |11>`
/// with site `pair.0` as the left qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedDensityMatrix {
    pub rho11: f64,
    pub rho22: f64,
    pub rho33: f64,
    pub rho44: f64,
    pub rho14: f64,
    pub rho23: f64,
    pub pair: (usize, usize),
    /// Set when the request had `i > j`; the entries were computed for the
    /// ordered pair and `rho22`, `rho33` exchanged.
    pub swapped: bool,
}

impl ReducedDensityMatrix {
    pub fn trace(&self) -> f64 {
        self.rho11 + self.rho22 + self.rho33 + self.rho44
    }

    /// The full 4x4 matrix; entries outside the X are zero.
    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::from_diag(&[self.rho11, self.rho22, self.rho33, self.rho44]);
        m[(0, 3)] = self.rho14;
        m[(3, 0)] = self.rho14;
        m[(1, 2)] = self.rho23;
        m[(2, 1)] = self.rho23;
        m
    }

    /// Same state with the two qubits relabelled.
    pub fn swap_sites(&self) -> Self {
        Self {
            rho22: self.rho33,
            rho33: self.rho22,
            pair: (self.pair.1, self.pair.0),
            swapped: !self.swapped,
            ..*self
        }
    }

    /// Unit trace, non-negative diagonal and positive 2x2 blocks, each within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let t = self.trace();
        if (t - 1.0).abs() > tol {
            return Err(Error::InvalidDensity(format!("trace {t} differs from 1")));
        }
        let diag = [self.rho11, self.rho22, self.rho33, self.rho44];
        if let Some(d) = diag.iter().find(|&&d| d < -tol || !d.is_finite()) {
            return Err(Error::InvalidDensity(format!("negative or non-finite population {d}")));
        }
        if self.rho14 * self.rho14 > self.rho11 * self.rho44 + tol {
            return Err(Error::InvalidDensity("outer block {11,14,44} is not positive".into()));
        }
        if self.rho23 * self.rho23 > self.rho22 * self.rho33 + tol {
            return Err(Error::InvalidDensity("inner block {22,23,33} is not positive".into()));
        }
        Ok(())
    }
}

fn register_size(len: usize) -> Result<usize> {
    if len < 4 || !len.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("state length {len} is not 2^N with N >= 2")));
    }
    Ok(len.trailing_zeros() as usize)
}

/// `rho(i, j)` of the real normalized state `psi`, sites 1-based.
pub fn reduced_density_matrix(psi: &[f64], i: usize, j: usize) -> Result<ReducedDensityMatrix> {
    let n = register_size(psi.len())?;
    if i == j {
        return Err(Error::InvalidPair(i, j));
    }
    if i > j {
        return Ok(reduced_density_matrix(psi, j, i)?.swap_sites());
    }
    let gi = segment_geometry(i, n)?;
    let gj = segment_geometry(j, n)?;
    let norm2 = dot(psi, psi);
    if !norm2.is_finite() || (norm2.sqrt() - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(norm2.sqrt()));
    }

    let (si, sj) = (gi.segment_length, gj.segment_length);
    let mut rho = ReducedDensityMatrix {
        rho11: 0.0,
        rho22: 0.0,
        rho33: 0.0,
        rho44: 0.0,
        rho14: 0.0,
        rho23: 0.0,
        pair: (i, j),
        swapped: false,
    };
    // Outer loop: periods of i, whose first segment has s_i = 0.
    for p in (0..psi.len()).step_by(gi.period_length) {
        // Inner loop: periods of j inside that segment.
        for s in (p..p + si).step_by(gj.period_length) {
            let q00 = &psi[s..s + sj];
            let q01 = &psi[s + sj..s + 2 * sj];
            let q10 = &psi[s + si..s + si + sj];
            let q11 = &psi[s + si + sj..s + si + 2 * sj];
            rho.rho11 += dot(q00, q00);
            rho.rho22 += dot(q01, q01);
            rho.rho33 += dot(q10, q10);
            rho.rho44 += dot(q11, q11);
            // q + S(i) + S(j) from (0,0); q + S(i) - S(j) from (0,1).
            rho.rho14 += dot(q00, q11);
            rho.rho23 += dot(q01, q10);
        }
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense_oracle::dense_partial_trace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= s);
        v
    }

    /// Bit test over every basis state, no run structure.
    fn naive(psi: &[f64], i: usize, j: usize) -> [f64; 6] {
        let n = psi.len().trailing_zeros() as usize;
        let (bi, bj) = (1usize << (n - i), 1usize << (n - j));
        let mut r = [0.0; 6];
        for (q, &a) in psi.iter().enumerate() {
            match (q & bi != 0, q & bj != 0) {
                (false, false) => {
                    r[0] += a * a;
                    r[4] += a * psi[q | bi | bj];
                }
                (false, true) => {
                    r[1] += a * a;
                    r[5] += a * psi[(q | bi) & !bj];
                }
                (true, false) => r[2] += a * a,
                (true, true) => r[3] += a * a,
            }
        }
        r
    }

    #[test]
    fn geometry_table() {
        let g = segment_geometry(2, 5).unwrap();
        assert_eq!((g.period_length, g.segment_length, g.period_count, g.segment_count), (16, 8, 2, 4));
        let g = segment_geometry(4, 5).unwrap();
        assert_eq!((g.period_length, g.segment_length, g.period_count, g.segment_count), (4, 2, 8, 16));
        let g = segment_geometry(1, 1).unwrap();
        assert_eq!((g.period_length, g.segment_length), (2, 1));
        for n in 1..12 {
            for i in 1..=n {
                let g = segment_geometry(i, n).unwrap();
                assert_eq!(g.period_length, 2 * g.segment_length);
                assert_eq!(g.segment_length * g.segment_count, 1 << n);
            }
        }
        assert!(segment_geometry(0, 3).is_err());
        assert!(segment_geometry(4, 3).is_err());
    }

    #[test]
    fn all_up_state() {
        let mut psi = vec![0.0; 1 << 6];
        psi[0] = 1.0;
        for (i, j) in [(1, 2), (3, 6), (5, 2)] {
            let r = reduced_density_matrix(&psi, i, j).unwrap();
            assert_eq!((r.rho11, r.rho22, r.rho33, r.rho44, r.rho14, r.rho23), (1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn bell_state() {
        let s = 0.5f64.sqrt();
        let r = reduced_density_matrix(&[s, 0.0, 0.0, s], 1, 2).unwrap();
        for v in [r.rho11, r.rho44, r.rho14] {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert_eq!((r.rho22, r.rho33, r.rho23), (0.0, 0.0, 0.0));
    }

    #[test]
    fn odd_parity_coherence_offset() {
        // |01> + |10> on sites (2, 4) of four, environment fixed to |0_0>.
        let mut psi = vec![0.0; 16];
        let s = 0.5f64.sqrt();
        psi[0b0001] = s;
        psi[0b0100] = s;
        let r = reduced_density_matrix(&psi, 2, 4).unwrap();
        assert!((r.rho23 - 0.5).abs() < 1e-15);
        assert!((r.rho22 - 0.5).abs() < 1e-15 && (r.rho33 - 0.5).abs() < 1e-15);
        assert_eq!(r.rho14, 0.0);
    }

    #[test]
    fn matches_naive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=10 {
            let psi = random_state(n, &mut rng);
            for i in 1..=n {
                for j in (i + 1)..=n {
                    let r = reduced_density_matrix(&psi, i, j).unwrap();
                    let got = [r.rho11, r.rho22, r.rho33, r.rho44, r.rho14, r.rho23];
                    for (a, b) in got.iter().zip(naive(&psi, i, j)) {
                        assert!((a - b).abs() < 1e-13, "n={n} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn five_site_oracle_all_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_state(5, &mut rng);
        for i in 1..=5 {
            for j in (i + 1)..=5 {
                let dense = dense_partial_trace(&psi, i, j, 5).unwrap();
                let r = reduced_density_matrix(&psi, i, j).unwrap();
                // A random state is not an X-state; compare the stored entries.
                for (a, b) in [
                    (r.rho11, dense[(0, 0)]),
                    (r.rho22, dense[(1, 1)]),
                    (r.rho33, dense[(2, 2)]),
                    (r.rho44, dense[(3, 3)]),
                    (r.rho14, dense[(0, 3)]),
                    (r.rho23, dense[(1, 2)]),
                ] {
                    assert!((a - b).abs() < 1e-12);
                }
                assert!((r.trace() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn swap_exchanges_middle_populations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let psi = random_state(6, &mut rng);
        let a = reduced_density_matrix(&psi, 2, 5).unwrap();
        let b = reduced_density_matrix(&psi, 5, 2).unwrap();
        assert!(b.swapped && !a.swapped);
        assert_eq!(b.pair, (5, 2));
        assert_eq!((a.rho11, a.rho44, a.rho14, a.rho23), (b.rho11, b.rho44, b.rho14, b.rho23));
        assert_eq!((a.rho22, a.rho33), (b.rho33, b.rho22));
        let dense = dense_partial_trace(&psi, 5, 2, 6).unwrap();
        assert!((dense[(1, 1)] - b.rho22).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let psi = vec![0.5; 4];
        assert!(matches!(reduced_density_matrix(&psi, 1, 1), Err(Error::InvalidPair(1, 1))));
        assert!(matches!(reduced_density_matrix(&psi, 1, 3), Err(Error::SiteOutOfRange { .. })));
        assert!(matches!(reduced_density_matrix(&[1.0, 0.0, 0.0], 1, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(reduced_density_matrix(&[0.5, 0.5, 0.5, 0.6], 1, 2), Err(Error::NotNormalized(_))));
        let slightly_off = [0.5, 0.5, 0.5, 0.5 + 1e-12];
        assert!(reduced_density_matrix(&slightly_off, 1, 2).is_ok());
    }

    #[test]
    fn to_matrix_layout() {
        let r = ReducedDensityMatrix {
            rho11: 0.4,
            rho22: 0.1,
            rho33: 0.2,
            rho44: 0.3,
            rho14: 0.05,
            rho23: -0.02,
            pair: (1, 2),
            swapped: false,
        };
        let m = r.to_matrix();
        assert_eq!(m[(0, 3)], 0.05);
        assert_eq!(m[(2, 1)], -0.02);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m.trace(), r.trace());
        assert!(r.check(1e-12).is_ok());
        assert!(ReducedDensityMatrix { rho14: 0.5, ..r }.check(1e-12).is_err());
    }
}
