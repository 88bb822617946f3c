//! Concurrence and entanglement of formation of two-qubit states.
//!
//! The spin-flip partner of a real `rho` is `F rho F` with `F = Y x Y` the
//! real anti-diagonal `(-1, 1, 1, -1)`. The `epsilon_k` are the square roots
//! of the spectrum of `rho * rho_tilde`. With `T = sqrt(rho) F sqrt(rho)`,
//! `sqrt(rho) rho_tilde sqrt(rho) = T^2`, so they are the `|eigenvalues|` of
//! the symmetric `T`; this avoids square roots of tiny eigenvalues.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rdm::ReducedDensityMatrix;
use crate::tracemin::symmetric_eigen_small;

/// Trace and positivity tolerance for input densities; eigenvalues above
/// `-DENSITY_TOL` are clipped to zero.
pub const DENSITY_TOL: f64 = 1e-10;

/// Range tolerance for the concurrence passed to [`entanglement_of_formation`].
pub const CONCURRENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcurrenceResult {
    pub concurrence: f64,
    /// Non-negative, descending.
    pub epsilons: [f64; 4],
    pub eof: f64,
}

impl ConcurrenceResult {
    fn from_epsilons(mut eps: [f64; 4]) -> Result<Self> {
        eps.sort_by(|a, b| b.total_cmp(a));
        let c = (eps[0] - eps[1] - eps[2] - eps[3]).clamp(0.0, 1.0);
        Ok(Self { concurrence: c, epsilons: eps, eof: entanglement_of_formation(c)? })
    }
}

fn flip() -> Matrix {
    Matrix::from_rows(&[
        vec![0.0, 0.0, 0.0, -1.0],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![-1.0, 0.0, 0.0, 0.0],
    ])
    .expect("4x4")
}

/// `(Y x Y) rho (Y x Y)` for real `rho`.
pub fn spin_flip(rho: &Matrix) -> Matrix {
    let f = flip();
    f.matmul(rho).matmul(&f)
}

/// Wootters concurrence of an arbitrary real symmetric two-qubit density.
pub fn concurrence_general(rho: &Matrix) -> Result<ConcurrenceResult> {
    if rho.rows() != 4 || rho.cols() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: rho.rows().max(rho.cols()) });
    }
    if rho.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDensity("non-finite entry".into()));
    }
    let asym = rho.asymmetry();
    if asym > DENSITY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let t = rho.trace();
    if (t - 1.0).abs() > DENSITY_TOL {
        return Err(Error::InvalidDensity(format!("trace {t} differs from 1")));
    }
    let (vals, vecs) = symmetric_eigen_small(rho);
    if vals[0] < -DENSITY_TOL {
        return Err(Error::InvalidDensity(format!("negative eigenvalue {}", vals[0])));
    }
    let roots: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let sqrt_rho = vecs.matmul(&Matrix::from_diag(&roots)).matmul(&vecs.transpose());
    let t = sqrt_rho.matmul(&flip()).matmul(&sqrt_rho).symmetrized();
    let (mu, _) = symmetric_eigen_small(&t);
    ConcurrenceResult::from_epsilons([mu[0], mu[1], mu[2], mu[3]].map(f64::abs))
}

/// Closed form for X-states: `C = 2 max(0, |r14| - sqrt(r22 r33), |r23| - sqrt(r11 r44))`.
pub fn concurrence_x_state(rho: &ReducedDensityMatrix) -> Result<ConcurrenceResult> {
    rho.check(DENSITY_TOL)?;
    let outer = (rho.rho11.max(0.0) * rho.rho44.max(0.0)).sqrt();
    let inner = (rho.rho22.max(0.0) * rho.rho33.max(0.0)).sqrt();
    let (c14, c23) = (rho.rho14.abs(), rho.rho23.abs());
    let eps = [outer + c14, (outer - c14).max(0.0), inner + c23, (inner - c23).max(0.0)];
    let mut result = ConcurrenceResult::from_epsilons(eps)?;
    let c = (2.0 * (c14 - inner).max(c23 - outer).max(0.0)).min(1.0);
    result.concurrence = c;
    result.eof = entanglement_of_formation(c)?;
    Ok(result)
}

/// Binary entropy in bits, `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    term(x) + term(1.0 - x)
}

/// `E(C) = h((1 - sqrt(1 - C^2)) / 2)`.
pub fn entanglement_of_formation(c: f64) -> Result<f64> {
    if !(-CONCURRENCE_TOL..=1.0 + CONCURRENCE_TOL).contains(&c) {
        return Err(Error::InvalidParameter(format!("concurrence {c} outside [0, 1]")));
    }
    let c = c.clamp(0.0, 1.0);
    let x = (1.0 - (1.0 - c * c).sqrt()) / 2.0;
    Ok(binary_entropy(x).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn x_state(d: [f64; 4], r14: f64, r23: f64) -> ReducedDensityMatrix {
        ReducedDensityMatrix {
            rho11: d[0],
            rho22: d[1],
            rho33: d[2],
            rho44: d[3],
            rho14: r14,
            rho23: r23,
            pair: (1, 2),
            swapped: false,
        }
    }

    fn random_x_state(rng: &mut ChaCha8Rng) -> ReducedDensityMatrix {
        let mut d = [0.0; 4];
        d.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        let s: f64 = d.iter().sum();
        d.iter_mut().for_each(|v| *v /= s);
        let r14 = rng.gen_range(-1.0..1.0) * (d[0] * d[3]).sqrt();
        let r23 = rng.gen_range(-1.0..1.0) * (d[1] * d[2]).sqrt();
        x_state(d, r14, r23)
    }

    fn rotation(t: f64) -> Matrix {
        Matrix::from_rows(&[vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]).unwrap()
    }

    #[test]
    fn bell_states() {
        let even = concurrence_x_state(&x_state([0.5, 0.0, 0.0, 0.5], 0.5, 0.0)).unwrap();
        assert_eq!(even.concurrence, 1.0);
        assert!((even.eof - 1.0).abs() < 1e-15);
        let odd = concurrence_x_state(&x_state([0.0, 0.5, 0.5, 0.0], 0.0, 0.5)).unwrap();
        assert_eq!(odd.concurrence, 1.0);
        let g = concurrence_general(&x_state([0.5, 0.0, 0.0, 0.5], 0.5, 0.0).to_matrix()).unwrap();
        assert!((g.concurrence - 1.0).abs() < 1e-10 && (g.eof - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separable_states() {
        let mixed = concurrence_general(&Matrix::from_diag(&[0.25; 4])).unwrap();
        assert_eq!(mixed.concurrence, 0.0);
        for e in mixed.epsilons {
            assert!((e - 0.25).abs() < 1e-12);
        }
        let classical = concurrence_general(&Matrix::from_diag(&[0.5, 0.0, 0.0, 0.5])).unwrap();
        assert!(classical.concurrence.abs() < 1e-12);
        assert_eq!(classical.eof, 0.0);
    }

    #[test]
    fn eof_values() {
        assert_eq!(entanglement_of_formation(0.0).unwrap(), 0.0);
        assert!((entanglement_of_formation(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((entanglement_of_formation(0.5).unwrap() - 0.354_573).abs() < 1e-5);
        assert!(entanglement_of_formation(1.0 + 1e-13).is_ok());
        assert!(entanglement_of_formation(-1e-13).is_ok());
        assert!(entanglement_of_formation(1.01).is_err());
        assert!(entanglement_of_formation(-0.01).is_err());
    }

    #[test]
    fn eof_strictly_increasing() {
        let mut prev = 0.0;
        for k in 1..=1000 {
            let e = entanglement_of_formation(k as f64 / 1000.0).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn closed_form_matches_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let x = random_x_state(&mut rng);
            let a = concurrence_x_state(&x).unwrap();
            let b = concurrence_general(&x.to_matrix()).unwrap();
            assert!((a.concurrence - b.concurrence).abs() < 1e-10, "{x:?}");
            for (p, q) in a.epsilons.iter().zip(b.epsilons) {
                assert!((p - q).abs() < 1e-10);
            }
            assert!((0.0..=1.0).contains(&a.eof));
        }
    }

    #[test]
    fn spin_flip_of_bell_state_is_itself() {
        let bell = x_state([0.5, 0.0, 0.0, 0.5], 0.5, 0.0).to_matrix();
        assert_eq!(spin_flip(&bell), bell);
        let up = Matrix::from_diag(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(spin_flip(&up), Matrix::from_diag(&[0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn pure_product_state_is_exactly_unentangled() {
        // |0> (cos t |0> + sin t |1>): rank one, two zero eigenvalues.
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rho = x_state([c * c, s * s, 0.0, 0.0], 0.0, 0.0);
        let mut m = rho.to_matrix();
        m[(0, 1)] = c * s;
        m[(1, 0)] = c * s;
        assert!(concurrence_general(&m).unwrap().concurrence < 1e-14);
    }

    #[test]
    fn local_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let rho = random_x_state(&mut rng).to_matrix();
            let u = crate::dense_oracle::kron(
                &rotation(rng.gen_range(0.0..6.3)),
                &rotation(rng.gen_range(0.0..6.3)),
            );
            let turned = u.matmul(&rho).matmul(&u.transpose()).symmetrized();
            let a = concurrence_general(&rho).unwrap().concurrence;
            let b = concurrence_general(&turned).unwrap().concurrence;
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_invalid_densities() {
        assert!(matches!(
            concurrence_general(&Matrix::from_diag(&[0.5, 0.5, 0.5, 0.0])),
            Err(Error::InvalidDensity(_))
        ));
        assert!(matches!(
            concurrence_general(&Matrix::from_diag(&[1.1, 0.0, 0.0, -0.1])),
            Err(Error::InvalidDensity(_))
        ));
        assert!(concurrence_general(&Matrix::identity(3)).is_err());
        let mut asym = Matrix::from_diag(&[0.25; 4]);
        asym[(0, 1)] = 0.1;
        assert!(matches!(concurrence_general(&asym), Err(Error::NotSymmetric(_))));
        assert!(concurrence_x_state(&x_state([0.5, 0.0, 0.0, 0.5], 0.6, 0.0)).is_err());
        // Tiny negative eigenvalue inside tolerance is clipped.
        let ok = concurrence_general(&Matrix::from_diag(&[0.5 + 1e-11, 0.5, 0.0, -1e-11])).unwrap();
        assert!(ok.concurrence >= 0.0);
    }
}
