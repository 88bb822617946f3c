//! Matrix-free pieces against the brute-force dense references.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trimin::dense_oracle::{dense_eigensolve, dense_hamiltonian, dense_partial_trace};
use trimin::hamiltonian::HamiltonianOperator;
use trimin::lattice::{Impurity, Lattice};
use trimin::linalg::{dot, Block, LinearOperator, Matrix};
use trimin::rdm::reduced_density_matrix;
use trimin::tracemin::{solve, SolverConfig};
use trimin::verify::random_instance;

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn apply_vec(op: &HamiltonianOperator, v: &[f64]) -> Vec<f64> {
    let mut out = Block::zeros(v.len(), 1);
    op.apply(&Block::from_vec(v.to_vec()), &mut out).unwrap();
    out.col(0).to_vec()
}

#[test]
fn apply_matches_dense_on_every_basis_vector() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..12 {
        let (lattice, h) = random_instance(&mut rng).unwrap();
        let op = HamiltonianOperator::new(&lattice, h).unwrap();
        let dense = dense_hamiltonian(&lattice, h).unwrap();
        let dim = op.dim();
        for k in 0..dim {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            let col = apply_vec(&op, &e);
            for (row, v) in col.iter().enumerate() {
                assert!((v - dense[(row, k)]).abs() <= 1e-13, "N={} column {k}", lattice.n_sites());
            }
        }
    }
}

#[test]
fn full_patches_match_dense() {
    for (radius, h, imp) in [(1, 2.61, None), (1, 0.7, Some(Impurity { site: 4, alpha: 0.5 }))] {
        let lattice = Lattice::build_patch(radius, 1.0, imp).unwrap();
        let op = HamiltonianOperator::new(&lattice, h).unwrap();
        let dense = dense_hamiltonian(&lattice, h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_state(lattice.n_sites(), &mut rng);
        let fast = apply_vec(&op, &v);
        let slow = dense.matvec(&v);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}

#[test]
fn tracemin_lowest_pairs_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..30 {
        let (lattice, h) = random_instance(&mut rng).unwrap();
        let op = HamiltonianOperator::new(&lattice, h).unwrap();
        let cfg = SolverConfig { block_size: 4.min(op.dim()), ..SolverConfig::with_wanted(2) };
        let res = solve(&op, &cfg).unwrap();
        assert!(res.converged);
        let dense = dense_eigensolve(&dense_hamiltonian(&lattice, h).unwrap()).unwrap();
        for k in 0..2 {
            assert!((res.eigenvalues[k] - dense.eigenvalues[k]).abs() <= 1e-10, "N={} h={h}", lattice.n_sites());
        }
        assert_eq!(res.trace_increases, 0);
    }
}

#[test]
fn seven_site_dense_and_tracemin_agree_at_the_peak() {
    let lattice = Lattice::build_patch(1, 1.0, None).unwrap();
    let op = HamiltonianOperator::new(&lattice, 2.61).unwrap();
    let res = solve(&op, &SolverConfig::default()).unwrap();
    let dense = dense_eigensolve(&dense_hamiltonian(&lattice, 2.61).unwrap()).unwrap();
    assert!((res.ground_energy() - dense.eigenvalues[0]).abs() <= 1e-10);
    let overlap = dot(res.ground_state(), &dense.eigenvectors.column(0));
    assert!((overlap.abs() - 1.0).abs() < 1e-10);
}

#[test]
fn rdm_matches_partial_trace_up_to_twelve_sites() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for n in 2..=12 {
        let psi = random_state(n, &mut rng);
        let pairs: Vec<(usize, usize)> = if n <= 8 {
            (1..=n).flat_map(|i| ((i + 1)..=n).map(move |j| (i, j))).collect()
        } else {
            vec![(1, 2), (1, n), (n - 1, n), (2, n / 2 + 1), (n / 2, n / 2 + 2)]
        };
        for (i, j) in pairs {
            let r = reduced_density_matrix(&psi, i, j).unwrap();
            let d = dense_partial_trace(&psi, i, j, n).unwrap();
            for (a, b) in [
                (r.rho11, d[(0, 0)]),
                (r.rho22, d[(1, 1)]),
                (r.rho33, d[(2, 2)]),
                (r.rho44, d[(3, 3)]),
                (r.rho14, d[(0, 3)]),
                (r.rho23, d[(1, 2)]),
            ] {
                assert!((a - b).abs() <= 1e-12, "n={n} ({i},{j})");
            }
            assert!((r.trace() - 1.0).abs() <= 1e-12);
        }
    }
}

fn x_entries_only(m: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            let on_x = i == j || i + j == 3;
            if !on_x {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst
}

#[test]
fn ground_states_give_x_states() {
    for (radius, h, imp) in [
        (1, 2.61, None),
        (1, 1.0, Some(Impurity { site: 4, alpha: 1.0 })),
        (1, 4.0, Some(Impurity { site: 1, alpha: 0.5 })),
    ] {
        let lattice = Lattice::build_patch(radius, 1.0, imp).unwrap();
        let op = HamiltonianOperator::new(&lattice, h).unwrap();
        let res = solve(&op, &SolverConfig::default()).unwrap();
        let psi = res.ground_state();
        for i in 1..=7 {
            for j in (i + 1)..=7 {
                let dense = dense_partial_trace(psi, i, j, 7).unwrap();
                assert!(x_entries_only(&dense) < 1e-10);
                let rebuilt = reduced_density_matrix(psi, i, j).unwrap().to_matrix();
                assert!(rebuilt.sub(&dense).max_abs() < 1e-10);
            }
        }
    }
}
