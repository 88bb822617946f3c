//! Self-check suites run by the `verify` command: the matrix-free pipeline
//! against the dense oracle on random small instances, and structural
//! properties of the solver, the reduced densities and the sweeps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{concurrence_curve, run_sweep, LambdaGrid, SweepSpec};
use crate::dense_oracle::{dense_eigensolve, dense_hamiltonian, dense_partial_trace, permutation_runs};
use crate::entanglement::{concurrence_general, concurrence_x_state};
use crate::error::Result;
use crate::hamiltonian::{column_string_structure, HamiltonianOperator};
use crate::lattice::{Impurity, Lattice};
use crate::linalg::{Block, LinearOperator};
use crate::rdm::reduced_density_matrix;
use crate::tracemin::{solve, SolverConfig};

pub const EIGENVALUE_TOL: f64 = 1e-10;
pub const RDM_TOL: f64 = 1e-12;
pub const CONCURRENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// A random sub-lattice of 2..=10 sites cut from a one- or two-shell patch,
/// with a random field in `[0, 6]` and, half the time, a random impurity.
pub fn random_instance<R: Rng>(rng: &mut R) -> Result<(Lattice, f64)> {
    let radius = rng.gen_range(1..=2);
    let patch = Lattice::build_patch(radius, 1.0, None)?;
    let n = rng.gen_range(2..=patch.n_sites().min(10));
    let mut sites = patch.sites().to_vec();
    sites.shuffle(rng);
    sites.truncate(n);
    let impurity = rng.gen_bool(0.5).then(|| Impurity { site: rng.gen_range(1..=n), alpha: rng.gen_range(-0.5..1.5) });
    let lattice = Lattice::from_sites(radius, 1.0, sites, 1, impurity)?;
    Ok((lattice, rng.gen_range(0.0..6.0)))
}

/// Largest deviations over `instances` random instances.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OracleErrors {
    pub eigenvalue: f64,
    pub rdm: f64,
    pub concurrence: f64,
    pub unconverged: usize,
}

/// Block size for a random sub-lattice. Every connected cluster of two or more
/// spins carries a doublet split only at high order in `h`, so the low
/// spectrum holds `2^clusters` nearly equal levels and the block must span
/// them all for the trace minimization to separate the lowest two.
pub fn oracle_block_size(lattice: &Lattice) -> usize {
    let n = lattice.n_sites();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for b in lattice.bonds().iter().filter(|b| b.coupling != 0.0) {
        let (ra, rb) = (root(&mut parent, b.i - 1), root(&mut parent, b.j - 1));
        parent[ra] = rb;
    }
    let mut sizes = vec![0usize; n];
    for a in 0..n {
        sizes[root(&mut parent, a)] += 1;
    }
    let clusters = sizes.iter().filter(|&&s| s >= 2).count();
    ((1usize << clusters) + 2).max(4).min(1 << n)
}

pub fn oracle_errors(instances: usize, seed: u64) -> Result<OracleErrors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = OracleErrors::default();
    for _ in 0..instances {
        let (lattice, h) = random_instance(&mut rng)?;
        let n = lattice.n_sites();
        let op = HamiltonianOperator::new(&lattice, h)?;
        let cfg = SolverConfig { block_size: oracle_block_size(&lattice), ..SolverConfig::with_wanted(2) };
        let res = solve(&op, &cfg)?;
        if !res.converged {
            err.unconverged += 1;
        }
        let dense = dense_eigensolve(&dense_hamiltonian(&lattice, h)?)?;
        for k in 0..2 {
            err.eigenvalue = err.eigenvalue.max((res.eigenvalues[k] - dense.eigenvalues[k]).abs());
        }
        let psi = res.ground_state();
        for i in 1..=n {
            for j in (i + 1)..=n {
                let rho = reduced_density_matrix(psi, i, j)?;
                let d = dense_partial_trace(psi, i, j, n)?;
                for (a, b) in [
                    (rho.rho11, d[(0, 0)]),
                    (rho.rho22, d[(1, 1)]),
                    (rho.rho33, d[(2, 2)]),
                    (rho.rho44, d[(3, 3)]),
                    (rho.rho14, d[(0, 3)]),
                    (rho.rho23, d[(1, 2)]),
                ] {
                    err.rdm = err.rdm.max((a - b).abs());
                }
                let x = concurrence_x_state(&rho)?.concurrence;
                let g = concurrence_general(&rho.to_matrix())?.concurrence;
                err.concurrence = err.concurrence.max((x - g).abs());
            }
        }
    }
    Ok(err)
}

pub fn oracle_suite(instances: usize, seed: u64) -> Result<Vec<Check>> {
    let e = oracle_errors(instances, seed)?;
    Ok(vec![
        Check::new(
            "tracemin lowest two eigenvalues vs dense oracle",
            e.eigenvalue <= EIGENVALUE_TOL && e.unconverged == 0,
            format!("max error {:.3e} over {instances} instances, {} unconverged", e.eigenvalue, e.unconverged),
        ),
        Check::new(
            "reduced density vs dense partial trace",
            e.rdm <= RDM_TOL,
            format!("max entry error {:.3e}", e.rdm),
        ),
        Check::new(
            "X-state vs general concurrence",
            e.concurrence <= CONCURRENCE_TOL,
            format!("max difference {:.3e}", e.concurrence),
        ),
    ])
}

fn matvec_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let (lattice, h) = random_instance(&mut rng)?;
        let op = HamiltonianOperator::new(&lattice, h)?;
        let dense = dense_hamiltonian(&lattice, h)?;
        let dim = op.dim();
        let mut out = Block::zeros(dim, 1);
        for k in 0..dim {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            op.apply(&Block::from_vec(e), &mut out)?;
            for (row, v) in out.col(0).iter().enumerate() {
                worst = worst.max((v - dense[(row, k)]).abs());
            }
        }
    }
    Ok(worst)
}

fn run_structure_holds() -> Result<bool> {
    for n in 2..=10usize {
        for i in 1..n {
            for j in 0..i {
                let s = column_string_structure(i, j, n)?;
                let runs = permutation_runs((1 << i) | (1 << j), 1 << n);
                let ok = runs.len() == s.run_count
                    && runs[0].0 == 0
                    && runs[0].1 + 1 == s.start
                    && runs.iter().all(|r| r.2 == s.run_length);
                if !ok {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Maximum spread of `C(lambda)` inside each symmetry class of the clean
/// seven-site patch: center-ring pairs and adjacent ring pairs.
pub fn symmetry_class_spread(grid: LambdaGrid) -> Result<f64> {
    let lattice = Lattice::build_patch(1, 1.0, None)?;
    let center = lattice.center();
    let pairs = lattice.nearest_pairs();
    let spec = SweepSpec::new(1, grid, pairs.clone());
    let records = run_sweep(&spec)?;
    let mut spread = 0.0f64;
    for with_center in [true, false] {
        let class: Vec<Vec<(f64, f64)>> = pairs
            .iter()
            .filter(|p| (p.0 == center || p.1 == center) == with_center)
            .map(|&p| concurrence_curve(&records, p))
            .collect();
        for curve in &class[1..] {
            for (a, b) in curve.iter().zip(&class[0]) {
                spread = spread.max((a.1 - b.1).abs());
            }
        }
    }
    Ok(spread)
}

pub fn property_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let mv = matvec_error(seed)?;
    checks.push(Check::new("matrix-free apply vs dense Hamiltonian", mv <= 1e-13, format!("max error {mv:.3e}")));

    let lattice = Lattice::build_patch(1, 1.0, None)?;
    let mut increases = 0;
    for lambda in [0.3, 1.0, 2.61, 5.0] {
        let res = solve(&HamiltonianOperator::new(&lattice, lambda)?, &SolverConfig::with_wanted(2))?;
        increases += res.trace_increases;
    }
    checks.push(Check::new("trace never increases", increases == 0, format!("{increases} increases")));

    let grid = LambdaGrid::new(0.0, 6.0, 0.25)?;
    let spec = SweepSpec::new(1, grid, lattice.nearest_pairs());
    let records = run_sweep(&spec)?;
    let mut worst_trace = 0.0f64;
    let mut in_range = true;
    let mut zero_at_origin = true;
    for lambda in grid.points() {
        let psi = solve(&HamiltonianOperator::new(&lattice, lambda)?, &SolverConfig::default())?;
        for &(i, j) in &lattice.nearest_pairs() {
            worst_trace = worst_trace.max((reduced_density_matrix(psi.ground_state(), i, j)?.trace() - 1.0).abs());
        }
    }
    for r in &records {
        in_range &= (0.0..=1.0).contains(&r.concurrence) && (0.0..=1.0).contains(&r.eof);
        if r.lambda == 0.0 {
            zero_at_origin &= r.concurrence == 0.0;
        }
    }
    checks.push(Check::new("reduced density trace", worst_trace <= 1e-12, format!("max |Tr - 1| {worst_trace:.3e}")));
    checks.push(Check::new("concurrence and EoF in [0, 1]", in_range, format!("{} records", records.len())));
    checks.push(Check::new("zero field gives zero concurrence", zero_at_origin, "lambda = 0".into()));

    let runs = run_structure_holds()?;
    checks.push(Check::new("bond run structure for N <= 10", runs, "all bonds".into()));

    let spread = symmetry_class_spread(grid)?;
    checks.push(Check::new("seven-site symmetry classes", spread <= 1e-9, format!("max spread {spread:.3e}")));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (lat, h) = random_instance(&mut rng).unwrap();
            assert!((2..=10).contains(&lat.n_sites()));
            assert!((0.0..6.0).contains(&h));
        }
    }

    #[test]
    fn block_size_counts_clusters() {
        use crate::lattice::SiteCoord;
        let sites = vec![SiteCoord::new(0, 0), SiteCoord::new(1, 0), SiteCoord::new(5, 5), SiteCoord::new(0, 3), SiteCoord::new(1, 3)];
        let lat = Lattice::from_sites(2, 1.0, sites, 1, None).unwrap();
        assert_eq!(oracle_block_size(&lat), 6);
        assert_eq!(oracle_block_size(&Lattice::build_patch(1, 1.0, None).unwrap()), 4);
        let cut = Lattice::build_patch(1, 1.0, Some(Impurity { site: 4, alpha: -1.0 })).unwrap();
        assert_eq!(oracle_block_size(&cut), 4);
    }

    #[test]
    fn a_few_oracle_instances() {
        let e = oracle_errors(8, 2).unwrap();
        assert!(e.eigenvalue <= EIGENVALUE_TOL, "{e:?}");
        assert!(e.rdm <= RDM_TOL && e.concurrence <= CONCURRENCE_TOL, "{e:?}");
        assert_eq!(e.unconverged, 0);
    }

    #[test]
    fn check_lines() {
        assert_eq!(Check::new("x", true, "ok".into()).line(), "PASS x: ok");
        assert_eq!(Check::new("y", false, "bad".into()).line(), "FAIL y: bad");
    }
}
