//! Parameter sweeps over `lambda = h / J`: ground states, pair concurrences,
//! gaps, numerical `dC/dlambda`, peak location and impurity scans.

use crate::entanglement::concurrence_x_state;
use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianOperator;
use crate::lattice::{Impurity, Lattice};
use crate::linalg::Block;
use crate::rdm::reduced_density_matrix;
use crate::tracemin::{solve_from, EigenResult, IterationRecord, SolverConfig};

/// `start, start + step, ...` up to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl LambdaGrid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        let g = Self { start, stop, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda step must be positive, got {}", self.step)));
        }
        if !(self.start >= 0.0) || !(self.stop >= self.start) || !self.stop.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= start <= stop, got {}:{}",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    /// Points computed as `start + k * step`; `stop` is included when it lies
    /// within `1e-9` steps of the grid.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub shell_radius: usize,
    pub coupling: f64,
    pub impurity: Option<Impurity>,
    pub grid: LambdaGrid,
    pub pairs: Vec<(usize, usize)>,
    pub compute_gap: bool,
    pub warm_start: bool,
    pub solver: SolverConfig,
}

impl SweepSpec {
    pub fn new(shell_radius: usize, grid: LambdaGrid, pairs: Vec<(usize, usize)>) -> Self {
        Self {
            shell_radius,
            coupling: 1.0,
            impurity: None,
            grid,
            pairs,
            compute_gap: false,
            warm_start: true,
            solver: SolverConfig::default(),
        }
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::build_patch(self.shell_radius, self.coupling, self.impurity)
    }

    fn solver_config(&self) -> SolverConfig {
        let mut cfg = self.solver.clone();
        if self.compute_gap {
            cfg.n_wanted = cfg.n_wanted.max(2);
        }
        cfg
    }

    fn validate(&self, lattice: &Lattice) -> Result<()> {
        self.grid.validate()?;
        if !(self.coupling > 0.0) {
            return Err(Error::InvalidParameter(format!("coupling must be positive, got {}", self.coupling)));
        }
        let n = lattice.n_sites();
        for &(i, j) in &self.pairs {
            if i == j || i == 0 || j == 0 {
                return Err(Error::InvalidPair(i, j));
            }
            if i.max(j) > n {
                return Err(Error::SiteOutOfRange { site: i.max(j), n_sites: n });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub lambda: f64,
    pub pair: (usize, usize),
    pub concurrence: f64,
    pub eof: f64,
    pub energy: f64,
    pub gap: Option<f64>,
    pub dc_dlambda: Option<f64>,
    /// Impurity strength; zero for a clean lattice.
    pub alpha: f64,
    pub converged: bool,
}

/// Everything computed at one lambda, before splitting into per-pair records.
#[derive(Debug, Clone)]
pub struct PointReport {
    pub lambda: f64,
    pub energies: Vec<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub matvecs: usize,
    pub iterations: Vec<IterationRecord>,
}

impl PointReport {
    fn new(lambda: f64, res: &EigenResult) -> Self {
        Self {
            lambda,
            energies: res.eigenvalues.clone(),
            converged: res.converged,
            outer_iterations: res.outer_iterations,
            matvecs: res.matvecs,
            iterations: res.history.clone(),
        }
    }
}

fn solve_point(
    lattice: &Lattice,
    lambda: f64,
    coupling: f64,
    cfg: &SolverConfig,
    start: Option<&Block>,
) -> Result<EigenResult> {
    let op = HamiltonianOperator::new(lattice, lambda * coupling)?;
    solve_from(&op, cfg, start, &mut |_| {})
}

/// Ground state (and gap) at every grid point, then concurrence and
/// entanglement of formation for every pair.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    run_sweep_with(spec, &mut |_| {})
}

/// [`run_sweep`] reporting each finished grid point to `progress`.
pub fn run_sweep_with(spec: &SweepSpec, progress: &mut dyn FnMut(&PointReport)) -> Result<Vec<SweepRecord>> {
    let lattice = spec.lattice()?;
    spec.validate(&lattice)?;
    let cfg = spec.solver_config();
    let alpha = spec.impurity.map_or(0.0, |imp| imp.alpha);
    let mut warm: Option<Block> = None;
    let mut records = Vec::new();
    for lambda in spec.grid.points() {
        let res = solve_point(&lattice, lambda, spec.coupling, &cfg, warm.as_ref())?;
        progress(&PointReport::new(lambda, &res));
        let gap = if spec.compute_gap { res.gap().map(|g| g.max(0.0)) } else { None };
        for &(i, j) in &spec.pairs {
            // The lambda = 0 ground space is a doublet; the pair state of an
            // arbitrary member is not meaningful, and the answer is zero.
            let (concurrence, eof) = if lambda == 0.0 {
                (0.0, 0.0)
            } else {
                let rho = reduced_density_matrix(res.ground_state(), i, j)?;
                let c = concurrence_x_state(&rho)?;
                (c.concurrence, c.eof)
            };
            records.push(SweepRecord {
                lambda,
                pair: (i, j),
                concurrence,
                eof,
                energy: res.ground_energy(),
                gap,
                dc_dlambda: None,
                alpha,
                converged: res.converged,
            });
        }
        if spec.warm_start {
            warm = Some(res.block);
        }
    }
    Ok(records)
}

/// Energy gap per grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRecord {
    pub lambda: f64,
    pub e0: f64,
    pub e1: f64,
    pub gap: f64,
    pub converged: bool,
}

/// `E_1 - E_0` along the grid; the solver must be asked for two pairs.
pub fn gap_curve(spec: &SweepSpec) -> Result<Vec<GapRecord>> {
    gap_curve_with(spec, &mut |_| {})
}

pub fn gap_curve_with(spec: &SweepSpec, progress: &mut dyn FnMut(&PointReport)) -> Result<Vec<GapRecord>> {
    if spec.solver.n_wanted < 2 {
        return Err(Error::InvalidParameter("gap curves need n_wanted >= 2".into()));
    }
    let lattice = spec.lattice()?;
    spec.validate(&lattice)?;
    let mut warm: Option<Block> = None;
    let mut out = Vec::new();
    for lambda in spec.grid.points() {
        let res = solve_point(&lattice, lambda, spec.coupling, &spec.solver, warm.as_ref())?;
        progress(&PointReport::new(lambda, &res));
        let (e0, e1) = (res.eigenvalues[0], res.eigenvalues[1]);
        out.push(GapRecord { lambda, e0, e1, gap: (e1 - e0).max(0.0), converged: res.converged });
        if spec.warm_start {
            warm = Some(res.block);
        }
    }
    Ok(out)
}

fn check_uniform(xs: &[f64]) -> Result<f64> {
    let step = xs[1] - xs[0];
    if !(step > 0.0) {
        return Err(Error::NonUniformGrid);
    }
    for w in xs.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1.0) {
            return Err(Error::NonUniformGrid);
        }
    }
    Ok(step)
}

/// Central differences inside, one-sided differences at the ends.
pub fn derivative_curve(curve: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if curve.len() < 3 {
        return Err(Error::InvalidParameter(format!("derivative needs >= 3 points, got {}", curve.len())));
    }
    let xs: Vec<f64> = curve.iter().map(|p| p.0).collect();
    check_uniform(&xs)?;
    let n = curve.len();
    Ok((0..n)
        .map(|k| {
            let (a, b) = match k {
                0 => (0, 1),
                k if k == n - 1 => (n - 2, n - 1),
                k => (k - 1, k + 1),
            };
            (curve[k].0, (curve[b].1 - curve[a].1) / (curve[b].0 - curve[a].0))
        })
        .collect())
}

/// Grid maximum of a curve with its three-point parabolic refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub lambda: f64,
    pub value: f64,
    /// Vertex of the parabola through the maximum and its neighbours; equals
    /// the grid point at the ends of the curve.
    pub refined_lambda: f64,
    pub refined_value: f64,
}

pub fn find_peak(curve: &[(f64, f64)]) -> Option<Peak> {
    let (index, &(lambda, value)) =
        curve.iter().enumerate().filter(|(_, p)| p.1.is_finite()).max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    let (mut refined_lambda, mut refined_value) = (lambda, value);
    if index > 0 && index + 1 < curve.len() {
        let (a, c) = (curve[index - 1].1, curve[index + 1].1);
        let step = 0.5 * (curve[index + 1].0 - curve[index - 1].0);
        let curvature = a - 2.0 * value + c;
        if curvature < 0.0 {
            refined_lambda = lambda + step * (a - c) / (2.0 * curvature);
            refined_value = value - (a - c) * (a - c) / (8.0 * curvature);
        }
    }
    Some(Peak { index, lambda, value, refined_lambda, refined_value })
}

/// `(lambda, C)` of one pair, in grid order.
pub fn concurrence_curve(records: &[SweepRecord], pair: (usize, usize)) -> Vec<(f64, f64)> {
    records.iter().filter(|r| r.pair == pair).map(|r| (r.lambda, r.concurrence)).collect()
}

/// Fills `dc_dlambda` of every record from its pair's concurrence curve.
pub fn attach_derivatives(records: &mut [SweepRecord]) -> Result<()> {
    let mut keys: Vec<(u64, (usize, usize))> = records.iter().map(|r| (r.alpha.to_bits(), r.pair)).collect();
    keys.sort_unstable();
    keys.dedup();
    for (alpha_bits, pair) in keys {
        let idx: Vec<usize> =
            (0..records.len()).filter(|&k| records[k].pair == pair && records[k].alpha.to_bits() == alpha_bits).collect();
        let curve: Vec<(f64, f64)> = idx.iter().map(|&k| (records[k].lambda, records[k].concurrence)).collect();
        let d = derivative_curve(&curve)?;
        for (&k, (_, v)) in idx.iter().zip(d) {
            records[k].dc_dlambda = Some(v);
        }
    }
    Ok(())
}

/// Peak of `|dC/dlambda|` for one pair of a sweep.
pub fn derivative_peak(records: &[SweepRecord], pair: (usize, usize)) -> Result<Option<Peak>> {
    let d = derivative_curve(&concurrence_curve(records, pair))?;
    let abs: Vec<(f64, f64)> = d.into_iter().map(|(l, v)| (l, v.abs())).collect();
    Ok(find_peak(&abs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpurityGroup {
    pub alpha: f64,
    pub records: Vec<SweepRecord>,
}

/// One sweep per impurity strength at `site`; `alpha < -1` is rejected.
pub fn impurity_scan(base: &SweepSpec, site: usize, alphas: &[f64]) -> Result<Vec<ImpurityGroup>> {
    impurity_scan_with(base, site, alphas, &mut |_| {})
}

pub fn impurity_scan_with(
    base: &SweepSpec,
    site: usize,
    alphas: &[f64],
    progress: &mut dyn FnMut(&PointReport),
) -> Result<Vec<ImpurityGroup>> {
    if let Some(&a) = alphas.iter().find(|&&a| !(a >= -1.0) || !a.is_finite()) {
        return Err(Error::InvalidParameter(format!("impurity strength {a} below -1")));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let spec = SweepSpec { impurity: Some(Impurity { site, alpha }), ..base.clone() };
            Ok(ImpurityGroup { alpha, records: run_sweep_with(&spec, progress)? })
        })
        .collect()
}

/// Peak concurrence of `pair` for each impurity strength.
pub fn peaks_by_alpha(groups: &[ImpurityGroup], pair: (usize, usize)) -> Vec<(f64, Option<Peak>)> {
    groups.iter().map(|g| (g.alpha, find_peak(&concurrence_curve(&g.records, pair)))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seven_site(points: (f64, f64, f64), pairs: Vec<(usize, usize)>) -> SweepSpec {
        SweepSpec::new(1, LambdaGrid::new(points.0, points.1, points.2).unwrap(), pairs)
    }

    #[test]
    fn grid_points() {
        let g = LambdaGrid::new(2.5, 2.7, 0.01).unwrap();
        let p = g.points();
        assert_eq!(p.len(), 21);
        assert!((p[20] - 2.7).abs() < 1e-12);
        assert_eq!(LambdaGrid::new(1.0, 1.0, 0.1).unwrap().points(), vec![1.0]);
        assert_eq!(LambdaGrid::new(0.0, 6.0, 0.01).unwrap().points().len(), 601);
        assert!(LambdaGrid::new(0.0, 1.0, 0.0).is_err());
        assert!(LambdaGrid::new(1.0, 0.0, 0.1).is_err());
        assert!(LambdaGrid::new(-1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn derivative_of_constant_and_quadratic() {
        let flat: Vec<(f64, f64)> = (0..5).map(|k| (k as f64 * 0.1, 3.0)).collect();
        assert!(derivative_curve(&flat).unwrap().iter().all(|p| p.1 == 0.0));
        let quad: Vec<(f64, f64)> = (0..21).map(|k| k as f64 * 0.1).map(|x| (x, x * x)).collect();
        let d = derivative_curve(&quad).unwrap();
        assert!((d[10].1 - 2.0).abs() < 1e-12);
        assert!((d[0].1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn derivative_errors() {
        assert!(matches!(derivative_curve(&[(0.0, 0.0), (1.0, 1.0)]), Err(Error::InvalidParameter(_))));
        let bent = [(0.0, 0.0), (0.1, 1.0), (0.3, 2.0)];
        assert!(matches!(derivative_curve(&bent), Err(Error::NonUniformGrid)));
    }

    #[test]
    fn parabolic_refinement() {
        let curve: Vec<(f64, f64)> = (0..11).map(|k| k as f64 * 0.1).map(|x| (x, 1.0 - (x - 0.53).powi(2))).collect();
        let p = find_peak(&curve).unwrap();
        assert_eq!(p.index, 5);
        assert!((p.refined_lambda - 0.53).abs() < 1e-12);
        assert!((p.refined_value - 1.0).abs() < 1e-12);
        let edge = find_peak(&[(0.0, 2.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!((edge.index, edge.refined_lambda), (0, 0.0));
        assert!(find_peak(&[]).is_none());
    }

    #[test]
    fn zero_field_has_no_concurrence() {
        let spec = seven_site((0.0, 0.2, 0.1), vec![(1, 4), (1, 2), (2, 3)]);
        let recs = run_sweep(&spec).unwrap();
        assert_eq!(recs.len(), 9);
        for r in recs.iter().filter(|r| r.lambda == 0.0) {
            assert_eq!((r.concurrence, r.eof), (0.0, 0.0));
        }
        assert!(recs.iter().all(|r| r.converged));
    }

    #[test]
    fn single_spin_gap() {
        let mut spec = SweepSpec::new(0, LambdaGrid::new(1.0, 1.0, 1.0).unwrap(), vec![]);
        spec.solver.block_size = 2;
        spec.solver.n_wanted = 2;
        let g = gap_curve(&spec).unwrap();
        assert!((g[0].gap - 2.0).abs() < 1e-12);
        spec.solver.n_wanted = 1;
        assert!(gap_curve(&spec).is_err());
    }

    #[test]
    fn warm_and_cold_agree() {
        let mut spec = seven_site((2.0, 3.0, 0.25), vec![(1, 4), (1, 2)]);
        let warm = run_sweep(&spec).unwrap();
        spec.warm_start = false;
        let cold = run_sweep(&spec).unwrap();
        for (a, b) in warm.iter().zip(&cold) {
            assert!((a.concurrence - b.concurrence).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(run_sweep(&seven_site((1.0, 2.0, 0.5), vec![(1, 1)])).is_err());
        assert!(run_sweep(&seven_site((1.0, 2.0, 0.5), vec![(1, 8)])).is_err());
        let spec = seven_site((1.0, 2.0, 0.5), vec![(1, 4)]);
        assert!(impurity_scan(&spec, 4, &[0.0, -1.5]).is_err());
        assert!(impurity_scan(&spec, 9, &[0.0]).is_err());
    }

    #[test]
    fn derivatives_attached_per_pair() {
        let mut recs = run_sweep(&seven_site((1.0, 2.0, 0.25), vec![(1, 4), (1, 2)])).unwrap();
        attach_derivatives(&mut recs).unwrap();
        assert!(recs.iter().all(|r| r.dc_dlambda.is_some()));
        let d = derivative_curve(&concurrence_curve(&recs, (1, 2))).unwrap();
        let from_records: Vec<f64> = recs.iter().filter(|r| r.pair == (1, 2)).map(|r| r.dc_dlambda.unwrap()).collect();
        assert_eq!(d.iter().map(|p| p.1).collect::<Vec<_>>(), from_records);
    }
}
