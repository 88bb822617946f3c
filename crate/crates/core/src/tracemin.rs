//! Block trace-minimization eigensolver for the lowest eigenpairs of a
//! symmetric operator.
//!
//! Each outer iteration performs a Rayleigh-Ritz step on the current block
//! `X` (orthonormalize through the spectral decomposition of `X^T X`, then
//! diagonalize the projected operator) and subtracts a correction `D` obtained
//! from the projected system
//!
//! `(I - P) A (I - P) D = (I - P) A Xbar`,  `P = Xbar Xbar^T`,
//!
//! solved inexactly by conjugate gradients in `Range(P)^perp`. The iteration
//! needs a positive definite `A`, so the operator is shifted by `sigma` and
//! the shift is removed from the reported eigenvalues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, column_dots, dot, norm, subtract_columns, Block, LinearOperator, Matrix};

/// How the positive-definiteness shift is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShiftStrategy {
    /// `|Gershgorin lower bound| + 1`, fixed for the whole solve.
    Gershgorin,
    /// Starts from the operator's tightest known spectral lower bound and
    /// tightens it to `-(theta_0 - |r_0|) + margin` once the lowest Ritz pair
    /// certifies a lower bound. Falls back to Gershgorin after any CG
    /// breakdown.
    Adaptive { margin: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub block_size: usize,
    pub n_wanted: usize,
    /// Target for `|A x - theta x| / max(1, |theta|)`.
    pub outer_tol: f64,
    /// Relative residual reduction of each inner CG solve.
    pub inner_rel_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub seed: u64,
    pub shift: ShiftStrategy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            block_size: 4,
            n_wanted: 1,
            outer_tol: 1e-10,
            inner_rel_tol: 1e-2,
            max_outer: 1000,
            max_inner: 500,
            seed: 0x7261_6365,
            shift: ShiftStrategy::Adaptive { margin: 0.5 },
        }
    }
}

impl SolverConfig {
    pub fn with_wanted(n_wanted: usize) -> Self {
        Self { n_wanted, ..Self::default() }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_wanted == 0 || self.n_wanted > self.block_size || self.block_size > dim {
            return Err(Error::InvalidParameter(format!(
                "need 0 < n_wanted ({}) <= block_size ({}) <= dim ({dim})",
                self.n_wanted, self.block_size
            )));
        }
        for (name, tol) in [("outer_tol", self.outer_tol), ("inner_rel_tol", self.inner_rel_tol)] {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {tol}")));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidParameter("iteration limits must be positive".into()));
        }
        match self.shift {
            ShiftStrategy::Adaptive { margin } if !(margin > 0.0) => {
                Err(Error::InvalidParameter(format!("adaptive shift margin must be positive, got {margin}")))
            }
            ShiftStrategy::Fixed(s) if !s.is_finite() => Err(Error::InvalidParameter("shift must be finite".into())),
            _ => Ok(()),
        }
    }
}

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub outer_iter: usize,
    /// `Tr(Xbar^T A Xbar)` of the unshifted operator.
    pub trace: f64,
    pub max_residual: f64,
    pub shift: f64,
    pub inner_iterations: usize,
    pub projection_leak: f64,
}

impl IterationRecord {
    pub fn csv_line(&self) -> String {
        format!("{},{:.15e},{:.6e}", self.outer_iter, self.trace, self.max_residual)
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Ascending, length `n_wanted`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal, `n_wanted` columns.
    pub eigenvectors: Block,
    pub residual_norms: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Final full Ritz block (all `block_size` columns), for warm starts.
    pub block: Block,
    pub history: Vec<IterationRecord>,
    /// Outer iterations where the trace rose by more than `1e-10`.
    pub trace_increases: usize,
    pub cg_breakdowns: usize,
    /// Largest `|Xbar^T r| / |r|` seen inside CG before re-projection.
    pub max_projection_leak: f64,
    pub matvecs: usize,
}

impl EigenResult {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_state(&self) -> &[f64] {
        self.eigenvectors.col(0)
    }

    /// `E_1 - E_0`, if two eigenpairs were requested.
    pub fn gap(&self) -> Option<f64> {
        (self.eigenvalues.len() >= 2).then(|| self.eigenvalues[1] - self.eigenvalues[0])
    }
}

/// `A + sigma I`.
pub struct Shifted<'a, O: ?Sized> {
    pub inner: &'a O,
    pub sigma: f64,
}

impl<O: LinearOperator + ?Sized> LinearOperator for Shifted<'_, O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, input: &Block, out: &mut Block) -> Result<()> {
        self.inner.apply(input, out)?;
        for (o, x) in out.as_mut_slice().iter_mut().zip(input.as_slice()) {
            *o += self.sigma * x;
        }
        Ok(())
    }

    fn gershgorin_lower_bound(&self) -> f64 {
        self.inner.gershgorin_lower_bound() + self.sigma
    }

    fn spectral_lower_bound(&self) -> f64 {
        self.inner.spectral_lower_bound() + self.sigma
    }
}

/// Result of the Rayleigh-Ritz step on a block.
#[derive(Debug, Clone)]
pub struct RitzSection {
    /// `X V Omega^{-1/2}`: orthonormal basis of the block's span.
    pub q_tilde: Block,
    /// Ritz values, ascending.
    pub values: Vec<f64>,
    /// Eigenvectors of `Q~^T A Q~`.
    pub w: Matrix,
    /// `Q~ W`: orthonormal Ritz vectors with `Xbar^T A Xbar = diag(values)`.
    pub x_bar: Block,
    /// `A Xbar`.
    pub a_x_bar: Block,
    /// Columns replaced by fresh random vectors because the block lost rank.
    pub rank_repairs: usize,
    pub matvecs: usize,
}

const RANK_TOL: f64 = 1e-12;

/// Relative residual of the lowest Ritz pair below which `theta_0 - |r_0|`
/// is trusted as a lower bound on the spectrum.
const ADAPTIVE_CERTIFY: f64 = 1e-2;

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Eigenvalues ascending, eigenvectors in columns.
pub fn symmetric_eigen_small(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.rows();
    let mut a = m.symmetrized();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|ij| a[ij] * a[ij]).sum();
        let scale: f64 = (0..n).map(|i| a[(i, i)] * a[(i, i)]).sum::<f64>() + off;
        if off <= 1e-32 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)]));
    let values = order.iter().map(|&k| a[(k, k)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new)] = v[(i, old)];
        }
    }
    (values, vectors)
}

/// Replaces columns that are numerically dependent on earlier ones with
/// random vectors. Returns the number replaced.
fn repair_rank<R: Rng>(x: &mut Block, rng: &mut R) -> usize {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut repaired = 0;
    for j in 0..x.cols() {
        let original = norm(x.col(j));
        let mut v = x.col(j).to_vec();
        for b in &basis {
            let c = dot(b, &v);
            axpy(-c, b, &mut v);
        }
        let mut len = norm(&v);
        if !(len > 1e-6 * original) || original == 0.0 {
            repaired += 1;
            loop {
                v = (0..x.rows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                x.col_mut(j).copy_from_slice(&v);
                for b in &basis {
                    let c = dot(b, &v);
                    axpy(-c, b, &mut v);
                }
                len = norm(&v);
                if len > 1e-6 {
                    break;
                }
            }
        }
        v.iter_mut().for_each(|e| *e /= len);
        basis.push(v);
    }
    repaired
}

/// Rayleigh-Ritz step: `G = X^T X = V Omega V^T`, `Q~ = X V Omega^{-1/2}`,
/// `Q~^T A Q~ = W Lambda W^T`, `Xbar = Q~ W`.
pub fn ritz_section<O: LinearOperator + ?Sized, R: Rng>(op: &O, x: &Block, rng: &mut R) -> Result<RitzSection> {
    if x.rows() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), found: x.rows() });
    }
    let p = x.cols();
    let mut x = x.clone();
    let mut rank_repairs = 0;
    let (v, omega) = loop {
        let g = x.gram(&x);
        let (omega, v) = symmetric_eigen_small(&g);
        let max = omega.last().copied().unwrap_or(0.0);
        if !max.is_finite() || omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("non-finite entries in iteration block".into()));
        }
        if omega[0] > RANK_TOL * max && max > 0.0 {
            break (v, omega);
        }
        let fixed = repair_rank(&mut x, rng);
        rank_repairs += fixed.max(1);
        if fixed == 0 {
            // Gram-Schmidt saw no dependence at its threshold; orthonormalize
            // outright so the next decomposition is well conditioned.
            let _ = repair_rank(&mut x, rng);
        }
    };
    let mut scale = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            scale[(i, j)] = v[(i, j)] / omega[j].sqrt();
        }
    }
    let q_tilde = x.mul_small(&scale);
    let mut a_q = Block::zeros(x.rows(), p);
    op.apply(&q_tilde, &mut a_q)?;
    let projected = q_tilde.gram(&a_q);
    let (values, w) = symmetric_eigen_small(&projected);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Ritz values".into()));
    }
    let x_bar = q_tilde.mul_small(&w);
    let a_x_bar = a_q.mul_small(&w);
    Ok(RitzSection { q_tilde, values, w, x_bar, a_x_bar, rank_repairs, matvecs: p })
}

/// Outcome of the inexact correction solve.
#[derive(Debug, Clone)]
pub struct Correction {
    pub d: Block,
    pub inner_iterations: usize,
    pub breakdown: bool,
    pub max_projection_leak: f64,
}

/// `v -= Xbar (Xbar^T v)`; returns `max_k |xbar_k . v|` before the update.
fn project_out(x_bar: &Block, v: &mut [f64]) -> f64 {
    let coeffs = column_dots(x_bar, v);
    subtract_columns(x_bar, &coeffs, v);
    coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
}

/// Solves `(I - P) A (I - P) D = (I - P) A Xbar` column by column with CG,
/// to relative residual `inner_rel_tol`. `a_x_bar` is `A Xbar` for the same
/// (shifted) operator. Columns listed in `skip` get `D = 0`.
pub fn correction_step<O: LinearOperator + ?Sized>(
    op: &O,
    x_bar: &Block,
    a_x_bar: &Block,
    inner_rel_tol: f64,
    max_inner: usize,
    skip: &[bool],
) -> Result<Correction> {
    let (n, p) = (x_bar.rows(), x_bar.cols());
    let mut d = Block::zeros(n, p);
    let mut total_iters = 0;
    let mut breakdown = false;
    let mut max_leak = 0.0f64;
    let mut dir = Block::zeros(n, 1);
    let mut q = Block::zeros(n, 1);
    for col in 0..p {
        if skip.get(col).copied().unwrap_or(false) {
            continue;
        }
        let mut r = a_x_bar.col(col).to_vec();
        // The right-hand side is a small difference of large vectors; a
        // second pass removes what the first pass's rounding leaves behind.
        project_out(x_bar, &mut r);
        project_out(x_bar, &mut r);
        let mut rr = dot(&r, &r);
        let r0 = rr.sqrt();
        if r0 == 0.0 {
            continue;
        }
        dir.col_mut(0).copy_from_slice(&r);
        let sol = d.col_mut(col);
        for _ in 0..max_inner {
            if rr.sqrt() <= inner_rel_tol * r0 {
                break;
            }
            op.apply(&dir, &mut q)?;
            total_iters += 1;
            project_out(x_bar, q.col_mut(0));
            let curvature = dot(dir.col(0), q.col(0));
            if !(curvature > 0.0) {
                breakdown = true;
                break;
            }
            let alpha = rr / curvature;
            axpy(alpha, dir.col(0), sol);
            axpy(-alpha, q.col(0), &mut r);
            let leaked = project_out(x_bar, &mut r);
            let rr_new = dot(&r, &r);
            if rr_new > 0.0 {
                max_leak = max_leak.max(leaked / rr_new.sqrt());
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for (di, ri) in dir.col_mut(0).iter_mut().zip(&r) {
                *di = ri + beta * *di;
            }
        }
    }
    if d.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite correction".into()));
    }
    Ok(Correction { d, inner_iterations: total_iters, breakdown, max_projection_leak: max_leak })
}

/// Lowest `cfg.n_wanted` eigenpairs of `op` from a seeded random start.
pub fn solve<O: LinearOperator + ?Sized>(op: &O, cfg: &SolverConfig) -> Result<EigenResult> {
    solve_from(op, cfg, None, &mut |_| {})
}

/// Like [`solve`], optionally warm-started from `start` (extra columns are
/// dropped, missing ones filled with seeded random vectors) and reporting
/// every outer iteration to `log`.
pub fn solve_from<O: LinearOperator + ?Sized>(
    op: &O,
    cfg: &SolverConfig,
    start: Option<&Block>,
    log: &mut dyn FnMut(&IterationRecord),
) -> Result<EigenResult> {
    let dim = op.dim();
    cfg.validate(dim)?;
    let p = cfg.block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = Block::random(dim, p, &mut rng);
    if let Some(s) = start {
        if s.rows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: s.rows() });
        }
        for j in 0..s.cols().min(p) {
            x.col_mut(j).copy_from_slice(s.col(j));
        }
    }

    let gershgorin = op.gershgorin_lower_bound().abs() + 1.0;
    let initial_adaptive = op.spectral_lower_bound().abs() + 1.0;
    let mut adaptive_enabled = matches!(cfg.shift, ShiftStrategy::Adaptive { .. });
    let mut history = Vec::new();
    let mut trace_increases = 0;
    let mut cg_breakdowns = 0;
    let mut max_leak = 0.0f64;
    let mut matvecs = 0;
    let mut prev_trace = f64::INFINITY;
    let mut last: Option<(RitzSection, Vec<f64>)> = None;

    for outer in 1..=cfg.max_outer {
        let mut section = ritz_section(op, &x, &mut rng)?;
        matvecs += section.matvecs;
        let ortho = section.x_bar.gram(&section.x_bar).sub(&Matrix::identity(p)).max_abs();
        if ortho > 1e-12 {
            section = ritz_section(op, &section.x_bar, &mut rng)?;
            matvecs += section.matvecs;
        }
        let residuals: Vec<f64> = (0..p)
            .map(|k| {
                let mut r = section.a_x_bar.col(k).to_vec();
                axpy(-section.values[k], section.x_bar.col(k), &mut r);
                norm(&r)
            })
            .collect();
        let relative: Vec<f64> =
            residuals.iter().zip(&section.values).map(|(r, v)| r / v.abs().max(1.0)).collect();
        let trace: f64 = section.values.iter().sum();
        if trace > prev_trace + 1e-10 {
            trace_increases += 1;
        }
        prev_trace = trace;
        let max_residual = relative[..cfg.n_wanted].iter().copied().fold(0.0, f64::max);
        let converged = max_residual <= cfg.outer_tol;

        let sigma = match cfg.shift {
            ShiftStrategy::Fixed(s) => s,
            ShiftStrategy::Gershgorin => gershgorin,
            ShiftStrategy::Adaptive { margin } => {
                if !adaptive_enabled {
                    gershgorin
                } else if relative[0] <= ADAPTIVE_CERTIFY {
                    initial_adaptive.min(-(section.values[0] - residuals[0]) + margin)
                } else {
                    initial_adaptive
                }
            }
        };

        if converged || outer == cfg.max_outer {
            let record = IterationRecord {
                outer_iter: outer,
                trace,
                max_residual,
                shift: sigma,
                inner_iterations: 0,
                projection_leak: 0.0,
            };
            log(&record);
            history.push(record);
            last = Some((section, relative));
            break;
        }

        let shifted = Shifted { inner: op, sigma };
        let mut a_x_bar = section.a_x_bar.clone();
        for k in 0..p {
            axpy(sigma, section.x_bar.col(k), a_x_bar.col_mut(k));
        }
        // Converged wanted columns are already at their fixed point.
        let skip: Vec<bool> = (0..p).map(|k| k < cfg.n_wanted && relative[k] <= 0.1 * cfg.outer_tol).collect();
        let corr = correction_step(&shifted, &section.x_bar, &a_x_bar, cfg.inner_rel_tol, cfg.max_inner, &skip)?;
        matvecs += corr.inner_iterations;
        max_leak = max_leak.max(corr.max_projection_leak);
        if corr.breakdown {
            cg_breakdowns += 1;
            adaptive_enabled = false;
        }
        let record = IterationRecord {
            outer_iter: outer,
            trace,
            max_residual,
            shift: sigma,
            inner_iterations: corr.inner_iterations,
            projection_leak: corr.max_projection_leak,
        };
        log(&record);
        history.push(record);

        x = section.x_bar;
        for k in 0..p {
            axpy(-1.0, corr.d.col(k), x.col_mut(k));
        }
    }

    let (section, relative) = last.expect("at least one outer iteration");
    let n = cfg.n_wanted;
    let converged = relative[..n].iter().all(|r| *r <= cfg.outer_tol);
    let mut eigenvectors = section.x_bar.clone();
    eigenvectors.truncate_cols(n);
    for k in 0..n {
        canonical_sign(eigenvectors.col_mut(k));
    }
    Ok(EigenResult {
        eigenvalues: section.values[..n].to_vec(),
        eigenvectors,
        residual_norms: relative[..n].to_vec(),
        outer_iterations: history.len(),
        converged,
        block: section.x_bar,
        history,
        trace_increases,
        cg_breakdowns,
        max_projection_leak: max_leak,
        matvecs,
    })
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    for &e in v.iter() {
        if e.abs() > best.abs() + 1e-12 {
            best = e;
        }
    }
    if best < 0.0 {
        v.iter_mut().for_each(|e| *e = -*e);
    }
}
