//! Command-line front end: argument parsing, preset runs, CSV output
//! and gnuplot script generation.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    attach_derivatives, concurrence_curve, derivative_peak, find_peak, gap_curve_with, impurity_scan_with,
    run_sweep_with, GapRecord, LambdaGrid, PointReport, SweepRecord, SweepSpec,
};
use crate::error::{Error, Result};
use crate::lattice::{Impurity, Lattice};
use crate::tracemin::{ShiftStrategy, SolverConfig};
use crate::verify::{oracle_suite, property_suite};

/// Environment variable naming the directory for relative output paths.
pub const OUT_DIR_ENV: &str = "TRIMIN_OUT_DIR";

pub const CSV_HEADER: &str = "lambda,site_i,site_j,concurrence,eof,gap,dC_dlambda,alpha,converged";

pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const NUMERICAL: u8 = 2;
    pub const VERIFICATION: u8 = 3;
}

#[derive(Parser, Debug, Clone, PartialEq)]
#[command(name = "trimin", version, about = "Transverse-field Ising model on triangular patches: ground states, gaps and pair entanglement")]
pub struct Cli {
    #[command(flatten)]
    pub solver: SolverArgs,

    /// Directory for relative output paths.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,

    /// Per-point progress and per-iteration convergence lines on stderr.
    #[arg(long, global = true)]
    pub progress: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShiftKind {
    Adaptive,
    Gershgorin,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct SolverArgs {
    #[arg(long, global = true, default_value_t = SolverConfig::default().seed)]
    pub seed: u64,
    /// Relative eigen-residual target.
    #[arg(long, global = true, default_value_t = SolverConfig::default().outer_tol)]
    pub outer_tol: f64,
    /// Relative residual reduction of each inner CG solve.
    #[arg(long, global = true, default_value_t = SolverConfig::default().inner_rel_tol)]
    pub inner_tol: f64,
    #[arg(long, global = true, default_value_t = SolverConfig::default().block_size)]
    pub block_size: usize,
    #[arg(long, global = true, default_value_t = SolverConfig::default().max_outer)]
    pub max_outer: usize,
    #[arg(long, global = true, default_value_t = SolverConfig::default().max_inner)]
    pub max_inner: usize,
    #[arg(long, global = true, value_enum, default_value_t = ShiftKind::Adaptive)]
    pub shift: ShiftKind,
    /// Distance kept below the certified ground-energy bound by the adaptive shift.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub shift_margin: f64,
}

impl SolverArgs {
    pub fn config(&self, n_wanted: usize) -> SolverConfig {
        SolverConfig {
            block_size: self.block_size,
            n_wanted,
            outer_tol: self.outer_tol,
            inner_rel_tol: self.inner_tol,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            seed: self.seed,
            shift: match self.shift {
                ShiftKind::Adaptive => ShiftStrategy::Adaptive { margin: self.shift_margin },
                ShiftKind::Gershgorin => ShiftStrategy::Gershgorin,
            },
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct OutputArgs {
    /// CSV file; relative paths resolve against the output directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long)]
    pub plot: bool,
    /// Solve every lambda from a random start instead of the previous block.
    #[arg(long)]
    pub cold: bool,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct SweepArgs {
    /// Number of shells around the center site (1: 7 sites, 2: 19 sites).
    #[arg(long, default_value_t = 1)]
    pub shell: usize,
    /// Site pair `i,j`; repeat for several pairs.
    #[arg(long = "pair", value_parser = parse_pair, required = true)]
    pub pairs: Vec<(usize, usize)>,
    /// `start:stop:step` in units of h/J.
    #[arg(long, value_parser = parse_grid, default_value = "0:6:0.01")]
    pub lambda: LambdaGrid,
    /// Impurity site.
    #[arg(long, requires = "alpha")]
    pub site: Option<usize>,
    /// Impurity strength; bonds at the impurity become (1 + alpha) J.
    #[arg(long, requires = "site", allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Also compute E1 - E0.
    #[arg(long)]
    pub gap: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct GapArgs {
    #[arg(long, default_value_t = 1)]
    pub shell: usize,
    #[arg(long, value_parser = parse_grid, default_value = "0:6:0.01")]
    pub lambda: LambdaGrid,
    #[arg(long, requires = "alpha")]
    pub site: Option<usize>,
    #[arg(long, requires = "site", allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct ImpurityArgs {
    #[arg(long, default_value_t = 1)]
    pub shell: usize,
    /// Impurity site.
    #[arg(long)]
    pub site: usize,
    /// Comma-separated impurity strengths.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1", allow_negative_numbers = true)]
    pub alpha: Vec<f64>,
    /// Site pairs; defaults to every nearest-neighbor pair.
    #[arg(long = "pair", value_parser = parse_pair)]
    pub pairs: Vec<(usize, usize)>,
    #[arg(long, value_parser = parse_grid, default_value = "0:6:0.01")]
    pub lambda: LambdaGrid,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, PartialEq)]
pub struct VerifyArgs {
    /// Random instances compared against the dense oracle.
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Concurrence and entanglement of formation along a lambda grid.
    Sweep(SweepArgs),
    /// Sweep plus dC/dlambda and its peak.
    Derivative(SweepArgs),
    /// Gap between the two lowest levels along a lambda grid.
    Gap(GapArgs),
    /// One sweep per impurity strength.
    Impurity(ImpurityArgs),
    /// Oracle and property suites; exits 3 if any check fails.
    Verify(VerifyArgs),
    /// Preset runs `fig1` to `fig8`, each writing one or two CSV files.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long)]
        plot: bool,
    },
    /// Print site coordinates and bonds of a patch.
    Lattice {
        #[arg(long, default_value_t = 1)]
        shell: usize,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `i,j`, got `{s}`"))?;
    let i: usize = a.trim().parse().map_err(|e| format!("site `{a}`: {e}"))?;
    let j: usize = b.trim().parse().map_err(|e| format!("site `{b}`: {e}"))?;
    if i == 0 || j == 0 || i == j {
        return Err(format!("pair ({i},{j}) needs two distinct 1-based sites"));
    }
    Ok((i, j))
}

fn parse_grid(s: &str) -> std::result::Result<LambdaGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    let grid = match nums[..] {
        [x] => LambdaGrid { start: x, stop: x, step: 1.0 },
        [a, b, s] => LambdaGrid { start: a, stop: b, step: s },
        _ => return Err(format!("expected `start:stop:step`, got `{s}`")),
    };
    grid.validate().map_err(|e| e.to_string())?;
    Ok(grid)
}

fn grid_arg(g: &LambdaGrid) -> String {
    format!("{}:{}:{}", g.start, g.stop, g.step)
}

impl Cli {
    /// Arguments that parse back to `self`.
    pub fn to_args(&self) -> Vec<String> {
        let mut a = vec!["trimin".to_string()];
        let s = &self.solver;
        a.extend([
            format!("--seed={}", s.seed),
            format!("--outer-tol={}", s.outer_tol),
            format!("--inner-tol={}", s.inner_tol),
            format!("--block-size={}", s.block_size),
            format!("--max-outer={}", s.max_outer),
            format!("--max-inner={}", s.max_inner),
            format!("--shift={}", s.shift.to_possible_value().expect("named").get_name()),
            format!("--shift-margin={}", s.shift_margin),
        ]);
        if let Some(dir) = &self.out_dir {
            a.push(format!("--out-dir={}", dir.display()));
        }
        if self.progress {
            a.push("--progress".into());
        }
        fn output(a: &mut Vec<String>, o: &OutputArgs) {
            if let Some(p) = &o.output {
                a.push(format!("--output={}", p.display()));
            }
            if o.plot {
                a.push("--plot".into());
            }
            if o.cold {
                a.push("--cold".into());
            }
        }
        fn impurity(a: &mut Vec<String>, site: Option<usize>, alpha: Option<f64>) {
            if let (Some(s), Some(al)) = (site, alpha) {
                a.push(format!("--site={s}"));
                a.push(format!("--alpha={al}"));
            }
        }
        match &self.command {
            Command::Sweep(x) | Command::Derivative(x) => {
                a.push(if matches!(self.command, Command::Sweep(_)) { "sweep" } else { "derivative" }.into());
                a.push(format!("--shell={}", x.shell));
                a.extend(x.pairs.iter().map(|(i, j)| format!("--pair={i},{j}")));
                a.push(format!("--lambda={}", grid_arg(&x.lambda)));
                impurity(&mut a, x.site, x.alpha);
                if x.gap {
                    a.push("--gap".into());
                }
                output(&mut a, &x.output);
            }
            Command::Gap(x) => {
                a.push("gap".into());
                a.push(format!("--shell={}", x.shell));
                a.push(format!("--lambda={}", grid_arg(&x.lambda)));
                impurity(&mut a, x.site, x.alpha);
                output(&mut a, &x.output);
            }
            Command::Impurity(x) => {
                a.push("impurity".into());
                a.push(format!("--shell={}", x.shell));
                a.push(format!("--site={}", x.site));
                let alphas: Vec<String> = x.alpha.iter().map(f64::to_string).collect();
                a.push(format!("--alpha={}", alphas.join(",")));
                a.extend(x.pairs.iter().map(|(i, j)| format!("--pair={i},{j}")));
                a.push(format!("--lambda={}", grid_arg(&x.lambda)));
                output(&mut a, &x.output);
            }
            Command::Verify(x) => {
                a.push("verify".into());
                a.push(format!("--instances={}", x.instances));
            }
            Command::Reproduce { figure, plot } => {
                a.push("reproduce".into());
                a.push(figure.to_possible_value().expect("named").get_name().to_string());
                if *plot {
                    a.push("--plot".into());
                }
            }
            Command::Lattice { shell } => {
                a.push("lattice".into());
                a.push(format!("--shell={shell}"));
            }
        }
        a
    }
}

/// One CSV row; absent quantities print as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub lambda: f64,
    pub pair: Option<(usize, usize)>,
    pub concurrence: Option<f64>,
    pub eof: Option<f64>,
    pub gap: Option<f64>,
    pub dc_dlambda: Option<f64>,
    pub alpha: f64,
    pub converged: bool,
}

impl From<&SweepRecord> for CsvRow {
    fn from(r: &SweepRecord) -> Self {
        Self {
            lambda: r.lambda,
            pair: Some(r.pair),
            concurrence: Some(r.concurrence),
            eof: Some(r.eof),
            gap: r.gap,
            dc_dlambda: r.dc_dlambda,
            alpha: r.alpha,
            converged: r.converged,
        }
    }
}

impl CsvRow {
    pub fn from_gap(r: &GapRecord, alpha: f64) -> Self {
        Self {
            lambda: r.lambda,
            pair: None,
            concurrence: None,
            eof: None,
            gap: Some(r.gap),
            dc_dlambda: None,
            alpha,
            converged: r.converged,
        }
    }
}

/// `x` with 12 significant digits, trailing zeros removed.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..12).contains(&exp) {
        trim(&format!("{:.*}", (11 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

/// The full CSV text, rows sorted by `(alpha, lambda, i, j)`.
pub fn csv_text(rows: &[CsvRow]) -> String {
    let mut sorted: Vec<&CsvRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.alpha
            .total_cmp(&b.alpha)
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.pair.unwrap_or((0, 0)).cmp(&b.pair.unwrap_or((0, 0))))
    });
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        let (i, j) = r.pair.map_or((String::new(), String::new()), |(i, j)| (i.to_string(), j.to_string()));
        let _ = writeln!(
            out,
            "{},{i},{j},{},{},{},{},{},{}",
            format_sig(r.lambda),
            opt(r.concurrence),
            opt(r.eof),
            opt(r.gap),
            opt(r.dc_dlambda),
            format_sig(r.alpha),
            r.converged
        );
    }
    out
}

/// Writes [`csv_text`] to `path`; a partially written file is removed.
pub fn write_csv(rows: &[CsvRow], path: &Path) -> Result<()> {
    let text = csv_text(rows);
    let result = fs::File::create(path).and_then(|mut f| {
        f.write_all(text.as_bytes())?;
        f.sync_all()
    });
    if let Err(e) = result {
        let _ = fs::remove_file(path);
        return Err(e.into());
    }
    Ok(())
}

struct Curve {
    title: String,
    points: Vec<(f64, f64)>,
}

fn field(cols: &[&str], k: usize) -> Option<f64> {
    cols.get(k).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok())
}

/// A gnuplot script plotting every curve of a CSV written by [`write_csv`],
/// with the data embedded. Derivative panels mark the `|dC/dlambda|` peak.
pub fn emit_plot_script(csv_path: &Path) -> Result<String> {
    let text = fs::read_to_string(csv_path)?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidParameter(format!("{} does not start with the sweep header", csv_path.display())));
    }
    // (alpha, pair) -> rows, in file order.
    let mut groups: Vec<(String, Vec<Vec<&str>>)> = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        let key = match (cols.get(1), cols.get(2)) {
            (Some(i), Some(j)) if !i.is_empty() => format!("({i},{j}) alpha={}", cols.get(7).unwrap_or(&"0")),
            _ => format!("alpha={}", cols.get(7).unwrap_or(&"0")),
        };
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(cols),
            None => groups.push((key, vec![cols])),
        }
    }

    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script for {}", csv_path.display());
    let _ = writeln!(s, "set terminal pngcairo size 900,1200");
    let _ = writeln!(s, "set output '{stem}.png'");
    let _ = writeln!(s, "set xlabel 'lambda = h/J'");
    let _ = writeln!(s, "set key outside right");
    if groups.is_empty() {
        let _ = writeln!(s, "# warning: {} has no data rows", csv_path.display());
        let _ = writeln!(s, "set ylabel 'concurrence'");
        let _ = writeln!(s, "plot [0:1] NaN notitle");
        return Ok(s);
    }

    let panels: [(usize, &str, &str); 3] = [(3, "concurrence", "C"), (6, "dC/dlambda", "dC"), (5, "gap E1 - E0", "gap")];
    let mut blocks = 0;
    let mut plots = Vec::new();
    for (col, label, short) in panels {
        let curves: Vec<Curve> = groups
            .iter()
            .map(|(key, rows)| Curve {
                title: format!("{short} {key}"),
                points: rows.iter().filter_map(|r| Some((field(r, 0)?, field(r, col)?))).collect(),
            })
            .filter(|c| !c.points.is_empty())
            .collect();
        if curves.is_empty() {
            continue;
        }
        let mut terms = Vec::new();
        for c in &curves {
            let name = format!("$d{blocks}");
            blocks += 1;
            let _ = writeln!(s, "{name} << EOD");
            for (x, y) in &c.points {
                let _ = writeln!(s, "{x} {y}");
            }
            let _ = writeln!(s, "EOD");
            terms.push(format!("{name} using 1:2 with lines title '{}'", c.title));
            if col == 6 {
                let abs: Vec<(f64, f64)> = c.points.iter().map(|&(x, y)| (x, y.abs())).collect();
                if let Some(p) = find_peak(&abs) {
                    let (x, y) = c.points[p.index];
                    let marker = format!("$d{blocks}");
                    blocks += 1;
                    let _ = writeln!(s, "{marker} << EOD\n{x} {y}\nEOD");
                    terms.push(format!("{marker} using 1:2 with points pt 7 title 'peak {x}'"));
                }
            }
        }
        plots.push((label, terms));
    }
    let _ = writeln!(s, "set multiplot layout {},1", plots.len());
    for (label, terms) in plots {
        let _ = writeln!(s, "set ylabel '{label}'");
        let _ = writeln!(s, "plot {}", terms.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    Ok(s)
}

/// What a command runs before writing its CSV.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Sweep(SweepSpec),
    Derivative(SweepSpec),
    Gap(SweepSpec),
    Impurity { spec: SweepSpec, site: usize, alphas: Vec<f64> },
}

/// A job and the file it writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedJob {
    pub file: PathBuf,
    pub job: Job,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Output written, but some grid points did not converge.
    Unconverged(usize),
    VerificationFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => exit::SUCCESS,
            Outcome::Unconverged(_) => exit::NUMERICAL,
            Outcome::VerificationFailed => exit::VERIFICATION,
        }
    }
}

pub fn error_exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::NotNormalized(_) | Error::InvalidDensity(_) | Error::NotSymmetric(_) => {
            exit::NUMERICAL
        }
        _ => exit::USAGE,
    }
}

fn impurity_of(site: Option<usize>, alpha: Option<f64>) -> Option<Impurity> {
    site.zip(alpha).map(|(site, alpha)| Impurity { site, alpha })
}

fn grid(start: f64, stop: f64, step: f64) -> LambdaGrid {
    LambdaGrid { start, stop, step }
}

fn spec(shell: usize, g: LambdaGrid, pairs: &[(usize, usize)], solver: &SolverConfig) -> SweepSpec {
    SweepSpec { solver: solver.clone(), ..SweepSpec::new(shell, g, pairs.to_vec()) }
}

/// Preset jobs for `reproduce`. Seven-site grids use step 0.01; the
/// 19-site grids are coarser except around the features being located.
pub fn figure_jobs(figure: Figure, solver: &SolverConfig) -> Vec<NamedJob> {
    let full = grid(0.0, 6.0, 0.01);
    let coarse = grid(0.0, 6.0, 0.1);
    let seven_pairs = [(1, 2), (1, 4)];
    let nineteen_pairs = [(1, 2), (2, 5), (5, 6), (5, 10)];
    let named = |file: &str, job: Job| NamedJob { file: PathBuf::from(file), job };
    let impurity = |shell: usize, site: usize, g: LambdaGrid, pairs: &[(usize, usize)]| Job::Impurity {
        spec: spec(shell, g, pairs, solver),
        site,
        alphas: vec![0.0, 0.5, 1.0],
    };
    match figure {
        Figure::Fig1 => vec![
            named("fig1_7site.csv", Job::Sweep(spec(1, full, &[(1, 4)], solver))),
            named("fig1_19site.csv", Job::Sweep(spec(2, grid(0.0, 6.0, 0.05), &[(5, 10)], solver))),
        ],
        Figure::Fig2 => vec![
            named("fig2_7site.csv", Job::Sweep(spec(1, full, &seven_pairs, solver))),
            named("fig2_19site.csv", Job::Sweep(spec(2, grid(0.0, 6.0, 0.05), &nineteen_pairs, solver))),
        ],
        Figure::Fig3 => vec![
            named("fig3_7site.csv", Job::Derivative(spec(1, full, &[(1, 4)], solver))),
            named("fig3_19site.csv", Job::Derivative(spec(2, grid(2.5, 3.5, 0.01), &[(5, 10)], solver))),
        ],
        Figure::Fig4 => {
            let gap_solver = SolverConfig { n_wanted: 2, ..solver.clone() };
            vec![
                named("fig4_7site.csv", Job::Gap(spec(1, grid(0.0, 6.0, 0.05), &[], &gap_solver))),
                named("fig4_19site.csv", Job::Gap(spec(2, coarse, &[], &gap_solver))),
            ]
        }
        Figure::Fig5 => vec![named("fig5.csv", impurity(1, 4, full, &seven_pairs))],
        Figure::Fig6 => vec![named("fig6.csv", impurity(2, 10, coarse, &nineteen_pairs))],
        Figure::Fig7 => vec![named("fig7.csv", impurity(1, 1, full, &[(1, 2), (1, 4), (2, 4), (4, 5), (4, 7)]))],
        Figure::Fig8 => vec![named("fig8.csv", impurity(2, 5, coarse, &nineteen_pairs))],
    }
}

fn command_job(cmd: &Command, solver: &SolverArgs) -> Result<Option<(NamedJob, bool)>> {
    let out = |o: &OutputArgs, default: &str| o.output.clone().unwrap_or_else(|| PathBuf::from(default));
    Ok(Some(match cmd {
        Command::Sweep(a) | Command::Derivative(a) => {
            let mut s = spec(a.shell, a.lambda, &a.pairs, &solver.config(1));
            s.impurity = impurity_of(a.site, a.alpha);
            s.compute_gap = a.gap;
            s.warm_start = !a.output.cold;
            let (job, name) = if matches!(cmd, Command::Sweep(_)) {
                (Job::Sweep(s), "sweep.csv")
            } else {
                (Job::Derivative(s), "derivative.csv")
            };
            (NamedJob { file: out(&a.output, name), job }, a.output.plot)
        }
        Command::Gap(a) => {
            let mut s = spec(a.shell, a.lambda, &[], &solver.config(2));
            s.impurity = impurity_of(a.site, a.alpha);
            s.warm_start = !a.output.cold;
            (NamedJob { file: out(&a.output, "gap.csv"), job: Job::Gap(s) }, a.output.plot)
        }
        Command::Impurity(a) => {
            let pairs = if a.pairs.is_empty() {
                Lattice::build_patch(a.shell, 1.0, None)?.nearest_pairs()
            } else {
                a.pairs.clone()
            };
            let mut s = spec(a.shell, a.lambda, &pairs, &solver.config(1));
            s.warm_start = !a.output.cold;
            let job = Job::Impurity { spec: s, site: a.site, alphas: a.alpha.clone() };
            (NamedJob { file: out(&a.output, "impurity.csv"), job }, a.output.plot)
        }
        _ => return Ok(None),
    }))
}

/// Output path: absolute paths as given, others under `out_dir` (or the
/// current directory).
pub fn resolve_output(out_dir: Option<&Path>, file: &Path) -> PathBuf {
    if file.is_absolute() {
        return file.to_path_buf();
    }
    out_dir.map_or_else(|| file.to_path_buf(), |d| d.join(file))
}

fn report_progress(enabled: bool) -> impl FnMut(&PointReport) {
    move |p: &PointReport| {
        if !enabled {
            return;
        }
        for it in &p.iterations {
            eprintln!("{}", it.csv_line());
        }
        let energies: Vec<String> = p.energies.iter().map(|e| format!("{e:.12}")).collect();
        eprintln!(
            "lambda={} energies=[{}] outer={} matvecs={}{}",
            format_sig(p.lambda),
            energies.join(", "),
            p.outer_iterations,
            p.matvecs,
            if p.converged { "" } else { " NOT CONVERGED" }
        );
    }
}

/// Runs one job, writes its CSV (and plot script), prints a summary.
pub fn run_job(job: &NamedJob, out_dir: Option<&Path>, plot: bool, progress: bool) -> Result<Outcome> {
    let mut on_point = report_progress(progress);
    let mut summary = Vec::new();
    let rows: Vec<CsvRow> = match &job.job {
        Job::Sweep(spec) => {
            let records = run_sweep_with(spec, &mut on_point)?;
            for &pair in &spec.pairs {
                if let Some(p) = find_peak(&concurrence_curve(&records, pair)) {
                    summary.push(format!(
                        "pair ({},{}): max C = {} at lambda = {} (refined {})",
                        pair.0,
                        pair.1,
                        format_sig(p.value),
                        format_sig(p.lambda),
                        format_sig(p.refined_lambda)
                    ));
                }
            }
            records.iter().map(CsvRow::from).collect()
        }
        Job::Derivative(spec) => {
            let mut records = run_sweep_with(spec, &mut on_point)?;
            attach_derivatives(&mut records)?;
            for &pair in &spec.pairs {
                if let Some(p) = derivative_peak(&records, pair)? {
                    summary.push(format!(
                        "pair ({},{}): max |dC/dlambda| = {} at lambda = {} (refined {})",
                        pair.0,
                        pair.1,
                        format_sig(p.value),
                        format_sig(p.lambda),
                        format_sig(p.refined_lambda)
                    ));
                }
            }
            records.iter().map(CsvRow::from).collect()
        }
        Job::Gap(spec) => {
            let alpha = spec.impurity.map_or(0.0, |i| i.alpha);
            let gaps = gap_curve_with(spec, &mut on_point)?;
            gaps.iter().map(|g| CsvRow::from_gap(g, alpha)).collect()
        }
        Job::Impurity { spec, site, alphas } => {
            let groups = impurity_scan_with(spec, *site, alphas, &mut on_point)?;
            for g in &groups {
                for &pair in &spec.pairs {
                    if let Some(p) = find_peak(&concurrence_curve(&g.records, pair)) {
                        summary.push(format!(
                            "alpha {} pair ({},{}): max C = {} at lambda = {}",
                            format_sig(g.alpha),
                            pair.0,
                            pair.1,
                            format_sig(p.value),
                            format_sig(p.lambda)
                        ));
                    }
                }
            }
            groups.iter().flat_map(|g| g.records.iter().map(CsvRow::from)).collect()
        }
    };
    let path = resolve_output(out_dir, &job.file);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_csv(&rows, &path)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    for line in summary {
        println!("  {line}");
    }
    if plot {
        let script = path.with_extension("gp");
        fs::write(&script, emit_plot_script(&path)?)?;
        println!("wrote {}", script.display());
    }
    let unconverged = rows.iter().filter(|r| !r.converged).count();
    if unconverged > 0 {
        eprintln!("warning: {unconverged} rows did not converge");
        return Ok(Outcome::Unconverged(unconverged));
    }
    Ok(Outcome::Success)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let out_dir = cli.out_dir.as_deref();
    if let Some((job, plot)) = command_job(&cli.command, &cli.solver)? {
        return run_job(&job, out_dir, plot, cli.progress);
    }
    match &cli.command {
        Command::Verify(v) => {
            let mut checks = oracle_suite(v.instances, cli.solver.seed)?;
            checks.extend(property_suite(cli.solver.seed)?);
            for c in &checks {
                println!("{}", c.line());
            }
            Ok(if checks.iter().all(|c| c.passed) { Outcome::Success } else { Outcome::VerificationFailed })
        }
        Command::Reproduce { figure, plot } => {
            let mut worst = Outcome::Success;
            for job in figure_jobs(*figure, &cli.solver.config(1)) {
                let outcome = run_job(&job, out_dir, *plot, cli.progress)?;
                if outcome != Outcome::Success {
                    worst = outcome;
                }
            }
            Ok(worst)
        }
        Command::Lattice { shell } => {
            print!("{}", Lattice::build_patch(*shell, 1.0, None)?.summary());
            Ok(Outcome::Success)
        }
        _ => unreachable!("handled as a job"),
    }
}
