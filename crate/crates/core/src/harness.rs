//! Experiment drivers: the manufactured-solution convergence study, ratio
//! figure data and stability diagnostics.
//!
//! The test problem is `u_t - Laplacian u = f` on `(-1, 1)^2` with exact solution
//! `u = (t^3 + 1) sin(pi x) sin(pi y)` and therefore
//! `f = (3 t^2 + 2 pi^2 (t^3 + 1)) sin(pi x) sin(pi y)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::integrator::{
    check_dissipation, check_l2_stability, wsbdf2_solve, DissipationCheck, SolveOptions,
    SpatialProblem, StabilityCheck,
};
use crate::mesh::{validate_mesh, Mesh};
use crate::ratio_bounds::{lk_constant, LkTrace, RatioThresholds};
use crate::spectral2d::{discrete_norm, NormKind, SpectralLaplacian};

/// Which family of time grids to use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshCase {
    Uniform,
    /// Alternating ratios 4 and 1/4.
    Case1,
    /// Constant ratio.
    Geometric(f64),
    /// Normalized uniform random steps.
    Random(u64),
}

impl MeshCase {
    pub fn build(&self, final_time: f64, n: usize) -> Result<Mesh> {
        match *self {
            Self::Uniform => Mesh::uniform(final_time, n),
            Self::Case1 => Mesh::case1(final_time, n),
            Self::Geometric(r) => Mesh::geometric(final_time, n, r),
            Self::Random(seed) => Mesh::random(final_time, n, seed),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Uniform => "uniform".into(),
            Self::Case1 => "case1".into(),
            Self::Geometric(r) => format!("geometric:{r}"),
            Self::Random(seed) => format!("random:{seed}"),
        }
    }
}

impl FromStr for MeshCase {
    type Err = Error;

    /// Accepts `uniform`, `case1`, `case2` (ratio 2), `case3` or `random`
    /// (seed 1), `geometric:R` and `random:SEED`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let parse_f = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad ratio '{a}'")))
        };
        let parse_u = |a: &str| {
            a.parse::<u64>()
                .map_err(|_| Error::InvalidArgument(format!("bad seed '{a}'")))
        };
        match (head, arg) {
            ("uniform", None) => Ok(Self::Uniform),
            ("case1", None) => Ok(Self::Case1),
            ("case2", None) => Ok(Self::Geometric(2.0)),
            ("case3", None) => Ok(Self::Random(1)),
            ("geometric", Some(a)) | ("case2", Some(a)) => Ok(Self::Geometric(parse_f(a)?)),
            ("random", None) => Ok(Self::Random(1)),
            ("random", Some(a)) | ("case3", Some(a)) => Ok(Self::Random(parse_u(a)?)),
            _ => invalid(format!("unknown mesh case '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub thetas: Vec<f64>,
    pub case: MeshCase,
    pub ns: Vec<usize>,
    pub final_time: f64,
    pub mx: usize,
    pub my: usize,
    pub norm: NormKind,
    /// Seeds expanded over a random mesh case; empty keeps the case's own seed.
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            thetas: vec![0.5, 0.75, 1.0],
            case: MeshCase::Case1,
            ns: vec![20, 40, 80, 160],
            final_time: 1.0,
            mx: 20,
            my: 20,
            norm: NormKind::ClenshawCurtis,
            seeds: Vec::new(),
            out_dir: None,
        }
    }
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| format!("cannot parse '{}'", v.trim()))
        })
        .collect()
}

impl ExperimentConfig {
    /// Parses a flat `key = value` file. Blank lines and `#` comments are
    /// ignored. Keys: `theta` (list), `case`, `N` (list), `T`, `Mx`, `My`,
    /// `seed` (list), `norm` (`cc|rms|max`), `out`. Unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key, as in the config file.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "theta" => self.thetas = parse_list(value)?,
            "case" => self.case = value.parse().map_err(|e: Error| e.to_string())?,
            "N" => self.ns = parse_list(value)?,
            "T" => self.final_time = value.parse().map_err(|_| format!("bad T '{value}'"))?,
            "Mx" => self.mx = value.parse().map_err(|_| format!("bad Mx '{value}'"))?,
            "My" => self.my = value.parse().map_err(|_| format!("bad My '{value}'"))?,
            "seed" => self.seeds = parse_list(value)?,
            "norm" => self.norm = value.parse().map_err(|e: Error| e.to_string())?,
            "out" => self.out_dir = Some(PathBuf::from(value)),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// The mesh cases to run: one per seed for a random case.
    pub fn cases(&self) -> Vec<MeshCase> {
        match self.case {
            MeshCase::Random(_) if !self.seeds.is_empty() => {
                self.seeds.iter().map(|s| MeshCase::Random(*s)).collect()
            }
            case => vec![case],
        }
    }

    /// A copy restricted to one mesh case.
    pub fn with_case(&self, case: MeshCase) -> Self {
        Self {
            case,
            seeds: Vec::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() || self.ns.is_empty() {
            return invalid("theta and N lists must be non-empty");
        }
        if self.ns.contains(&0) {
            return invalid("N values must be positive");
        }
        if self.case == MeshCase::Case1 && self.ns.iter().any(|n| n % 2 != 0) {
            return invalid("the alternating mesh needs even N");
        }
        if self.final_time.is_nan() || self.final_time <= 0.0 {
            return invalid("T must be positive");
        }
        if self.mx < 2 || self.my < 2 {
            return invalid("Mx and My must be at least 2");
        }
        Ok(())
    }
}

/// The manufactured solution on a spectral grid.
#[derive(Debug, Clone)]
pub struct ManufacturedProblem {
    pub op: SpectralLaplacian,
    shape: Vec<f64>,
    shape_full: Vec<f64>,
}

impl ManufacturedProblem {
    pub fn new(mx: usize, my: usize) -> Result<Self> {
        let op = SpectralLaplacian::new(mx, my)?;
        let profile = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
        let shape = op.sample_interior(profile);
        let shape_full = op.sample_full(profile);
        Ok(Self {
            op,
            shape,
            shape_full,
        })
    }

    pub fn time_factor(t: f64) -> f64 {
        t * t * t + 1.0
    }

    pub fn exact(&self, t: f64) -> Vec<f64> {
        let a = Self::time_factor(t);
        self.shape.iter().map(|s| a * s).collect()
    }

    pub fn exact_full(&self, t: f64) -> Vec<f64> {
        let a = Self::time_factor(t);
        self.shape_full.iter().map(|s| a * s).collect()
    }

    pub fn forcing(&self, t: f64) -> Vec<f64> {
        let a = 3.0 * t * t + 2.0 * PI * PI * Self::time_factor(t);
        self.shape.iter().map(|s| a * s).collect()
    }

    pub fn initial(&self) -> Vec<f64> {
        self.exact(0.0)
    }

    /// Norm of `u_h - u(t)` over the full grid, `u_h` given on interior nodes.
    pub fn error(&self, t: f64, interior: &[f64], kind: NormKind) -> f64 {
        let full = self.op.interior_to_full(interior);
        let diff: Vec<f64> = full
            .iter()
            .zip(self.exact_full(t))
            .map(|(a, b)| a - b)
            .collect();
        discrete_norm(&self.op.grid_x, &self.op.grid_y, &diff, kind)
    }

    /// Spatial error at a fixed time: solve `A w = -Laplacian u(t)` and compare with `u(t)`.
    pub fn spatial_error(&self, t: f64) -> Result<f64> {
        let a = 2.0 * PI * PI * Self::time_factor(t);
        let rhs: Vec<f64> = self.shape.iter().map(|s| a * s).collect();
        let w = self.op.solve_shifted(f64::MIN_POSITIVE, 1.0, &rhs)?;
        Ok(self.error(t, &w, NormKind::ClenshawCurtis))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCell {
    pub theta: f64,
    pub n: usize,
    /// Error in the configured norm.
    pub error: Option<f64>,
    pub all_errors: Option<NormErrors>,
    /// `log2(e(N/2) / e(N))`, when the half-size run exists.
    pub order: Option<f64>,
    pub stability: Option<StabilityCheck>,
    pub max_ratio: f64,
    pub ratio_violations: usize,
    pub runtime_secs: f64,
    pub failure: Option<String>,
}

/// Final-time error in each supported norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormErrors {
    pub cc: f64,
    pub rms: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub case: MeshCase,
    pub norm: NormKind,
    pub cells: Vec<ConvergenceCell>,
}

/// Rate cells print "-" when the error quotient is within this band of 1.
pub const FLAT_RATE_BAND: f64 = 0.05;

impl ConvergenceReport {
    pub fn cell(&self, theta: f64, n: usize) -> Option<&ConvergenceCell> {
        self.cells.iter().find(|c| c.theta == theta && c.n == n)
    }

    pub fn thetas(&self) -> Vec<f64> {
        let mut t: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !t.contains(&c.theta) {
                t.push(c.theta);
            }
        }
        t
    }

    pub fn ns(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = Vec::new();
        for c in &self.cells {
            if !ns.contains(&c.n) {
                ns.push(c.n);
            }
        }
        ns
    }

    fn rate_text(&self, cell: &ConvergenceCell) -> String {
        let Some(order) = cell.order else {
            return String::new();
        };
        if (2f64.powf(order) - 1.0).abs() <= FLAT_RATE_BAND {
            "-".into()
        } else {
            format!("{order:.4}")
        }
    }

    /// Aligned table, one error and one rate column per theta.
    pub fn table(&self) -> String {
        let thetas = self.thetas();
        let mut s = String::new();
        let _ = writeln!(s, "{} (norm: {})", self.case.label(), self.norm);
        let _ = write!(s, "{:>6}", "N");
        for t in &thetas {
            let _ = write!(s, "  {:>12}  {:>7}", format!("theta={t}"), "Rate");
        }
        s.push('\n');
        for n in self.ns() {
            let _ = write!(s, "{n:>6}");
            for t in &thetas {
                match self.cell(*t, n) {
                    Some(c) => {
                        let err = match (c.error, &c.failure) {
                            (Some(e), _) => format!("{e:.4e}"),
                            (None, Some(_)) => "failed".into(),
                            _ => String::new(),
                        };
                        let _ = write!(s, "  {err:>12}  {:>7}", self.rate_text(c));
                    }
                    None => {
                        let _ = write!(s, "  {:>12}  {:>7}", "", "");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "case,theta,N,error,rate,cc_error,rms_error,max_error,l2_bound_slack,max_ratio,ratio_violations,runtime_s,failure"
        )?;
        for c in &self.cells {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.case.label(),
                c.theta,
                c.n,
                opt(c.error),
                opt(c.order),
                opt(c.all_errors.map(|e| e.cc)),
                opt(c.all_errors.map(|e| e.rms)),
                opt(c.all_errors.map(|e| e.max)),
                opt(c.stability.map(|s| s.min_slack)),
                c.max_ratio,
                c.ratio_violations,
                c.runtime_secs,
                c.failure.clone().unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// Wall clock, absent on bare wasm where `Instant::now` panics.
fn clock() -> Option<Instant> {
    if cfg!(all(target_arch = "wasm32", target_os = "unknown")) {
        None
    } else {
        Some(Instant::now())
    }
}

/// Maps over independent sweep cells, in parallel when the feature is on.
fn map_cells<T, F>(jobs: &[(f64, usize)], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64, usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(|(t, n)| f(*t, *n)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(|(t, n)| f(*t, *n)).collect()
    }
}

fn solve_cell(
    problem: &ManufacturedProblem,
    cfg: &ExperimentConfig,
    theta: f64,
    n: usize,
) -> ConvergenceCell {
    let start = clock();
    let mut cell = ConvergenceCell {
        theta,
        n,
        error: None,
        all_errors: None,
        order: None,
        stability: None,
        max_ratio: 0.0,
        ratio_violations: 0,
        runtime_secs: 0.0,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let mesh = cfg.case.build(cfg.final_time, n)?;
        let report = validate_mesh(&mesh, theta);
        cell.max_ratio = report.max_ratio;
        cell.ratio_violations = report.violating_indices.len();
        let trace = wsbdf2_solve(
            &problem.op,
            &mesh,
            theta,
            &problem.initial(),
            |t| problem.forcing(t),
            SolveOptions { keep_states: false },
        )?;
        let t = mesh.final_time();
        let state = trace.final_state();
        let all = NormErrors {
            cc: problem.error(t, state, NormKind::ClenshawCurtis),
            rms: problem.error(t, state, NormKind::Rms),
            max: problem.error(t, state, NormKind::Max),
        };
        cell.error = Some(match cfg.norm {
            NormKind::ClenshawCurtis => all.cc,
            NormKind::Rms => all.rms,
            NormKind::Max => all.max,
        });
        cell.all_errors = Some(all);
        let samples: Vec<Vec<f64>> = mesh.levels().iter().map(|t| problem.forcing(*t)).collect();
        cell.stability = Some(check_l2_stability(&trace, &problem.op, &samples, theta)?);
        Ok(())
    })();
    if let Err(e) = outcome {
        cell.failure = Some(e.to_string());
    }
    cell.runtime_secs = start.map_or(0.0, |s| s.elapsed().as_secs_f64());
    cell
}

/// Runs every `(theta, N)` cell and fills in the rates. Cell failures are
/// recorded, not propagated.
pub fn run_example(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let problem = ManufacturedProblem::new(cfg.mx, cfg.my)?;
    let jobs: Vec<(f64, usize)> = cfg
        .thetas
        .iter()
        .flat_map(|t| cfg.ns.iter().map(move |n| (*t, *n)))
        .collect();
    let mut cells: Vec<ConvergenceCell> =
        map_cells(&jobs, |theta, n| solve_cell(&problem, cfg, theta, n));
    let lookup: Vec<(f64, usize, Option<f64>)> =
        cells.iter().map(|c| (c.theta, c.n, c.error)).collect();
    for cell in &mut cells {
        if cell.n % 2 != 0 {
            continue;
        }
        let half = lookup
            .iter()
            .find(|(t, n, _)| *t == cell.theta && *n == cell.n / 2);
        if let (Some((_, _, Some(coarse))), Some(fine)) = (half, cell.error) {
            if *coarse > 0.0 && fine > 0.0 {
                cell.order = Some((coarse / fine).log2());
            }
        }
    }
    Ok(ConvergenceReport {
        case: cfg.case,
        norm: cfg.norm,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioFigures {
    pub thresholds: Vec<RatioThresholds>,
    pub traces: Vec<LkTrace>,
}

impl RatioFigures {
    /// `theta,r_p,r_s`, with `inf` for the unbounded rows.
    pub fn write_thresholds_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "theta,r_p,r_s")?;
        for row in &self.thresholds {
            writeln!(out, "{},{},{}", row.theta, row.r_p, row.r_s)?;
        }
        Ok(())
    }

    pub fn write_trace_csv<W: std::io::Write>(trace: &LkTrace, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,l_k")?;
        for (k, l) in trace.values.iter().enumerate() {
            writeln!(out, "{},{l}", k + 1)?;
        }
        Ok(())
    }
}

/// Evenly spaced theta grid on `[1/2, 1]` with `samples + 1` points.
pub fn theta_grid(samples: usize) -> Vec<f64> {
    (0..=samples)
        .map(|i| 0.5 + 0.5 * i as f64 / samples.max(1) as f64)
        .collect()
}

/// Threshold curves over `thetas` and constant-ratio `l_k` traces for each `(theta, r)` probe.
pub fn run_ratio_figures(
    thetas: &[f64],
    probes: &[(f64, f64)],
    steps: usize,
) -> Result<RatioFigures> {
    let thresholds = thetas
        .iter()
        .map(|t| RatioThresholds::new(*t))
        .collect::<Result<_>>()?;
    let traces = probes
        .iter()
        .map(|(theta, r)| lk_constant(*theta, *r, steps))
        .collect();
    Ok(RatioFigures { thresholds, traces })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub theta: f64,
    pub mesh: String,
    pub n: usize,
    pub ratio_violations: usize,
    /// Heat flow with `f = 0`.
    pub dissipation: Option<DissipationCheck>,
    /// Manufactured forced problem.
    pub stability: Option<StabilityCheck>,
    pub failure: Option<String>,
}

impl DiagnosticRow {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
            && self.dissipation.is_some_and(|d| d.passed)
            && self.stability.is_some_and(|s| s.passed)
    }
}

/// Tolerance on relative energy growth in [`run_diagnostics`].
pub const DISSIPATION_TOL: f64 = 1e-12;

/// Runs the free heat flow (energy) and the forced problem (L2 bound) for
/// every `(theta, N)` in the config.
pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<Vec<DiagnosticRow>> {
    cfg.validate()?;
    let problem = ManufacturedProblem::new(cfg.mx, cfg.my)?;
    let jobs: Vec<(f64, usize)> = cfg
        .thetas
        .iter()
        .flat_map(|t| cfg.ns.iter().map(move |n| (*t, *n)))
        .collect();
    let rows = map_cells(&jobs, |theta, n| {
        let mut row = DiagnosticRow {
            theta,
            mesh: cfg.case.label(),
            n,
            ratio_violations: 0,
            dissipation: None,
            stability: None,
            failure: None,
        };
        let outcome = (|| -> Result<()> {
            let mesh = cfg.case.build(cfg.final_time, n)?;
            row.ratio_violations = validate_mesh(&mesh, theta).violating_indices.len();
            let zero = vec![0.0; problem.op.dof_count()];
            let free = wsbdf2_solve(
                &problem.op,
                &mesh,
                theta,
                &problem.initial(),
                |_| zero.clone(),
                SolveOptions { keep_states: false },
            )?;
            row.dissipation = Some(check_dissipation(&free.energy, DISSIPATION_TOL));
            let forced = wsbdf2_solve(
                &problem.op,
                &mesh,
                theta,
                &problem.initial(),
                |t| problem.forcing(t),
                SolveOptions { keep_states: false },
            )?;
            let samples: Vec<Vec<f64>> =
                mesh.levels().iter().map(|t| problem.forcing(*t)).collect();
            row.stability = Some(check_l2_stability(&forced, &problem.op, &samples, theta)?);
            Ok(())
        })();
        if let Err(e) = outcome {
            row.failure = Some(e.to_string());
        }
        row
    });
    Ok(rows)
}

pub fn write_diagnostics_csv<W: std::io::Write>(
    rows: &[DiagnosticRow],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "theta,mesh,N,ratio_violations,energy_growth,l2_slack,l2_doc_slack,passed,failure"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.theta,
            r.mesh,
            r.n,
            r.ratio_violations,
            r.dissipation
                .map(|d| d.worst_violation.to_string())
                .unwrap_or_default(),
            r.stability
                .map(|d| d.min_slack.to_string())
                .unwrap_or_default(),
            r.stability
                .map(|d| d.min_doc_slack.to_string())
                .unwrap_or_default(),
            r.passed(),
            r.failure.clone().unwrap_or_default()
        )?;
    }
    Ok(())
}

pub fn diagnostics_table(rows: &[DiagnosticRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>6} {:>14} {:>6} {:>10} {:>14} {:>14} {:>6}",
        "theta", "mesh", "N", "r>r_s", "energy_growth", "l2_slack", "pass"
    );
    for r in rows {
        let growth = r
            .dissipation
            .map(|d| format!("{:.3e}", d.worst_violation))
            .unwrap_or_else(|| "-".into());
        let slack = r
            .stability
            .map(|d| format!("{:.3e}", d.min_slack))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:>6} {:>14} {:>6} {:>10} {:>14} {:>14} {:>6}",
            r.theta,
            r.mesh,
            r.n,
            r.ratio_violations,
            growth,
            slack,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_case_parsing() {
        assert_eq!("case1".parse::<MeshCase>().unwrap(), MeshCase::Case1);
        assert_eq!(
            "case2".parse::<MeshCase>().unwrap(),
            MeshCase::Geometric(2.0)
        );
        assert_eq!("random:7".parse::<MeshCase>().unwrap(), MeshCase::Random(7));
        assert_eq!(
            "geometric:1.5".parse::<MeshCase>().unwrap(),
            MeshCase::Geometric(1.5)
        );
        assert!("case4".parse::<MeshCase>().is_err());
        assert!("random:x".parse::<MeshCase>().is_err());
    }

    #[test]
    fn config_file() {
        let cfg = ExperimentConfig::parse(
            "# sweep\ntheta = 0.5, 1\ncase = random:3\nN = 10,20\nMx = 8 # small\nMy = 6\nnorm = rms\n",
        )
        .unwrap();
        assert_eq!(cfg.thetas, vec![0.5, 1.0]);
        assert_eq!(cfg.case, MeshCase::Random(3));
        assert_eq!(cfg.ns, vec![10, 20]);
        assert_eq!((cfg.mx, cfg.my), (8, 6));
        assert_eq!(cfg.norm, NormKind::Rms);
        assert!(cfg.cases() == vec![MeshCase::Random(3)]);

        let cfg = ExperimentConfig::parse("case = random\nseed = 1,2,3\n").unwrap();
        assert_eq!(
            cfg.cases(),
            vec![
                MeshCase::Random(1),
                MeshCase::Random(2),
                MeshCase::Random(3)
            ]
        );
        assert!(cfg.with_case(MeshCase::Random(2)).seeds.is_empty());

        let err = ExperimentConfig::parse("theta = 1\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        assert!(ExperimentConfig::parse("N = 5\n").is_err());
        assert!(ExperimentConfig::parse("theta =\n").is_err());
    }

    #[test]
    fn small_convergence_run() {
        let cfg = ExperimentConfig {
            mx: 8,
            my: 8,
            ns: vec![10, 20],
            thetas: vec![1.0],
            ..Default::default()
        };
        let report = run_example(&cfg).unwrap();
        assert_eq!(report.cells.len(), 2);
        assert!(report.cell(1.0, 10).unwrap().order.is_none());
        let order = report.cell(1.0, 20).unwrap().order.unwrap();
        assert!(order > 1.5, "{order}");
        let table = report.table();
        assert!(table.contains("theta=1"));
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn flat_rates_print_dash() {
        let cfg = ExperimentConfig {
            mx: 8,
            my: 8,
            ns: vec![10, 20],
            thetas: vec![1.0],
            case: MeshCase::Geometric(2.0),
            ..Default::default()
        };
        let report = run_example(&cfg).unwrap();
        let line = report.table().lines().last().unwrap().to_string();
        assert!(line.trim_end().ends_with('-'), "{line}");
    }

    #[test]
    fn ratio_figure_rows() {
        let figs = run_ratio_figures(&[0.5, 1.0], &[(1.0, 4.8646)], 2000).unwrap();
        assert!(figs.thresholds[0].r_s.is_infinite());
        assert!(figs.thresholds[0].r_p.is_infinite());
        assert!((figs.thresholds[1].r_p - 4.8284).abs() < 1e-4);
        assert!((figs.thresholds[1].r_s - 4.8645).abs() < 1e-4);
        let mut buf = Vec::new();
        figs.write_thresholds_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("0.5,inf,inf"));
        assert_eq!(theta_grid(4), vec![0.5, 0.625, 0.75, 0.875, 1.0]);
    }

    #[test]
    fn diagnostics_pass_on_case1() {
        let cfg = ExperimentConfig {
            mx: 8,
            my: 8,
            ns: vec![20],
            thetas: vec![0.5, 1.0],
            ..Default::default()
        };
        let rows = run_diagnostics(&cfg).unwrap();
        assert!(
            rows.iter().all(DiagnosticRow::passed),
            "{}",
            diagnostics_table(&rows)
        );
    }
}
