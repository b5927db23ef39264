use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wsbdf2::harness::{
    diagnostics_table, run_diagnostics, run_example, run_ratio_figures, theta_grid,
    write_diagnostics_csv, ConvergenceReport, ExperimentConfig, ManufacturedProblem, MeshCase,
    RatioFigures,
};
use wsbdf2::integrator::{check_l2_stability, SolveOptions};
use wsbdf2::kernels::{build_doc_explicit, build_doc_recursive, check_orthogonality, KernelTable};
use wsbdf2::mesh::validate_mesh;
use wsbdf2::ratio_bounds::cubic_relative_residual;
use wsbdf2::wsbdf2_solve;

#[derive(Parser)]
#[command(name = "wsbdf2", version, about = "Variable-step WSBDF2 experiments")]
struct Cli {
    /// Flat `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step-ratio thresholds over theta and l_k traces.
    Ratios {
        #[command(flatten)]
        common: Common,
        /// Number of theta intervals on [1/2, 1] when --theta is not given.
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Constant-ratio l_k probe as THETA:R (repeatable).
        #[arg(long, value_name = "THETA:R")]
        probe: Vec<String>,
        /// Length of each l_k trace.
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
    },
    /// Mesh, kernel and DOC tables with algebraic checks.
    Kernels {
        #[command(flatten)]
        common: Common,
    },
    /// One run of the manufactured heat problem (first theta, first N).
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Convergence table over theta and N.
    Converge {
        #[command(flatten)]
        common: Common,
    },
    /// Energy dissipation and L2 stability diagnostics.
    Diagnose {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Default)]
struct Common {
    /// Comma-separated theta values.
    #[arg(long, value_name = "LIST")]
    theta: Option<String>,
    /// uniform, case1, case2, case3, geometric:R or random[:SEED].
    #[arg(long)]
    case: Option<String>,
    /// Comma-separated step counts.
    #[arg(long = "N", value_name = "LIST")]
    n: Option<String>,
    /// Final time.
    #[arg(long = "T", value_name = "T")]
    t: Option<String>,
    #[arg(long = "Mx")]
    mx: Option<String>,
    #[arg(long = "My")]
    my: Option<String>,
    /// Comma-separated seeds for random meshes.
    #[arg(long, value_name = "LIST")]
    seed: Option<String>,
    /// cc, rms or max.
    #[arg(long)]
    norm: Option<String>,
    /// Directory for CSV output.
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let pairs = [
            ("theta", &self.theta),
            ("case", &self.case),
            ("N", &self.n),
            ("T", &self.t),
            ("Mx", &self.mx),
            ("My", &self.my),
            ("seed", &self.seed),
            ("norm", &self.norm),
            ("out", &self.out),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

/// Tracks pass/fail lines for the exit code.
#[derive(Default)]
struct Checks {
    failed: usize,
    total: usize,
}

impl Checks {
    fn record(&mut self, name: &str, ok: bool, detail: impl std::fmt::Display) {
        self.total += 1;
        if !ok {
            self.failed += 1;
        }
        println!("[{}] {name}: {detail}", if ok { "ok" } else { "FAIL" });
    }

    fn finish(&self) -> ExitCode {
        println!(
            "{} of {} checks passed",
            self.total - self.failed,
            self.total
        );
        if self.failed == 0 {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }
    }
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn load_config(path: Option<&Path>, common: &Common) -> AnyResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::parse(&fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    for (key, value) in common.overrides() {
        cfg.set(key, value).map_err(|e| format!("--{key}: {e}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(out: &Option<PathBuf>, name: &str) -> AnyResult<Option<BufWriter<File>>> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Some(BufWriter::new(File::create(dir.join(name))?)))
        }
        None => Ok(None),
    }
}

fn file_tag(case: &MeshCase) -> String {
    case.label().replace(':', "_")
}

fn ratios(
    common: &Common,
    config: Option<&Path>,
    samples: usize,
    probes: &[String],
    steps: usize,
) -> AnyResult<ExitCode> {
    let cfg = load_config(config, common)?;
    let thetas = if common.theta.is_some() {
        cfg.thetas.clone()
    } else {
        theta_grid(samples)
    };
    let probes: Vec<(f64, f64)> = if probes.is_empty() {
        vec![(1.0, 4.8645), (1.0, 4.8646)]
    } else {
        probes
            .iter()
            .map(|p| {
                let (a, b) = p
                    .split_once(':')
                    .ok_or_else(|| format!("probe '{p}' is not THETA:R"))?;
                Ok((a.trim().parse::<f64>()?, b.trim().parse::<f64>()?))
            })
            .collect::<AnyResult<_>>()?
    };
    let figs: RatioFigures = run_ratio_figures(&thetas, &probes, steps)?;
    let mut checks = Checks::default();
    println!("{:>8} {:>14} {:>14}", "theta", "r_p", "r_s");
    for row in &figs.thresholds {
        println!("{:>8.4} {:>14.10} {:>14.10}", row.theta, row.r_p, row.r_s);
    }
    let worst = figs
        .thresholds
        .iter()
        .filter(|r| r.r_s.is_finite())
        .map(|r| cubic_relative_residual(r.theta, r.r_s))
        .fold(0.0, f64::max);
    checks.record("cubic residual", worst < 1e-10, format!("max {worst:.2e}"));
    let ordered = figs
        .thresholds
        .iter()
        .all(|r| r.r_p <= r.r_s || (r.r_p.is_infinite() && r.r_s.is_infinite()));
    checks.record("r_p <= r_s", ordered, "every row");
    for trace in &figs.traces {
        let r = trace.ratios.first().copied().unwrap_or(f64::NAN);
        match trace.first_nonpositive() {
            Some(k) => println!(
                "theta = {}, r = {r}: l_k first nonpositive at k = {k}",
                trace.theta
            ),
            None => println!(
                "theta = {}, r = {r}: l_k > 0 for k <= {} (min {:.4e})",
                trace.theta,
                trace.values.len(),
                trace.min()
            ),
        }
    }
    if let Some(w) = create(&cfg.out_dir, "ratio_sweep.csv")? {
        figs.write_thresholds_csv(w)?;
        for trace in &figs.traces {
            let r = trace.ratios.first().copied().unwrap_or(f64::NAN);
            if let Some(w) = create(&cfg.out_dir, &format!("lk_theta{}_r{}.csv", trace.theta, r))? {
                RatioFigures::write_trace_csv(trace, w)?;
            }
        }
    }
    Ok(checks.finish())
}

fn kernels(common: &Common, config: Option<&Path>) -> AnyResult<ExitCode> {
    let cfg = load_config(config, common)?;
    let mut checks = Checks::default();
    for case in cfg.cases() {
        for &n in &cfg.ns {
            let mesh = case.build(cfg.final_time, n)?;
            let tag = format!("{}_N{n}", file_tag(&case));
            if let Some(w) = create(&cfg.out_dir, &format!("mesh_{tag}.csv"))? {
                mesh.write_csv(w)?;
            }
            for &theta in &cfg.thetas {
                let label = format!("{} N={n} theta={theta}", case.label());
                let report = validate_mesh(&mesh, theta);
                if !report.is_clean() {
                    log::warn!(
                        "{label}: {} ratios above r_s = {:.4} (max {:.4})",
                        report.violating_indices.len(),
                        report.r_s_used,
                        report.max_ratio
                    );
                }
                let table = KernelTable::build(&mesh, theta);
                let doc = match build_doc_recursive(&table) {
                    Ok(d) => d,
                    Err(e) => {
                        checks.record(&format!("{label} DOC"), false, e);
                        continue;
                    }
                };
                let explicit = build_doc_explicit(&table, &mesh);
                let orth = check_orthogonality(&table, &doc, 1e-12);
                checks.record(
                    &format!("{label} orthogonality"),
                    orth.passed,
                    format!("{:.2e}", orth.max_residual),
                );
                let mut agree = 0.0_f64;
                let mut rows = 0.0_f64;
                for i in 1..=n {
                    for k in 1..=i {
                        let (a, b) = (doc.get(i, k), explicit.get(i, k));
                        let scale = a.abs().max(b.abs());
                        if scale > 0.0 {
                            agree = agree.max((a - b).abs() / scale);
                        }
                    }
                    rows = rows.max((doc.row_sum(i) - mesh.tau(i)).abs() / mesh.tau(i));
                }
                checks.record(
                    &format!("{label} explicit DOC"),
                    agree < 1e-12,
                    format!("{agree:.2e}"),
                );
                checks.record(
                    &format!("{label} row sums"),
                    rows < 1e-12,
                    format!("{rows:.2e}"),
                );
                if let Some(w) = create(&cfg.out_dir, &format!("kernels_{tag}_theta{theta}.csv"))? {
                    table.write_csv(w)?;
                }
                if let Some(w) = create(&cfg.out_dir, &format!("doc_{tag}_theta{theta}.csv"))? {
                    doc.write_csv(w)?;
                }
            }
        }
    }
    Ok(checks.finish())
}

fn solve(common: &Common, config: Option<&Path>) -> AnyResult<ExitCode> {
    let cfg = load_config(config, common)?;
    let case = cfg.cases()[0];
    let (theta, n) = (cfg.thetas[0], cfg.ns[0]);
    let mesh = case.build(cfg.final_time, n)?;
    let problem = ManufacturedProblem::new(cfg.mx, cfg.my)?;
    let mut checks = Checks::default();
    let label = format!("{} N={n} theta={theta}", case.label());
    let trace = match wsbdf2_solve(
        &problem.op,
        &mesh,
        theta,
        &problem.initial(),
        |t| problem.forcing(t),
        SolveOptions::default(),
    ) {
        Ok(t) => t,
        Err(e) => {
            checks.record(&format!("{label} solve"), false, e);
            return Ok(checks.finish());
        }
    };
    let errors: Vec<f64> = trace
        .states
        .iter()
        .enumerate()
        .map(|(k, u)| problem.error(mesh.t(k), u, cfg.norm))
        .collect();
    println!(
        "{label}: final error {:.6e} ({} norm), max ratio {:.4}",
        errors[n],
        cfg.norm,
        mesh.max_ratio()
    );
    let samples: Vec<Vec<f64>> = mesh.levels().iter().map(|t| problem.forcing(*t)).collect();
    let stability = check_l2_stability(&trace, &problem.op, &samples, theta)?;
    checks.record(
        &format!("{label} L2 bound"),
        stability.passed,
        format!("min slack {:.3e}", stability.min_slack),
    );
    if let Some(w) = create(&cfg.out_dir, "mesh.csv")? {
        mesh.write_csv(w)?;
    }
    if let Some(w) = create(&cfg.out_dir, "trace.csv")? {
        trace.write_csv(w, Some(&errors))?;
    }
    if let Some(w) = create(&cfg.out_dir, "snapshot.csv")? {
        problem.op.write_snapshot_csv(w, trace.final_state())?;
    }
    Ok(checks.finish())
}

/// Order band applied at the finest N.
const ORDER_BAND: f64 = 0.15;

fn converge(common: &Common, config: Option<&Path>) -> AnyResult<ExitCode> {
    let cfg = load_config(config, common)?;
    let mut checks = Checks::default();
    let mut reports: Vec<ConvergenceReport> = Vec::new();
    for case in cfg.cases() {
        let report = run_example(&cfg.with_case(case))?;
        println!("{}", report.table());
        for c in &report.cells {
            let label = format!("{} N={} theta={}", case.label(), c.n, c.theta);
            if let Some(f) = &c.failure {
                checks.record(&label, false, f);
            } else if let Some(s) = c.stability {
                if !s.passed {
                    checks.record(
                        &format!("{label} L2 bound"),
                        false,
                        format!("slack {:.3e}", s.min_slack),
                    );
                }
            }
        }
        if let Some(w) = create(
            &cfg.out_dir,
            &format!("convergence_{}.csv", file_tag(&case)),
        )? {
            report.write_csv(w)?;
        }
        reports.push(report);
    }
    let all_stable = reports
        .iter()
        .flat_map(|r| &r.cells)
        .all(|c| c.failure.is_none() && c.stability.is_some_and(|s| s.passed));
    if all_stable {
        checks.record(
            "runs and L2 bounds",
            true,
            format!(
                "{} cells",
                reports.iter().map(|r| r.cells.len()).sum::<usize>()
            ),
        );
    }

    let mut ns = cfg.ns.clone();
    ns.sort_unstable();
    let finest = *ns.last().unwrap();
    let coarse = finest / 2;
    if matches!(cfg.case, MeshCase::Geometric(_)) {
        for &theta in &cfg.thetas {
            let errs: Vec<f64> = ns
                .iter()
                .filter_map(|n| reports[0].cell(theta, *n).and_then(|c| c.error))
                .collect();
            let (lo, hi) = errs
                .iter()
                .fold((f64::INFINITY, 0.0_f64), |(l, h), e| (l.min(*e), h.max(*e)));
            checks.record(
                &format!("theta={theta} flat errors"),
                hi / lo - 1.0 <= 0.05,
                format!("spread {:.2}%", 100.0 * (hi / lo - 1.0)),
            );
        }
    } else if finest % 2 == 0 && ns.contains(&coarse) {
        // Geometric mean over seeds (a single report otherwise).
        let gm = |theta: f64, n: usize| -> Option<f64> {
            let logs: Option<Vec<f64>> = reports
                .iter()
                .map(|r| r.cell(theta, n).and_then(|c| c.error).map(f64::ln))
                .collect();
            logs.map(|l| (l.iter().sum::<f64>() / l.len() as f64).exp())
        };
        for &theta in &cfg.thetas {
            match (gm(theta, coarse), gm(theta, finest)) {
                (Some(a), Some(b)) => {
                    let order = (a / b).log2();
                    checks.record(
                        &format!("theta={theta} order at N={finest}"),
                        (order - 2.0).abs() <= ORDER_BAND,
                        format!(
                            "{order:.4}{}",
                            if reports.len() > 1 {
                                " (geometric mean over seeds)"
                            } else {
                                ""
                            }
                        ),
                    );
                }
                _ => checks.record(
                    &format!("theta={theta} order at N={finest}"),
                    false,
                    "missing errors",
                ),
            }
        }
    }
    Ok(checks.finish())
}

fn diagnose(common: &Common, config: Option<&Path>) -> AnyResult<ExitCode> {
    let cfg = load_config(config, common)?;
    let mut checks = Checks::default();
    for case in cfg.cases() {
        let rows = run_diagnostics(&cfg.with_case(case))?;
        print!("{}", diagnostics_table(&rows));
        for row in &rows {
            let detail = match (&row.failure, row.dissipation, row.stability) {
                (Some(f), _, _) => f.clone(),
                (None, Some(d), Some(s)) => format!(
                    "energy growth {:.2e}, L2 slack {:.3e}",
                    d.worst_violation, s.min_slack
                ),
                _ => "incomplete".into(),
            };
            checks.record(
                &format!("{} N={} theta={}", row.mesh, row.n, row.theta),
                row.passed(),
                detail,
            );
        }
        if let Some(w) = create(
            &cfg.out_dir,
            &format!("diagnostics_{}.csv", file_tag(&case)),
        )? {
            write_diagnostics_csv(&rows, w)?;
        }
    }
    Ok(checks.finish())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Ratios {
            common,
            samples,
            probe,
            steps,
        } => ratios(common, config, *samples, probe, *steps),
        Command::Kernels { common } => kernels(common, config),
        Command::Solve { common } => solve(common, config),
        Command::Converge { common } => converge(common, config),
        Command::Diagnose { common } => diagnose(common, config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
