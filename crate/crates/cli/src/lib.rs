//! Command-line front end: reads a TOML run configuration, runs one pipeline
//! and writes JSON/CSV reports that embed the resolved configuration and seed.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 numerical
//! non-convergence or a failed verification check.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use risk_eigen::discretize::{BoundaryCondition, Grid};
use risk_eigen::eigensolve::{collatz_wielandt_bounds, domain_sweep, solve_semilinear, SemilinearSolution};
use risk_eigen::model::{check_assumptions, DiffusionModel, Direction};
use risk_eigen::montecarlo::{simulate_paths, twisted_paths, variance_reduction, GaugeField, GridPolicy};
use risk_eigen::occupation::{
    build_extended, candidate_measure, solve_occupation_lp, test_function_family, verify_saddle, write_lp,
    VelocityGrid,
};
use risk_eigen::twist::{
    active_gradient, doob_transform, entropy_report, gradient_bound_diagnostic, growth_diagnostic,
    lyapunov_residual, stationarity_residual, stationary_distribution,
};
use risk_eigen::Error;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Check(_) => 2,
        }
    }
}

/// Wraps a library error with the name of the failing operation.
fn op(name: &'static str) -> impl Fn(Error) -> CliError {
    move |e| {
        let msg = format!("{name}: {e}");
        match e {
            Error::InvalidArgument(_)
            | Error::NotFound { .. }
            | Error::NonMonotoneScheme { .. }
            | Error::Ellipticity { .. }
            | Error::Evaluation { .. }
            | Error::Range(_) => CliError::Config(msg),
            _ => CliError::Numerical(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "risk-eigen", version, about = "Risk-sensitive principal eigenvalue experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write the occupation LP in CPLEX LP format (lp command).
    #[arg(long, global = true)]
    pub export_lp: Option<PathBuf>,
    /// Write per-path Monte Carlo traces as CSV (verify command).
    #[arg(long, global = true)]
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Principal eigenpair by policy iteration.
    Solve,
    /// Dirichlet/Neumann eigenvalues over increasing radii.
    Sweep,
    /// Occupation-measure LP, candidate measure and saddle check.
    Lp,
    /// Full pipeline with a pass/fail scorecard.
    Verify,
    /// Minimization pipeline.
    Minimize,
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    let out = Output::new(&cfg)?;
    match cli.command {
        Command::Solve => cmd_solve(&cfg, &out),
        Command::Sweep => cmd_sweep(&cfg, &out),
        Command::Lp => cmd_lp(&cfg, &out, cli.export_lp.as_deref()),
        Command::Verify => cmd_verify(&cfg, &out, cli.trace),
        Command::Minimize => cmd_minimize(&cfg, &out),
    }
}

/// Output directory plus the reproducibility header.
pub struct Output {
    dir: PathBuf,
    config: Value,
    config_line: String,
    seed: u64,
}

impl Output {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
        let mut header = cfg.clone();
        header.output_dir = None;
        let config = serde_json::to_value(&header).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            config_line: config.to_string(),
            config,
            dir,
            seed: cfg.seed,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn json(&self, name: &str, command: &str, body: Value) -> Result<PathBuf, CliError> {
        let mut doc = json!({
            "command": command,
            "config": self.config,
            "seed": self.seed,
        });
        if let (Value::Object(dst), Value::Object(src)) = (&mut doc, body) {
            dst.extend(src);
        }
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn csv(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let text = format!("# config: {}\n# seed: {}\n{body}", self.config_line, self.seed);
        self.write(name, &text)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

struct Solved {
    model: DiffusionModel,
    grid: Grid,
    sol: SemilinearSolution,
}

fn solve(cfg: &RunConfig, bc: BoundaryCondition) -> Result<Solved, CliError> {
    let model = cfg.model()?;
    let grid = cfg.grid(model.dimension)?;
    let sol = solve_semilinear(&model, &grid, bc, cfg.solver.tol).map_err(op("solve_semilinear"))?;
    Ok(Solved { model, grid, sol })
}

fn coord_header(d: usize) -> String {
    (1..=d).map(|k| format!("x{k}")).collect::<Vec<_>>().join(",")
}

fn node_csv(grid: &Grid, indices: &[usize], columns: &str, row: impl Fn(usize) -> String) -> String {
    let mut out = format!("{},{columns}\n", coord_header(grid.dimension()));
    for (i, &g) in indices.iter().enumerate() {
        let x: Vec<String> = grid.node(g).iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{},{}\n", x.join(","), row(i)));
    }
    out
}

pub fn cmd_solve(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let s = solve(cfg, cfg.grid.bc)?;
    let pair = &s.sol.pair;
    let active = s.sol.discretization.active();
    out.json(
        "eigenpair.json",
        "solve",
        json!({
            "model": s.model.name,
            "bc": cfg.grid.bc,
            "nodes": pair.vector.len(),
            "value": pair.value,
            "residual": pair.residual,
            "iterations": pair.iterations,
            "sweeps": s.sol.sweeps,
            "rho_history": s.sol.rho_history,
            "min_phi": pair.min_entry(),
            "max_phi": pair.max_entry(),
            "policy": s.sol.policy,
        }),
    )?;
    out.csv(
        "phi.csv",
        &node_csv(&s.grid, active.grid_indices(), "phi", |i| pair.vector[i].to_string()),
    )?;
    println!("solve: value = {} (residual {:e}, {} sweeps)", pair.value, pair.residual, s.sol.sweeps);
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep: the [sweep] table with sweep.radii is required".into()))?;
    let model = cfg.model()?;
    let table = domain_sweep(&model, &spec.radii, &spec.bcs, spec.nodes_per_unit, cfg.solver.tol)
        .map_err(op("domain_sweep"))?;
    let violations = table.ordering_violations(10.0 * cfg.solver.tol);
    out.csv("sweep.csv", &table.to_csv())?;
    out.json(
        "sweep.json",
        "sweep",
        json!({
            "rows": table.rows,
            "extrapolated_value": table.extrapolated_value,
            "extrapolation": table.extrapolation,
            "ordering_margin": 10.0 * cfg.solver.tol,
            "ordering_violations": violations,
        }),
    )?;
    println!(
        "sweep: {} rows, extrapolated value {} ({} ordering violations)",
        table.rows.len(),
        table.extrapolated_value,
        violations.len()
    );
    Ok(())
}

pub fn cmd_lp(cfg: &RunConfig, out: &Output, export: Option<&Path>) -> Result<(), CliError> {
    if cfg.grid.bc != BoundaryCondition::Neumann {
        return Err(CliError::Config("lp: grid.bc must be neumann".into()));
    }
    let s = solve(cfg, BoundaryCondition::Neumann)?;
    if s.model.direction != Direction::Maximize {
        return Err(CliError::Config(format!(
            "lp: the occupation-measure LP needs a maximize model, `{}` minimizes",
            s.model.name
        )));
    }
    let disc = &s.sol.discretization;
    let active = disc.active();
    let c_v = disc.policy_rewards(&s.sol.policy);
    let chain = doob_transform(&disc.policy_generator(&s.sol.policy), &c_v, &s.sol.pair).map_err(op("doob_transform"))?;
    let eta = stationary_distribution(&chain).map_err(op("stationary_distribution"))?;
    let grad = active_gradient(&s.grid, active, &chain.gauge);
    let d = s.grid.dimension();
    let ygrid = match cfg.ygrid.half_width {
        Some(y) => VelocityGrid::new(d, y, cfg.ygrid.points),
        None => VelocityGrid::covering(d, &grad, cfg.ygrid.points),
    }
    .map_err(op("velocity_grid"))?;
    let (ext, rewards) =
        build_extended(&s.model, &s.grid, &ygrid, BoundaryCondition::Neumann).map_err(op("build_extended"))?;
    if let Some(path) = export {
        let mut buf = format!("\\ config: {}\n\\ seed: {}\n", out.config_line, out.seed).into_bytes();
        write_lp(&ext, &rewards, &mut buf).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(path, buf).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    let lp = solve_occupation_lp(&ext, &rewards, cfg.simplex_options()).map_err(op("solve_occupation_lp"))?;
    let cand = candidate_measure(&ext, &rewards, &chain, &eta, &s.sol.policy).map_err(op("candidate_measure"))?;
    let family = test_function_family(&s.grid, active, Some(&chain.gauge));
    let saddle = verify_saddle(&ext, &rewards, &family, &[lp.clone(), cand.clone()]).map_err(op("verify_saddle"))?;
    let rho = s.sol.pair.value;
    let summary = |m: &risk_eigen::occupation::OccupationMeasure| {
        json!({
            "objective": m.objective,
            "mass": m.mass,
            "stationarity_residual": m.stationarity_residual,
            "entropy_mass": m.entropy_mass,
            "velocity_spread": m.velocity_spread(&ext, &grad),
        })
    };
    out.json(
        "lp_report.json",
        "lp",
        json!({
            "model": s.model.name,
            "eigenvalue": rho,
            "lp_value": lp.objective,
            "gap": rho - lp.objective,
            "simplex_iterations": lp.simplex_iterations,
            "velocity_grid": { "half_width": ygrid.half_width(), "points": ygrid.per_axis() },
            "lp": summary(&lp),
            "candidate": summary(&cand),
            "saddle": to_value(&saddle),
            "bracket_holds": saddle.bracket_holds(lp.objective, cfg.solver.lp_optimality_tol),
            "saddle_slack": saddle.slack(lp.objective),
        }),
    )?;
    println!("lp: value = {} (eigenvalue {rho}, gap {:e})", lp.objective, rho - lp.objective);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
}

fn at_most(name: &'static str, value: f64, threshold: f64) -> Check {
    Check {
        name,
        value,
        threshold,
        pass: value <= threshold,
    }
}

fn above(name: &'static str, value: f64, threshold: f64) -> Check {
    Check {
        name,
        value,
        threshold,
        pass: value > threshold,
    }
}

pub fn cmd_verify(cfg: &RunConfig, out: &Output, trace: bool) -> Result<(), CliError> {
    let s = solve(cfg, cfg.grid.bc)?;
    let disc = &s.sol.discretization;
    let active = disc.active();
    let pair = &s.sol.pair;
    let c_v = disc.policy_rewards(&s.sol.policy);
    let chain = doob_transform(&disc.policy_generator(&s.sol.policy), &c_v, pair).map_err(op("doob_transform"))?;
    let eta = stationary_distribution(&chain).map_err(op("stationary_distribution"))?;
    let entropy = entropy_report(&chain, &eta, &s.model, &s.grid, &c_v).map_err(op("entropy_report"))?;
    let (cw_lo, cw_hi) = collatz_wielandt_bounds(&disc.generators, &disc.rewards, disc.direction, &pair.vector)
        .map_err(op("collatz_wielandt_bounds"))?;
    let lyap = if cfg.grid.bc == BoundaryCondition::Neumann {
        lyapunov_residual(&chain, &c_v, pair)
    } else {
        lyapunov_excess(&chain, &c_v, pair)
    };
    let lyap_scale = pair
        .vector
        .iter()
        .zip(&c_v)
        .map(|(v, c)| ((c - pair.value) / v).abs())
        .fold(1.0, f64::max);
    let assumptions = check_assumptions(&s.model, &s.grid, pair.value).map_err(op("check_assumptions"))?;
    let gradient = gradient_bound_diagnostic(pair, &s.model, &s.grid, active);
    let growth = growth_diagnostic(pair, &s.grid, active);

    let policy = GridPolicy::from_active(&s.grid, active, &s.sol.policy).map_err(op("simulate_value"))?;
    let gauge = GaugeField::from_pair(&s.grid, active, pair).map_err(op("twisted_value"))?;
    let sim = cfg.sim_config(cfg.seed, s.model.dimension);
    let (direct, direct_paths) = simulate_paths(&s.model, &policy, &sim).map_err(op("simulate_value"))?;
    let (twisted, twisted_paths) =
        twisted_paths(&s.model, &policy, pair.value, &gauge, &sim).map_err(op("twisted_value"))?;
    if trace {
        out.csv("trace_direct.csv", &direct_paths.to_csv())?;
        out.csv("trace_twisted.csv", &twisted_paths.to_csv())?;
    }
    let joint = (direct.standard_error.powi(2) + twisted.standard_error.powi(2)).sqrt();

    let tol = cfg.solver.tol;
    let checks = vec![
        at_most("eigen_residual", pair.residual, 10.0 * tol),
        above("perron_min_phi", pair.min_entry(), 0.0),
        at_most("collatz_wielandt_width_at_phi", cw_hi - cw_lo, 1e-8),
        at_most("collatz_wielandt_lower_gap", cw_lo - pair.value, 1e-8),
        at_most("collatz_wielandt_upper_gap", pair.value - cw_hi, 1e-8),
        at_most("twisted_row_sum", twisted_row_sum(&chain), 1e-8),
        at_most("stationarity_residual", stationarity_residual(&chain, &eta), 1e-9),
        at_most("lyapunov_relative", lyap / lyap_scale, 1e-10),
        at_most("entropy_identity_residual", entropy.identity_residual, 1e-8),
        at_most(
            "monte_carlo_consistency",
            (direct.value - twisted.value).abs(),
            3.0 * joint + 0.05,
        ),
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    out.json(
        "verify.json",
        "verify",
        json!({
            "model": s.model.name,
            "value": pair.value,
            "all_pass": all_pass,
            "checks": to_value(&checks),
            "diagnostics": {
                "assumptions": to_value(&assumptions),
                "entropy": {
                    "identity_residual": entropy.identity_residual,
                    "field_mismatch": entropy.field_mismatch,
                    "inner_radius": entropy.inner_radius,
                    "entropy_mass": entropy.entropy_mass,
                },
                "gradient_bound": { "max_ratio": gradient.max_ratio, "argmax": gradient.argmax },
                "growth_exponent": growth,
                "residual_warning": chain.residual_warning,
                "monte_carlo": {
                    "direct": to_value(&direct),
                    "twisted": to_value(&twisted),
                    "variance_reduction": variance_reduction(&direct, &twisted),
                },
            },
        }),
    )?;
    for c in &checks {
        println!(
            "{} {:<32} {:e} (threshold {:e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    if all_pass {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        Err(CliError::Check(failed.join(", ")))
    }
}

/// Largest positive part of `Ã Φ⁻¹ − (c − ρ) Φ⁻¹`; with absorbing
/// boundaries the relation only holds as an inequality.
fn lyapunov_excess(
    chain: &risk_eigen::twist::TwistedChain,
    c_v: &[f64],
    pair: &risk_eigen::eigensolve::EigenPair,
) -> f64 {
    let inv: Vec<f64> = pair.vector.iter().map(|v| 1.0 / v).collect();
    chain
        .rates
        .mul_vec(&inv)
        .iter()
        .zip(c_v)
        .zip(&inv)
        .map(|((l, c), i)| l - (c - pair.value) * i)
        .fold(0.0, f64::max)
}

fn twisted_row_sum(chain: &risk_eigen::twist::TwistedChain) -> f64 {
    chain.row_sums().iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn cmd_minimize(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let model = cfg.model()?;
    if model.direction != Direction::Minimize {
        return Err(CliError::Config(format!(
            "minimize: model `{}` has direction maximize; set direction = \"minimize\"",
            model.name
        )));
    }
    let s = solve(cfg, cfg.grid.bc)?;
    let pair = &s.sol.pair;
    let active = s.sol.discretization.active();
    let assumptions = check_assumptions(&s.model, &s.grid, pair.value).map_err(op("check_assumptions"))?;
    let coercivity = assumptions.coercivity_margin.unwrap_or(f64::NEG_INFINITY);
    let checks = vec![
        above("coercivity_margin", coercivity, 0.0),
        above("inf_phi", pair.min_entry(), 0.0),
    ];
    let controls = &s.model.controls;
    let mismatches = antisymmetry_mismatches(&s.grid, active.grid_indices(), &s.sol.policy, controls);
    let all_pass = checks.iter().all(|c| c.pass);
    out.json(
        "minimize.json",
        "minimize",
        json!({
            "model": s.model.name,
            "value": pair.value,
            "residual": pair.residual,
            "min_phi": pair.min_entry(),
            "sweeps": s.sol.sweeps,
            "policy_antisymmetry_mismatches": mismatches,
            "all_pass": all_pass,
            "checks": to_value(&checks),
            "assumptions": to_value(&assumptions),
        }),
    )?;
    let width = controls.first().map_or(0, Vec::len);
    let cols = std::iter::once("control_index".to_string())
        .chain((1..=width).map(|k| format!("u{k}")))
        .collect::<Vec<_>>()
        .join(",");
    out.csv(
        "policy.csv",
        &node_csv(&s.grid, active.grid_indices(), &cols, |i| {
            let k = s.sol.policy[i];
            std::iter::once(k.to_string())
                .chain(controls[k].iter().map(|u| u.to_string()))
                .collect::<Vec<_>>()
                .join(",")
        }),
    )?;
    println!("minimize: value = {} (min Φ {:e})", pair.value, pair.min_entry());
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Check("minimize assumption checks failed".into()))
    }
}

/// Nodes where the control at `−x` is not the negated control at `x`.
pub fn antisymmetry_mismatches(grid: &Grid, indices: &[usize], policy: &[usize], controls: &[Vec<f64>]) -> usize {
    let pos: std::collections::BTreeMap<usize, usize> = indices.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let n = grid.nodes_per_axis();
    indices
        .iter()
        .enumerate()
        .filter(|&(i, &g)| {
            let m = grid.multi_index(g);
            let mut mm = m;
            for k in 0..grid.dimension() {
                mm[k] = n - 1 - m[k];
            }
            let j = pos[&grid.flat_index(mm)];
            let u = &controls[policy[i]];
            let v = &controls[policy[j]];
            u.iter().zip(v).any(|(a, b)| (a + b).abs() > 1e-12)
        })
        .count()
}
