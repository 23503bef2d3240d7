//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 configuration or
//! input error, 3 numerical blowup, 4 optimizer line-search failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::control::{optimize, variational_inequality, OptOutcome, StoppingReason};
use crate::error::{Error, Result};
use crate::fields::Trajectory;
use crate::io::{fmt_f64, write_field, write_trajectory, CsvWriter};
use crate::scenario::{self, ScenarioKind};
use crate::spectral::Grid;
use crate::state::{solve_forward, SolverConfig};
use crate::verify::{energy_rows, run_suite, CheckResult, Suite, SuiteContext};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_LINE_SEARCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "llgctl", version, about = "LLG optimal-control toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for scenario generation and random probes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent solves.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward solve with snapshots and an energy time series.
    Simulate,
    /// Projected-gradient optimization of the applied field.
    Optimize,
    /// Run verification checks.
    Verify {
        /// transforms | forward | adjoint | gradient | energy | all
        #[arg(long)]
        suite: Option<String>,
    },
    /// Write initial data, target, generating control and a ready-to-run config.
    MakeScenario {
        /// stationary | macrospin | perturbed | inverse_crime
        #[arg(long)]
        kind: String,
    },
    /// The gradient verification suite.
    AdjointCheck,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Blowup { .. } => EXIT_BLOWUP,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Messages go to stdout, errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads", "must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Simulate => {
            let cfg = load_required(cli)?;
            cmd_simulate(&cfg, &out_dir(cli, Some(&cfg)))
        }
        Command::Optimize => {
            let cfg = load_required(cli)?;
            cmd_optimize(&cfg, &out_dir(cli, Some(&cfg)), cli.seed.unwrap_or(cfg.scenario.seed as u64))
        }
        Command::Verify { suite } => {
            let cfg = load_optional(cli)?;
            cmd_verify(cfg.as_ref(), suite.as_deref(), cli.out.as_deref(), cli.seed)
        }
        Command::AdjointCheck => {
            let cfg = load_optional(cli)?;
            cmd_verify(cfg.as_ref(), Some("gradient"), cli.out.as_deref(), cli.seed)
        }
        Command::MakeScenario { kind } => {
            let cfg = load_optional(cli)?;
            cmd_make_scenario(kind, cfg.as_ref(), &out_dir(cli, cfg.as_ref()), cli.seed)
        }
    }
}

fn load_optional(cli: &Cli) -> Result<Option<RunConfig>> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.scenario.seed = seed as i64;
        cfg.validate()?;
    }
    Ok(Some(cfg))
}

fn load_required(cli: &Cli) -> Result<RunConfig> {
    load_optional(cli)?.ok_or_else(|| Error::config("--config", "this command needs a configuration file"))
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    match (&cli.out, cfg) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.output.directory.clone(),
        (None, None) => PathBuf::from("out"),
    }
}

pub const TIMESERIES_HEADER: [&str; 9] = [
    "t",
    "sphere_defect",
    "grad_m_l2sq",
    "lap_m_l2sq",
    "mxlap_l2sq",
    "e1_lhs",
    "e1_rhs",
    "e2_lhs",
    "e2_rhs",
];

/// Forward solve. Writes `m/` (snapshots every `snapshot_stride` steps) and
/// `timeseries.csv`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<i32> {
    let solver = cfg.solver_config()?;
    let (m0, u) = cfg.forward_data()?;
    let run = solve_forward(&m0, &u, &solver)?;
    fs::create_dir_all(out)?;
    write_trajectory(&out.join("m"), &run.trajectory, cfg.output.snapshot_stride as usize)?;
    let rows = energy_rows(&run.diagnostics, &u)?;
    let mut csv = CsvWriter::create(&out.join("timeseries.csv"), &TIMESERIES_HEADER)?;
    for (d, e) in run.diagnostics.iter().zip(&rows) {
        csv.row(&[
            fmt_f64(d.t),
            fmt_f64(d.sphere_defect),
            fmt_f64(d.grad_m_l2sq),
            fmt_f64(d.lap_m_l2sq),
            fmt_f64(d.mxlap_l2sq),
            fmt_f64(e.e1_lhs),
            fmt_f64(e.e1_rhs),
            fmt_f64(e.e2_lhs),
            fmt_f64(e.e2_rhs),
        ])?;
    }
    csv.finish()?;
    let last = run.diagnostics.last().expect("at least two frames");
    println!(
        "simulate: {} steps to T = {}, final sphere defect {:.3e}, output in {}",
        solver.nt,
        cfg.t_final(),
        last.sphere_defect,
        out.display()
    );
    Ok(EXIT_OK)
}

pub const ITERATIONS_HEADER: [&str; 9] = [
    "iter",
    "tracking",
    "terminal",
    "control_l2",
    "control_h1",
    "total",
    "grad_norm",
    "step",
    "budget_active",
];

/// Random smooth probe controls projected onto the admissible set.
pub fn admissible_probes(grid: &Grid, t_final: f64, nt: usize, e_mf: f64, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
    let mut r = scenario::rng(seed);
    let amplitude = (e_mf / (grid.area() * t_final)).sqrt();
    (0..count)
        .map(|_| {
            let p = scenario::random_smooth_control(grid, t_final, nt, &mut r, amplitude)?;
            Ok(crate::control::project_uad(&p, e_mf))
        })
        .collect()
}

/// Variational-inequality residual of an optimizer outcome on random
/// admissible probes; passes at `≥ −1e-3`.
pub fn optimality_check(cfg_grid: &Grid, out: &OptOutcome, e_mf: f64, probes: usize, seed: u64) -> Result<CheckResult> {
    let u = &out.u_star;
    let p = admissible_probes(cfg_grid, u.t_final(), u.nt(), e_mf, probes, seed)?;
    let vi = variational_inequality(u, &out.phi_star, &out.m_star, &p)?;
    Ok(CheckResult::new("variational_inequality", vi.min_normalized >= -1e-3, vi.min_normalized, -1e-3)
        .with_note(format!("{} random smooth admissible probes, min raw value {:.6e}", vi.probes, vi.min_raw)))
}

/// Optimization. Writes `iterations.csv`, `u_star/` (every frame),
/// `m_star/` and `vi_report.txt`.
pub fn cmd_optimize(cfg: &RunConfig, out: &Path, seed: u64) -> Result<i32> {
    let problem = cfg.problem()?;
    let opts = cfg.opt_options()?;
    let outcome = optimize(&problem.spec, &problem.u_init, &problem.solver, &opts)?;
    fs::create_dir_all(out)?;
    let mut csv = CsvWriter::create(&out.join("iterations.csv"), &ITERATIONS_HEADER)?;
    for r in &outcome.report.iterations {
        csv.row(&[
            r.iter.to_string(),
            fmt_f64(r.cost.tracking),
            fmt_f64(r.cost.terminal),
            fmt_f64(r.cost.control_l2),
            fmt_f64(r.cost.control_h1),
            fmt_f64(r.cost.total),
            fmt_f64(r.grad_norm),
            fmt_f64(r.step),
            r.budget_active.to_string(),
        ])?;
    }
    csv.finish()?;
    write_trajectory(&out.join("u_star"), &outcome.u_star, 1)?;
    write_trajectory(&out.join("m_star"), &outcome.m_star, cfg.output.snapshot_stride as usize)?;

    let probes = cfg.optimizer.vi_probes as usize;
    let mut report = format!(
        "stopping_reason = {}\niterations = {}\nfinal_total = {}\nfinal_grad_norm = {}\n",
        outcome.report.stopping_reason.as_str(),
        outcome.report.iterations.len() - 1,
        fmt_f64(outcome.report.iterations.last().map(|r| r.cost.total).unwrap_or(f64::NAN)),
        fmt_f64(outcome.report.iterations.last().map(|r| r.grad_norm).unwrap_or(f64::NAN)),
    );
    if probes > 0 {
        let check = optimality_check(&problem.spec.grid, &outcome, problem.spec.e_mf, probes, seed)?;
        report.push_str(&format!(
            "vi_probes = {probes}\nvi_sampling = \"random smooth controls a(x) + cos(pi t/T) b(x), 4 cosine modes per axis, projected onto the budget ball, seed {seed}\"\nvi_min_normalized = {}\nvi_tolerance = {}\nvi_passed = {}\nvi_note = \"{}\"\n",
            fmt_f64(check.measured),
            fmt_f64(check.tolerance),
            check.passed,
            check.note
        ));
    }
    fs::write(out.join("vi_report.txt"), report)?;
    let last = outcome.report.iterations.last().expect("initial record");
    println!(
        "optimize: {} after {} iterations, total cost {:.6e} -> {:.6e}, grad norm {:.3e}",
        outcome.report.stopping_reason.as_str(),
        last.iter,
        outcome.report.iterations[0].cost.total,
        last.cost.total,
        last.grad_norm
    );
    Ok(match outcome.report.stopping_reason {
        StoppingReason::LineSearchFail => {
            eprintln!("optimize: line search failed to find an Armijo step");
            EXIT_LINE_SEARCH
        }
        _ => EXIT_OK,
    })
}

/// Runs a verification suite, prints one line per check and a summary, and
/// writes `checks.csv` when an output directory is given.
pub fn cmd_verify(cfg: Option<&RunConfig>, suite: Option<&str>, out: Option<&Path>, seed: Option<u64>) -> Result<i32> {
    let ctx = match cfg {
        Some(c) => SuiteContext {
            grid: c.grid()?,
            t_final: c.t_final(),
            nt: c.solver_config()?.nt,
            seed: seed.unwrap_or(c.scenario.seed as u64),
            scale: c.verify.scale,
            gradient_pairs: c.verify.gradient_pairs as usize,
        },
        None => SuiteContext {
            grid: Grid::unit_square(32)?,
            t_final: 1.0,
            nt: 1024,
            seed: seed.unwrap_or(0),
            scale: 1.0,
            gradient_pairs: 3,
        },
    };
    let name = match suite {
        Some(s) => s.to_owned(),
        None => cfg.map(|c| c.verify.suite.clone()).unwrap_or_else(|| "all".into()),
    };
    let suite = Suite::parse(&name).ok_or_else(|| {
        Error::config("--suite", format!("expected one of {}; got {name:?}", Suite::NAMES.join(", ")))
    })?;
    let results = run_suite(suite, &ctx);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("summary: {} passed, {} failed, suite {name}", results.len() - failed, failed);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut text = String::from(CheckResult::CSV_HEADER);
        text.push('\n');
        for r in &results {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        fs::write(dir.join("checks.csv"), text)?;
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Writes `m0.llgf`, `m_omega.llgf`, `m_d/`, `u_dagger/` and `config.toml`.
pub fn cmd_make_scenario(kind: &str, base: Option<&RunConfig>, out: &Path, seed: Option<u64>) -> Result<i32> {
    let kind = ScenarioKind::parse(kind).ok_or_else(|| {
        Error::config(
            "--kind",
            format!("expected one of stationary, macrospin, perturbed, inverse_crime; got {kind:?}"),
        )
    })?;
    let (grid, t_final, solver, mut params) = match base {
        Some(c) => (c.grid()?, c.t_final(), c.solver_config()?, c.scenario_params()?),
        None => (Grid::unit_square(32)?, 1.0, SolverConfig::new(256), Default::default()),
    };
    if let Some(s) = seed {
        params.seed = s;
    }
    let sc = scenario::build(kind, &grid, t_final, &solver, &params)?;
    fs::create_dir_all(out)?;
    write_field(&out.join("m0.llgf"), &sc.spec.m0, 0.0)?;
    write_field(&out.join("m_omega.llgf"), &sc.spec.m_omega, t_final)?;
    write_trajectory(&out.join("m_d"), &sc.spec.m_d, 1)?;
    write_trajectory(&out.join("u_dagger"), &sc.u_dagger, 1)?;

    let formulation = match solver.formulation {
        crate::state::Formulation::Ep => "ep",
        crate::state::Formulation::Nlp => "nlp",
    };
    let mut text = format!(
        "# {} scenario, seed {}\n\n[grid]\nlx = {:?}\nly = {:?}\nnx = {}\nny = {}\n\n[time]\nT = {:?}\nnt = {}\n\n[solver]\nformulation = \"{}\"\ndealias = {}\n",
        kind.as_str(),
        params.seed,
        grid.lx(),
        grid.ly(),
        grid.nx(),
        grid.ny(),
        t_final,
        solver.nt,
        formulation,
        solver.dealias
    );
    if let Some(r) = solver.renormalize_every {
        text.push_str(&format!("renormalize_every = {r}\n"));
    }
    text.push_str(&format!(
        "\n[scenario]\nkind = \"{}\"\nseed = {}\nscale = {:?}\ntheta0 = {:?}\nfield = {:?}\nbudget_factor = {:?}\nu_dagger_file = \"u_dagger\"\nm_d_file = \"m_d\"\nm_omega_file = \"m_omega.llgf\"\n\n[scenario.m0]\nfile = \"m0.llgf\"\n\n[control]\ne_mf = {:?}\nu_init = \"zero\"\n\n[output]\ndirectory = \"out\"\nsnapshot_stride = 1\n",
        kind.as_str(),
        params.seed,
        params.scale,
        params.theta0,
        params.field,
        params.budget_factor,
        sc.spec.e_mf
    ));
    fs::write(out.join("config.toml"), text)?;
    println!("make-scenario: {} written to {}", kind.as_str(), out.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Blowup { step: 3, detail: String::new() }), EXIT_BLOWUP);
        assert_eq!(exit_code(&Error::config("a", "b")), EXIT_CONFIG);
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["llgctl", "verify", "--suite", "transforms", "--seed", "4", "--threads", "2"]).unwrap();
        assert_eq!(cli.seed, Some(4));
        assert_eq!(cli.threads, Some(2));
        assert!(matches!(cli.command, Command::Verify { suite: Some(ref s) } if s == "transforms"));
    }

    #[test]
    fn missing_config_is_a_config_error() {
        assert_eq!(run(["llgctl", "simulate"]), EXIT_CONFIG);
        assert_eq!(run(["llgctl", "simulate", "--config", "/nonexistent/run.toml"]), EXIT_CONFIG);
        assert_eq!(run(["llgctl", "frobnicate"]), EXIT_CONFIG);
    }
}
