//! Run configuration: a TOML file with `[grid]`, `[time]`, `[solver]`,
//! `[scenario]`, `[control]`, `[optimizer]`, `[output]` and `[verify]`
//! sections. Unknown keys are rejected and every numeric field is range
//! checked; errors name the offending key.
//!
//! ```toml
//! [grid]
//! lx = 1.0
//! ly = 1.0
//! nx = 32
//! ny = 32
//!
//! [time]
//! T = 1.0
//! nt = 256
//!
//! [scenario]
//! kind = "inverse_crime"
//! seed = 3
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::control::{GradientMetric, OcpSpec, OptOptions};
use crate::error::{Error, Result};
use crate::fields::{Trajectory, VectorField3};
use crate::io::{read_field, read_trajectory};
use crate::scenario::{self, ScenarioKind, ScenarioParams};
use crate::spectral::{Grid, SpectralField};
use crate::state::{explicit_dt_limit, make_initial_data, solve_forward, Formulation, SolverConfig};
use crate::verify::Suite;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lx: f64,
    pub ly: f64,
    pub nx: i64,
    pub ny: i64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub nt: i64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_formulation")]
    pub formulation: String,
    pub renormalize_every: Option<i64>,
    #[serde(default)]
    pub dealias: bool,
    /// Memory budget for adjoint sweeps in MiB; above it states are
    /// recomputed from checkpoints.
    pub checkpoint_budget_mb: Option<f64>,
}

fn default_formulation() -> String {
    "ep".into()
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            formulation: default_formulation(),
            renormalize_every: None,
            dealias: false,
            checkpoint_budget_mb: None,
        }
    }
}

/// Initial magnetization given by cosine-series angle fields (`[j, k,
/// amplitude]` triples) or read from a snapshot file.
#[derive(Clone, Debug, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub theta: Vec<[f64; 3]>,
    #[serde(default)]
    pub phi: Vec<[f64; 3]>,
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: String,
    #[serde(default)]
    pub seed: i64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "quarter_pi")]
    pub theta0: f64,
    #[serde(default = "one")]
    pub field: f64,
    #[serde(default = "four")]
    pub budget_factor: f64,
    pub m0: Option<InitialSection>,
    /// Trajectory directory replacing the generating control `u†`.
    pub u_dagger_file: Option<PathBuf>,
    /// Trajectory directory for `m_d`; synthesized from `u†` when absent.
    pub m_d_file: Option<PathBuf>,
    /// Snapshot for `m_Ω`; the final target frame when absent.
    pub m_omega_file: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}
fn four() -> f64 {
    4.0
}
fn quarter_pi() -> f64 {
    std::f64::consts::FRAC_PI_4
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// Overrides `budget_factor · ||u†||²`.
    pub e_mf: Option<f64>,
    /// `"zero"` or `"dagger"`.
    #[serde(default = "zero")]
    pub u_init: String,
    pub u_init_file: Option<PathBuf>,
}

fn zero() -> String {
    "zero".into()
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            e_mf: None,
            u_init: zero(),
            u_init_file: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub max_iter: i64,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    pub initial_step: f64,
    pub max_backtracks: i64,
    pub metric: String,
    pub barzilai_borwein: bool,
    /// Random admissible probes for the optimality report.
    pub vi_probes: i64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptOptions::default();
        OptimizerSection {
            max_iter: d.max_iter as i64,
            grad_tol: d.grad_tol,
            armijo_c: d.armijo_c,
            backtrack_ratio: d.backtrack_ratio,
            initial_step: d.initial_step,
            max_backtracks: d.max_backtracks as i64,
            metric: "h1".into(),
            barzilai_borwein: d.barzilai_borwein,
            vi_probes: 100,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub snapshot_stride: i64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            snapshot_stride: 1,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub suite: String,
    /// Scale of the perturbed scenario for the energy monitors.
    pub scale: f64,
    pub gradient_pairs: i64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            suite: "all".into(),
            scale: 1.0,
            gradient_pairs: 3,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
    /// Directory against which relative file paths are resolved.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be a positive finite number, got {v}")))
    }
}

fn at_least(key: &str, v: i64, min: i64) -> Result<usize> {
    if v >= min {
        Ok(v as usize)
    } else {
        Err(Error::config(key, format!("must be at least {min}, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be finite, got {v}")))
    }
}

fn open_unit(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must lie strictly between 0 and 1, got {v}")))
    }
}

/// Names the key in a deserialization message (the first back-quoted word).
fn key_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "config".into())
}

impl RunConfig {
    /// Parses and validates configuration text.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_owned();
            let key = key_of(&message);
            Error::config(key, e.to_string().trim().replace('\n', " | "))
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Range checks on every field.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let solver = self.solver_config()?;
        let t_final = positive("time.T", self.time.t_final)?;
        if solver.formulation == Formulation::Nlp {
            let limit = explicit_dt_limit(&grid);
            if t_final / solver.nt as f64 > limit {
                return Err(Error::config(
                    "time.nt",
                    format!(
                        "explicit original-form stepping needs dt <= {limit:.4e}; nt must be at least {}",
                        (t_final / limit).ceil()
                    ),
                ));
            }
        }
        self.scenario_kind()?;
        self.scenario_params()?;
        if let Some(m0) = &self.scenario.m0 {
            if m0.file.is_some() && !(m0.theta.is_empty() && m0.phi.is_empty()) {
                return Err(Error::config("scenario.m0", "give either `file` or angle modes, not both"));
            }
            for (name, modes) in [("scenario.m0.theta", &m0.theta), ("scenario.m0.phi", &m0.phi)] {
                for &[j, k, a] in modes.iter() {
                    let ok = |v: f64, n: usize| v >= 0.0 && v.fract() == 0.0 && (v as usize) < n;
                    if !ok(j, grid.nx()) || !ok(k, grid.ny()) {
                        return Err(Error::config(
                            name,
                            format!("mode ({j}, {k}) is not a valid index pair for a {}x{} grid", grid.nx(), grid.ny()),
                        ));
                    }
                    finite(name, a)?;
                }
            }
        }
        if let Some(e) = self.control.e_mf {
            positive("control.e_mf", e)?;
        }
        if !matches!(self.control.u_init.as_str(), "zero" | "dagger") {
            return Err(Error::config(
                "control.u_init",
                format!("expected \"zero\" or \"dagger\", got {:?}", self.control.u_init),
            ));
        }
        self.opt_options()?;
        at_least("optimizer.vi_probes", self.optimizer.vi_probes, 0)?;
        at_least("output.snapshot_stride", self.output.snapshot_stride, 1)?;
        self.suite()?;
        finite("verify.scale", self.verify.scale)?;
        if self.verify.scale < 0.0 {
            return Err(Error::config("verify.scale", "must be non-negative"));
        }
        at_least("verify.gradient_pairs", self.verify.gradient_pairs, 1)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let lx = positive("grid.lx", self.grid.lx)?;
        let ly = positive("grid.ly", self.grid.ly)?;
        let nx = at_least("grid.nx", self.grid.nx, 4)?;
        let ny = at_least("grid.ny", self.grid.ny, 4)?;
        Grid::new(lx, ly, nx, ny).map_err(|e| Error::config("grid", e.to_string()))
    }

    pub fn t_final(&self) -> f64 {
        self.time.t_final
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let nt = at_least("time.nt", self.time.nt, 1)?;
        let formulation = match self.solver.formulation.as_str() {
            "ep" => Formulation::Ep,
            "nlp" => Formulation::Nlp,
            other => {
                return Err(Error::config(
                    "solver.formulation",
                    format!("expected \"ep\" or \"nlp\", got {other:?}"),
                ))
            }
        };
        let renormalize_every = match self.solver.renormalize_every {
            Some(r) => Some(at_least("solver.renormalize_every", r, 1)?),
            None => None,
        };
        let checkpoint_budget_bytes = match self.solver.checkpoint_budget_mb {
            Some(mb) => Some((positive("solver.checkpoint_budget_mb", mb)? * 1024.0 * 1024.0) as usize),
            None => None,
        };
        Ok(SolverConfig {
            formulation,
            nt,
            renormalize_every,
            dealias: self.solver.dealias,
            checkpoint_budget_bytes,
        })
    }

    pub fn scenario_kind(&self) -> Result<ScenarioKind> {
        ScenarioKind::parse(&self.scenario.kind).ok_or_else(|| {
            Error::config(
                "scenario.kind",
                format!(
                    "expected one of stationary, macrospin, perturbed, inverse_crime; got {:?}",
                    self.scenario.kind
                ),
            )
        })
    }

    pub fn scenario_params(&self) -> Result<ScenarioParams> {
        let s = &self.scenario;
        if s.seed < 0 {
            return Err(Error::config("scenario.seed", "must be non-negative"));
        }
        let scale = finite("scenario.scale", s.scale)?;
        if scale < 0.0 {
            return Err(Error::config("scenario.scale", "must be non-negative"));
        }
        Ok(ScenarioParams {
            theta0: finite("scenario.theta0", s.theta0)?,
            field: finite("scenario.field", s.field)?,
            scale,
            seed: s.seed as u64,
            budget_factor: positive("scenario.budget_factor", s.budget_factor)?,
        })
    }

    pub fn opt_options(&self) -> Result<OptOptions> {
        let o = &self.optimizer;
        let metric = match o.metric.as_str() {
            "h1" => GradientMetric::H1,
            "l2" => GradientMetric::L2,
            other => {
                return Err(Error::config(
                    "optimizer.metric",
                    format!("expected \"h1\" or \"l2\", got {other:?}"),
                ))
            }
        };
        let grad_tol = finite("optimizer.grad_tol", o.grad_tol)?;
        if grad_tol < 0.0 {
            return Err(Error::config("optimizer.grad_tol", "must be non-negative"));
        }
        Ok(OptOptions {
            max_iter: at_least("optimizer.max_iter", o.max_iter, 0)?,
            grad_tol,
            armijo_c: open_unit("optimizer.armijo_c", o.armijo_c)?,
            backtrack_ratio: open_unit("optimizer.backtrack_ratio", o.backtrack_ratio)?,
            initial_step: positive("optimizer.initial_step", o.initial_step)?,
            max_backtracks: at_least("optimizer.max_backtracks", o.max_backtracks, 0)?,
            metric,
            barzilai_borwein: o.barzilai_borwein,
        })
    }

    pub fn suite(&self) -> Result<Suite> {
        Suite::parse(&self.verify.suite).ok_or_else(|| {
            Error::config(
                "verify.suite",
                format!("expected one of {}; got {:?}", Suite::NAMES.join(", "), self.verify.suite),
            )
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Initial magnetization and generating control, with file and
    /// angle-mode overrides applied.
    pub fn forward_data(&self) -> Result<(VectorField3, Trajectory)> {
        let grid = self.grid()?;
        let solver = self.solver_config()?;
        let (mut m0, mut u) = scenario::default_data(
            self.scenario_kind()?,
            &grid,
            self.t_final(),
            solver.nt,
            &self.scenario_params()?,
        )?;
        if let Some(spec) = &self.scenario.m0 {
            m0 = match &spec.file {
                Some(f) => read_field(&self.resolve(f), &grid)?,
                None => {
                    let field = |modes: &[[f64; 3]]| {
                        let mut c = SpectralField::zeros(&grid);
                        for &[j, k, a] in modes {
                            let one = SpectralField::cosine(&grid, j as usize, k as usize, a);
                            c.coeffs.iter_mut().zip(&one.coeffs).for_each(|(x, y)| *x += y);
                        }
                        c
                    };
                    make_initial_data(&field(&spec.theta), &field(&spec.phi), &grid)?
                }
            };
        }
        if let Some(f) = &self.scenario.u_dagger_file {
            u = self.read_time_series("scenario.u_dagger_file", f, &grid, solver.nt)?;
        }
        Ok((m0, u))
    }

    fn read_time_series(&self, key: &str, f: &Path, grid: &Grid, nt: usize) -> Result<Trajectory> {
        let t = read_trajectory(&self.resolve(f), grid)?;
        if t.nt() != nt || (t.t_final() - self.t_final()).abs() > 1e-12 * self.t_final() {
            return Err(Error::config(
                key,
                format!(
                    "trajectory has {} steps on [0, {}], config asks for {} on [0, {}]",
                    t.nt(),
                    t.t_final(),
                    nt,
                    self.t_final()
                ),
            ));
        }
        // re-stamp on the configured time grid so conformity checks are exact
        Trajectory::new(self.t_final(), t.into_frames())
    }

    /// Full control problem plus the generating control and initial guess.
    pub fn problem(&self) -> Result<Problem> {
        let grid = self.grid()?;
        let solver = self.solver_config()?;
        let (m0, u_dagger) = self.forward_data()?;
        let params = self.scenario_params()?;
        let m_d = match &self.scenario.m_d_file {
            Some(f) => self.read_time_series("scenario.m_d_file", f, &grid, solver.nt)?,
            None => solve_forward(&m0, &u_dagger, &solver)?.trajectory,
        };
        let m_omega = match &self.scenario.m_omega_file {
            Some(f) => read_field(&self.resolve(f), &grid)?,
            None => m_d.last().clone(),
        };
        let e_mf = match self.control.e_mf {
            Some(e) => e,
            None => {
                let n = u_dagger.l2_norm_sq();
                params.budget_factor * if n > 0.0 { n } else { 1.0 }
            }
        };
        let u_init = match (&self.control.u_init_file, self.control.u_init.as_str()) {
            (Some(f), _) => self.read_time_series("control.u_init_file", f, &grid, solver.nt)?,
            (None, "dagger") => u_dagger.clone(),
            _ => Trajectory::zeros(&grid, self.t_final(), solver.nt)?,
        };
        let spec = OcpSpec {
            grid,
            t_final: self.t_final(),
            nt: solver.nt,
            m0,
            m_d,
            m_omega,
            e_mf,
        };
        spec.validate()?;
        Ok(Problem {
            spec,
            solver,
            u_dagger,
            u_init,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: OcpSpec,
    pub solver: SolverConfig,
    pub u_dagger: Trajectory,
    pub u_init: Trajectory,
}
