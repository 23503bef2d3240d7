//! Forward solver for the controlled LLG equation with `α = γ = 1`.
//!
//! Two right-hand sides are available. The original form
//!
//! ```text
//! m_t = m × (Δm + u) − m × (m × (Δm + u))
//! ```
//!
//! and the semilinear form that is equivalent whenever `|m| = 1`,
//!
//! ```text
//! m_t = Δm + |∇m|² m + m × Δm + m × u − m × (m × u).
//! ```
//!
//! The semilinear form is stepped with IMEX Euler (Laplacian implicit and
//! diagonal in the cosine basis, everything else explicit). The original form
//! is stepped with explicit Euler under a stability cap and serves as a
//! cross-check. Controls are sampled at the left end of each step.

use crate::error::{Error, Result};
use crate::fields::{cross_nodes, dot_nodes, renormalize, scale_nodes, sphere_defect, Trajectory, VectorField3};
use crate::spectral::{implicit_diffusion, Derivatives, Grid, SpectralField, to_nodal};

/// Entries larger than this abort the run.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Formulation {
    /// Semilinear form with a dissipative Laplacian.
    #[default]
    Ep,
    /// Original cross-product form.
    Nlp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub formulation: Formulation,
    pub nt: usize,
    /// Project onto the sphere after every `n`-th step.
    pub renormalize_every: Option<usize>,
    /// Apply the 2/3 rule to the explicit terms.
    pub dealias: bool,
    /// Memory budget above which adjoint sweeps recompute state segments
    /// from checkpoints instead of holding the whole trajectory.
    pub checkpoint_budget_bytes: Option<usize>,
}

impl SolverConfig {
    pub fn new(nt: usize) -> Self {
        SolverConfig {
            formulation: Formulation::Ep,
            nt,
            renormalize_every: None,
            dealias: false,
            checkpoint_budget_bytes: None,
        }
    }

    pub fn with_formulation(mut self, f: Formulation) -> Self {
        self.formulation = f;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 {
            return Err(Error::Invalid("nt must be at least 1".into()));
        }
        if self.renormalize_every == Some(0) {
            return Err(Error::Invalid("renormalize_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Largest explicit Euler step accepted for the original form:
/// `dt · λ_max ≤ 1`, with `λ_max` the top resolved eigenvalue of `-Δ`.
pub fn explicit_dt_limit(grid: &Grid) -> f64 {
    1.0 / grid.lambda_max()
}

fn conform_all(m: &VectorField3, u: &VectorField3) -> Result<()> {
    m.conforms(u)?;
    if !m.is_finite() || !u.is_finite() {
        return Err(Error::Invalid("non-finite input field".into()));
    }
    Ok(())
}

/// Everything in the semilinear right-hand side except `Δm`.
pub(crate) fn ep_nonlinear(m: &VectorField3, d: &Derivatives, u: &VectorField3) -> VectorField3 {
    let grad_sq = d.gradient_sq();
    let mxu = cross_nodes(m, u);
    let mut out = scale_nodes(&grad_sq, m);
    out.axpy(1.0, &cross_nodes(m, &d.lap));
    out.axpy(1.0, &mxu);
    out.axpy(-1.0, &cross_nodes(m, &mxu));
    out
}

fn nlp_rhs(m: &VectorField3, d: &Derivatives, u: &VectorField3) -> VectorField3 {
    let mut h = d.lap.clone();
    h.axpy(1.0, u);
    let mxh = cross_nodes(m, &h);
    let mut out = mxh.clone();
    out.axpy(-1.0, &cross_nodes(m, &mxh));
    out
}

/// Pointwise right-hand side `F(m, u)` of the chosen formulation.
pub fn rhs(m: &VectorField3, u: &VectorField3, formulation: Formulation) -> Result<VectorField3> {
    conform_all(m, u)?;
    let d = Derivatives::of(m);
    let f = match formulation {
        Formulation::Ep => {
            let mut f = ep_nonlinear(m, &d, u);
            f.axpy(1.0, &d.lap);
            f
        }
        Formulation::Nlp => nlp_rhs(m, &d, u),
    };
    if !f.is_finite() {
        return Err(Error::Blowup {
            step: 0,
            detail: "right-hand side is not finite".into(),
        });
    }
    Ok(f)
}

pub(crate) fn dealias(f: &mut VectorField3) {
    let g = f.grid().clone();
    for c in 0..3 {
        g.dealias_in_place(f.component_mut(c));
    }
}

fn check_blowup(f: &VectorField3, step: usize) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::Blowup {
            step,
            detail: "non-finite value".into(),
        });
    }
    let big = f.max_abs();
    if big > BLOWUP_THRESHOLD {
        return Err(Error::Blowup {
            step,
            detail: format!("|entry| = {big:.3e} exceeds {BLOWUP_THRESHOLD:e}"),
        });
    }
    Ok(())
}

fn step_with(
    m: &VectorField3,
    d: &Derivatives,
    u: &VectorField3,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<VectorField3> {
    let next = match cfg.formulation {
        Formulation::Ep => {
            let mut n = ep_nonlinear(m, d, u);
            if cfg.dealias {
                dealias(&mut n);
            }
            imex_update(m, &n, dt)
        }
        Formulation::Nlp => {
            let limit = explicit_dt_limit(m.grid());
            if dt > limit {
                return Err(Error::Invalid(format!(
                    "explicit step dt = {dt:.3e} exceeds the stability limit {limit:.3e}"
                )));
            }
            let mut f = nlp_rhs(m, d, u);
            if cfg.dealias {
                dealias(&mut f);
            }
            m.plus(dt, &f)
        }
    };
    check_blowup(&next, 0)?;
    Ok(next)
}

/// `(I − dt Δ)⁻¹ (m + dt n)`.
pub(crate) fn imex_update(m: &VectorField3, n: &VectorField3, dt: f64) -> VectorField3 {
    implicit_diffusion(&m.plus(dt, n), dt)
}

/// One time step with the control frame `u` held fixed.
pub fn step(m: &VectorField3, u: &VectorField3, dt: f64, cfg: &SolverConfig) -> Result<VectorField3> {
    conform_all(m, u)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Invalid(format!("dt must be positive, got {dt}")));
    }
    step_with(m, &Derivatives::of(m), u, dt, cfg)
}

/// Per-frame quantities feeding the energy monitors. Norms are L²(Ω).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameDiagnostics {
    pub t: f64,
    pub sphere_defect: f64,
    /// `||∇m||²`
    pub grad_m_l2sq: f64,
    /// `||Δm||²`
    pub lap_m_l2sq: f64,
    /// `||m × Δm||²`
    pub mxlap_l2sq: f64,
}

/// Diagnostics of a single frame at time `t`.
pub fn frame_diagnostics(t: f64, m: &VectorField3) -> FrameDiagnostics {
    diagnostics(t, m, &Derivatives::of(m))
}

fn diagnostics(t: f64, m: &VectorField3, d: &Derivatives) -> FrameDiagnostics {
    let area = m.grid().cell_area();
    FrameDiagnostics {
        t,
        sphere_defect: sphere_defect(m),
        grad_m_l2sq: d.gradient_sq().iter().sum::<f64>() * area,
        lap_m_l2sq: d.lap.l2_norm_sq(),
        mxlap_l2sq: cross_nodes(m, &d.lap).l2_norm_sq(),
    }
}

/// State trajectory plus per-frame diagnostics.
#[derive(Clone, Debug)]
pub struct ForwardRun {
    pub trajectory: Trajectory,
    pub diagnostics: Vec<FrameDiagnostics>,
}

/// Integrates from `m0` over the time grid of `u`.
pub fn solve_forward(m0: &VectorField3, u: &Trajectory, cfg: &SolverConfig) -> Result<ForwardRun> {
    cfg.validate()?;
    if u.nt() != cfg.nt {
        return Err(Error::Shape(format!(
            "control has {} steps, solver configured for {}",
            u.nt(),
            cfg.nt
        )));
    }
    conform_all(m0, u.frame(0))?;
    let defect = sphere_defect(m0);
    if defect > 1e-10 {
        return Err(Error::Invalid(format!(
            "initial magnetization is off the unit sphere by {defect:.3e}"
        )));
    }
    let dt = u.dt();
    let mut frames = Vec::with_capacity(cfg.nt + 1);
    let mut diags = Vec::with_capacity(cfg.nt + 1);
    let mut m = m0.clone();
    for k in 0..cfg.nt {
        let d = Derivatives::of(&m);
        diags.push(diagnostics(u.time(k), &m, &d));
        let mut next = step_with(&m, &d, u.frame(k), dt, cfg).map_err(|e| at_step(e, k + 1))?;
        if let Some(r) = cfg.renormalize_every {
            if (k + 1) % r == 0 {
                next = renormalize(&next)?;
            }
        }
        frames.push(std::mem::replace(&mut m, next));
    }
    diags.push(diagnostics(u.t_final(), &m, &Derivatives::of(&m)));
    frames.push(m);
    Ok(ForwardRun {
        trajectory: Trajectory::new(u.t_final(), frames)?,
        diagnostics: diags,
    })
}

/// Advances `m` from frame `from` to frame `to` of the control, without
/// diagnostics. Used to rebuild state segments from checkpoints.
pub(crate) fn advance(
    m: &VectorField3,
    u: &Trajectory,
    from: usize,
    to: usize,
    cfg: &SolverConfig,
    mut sink: impl FnMut(usize, &VectorField3),
) -> Result<VectorField3> {
    let dt = u.dt();
    let mut m = m.clone();
    for k in from..to {
        let d = Derivatives::of(&m);
        let mut next = step_with(&m, &d, u.frame(k), dt, cfg).map_err(|e| at_step(e, k + 1))?;
        if let Some(r) = cfg.renormalize_every {
            if (k + 1) % r == 0 {
                next = renormalize(&next)?;
            }
        }
        m = next;
        sink(k + 1, &m);
    }
    Ok(m)
}

pub(crate) fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::Blowup { detail, .. } => Error::Blowup { step, detail },
        other => other,
    }
}

/// `m₀ = (sinθ cosφ, sinθ sinφ, cosθ)` from cosine-series angle fields.
pub fn make_initial_data(theta: &SpectralField, phi: &SpectralField, grid: &Grid) -> Result<VectorField3> {
    let th = to_nodal(theta, grid)?;
    let ph = to_nodal(phi, grid)?;
    let mut m = VectorField3::zeros(grid);
    for i in 0..grid.len() {
        let (st, ct) = th[i].sin_cos();
        let (sp, cp) = ph[i].sin_cos();
        m.set(i, [st * cp, st * sp, ct]);
    }
    Ok(m)
}

/// `m · F` at every node; zero for the exact flow when `|m| = 1`.
pub fn normal_component(m: &VectorField3, f: &VectorField3) -> Result<Vec<f64>> {
    m.conforms(f)?;
    Ok(dot_nodes(m, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use std::f64::consts::PI;

    fn e3(g: &Grid) -> VectorField3 {
        VectorField3::uniform(g, [0.0, 0.0, 1.0])
    }

    fn smooth_unit(g: &Grid) -> VectorField3 {
        let theta = SpectralField::cosine(g, 1, 0, 0.3);
        let phi = SpectralField::cosine(g, 0, 1, 0.2);
        make_initial_data(&theta, &phi, g).unwrap()
    }

    #[test]
    fn stationary_rhs_vanishes() {
        let g = Grid::unit_square(8).unwrap();
        let m = e3(&g);
        for f in [Formulation::Ep, Formulation::Nlp] {
            assert!(rhs(&m, &VectorField3::zeros(&g), f).unwrap().max_abs() < 1e-14);
            let u = VectorField3::uniform(&g, [0.0, 0.0, 0.7]);
            assert!(rhs(&m, &u, f).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn stationary_step_is_exact() {
        let g = Grid::unit_square(8).unwrap();
        let m = e3(&g);
        let cfg = SolverConfig::new(1);
        let next = step(&m, &VectorField3::zeros(&g), 0.01, &cfg).unwrap();
        let err = next.plus(-1.0, &m).max_abs();
        assert!(err < 1e-15, "{err}");
    }

    #[test]
    fn implicit_heat_factor() {
        let g = Grid::unit_square(16).unwrap();
        let m = VectorField3::from_fn(&g, |x, _| [(PI * x).cos(), 0.0, 0.0]);
        let dt = 0.01;
        let next = imex_update(&m, &VectorField3::zeros(&g), dt);
        let want = m.scaled(1.0 / (1.0 + dt * PI * PI));
        assert!(next.plus(-1.0, &want).max_abs() < 1e-13);
    }

    #[test]
    fn formulations_agree_on_the_sphere() {
        let g = Grid::unit_square(32).unwrap();
        let m = smooth_unit(&g);
        let u = VectorField3::from_fn(&g, |x, y| [0.3 * x, -0.2, 0.5 * y * y]);
        let a = rhs(&m, &u, Formulation::Ep).unwrap();
        let b = rhs(&m, &u, Formulation::Nlp).unwrap();
        let scale = 1.0 + a.max_abs();
        assert!(a.plus(-1.0, &b).max_abs() <= 1e-8 * scale);
    }

    #[test]
    fn rhs_is_tangent_to_the_sphere() {
        let g = Grid::unit_square(32).unwrap();
        let m = smooth_unit(&g);
        assert!(sphere_defect(&m) <= 1e-12);
        let u = VectorField3::from_fn(&g, |x, y| [x.sin(), y.cos(), 0.4]);
        for f in [Formulation::Ep, Formulation::Nlp] {
            let r = rhs(&m, &u, f).unwrap();
            let worst = normal_component(&m, &r).unwrap().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(worst <= 1e-10 * r.max_abs(), "{f:?}: {worst}");
        }
    }

    #[test]
    fn initial_data_examples() {
        let g = Grid::unit_square(8).unwrap();
        let zero = SpectralField::zeros(&g);
        let m = make_initial_data(&zero, &zero, &g).unwrap();
        assert_eq!(m, e3(&g));
        let half_pi = SpectralField::cosine(&g, 0, 0, PI / 2.0);
        let m = make_initial_data(&half_pi, &zero, &g).unwrap();
        let e1 = VectorField3::uniform(&g, [1.0, 0.0, 0.0]);
        assert!(m.plus(-1.0, &e1).max_abs() < 1e-15);
    }

    #[test]
    fn nlp_step_respects_stability_cap() {
        let g = Grid::unit_square(16).unwrap();
        let m = e3(&g);
        let cfg = SolverConfig::new(1).with_formulation(Formulation::Nlp);
        let zero = VectorField3::zeros(&g);
        assert!(step(&m, &zero, 2.0 * explicit_dt_limit(&g), &cfg).is_err());
        assert!(step(&m, &zero, 0.5 * explicit_dt_limit(&g), &cfg).is_ok());
    }

    #[test]
    fn blowup_reports_step() {
        let g = Grid::unit_square(8).unwrap();
        let m = e3(&g);
        let u = Trajectory::constant(&VectorField3::uniform(&g, [1e9, 0.0, 0.0]), 1.0, 4).unwrap();
        match solve_forward(&m, &u, &SolverConfig::new(4)) {
            Err(Error::Blowup { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn rejects_off_sphere_initial_data() {
        let g = Grid::unit_square(8).unwrap();
        let u = Trajectory::zeros(&g, 1.0, 2).unwrap();
        assert!(solve_forward(&e3(&g).scaled(1.1), &u, &SolverConfig::new(2)).is_err());
        assert!(solve_forward(&e3(&g), &u, &SolverConfig::new(3)).is_err());
        let mut bad = SolverConfig::new(2);
        bad.renormalize_every = Some(0);
        assert!(solve_forward(&e3(&g), &u, &bad).is_err());
    }
}
