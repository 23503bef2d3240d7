//! Tracking cost, reduced gradient, admissible-set projection and the
//! projected-gradient optimizer.
//!
//! The cost is
//!
//! ```text
//! J(m, u) = ½∫∫|m − m_d|² + ½∫|m(T) − m_Ω|² + ½∫∫|u|² + ½∫∫|∇u|²
//! ```
//!
//! with trapezoidal quadrature in time. Its derivative along a control
//! direction `h` is `∫∫ u·h + ∇u·∇h + (φ×m + m×(φ×m))·h`, where `φ` is the
//! adjoint state. The admissible set is the ball `||u||²_{L²(Ω_T)} ≤ e_mf`.

use rayon::prelude::*;

use crate::adjoint::{solve_adjoint, AdjointInput};
use crate::error::{Error, Result};
use crate::fields::{cross_nodes, sphere_defect, Trajectory, VectorField3};
use crate::spectral::{gradient_inner, helmholtz, helmholtz_inverse, l2_inner, laplacian, Grid};
use crate::state::{solve_forward, ForwardRun, SolverConfig};

/// Full definition of a control problem.
#[derive(Clone, Debug)]
pub struct OcpSpec {
    pub grid: Grid,
    pub t_final: f64,
    pub nt: usize,
    pub m0: VectorField3,
    pub m_d: Trajectory,
    pub m_omega: VectorField3,
    /// Bound on `||u||²_{L²(Ω_T)}`.
    pub e_mf: f64,
}

impl OcpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_mf > 0.0 && self.e_mf.is_finite()) {
            return Err(Error::Invalid(format!("e_mf must be positive, got {}", self.e_mf)));
        }
        if self.nt == 0 {
            return Err(Error::Invalid("nt must be at least 1".into()));
        }
        if &self.grid != self.m0.grid() {
            return Err(Error::Shape("m0 is not on the problem grid".into()));
        }
        self.m0.conforms(&self.m_omega)?;
        self.m0.conforms(self.m_d.frame(0))?;
        if self.m_d.nt() != self.nt || self.m_d.t_final().to_bits() != self.t_final.to_bits() {
            return Err(Error::Shape("m_d is not on the problem time grid".into()));
        }
        let defect = sphere_defect(&self.m0);
        if defect > 1e-10 {
            return Err(Error::Invalid(format!("m0 is off the unit sphere by {defect:.3e}")));
        }
        Ok(())
    }

    pub fn zero_control(&self) -> Trajectory {
        Trajectory::zeros(&self.grid, self.t_final, self.nt).expect("validated time grid")
    }

    fn check_control(&self, u: &Trajectory) -> Result<()> {
        u.conforms(&self.m_d)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown {
    pub tracking: f64,
    pub terminal: f64,
    pub control_l2: f64,
    pub control_h1: f64,
    pub total: f64,
}

/// Evaluates the four cost terms for a state/control pair.
pub fn evaluate_cost(m: &Trajectory, u: &Trajectory, spec: &OcpSpec) -> Result<CostBreakdown> {
    m.conforms(&spec.m_d)?;
    m.conforms(u)?;
    let diff = m.plus(-1.0, &spec.m_d)?;
    let tracking = 0.5 * diff.l2_norm_sq();
    let terminal = 0.5 * m.last().plus(-1.0, &spec.m_omega).l2_norm_sq();
    let control_l2 = 0.5 * u.l2_norm_sq();
    let mut grad = 0.0;
    for (k, f) in u.frames().iter().enumerate() {
        grad += u.time_weight(k) * gradient_inner(f, f)?;
    }
    let control_h1 = 0.5 * grad;
    Ok(CostBreakdown {
        tracking,
        terminal,
        control_l2,
        control_h1,
        total: tracking + terminal + control_l2 + control_h1,
    })
}

/// Inner product used to represent the gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradientMetric {
    L2,
    #[default]
    H1,
}

/// `φ×m + m×(φ×m)` frame by frame: the state contribution to the gradient density.
pub fn state_sensitivity(phi: &Trajectory, m: &Trajectory) -> Result<Trajectory> {
    phi.conforms(m)?;
    Ok(phi.map_frames(|k, p| {
        let pxm = cross_nodes(p, m.frame(k));
        let mut s = pxm.clone();
        s.axpy(1.0, &cross_nodes(m.frame(k), &pxm));
        s
    }))
}

/// Gradient representative of the reduced cost in the chosen metric.
///
/// `H1`: `u + (I − Δ)⁻¹ s`, so that `(g, h)_{H¹}` reproduces the directional
/// derivative. `L2`: the strong form `u − Δu + s`.
pub fn reduced_gradient(
    u: &Trajectory,
    phi: &Trajectory,
    m: &Trajectory,
    metric: GradientMetric,
) -> Result<Trajectory> {
    u.conforms(phi)?;
    let s = state_sensitivity(phi, m)?;
    Ok(match metric {
        GradientMetric::H1 => u.map_frames(|k, uk| {
            let mut g = helmholtz_inverse(s.frame(k));
            g.axpy(1.0, uk);
            g
        }),
        GradientMetric::L2 => u.map_frames(|k, uk| {
            let mut g = uk.plus(-1.0, &laplacian(uk));
            g.axpy(1.0, s.frame(k));
            g
        }),
    })
}

/// `∫_0^T (f, g)_{H¹(Ω)} dt` with trapezoid weights.
pub fn h1_inner(f: &Trajectory, g: &Trajectory) -> Result<f64> {
    f.conforms(g)?;
    let mut acc = 0.0;
    for k in 0..=f.nt() {
        let (a, b) = (f.frame(k), g.frame(k));
        acc += f.time_weight(k) * (l2_inner(a, b)? + gradient_inner(a, b)?);
    }
    Ok(acc)
}

/// Pairing of a gradient representative with a direction in its own metric.
pub fn metric_inner(g: &Trajectory, h: &Trajectory, metric: GradientMetric) -> Result<f64> {
    match metric {
        GradientMetric::H1 => h1_inner(g, h),
        GradientMetric::L2 => g.l2_inner(h),
    }
}

/// `∫∫ u·h + ∇u·∇h + s·h` assembled term by term, `s` from [`state_sensitivity`].
pub fn directional_derivative(u: &Trajectory, s: &Trajectory, h: &Trajectory) -> Result<f64> {
    Ok(h1_inner(u, h)? + s.l2_inner(h)?)
}

/// Radial projection onto `||u||²_{L²(Ω_T)} ≤ e_mf`.
pub fn project_uad(u: &Trajectory, e_mf: f64) -> Trajectory {
    project_with_flag(u, e_mf).0
}

fn project_with_flag(u: &Trajectory, e_mf: f64) -> (Trajectory, bool) {
    let norm_sq = u.l2_norm_sq();
    if norm_sq <= e_mf {
        return (u.clone(), false);
    }
    let mut p = u.scaled((e_mf / norm_sq).sqrt());
    // rounding can leave the rescaled norm a hair above the budget
    while p.l2_norm_sq() > e_mf {
        p = p.scaled(1.0 - f64::EPSILON);
    }
    (p, true)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
    pub metric: GradientMetric,
    /// Start each line search from the Barzilai-Borwein step instead of
    /// `initial_step`.
    pub barzilai_borwein: bool,
}

impl Default for OptOptions {
    fn default() -> Self {
        OptOptions {
            max_iter: 50,
            grad_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack_ratio: 0.5,
            initial_step: 1.0,
            max_backtracks: 40,
            metric: GradientMetric::H1,
            barzilai_borwein: true,
        }
    }
}

impl OptOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Invalid("grad_tol must be non-negative".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::Invalid("armijo_c must lie in (0, 1)".into()));
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return Err(Error::Invalid("backtrack_ratio must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Invalid("initial_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoppingReason {
    GradTol,
    MaxIter,
    LineSearchFail,
    BudgetBoundaryStall,
}

impl StoppingReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StoppingReason::GradTol => "grad_tol",
            StoppingReason::MaxIter => "max_iter",
            StoppingReason::LineSearchFail => "line_search_fail",
            StoppingReason::BudgetBoundaryStall => "budget_boundary_stall",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: CostBreakdown,
    /// `||P(u − s₀g) − u||_{L²(Ω_T)} / s₀`.
    pub grad_norm: f64,
    /// Step that produced this iterate; zero for the initial guess.
    pub step: f64,
    /// The projection was active in the projected-gradient probe at this iterate.
    pub budget_active: bool,
}

#[derive(Clone, Debug)]
pub struct OptReport {
    pub iterations: Vec<IterRecord>,
    pub stopping_reason: StoppingReason,
}

/// Everything known about one control iterate.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub u: Trajectory,
    pub run: ForwardRun,
    pub cost: CostBreakdown,
}

/// Forward solve and cost at `u`.
pub fn evaluate(spec: &OcpSpec, u: &Trajectory, cfg: &SolverConfig) -> Result<Evaluation> {
    spec.check_control(u)?;
    let run = solve_forward(&spec.m0, u, cfg)?;
    let cost = evaluate_cost(&run.trajectory, u, spec)?;
    Ok(Evaluation {
        u: u.clone(),
        run,
        cost,
    })
}

/// Adjoint state at an evaluated iterate.
pub fn adjoint_at(spec: &OcpSpec, ev: &Evaluation, cfg: &SolverConfig) -> Result<Trajectory> {
    solve_adjoint(
        &AdjointInput {
            m_traj: &ev.run.trajectory,
            u_traj: &ev.u,
            m_d: &spec.m_d,
            m_omega: &spec.m_omega,
        },
        cfg,
    )
}

/// Reduced cost `u ↦ J(G(u), u)`.
pub fn reduced_cost(spec: &OcpSpec, u: &Trajectory, cfg: &SolverConfig) -> Result<f64> {
    Ok(evaluate(spec, u, cfg)?.cost.total)
}

/// Gradient representative of the reduced cost at `u`, with its state and adjoint.
pub fn gradient_at(
    spec: &OcpSpec,
    u: &Trajectory,
    cfg: &SolverConfig,
    metric: GradientMetric,
) -> Result<(Trajectory, Evaluation, Trajectory)> {
    let ev = evaluate(spec, u, cfg)?;
    let phi = adjoint_at(spec, &ev, cfg)?;
    let g = reduced_gradient(u, &phi, &ev.run.trajectory, metric)?;
    Ok((g, ev, phi))
}

/// Result of an optimizer run.
#[derive(Clone, Debug)]
pub struct OptOutcome {
    pub u_star: Trajectory,
    pub m_star: Trajectory,
    pub phi_star: Trajectory,
    pub report: OptReport,
}

/// Projected gradient descent with backtracking Armijo line search.
pub fn optimize(
    spec: &OcpSpec,
    u_init: &Trajectory,
    cfg: &SolverConfig,
    opts: &OptOptions,
) -> Result<OptOutcome> {
    spec.validate()?;
    opts.validate()?;
    spec.check_control(u_init)?;
    let budget_tol = spec.e_mf * (1.0 + 1e-12);
    if u_init.l2_norm_sq() > budget_tol {
        return Err(Error::Invalid(format!(
            "initial control violates the budget: {:.6e} > {:.6e}",
            u_init.l2_norm_sq(),
            spec.e_mf
        )));
    }

    let mut current = evaluate(spec, u_init, cfg)?;
    let mut records = Vec::new();
    let mut last_step = 0.0;
    let mut previous: Option<(Trajectory, Trajectory)> = None;
    let s0 = opts.initial_step;
    let mut iter = 0;
    loop {
        let phi = adjoint_at(spec, &current, cfg)?;
        let g = reduced_gradient(&current.u, &phi, &current.run.trajectory, opts.metric)?;
        let (probe, probe_active) = project_with_flag(&current.u.plus(-s0, &g)?, spec.e_mf);
        let grad_norm = probe.plus(-1.0, &current.u)?.l2_norm_sq().sqrt() / s0;
        records.push(IterRecord {
            iter,
            cost: current.cost,
            grad_norm,
            step: last_step,
            budget_active: probe_active,
        });

        let stop = if grad_norm <= opts.grad_tol {
            Some(StoppingReason::GradTol)
        } else if iter >= opts.max_iter {
            Some(StoppingReason::MaxIter)
        } else {
            None
        };
        if let Some(reason) = stop {
            return Ok(finish(current, phi, records, reason));
        }

        let mut step = match (&previous, opts.barzilai_borwein) {
            (Some((u_prev, g_prev)), true) => {
                let du = current.u.plus(-1.0, u_prev)?;
                let dg = g.plus(-1.0, g_prev)?;
                let curvature = metric_inner(&du, &dg, opts.metric)?;
                let bb = metric_inner(&du, &du, opts.metric)? / curvature;
                if curvature > 0.0 && bb.is_finite() {
                    bb.clamp(1e-3 * s0, 1e3 * s0)
                } else {
                    s0
                }
            }
            _ => s0,
        };
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let (cand, active) = project_with_flag(&current.u.plus(-step, &g)?, spec.e_mf);
            let d = current.u.plus(-1.0, &cand)?;
            let decrease = metric_inner(&g, &d, opts.metric)?;
            let ev = evaluate(spec, &cand, cfg)?;
            if decrease > 0.0 && ev.cost.total <= current.cost.total - opts.armijo_c * decrease {
                accepted = Some((ev, active, d));
                break;
            }
            step *= opts.backtrack_ratio;
        }
        let Some((next, active, d)) = accepted else {
            return Ok(finish(current, phi, records, StoppingReason::LineSearchFail));
        };
        let moved = d.l2_norm_sq().sqrt();
        let scale = current.u.l2_norm_sq().sqrt().max(f64::MIN_POSITIVE);
        if active && moved <= 1e-12 * scale {
            current = next;
            let phi = adjoint_at(spec, &current, cfg)?;
            return Ok(finish(current, phi, records, StoppingReason::BudgetBoundaryStall));
        }
        previous = Some((std::mem::replace(&mut current, next).u, g));
        last_step = step;
        iter += 1;
    }
}

fn finish(
    ev: Evaluation,
    phi: Trajectory,
    iterations: Vec<IterRecord>,
    reason: StoppingReason,
) -> OptOutcome {
    OptOutcome {
        u_star: ev.u,
        m_star: ev.run.trajectory,
        phi_star: phi,
        report: OptReport {
            iterations,
            stopping_reason: reason,
        },
    }
}

/// Outcome of sampling the first-order variational inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct ViCertificate {
    pub probes: usize,
    /// Smallest normalized value of the inequality over the probes.
    pub min_normalized: f64,
    /// Smallest raw value.
    pub min_raw: f64,
}

/// Evaluates `∫∫ ũ·(u−ũ) + ∇ũ·∇(u−ũ) + s·(u−ũ)` for each probe control.
///
/// Each value is normalized by `||u − ũ||_{H¹} (||ũ||_{H¹} + ||(I−Δ)⁻¹s||_{H¹})`,
/// the size of the two pieces whose sum is the gradient.
pub fn variational_inequality(
    u_star: &Trajectory,
    phi: &Trajectory,
    m: &Trajectory,
    probes: &[Trajectory],
) -> Result<ViCertificate> {
    let s = state_sensitivity(phi, m)?;
    let s_h1 = s.map_frames(|_, f| helmholtz_inverse(f));
    let piece_scale = h1_inner(u_star, u_star)?.sqrt() + h1_inner(&s_h1, &s_h1)?.sqrt();
    let values = probes
        .par_iter()
        .map(|p| {
            let d = p.plus(-1.0, u_star)?;
            let raw = directional_derivative(u_star, &s, &d)?;
            let scale = h1_inner(&d, &d)?.sqrt() * piece_scale;
            Ok((raw, if scale > 0.0 { raw / scale } else { 0.0 }))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let min_raw = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let min_normalized = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    Ok(ViCertificate {
        probes: probes.len(),
        min_normalized,
        min_raw,
    })
}

/// Checks that `(g, h)_{H¹}` reproduces the assembled directional derivative;
/// returns the relative difference.
pub fn riesz_identity_residual(
    u: &Trajectory,
    phi: &Trajectory,
    m: &Trajectory,
    h: &Trajectory,
) -> Result<f64> {
    let g = reduced_gradient(u, phi, m, GradientMetric::H1)?;
    let lhs = h1_inner(&g, h)?;
    let s = state_sensitivity(phi, m)?;
    let rhs = directional_derivative(u, &s, h)?;
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE))
}

/// `(I − Δ) g`, frame by frame.
pub fn apply_helmholtz(g: &Trajectory) -> Trajectory {
    g.map_frames(|_, f| helmholtz(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralField;
    use crate::state::make_initial_data;

    fn unit(g: &Grid, v: [f64; 3]) -> VectorField3 {
        VectorField3::uniform(g, v)
    }

    fn constant_spec(g: &Grid, nt: usize) -> OcpSpec {
        let e3 = unit(g, [0.0, 0.0, 1.0]);
        OcpSpec {
            grid: g.clone(),
            t_final: 1.0,
            nt,
            m0: e3.clone(),
            m_d: Trajectory::constant(&unit(g, [1.0, 0.0, 0.0]), 1.0, nt).unwrap(),
            m_omega: e3,
            e_mf: 1.0,
        }
    }

    #[test]
    fn cost_of_constant_fields() {
        let g = Grid::unit_square(8).unwrap();
        let spec = constant_spec(&g, 10);
        let m = Trajectory::constant(&spec.m0, 1.0, 10).unwrap();
        let c = evaluate_cost(&m, &spec.zero_control(), &spec).unwrap();
        assert!((c.tracking - 1.0).abs() < 1e-12);
        assert_eq!((c.terminal, c.control_l2, c.control_h1), (0.0, 0.0, 0.0));
        assert!((c.total - 1.0).abs() < 1e-12);

        let perfect = evaluate_cost(&spec.m_d, &spec.zero_control(), &OcpSpec {
            m_omega: unit(&g, [1.0, 0.0, 0.0]),
            ..spec.clone()
        })
        .unwrap();
        assert_eq!(perfect.total, 0.0);
    }

    #[test]
    fn gradient_of_uniform_adjoint() {
        let g = Grid::unit_square(8).unwrap();
        let m = Trajectory::constant(&unit(&g, [0.0, 0.0, 1.0]), 1.0, 4).unwrap();
        let phi = Trajectory::constant(&unit(&g, [1.0, 0.0, 0.0]), 1.0, 4).unwrap();
        let u = Trajectory::zeros(&g, 1.0, 4).unwrap();
        let want = unit(&g, [1.0, -1.0, 0.0]);
        for metric in [GradientMetric::H1, GradientMetric::L2] {
            let gr = reduced_gradient(&u, &phi, &m, metric).unwrap();
            for f in gr.frames() {
                assert!(f.plus(-1.0, &want).max_abs() < 1e-14);
            }
        }
        let zero = reduced_gradient(&u, &u, &m, GradientMetric::H1).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn projection_examples() {
        let g = Grid::unit_square(8).unwrap();
        let u = Trajectory::constant(&unit(&g, [0.5, 0.0, 0.0]), 1.0, 4).unwrap();
        assert_eq!(project_uad(&u, 1.0), u);
        let big = Trajectory::constant(&unit(&g, [2.0, 0.0, 0.0]), 1.0, 4).unwrap();
        let p = project_uad(&big, 1.0);
        assert!((p.l2_norm_sq() - 1.0).abs() < 1e-12);
        assert!((p.frame(0).at(0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn riesz_identity_holds() {
        let g = Grid::unit_square(12).unwrap();
        let theta = SpectralField::cosine(&g, 1, 0, 0.4);
        let m0 = make_initial_data(&theta, &SpectralField::zeros(&g), &g).unwrap();
        let m = Trajectory::constant(&m0, 1.0, 3).unwrap();
        let u = Trajectory::from_fn(&g, 1.0, 3, |t, x, y| [t * x, y.cos(), 0.2]).unwrap();
        let phi = Trajectory::from_fn(&g, 1.0, 3, |t, x, y| [x * y, t, (3.0 * x).cos()]).unwrap();
        let h = Trajectory::from_fn(&g, 1.0, 3, |t, x, y| [(x - y).sin(), t * t, x]).unwrap();
        assert!(riesz_identity_residual(&u, &phi, &m, &h).unwrap() < 1e-10);
    }

    #[test]
    fn option_validation() {
        let bad = OptOptions {
            armijo_c: 1.5,
            ..OptOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptOptions {
            backtrack_ratio: 0.0,
            ..OptOptions::default()
        };
        assert!(bad.validate().is_err());
        assert!(OptOptions::default().validate().is_ok());
    }

    #[test]
    fn rejects_infeasible_start() {
        let g = Grid::unit_square(8).unwrap();
        let spec = constant_spec(&g, 4);
        let u = Trajectory::constant(&unit(&g, [3.0, 0.0, 0.0]), 1.0, 4).unwrap();
        assert!(optimize(&spec, &u, &SolverConfig::new(4), &OptOptions::default()).is_err());
    }
}
