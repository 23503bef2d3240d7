//! Backward sweep for the adjoint state.
//!
//! ```text
//! −φ_t − Δφ = Δ(φ×m) + Δm×φ + u×φ − 2∇·{(m·φ)∇m} + |∇m|²φ
//!             + (φ×m)×u + φ×(m×u) + (m − m_d),          φ(T) = m(T) − m_Ω
//! ```
//!
//! The continuous system is discretized on the state's time grid with
//! backward IMEX Euler (`Δφ` implicit). The divergence term is taken with
//! the sine-side spectral divergence, which is the exact negative adjoint of
//! the cosine gradient used by the state solver.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::fields::{cross_nodes, dot_nodes, scale_nodes, Trajectory, VectorField3};
use crate::spectral::{laplacian, Derivatives};
use crate::state::{advance, at_step, dealias, imex_update, SolverConfig, BLOWUP_THRESHOLD};

#[derive(Clone, Debug)]
pub struct AdjointInput<'a> {
    pub m_traj: &'a Trajectory,
    pub u_traj: &'a Trajectory,
    pub m_d: &'a Trajectory,
    pub m_omega: &'a VectorField3,
}

/// `φ(T) = m(T) − m_Ω`.
pub fn terminal_condition(m_t: &VectorField3, m_omega: &VectorField3) -> Result<VectorField3> {
    m_t.conforms(m_omega)?;
    Ok(m_t.plus(-1.0, m_omega))
}

/// The state-coupled part of the adjoint operator (no `Δφ`, no source).
pub(crate) fn adjoint_operator(
    phi: &VectorField3,
    m: &VectorField3,
    dm: &Derivatives,
    u: &VectorField3,
) -> VectorField3 {
    let grid = m.grid();
    let phixm = cross_nodes(phi, m);
    let mut out = laplacian(&phixm);
    out.axpy(1.0, &cross_nodes(&dm.lap, phi));
    out.axpy(1.0, &cross_nodes(u, phi));

    let mphi = dot_nodes(m, phi);
    let mut div = VectorField3::zeros(grid);
    for c in 0..3 {
        let fx: Vec<f64> = mphi.iter().zip(dm.dx.component(c)).map(|(a, b)| a * b).collect();
        let fy: Vec<f64> = mphi.iter().zip(dm.dy.component(c)).map(|(a, b)| a * b).collect();
        div.component_mut(c).copy_from_slice(&grid.divergence(&fx, &fy));
    }
    out.axpy(-2.0, &div);

    out.axpy(1.0, &scale_nodes(&dm.gradient_sq(), phi));
    out.axpy(1.0, &cross_nodes(&phixm, u));
    out.axpy(1.0, &cross_nodes(phi, &cross_nodes(m, u)));
    out
}

/// Full right-hand side of `−φ_t = …`, including `Δφ` and the tracking source.
pub fn adjoint_rhs(
    phi: &VectorField3,
    m: &VectorField3,
    u: &VectorField3,
    m_d: &VectorField3,
) -> Result<VectorField3> {
    phi.conforms(m)?;
    phi.conforms(u)?;
    phi.conforms(m_d)?;
    let mut out = adjoint_operator(phi, m, &Derivatives::of(m), u);
    out.axpy(1.0, &laplacian(phi));
    out.axpy(1.0, m);
    out.axpy(-1.0, m_d);
    Ok(out)
}

fn backward_step(
    phi: &VectorField3,
    m: &VectorField3,
    u: &VectorField3,
    m_d: &VectorField3,
    dt: f64,
    cfg: &SolverConfig,
) -> VectorField3 {
    let mut n = if cfg.dealias {
        // the forward filter is an orthogonal projection, so it moves to the argument
        let mut p = phi.clone();
        dealias(&mut p);
        adjoint_operator(&p, m, &Derivatives::of(m), u)
    } else {
        adjoint_operator(phi, m, &Derivatives::of(m), u)
    };
    n.axpy(1.0, m);
    n.axpy(-1.0, m_d);
    imex_update(phi, &n, dt)
}

fn check_inputs(inp: &AdjointInput<'_>) -> Result<()> {
    inp.m_traj.conforms(inp.u_traj)?;
    inp.m_traj.conforms(inp.m_d)?;
    inp.m_traj.last().conforms(inp.m_omega)
}

fn sweep<'s>(
    nt: usize,
    dt: f64,
    t_final: f64,
    u: &Trajectory,
    m_d: &Trajectory,
    terminal: VectorField3,
    cfg: &SolverConfig,
    mut state_at: impl FnMut(usize) -> Result<Cow<'s, VectorField3>>,
) -> Result<Trajectory> {
    let mut frames = vec![VectorField3::zeros(terminal.grid()); nt + 1];
    frames[nt] = terminal;
    for k in (0..nt).rev() {
        let m = state_at(k)?;
        let next = backward_step(&frames[k + 1], &m, u.frame(k), m_d.frame(k), dt, cfg);
        if !next.is_finite() || next.max_abs() > BLOWUP_THRESHOLD {
            return Err(at_step(
                Error::Blowup {
                    step: 0,
                    detail: "adjoint sweep diverged".into(),
                },
                k,
            ));
        }
        frames[k] = next;
    }
    Trajectory::new(t_final, frames)
}

/// Backward sweep against a fully stored state trajectory.
pub fn solve_adjoint(inp: &AdjointInput<'_>, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_inputs(inp)?;
    let m = inp.m_traj;
    let terminal = terminal_condition(m.last(), inp.m_omega)?;
    sweep(m.nt(), m.dt(), m.t_final(), inp.u_traj, inp.m_d, terminal, cfg, |k| {
        Ok(Cow::Borrowed(m.frame(k)))
    })
}

/// How the state is made available to the backward sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateStorage {
    /// Every frame held in memory.
    Full,
    /// Every `stride`-th frame held; segments recomputed on the way back.
    Checkpointed { stride: usize },
}

impl StateStorage {
    /// Full storage when `nt + 1` frames fit in `budget_bytes`, otherwise the
    /// smallest stride whose checkpoints plus one live segment fit.
    pub fn for_budget(grid_len: usize, nt: usize, budget_bytes: Option<usize>) -> Self {
        let frame = 3 * grid_len * std::mem::size_of::<f64>();
        let Some(budget) = budget_bytes else {
            return StateStorage::Full;
        };
        if (nt + 1) * frame <= budget {
            return StateStorage::Full;
        }
        let mut best = None;
        for stride in 2..=nt.max(2) {
            let held = (nt / stride + 2) + stride;
            if held * frame <= budget {
                best = Some(stride);
                break;
            }
        }
        // past this point even sqrt-spaced checkpoints overflow; take the cheapest layout
        let stride = best.unwrap_or_else(|| ((nt as f64).sqrt().ceil() as usize).max(2));
        StateStorage::Checkpointed { stride }
    }
}

/// Forward solve followed by the adjoint sweep, with the state stored
/// according to `storage`. Returns `(m, φ)` where `m` is `None` in
/// checkpointed mode.
pub fn solve_adjoint_from_control(
    m0: &VectorField3,
    u: &Trajectory,
    m_d: &Trajectory,
    m_omega: &VectorField3,
    cfg: &SolverConfig,
    storage: StateStorage,
) -> Result<(Option<Trajectory>, Trajectory)> {
    match storage {
        StateStorage::Full => {
            let run = crate::state::solve_forward(m0, u, cfg)?;
            let phi = solve_adjoint(
                &AdjointInput {
                    m_traj: &run.trajectory,
                    u_traj: u,
                    m_d,
                    m_omega,
                },
                cfg,
            )?;
            Ok((Some(run.trajectory), phi))
        }
        StateStorage::Checkpointed { stride } => {
            let phi = solve_adjoint_checkpointed(m0, u, m_d, m_omega, cfg, stride)?;
            Ok((None, phi))
        }
    }
}

fn solve_adjoint_checkpointed(
    m0: &VectorField3,
    u: &Trajectory,
    m_d: &Trajectory,
    m_omega: &VectorField3,
    cfg: &SolverConfig,
    stride: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    if stride == 0 {
        return Err(Error::Invalid("checkpoint stride must be at least 1".into()));
    }
    u.conforms(m_d)?;
    m0.conforms(m_omega)?;
    m0.conforms(u.frame(0))?;
    let nt = u.nt();
    if nt != cfg.nt {
        return Err(Error::Shape(format!(
            "control has {nt} steps, solver configured for {}",
            cfg.nt
        )));
    }
    let mut checkpoints = vec![(0, m0.clone())];
    let last = advance(m0, u, 0, nt, cfg, |k, m| {
        if k % stride == 0 && k < nt {
            checkpoints.push((k, m.clone()));
        }
    })?;
    let terminal = terminal_condition(&last, m_omega)?;

    // segment cache: frames [start, start + len) of the current checkpoint
    let mut seg_start = usize::MAX;
    let mut segment: Vec<VectorField3> = Vec::new();
    sweep(nt, u.dt(), u.t_final(), u, m_d, terminal, cfg, move |k| {
        if k < seg_start || k >= seg_start + segment.len() {
            let c = k / stride;
            let (start, m_start) = &checkpoints[c];
            let end = (start + stride).min(nt);
            let mut frames = vec![m_start.clone()];
            advance(m_start, u, *start, end - 1, cfg, |_, m| frames.push(m.clone()))?;
            seg_start = *start;
            segment = frames;
        }
        Ok(Cow::Owned(segment[k - seg_start].clone()))
    })
}
