//! Linearized state equation around a frozen trajectory.
//!
//! The general system with source `g` and initial value `v0`, and the
//! control-derivative system where the source is `m × h − m × (m × h)` and
//! `z(0) = 0`. Both are swept with the same IMEX splitting and step size as
//! the state, so the control-derivative solution is the exact derivative of
//! the discrete control-to-state map.

use crate::error::{Error, Result};
use crate::fields::{cross_nodes, scale_nodes, Trajectory, VectorField3};
use crate::spectral::Derivatives;
use crate::state::{at_step, dealias, imex_update, SolverConfig, BLOWUP_THRESHOLD};

/// Right-hand side data for a tangent sweep.
#[derive(Clone, Debug)]
pub enum TangentSource {
    /// Source `g(t)` and initial value `v0`.
    General { g: Trajectory, v0: VectorField3 },
    /// Control direction `h(t)`; the initial value is zero.
    ControlDirection { h: Trajectory },
}

#[derive(Clone, Debug)]
pub struct TangentInput<'a> {
    pub base_m: &'a Trajectory,
    pub base_u: &'a Trajectory,
    pub source: TangentSource,
}

/// `2m(∇m·∇v) + |∇m|²v + v×Δm + m×Δv + v×u − v×(m×u) − m×(v×u)`.
pub(crate) fn linearized_nonlinear(
    v: &VectorField3,
    dv: &Derivatives,
    m: &VectorField3,
    dm: &Derivatives,
    u: &VectorField3,
) -> VectorField3 {
    let n = m.grid().len();
    let mut contraction = vec![0.0; n];
    for c in 0..3 {
        let (mx, my) = (dm.dx.component(c), dm.dy.component(c));
        let (vx, vy) = (dv.dx.component(c), dv.dy.component(c));
        for i in 0..n {
            contraction[i] += mx[i] * vx[i] + my[i] * vy[i];
        }
    }
    contraction.iter_mut().for_each(|x| *x *= 2.0);
    let mut out = scale_nodes(&contraction, m);
    out.axpy(1.0, &scale_nodes(&dm.gradient_sq(), v));
    out.axpy(1.0, &cross_nodes(v, &dm.lap));
    out.axpy(1.0, &cross_nodes(m, &dv.lap));
    out.axpy(1.0, &cross_nodes(v, u));
    out.axpy(-1.0, &cross_nodes(v, &cross_nodes(m, u)));
    out.axpy(-1.0, &cross_nodes(m, &cross_nodes(v, u)));
    out
}

/// Full right-hand side of the linearized system, `Δv` included.
pub fn tangent_rhs(
    v: &VectorField3,
    m: &VectorField3,
    u: &VectorField3,
    g: &VectorField3,
) -> Result<VectorField3> {
    v.conforms(m)?;
    v.conforms(u)?;
    v.conforms(g)?;
    let dv = Derivatives::of(v);
    let mut out = linearized_nonlinear(v, &dv, m, &Derivatives::of(m), u);
    out.axpy(1.0, &dv.lap);
    out.axpy(1.0, g);
    Ok(out)
}

/// `m × h − m × (m × h)`: the control enters the state equation through this term.
pub fn control_derivative_source(m: &VectorField3, h: &VectorField3) -> Result<VectorField3> {
    m.conforms(h)?;
    Ok(control_source_nodes(m, h))
}

pub(crate) fn control_source_nodes(m: &VectorField3, h: &VectorField3) -> VectorField3 {
    let mxh = cross_nodes(m, h);
    let mut out = mxh.clone();
    out.axpy(-1.0, &cross_nodes(m, &mxh));
    out
}

/// Forward IMEX sweep of the linearized system.
pub fn solve_tangent(inp: &TangentInput<'_>, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let (m, u) = (inp.base_m, inp.base_u);
    m.conforms(u)?;
    let grid = m.grid();
    let mut v = match &inp.source {
        TangentSource::General { g, v0 } => {
            m.conforms(g)?;
            m.frame(0).conforms(v0)?;
            v0.clone()
        }
        TangentSource::ControlDirection { h } => {
            m.conforms(h)?;
            VectorField3::zeros(grid)
        }
    };
    let dt = m.dt();
    let mut frames = Vec::with_capacity(m.nt() + 1);
    for k in 0..m.nt() {
        let (mk, uk) = (m.frame(k), u.frame(k));
        let mut n = linearized_nonlinear(&v, &Derivatives::of(&v), mk, &Derivatives::of(mk), uk);
        match &inp.source {
            TangentSource::ControlDirection { h } => {
                n.axpy(1.0, &control_source_nodes(mk, h.frame(k)));
                if cfg.dealias {
                    dealias(&mut n);
                }
            }
            TangentSource::General { g, .. } => {
                if cfg.dealias {
                    dealias(&mut n);
                }
                n.axpy(1.0, g.frame(k));
            }
        }
        let next = imex_update(&v, &n, dt);
        if !next.is_finite() || next.max_abs() > BLOWUP_THRESHOLD {
            return Err(at_step(
                Error::Blowup {
                    step: 0,
                    detail: "tangent sweep diverged".into(),
                },
                k + 1,
            ));
        }
        frames.push(std::mem::replace(&mut v, next));
    }
    frames.push(v);
    Trajectory::new(m.t_final(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{laplacian, Grid, SpectralField};
    use crate::state::{make_initial_data, rhs, Formulation};

    fn grid() -> Grid {
        Grid::unit_square(16).unwrap()
    }

    fn smooth(g: &Grid, a: f64, b: f64) -> VectorField3 {
        VectorField3::from_fn(g, |x, y| {
            [
                a * (std::f64::consts::PI * x).cos(),
                b * (2.0 * std::f64::consts::PI * y).cos() + 0.1,
                a * b * (std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos(),
            ]
        })
    }

    #[test]
    fn zero_direction_gives_zero() {
        let g = grid();
        let m = smooth(&g, 0.3, 0.2);
        let u = smooth(&g, 0.1, 0.5);
        let z = VectorField3::zeros(&g);
        assert_eq!(tangent_rhs(&z, &m, &u, &z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn constant_base_reduces_to_heat_plus_rotation() {
        let g = grid();
        let m = VectorField3::uniform(&g, [0.0, 0.0, 1.0]);
        let v = smooth(&g, 0.7, -0.4);
        let z = VectorField3::zeros(&g);
        let got = tangent_rhs(&v, &m, &z, &z).unwrap();
        let lap = laplacian(&v);
        let mut want = lap.clone();
        want.axpy(1.0, &crate::fields::cross(&m, &lap).unwrap());
        assert!(got.plus(-1.0, &want).max_abs() < 1e-11);
    }

    #[test]
    fn matches_central_difference_of_state_rhs() {
        let g = grid();
        let theta = SpectralField::cosine(&g, 1, 1, 0.4);
        let phi = SpectralField::cosine(&g, 2, 0, 0.3);
        let m = make_initial_data(&theta, &phi, &g).unwrap();
        let u = smooth(&g, 0.5, 0.3);
        let v = smooth(&g, -0.2, 0.6);
        let z = VectorField3::zeros(&g);
        let eps = 1e-5;
        let plus = rhs(&m.plus(eps, &v), &u, Formulation::Ep).unwrap();
        let minus = rhs(&m.plus(-eps, &v), &u, Formulation::Ep).unwrap();
        let fd = plus.plus(-1.0, &minus).scaled(0.5 / eps);
        let lin = tangent_rhs(&v, &m, &u, &z).unwrap();
        let rel = fd.plus(-1.0, &lin).max_abs() / lin.max_abs();
        assert!(rel <= 1e-6, "relative error {rel}");
    }

    #[test]
    fn control_source_examples() {
        let g = grid();
        let m = VectorField3::uniform(&g, [0.0, 0.0, 1.0]);
        let h = VectorField3::uniform(&g, [1.0, 0.0, 0.0]);
        let s = control_derivative_source(&m, &h).unwrap();
        let want = VectorField3::uniform(&g, [1.0, 1.0, 0.0]);
        assert!(s.plus(-1.0, &want).max_abs() < 1e-15);
        let parallel = control_derivative_source(&m, &m.scaled(2.5)).unwrap();
        assert_eq!(parallel.max_abs(), 0.0);
    }

    #[test]
    fn control_source_norm_on_the_sphere() {
        let g = grid();
        let theta = SpectralField::cosine(&g, 1, 2, 1.1);
        let phi = SpectralField::cosine(&g, 3, 1, 0.8);
        let m = make_initial_data(&theta, &phi, &g).unwrap();
        let h = smooth(&g, 1.3, -0.7);
        let s = control_derivative_source(&m, &h).unwrap();
        let mxh = crate::fields::cross(&m, &h).unwrap();
        let lhs = s.norm_sq_nodes();
        let rhs = mxh.norm_sq_nodes();
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - 2.0 * b).abs() <= 1e-12 * (1.0 + b));
        }
    }
}
