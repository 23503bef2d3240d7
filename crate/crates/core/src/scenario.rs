//! Canonical problem setups and seeded random smooth data.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::control::OcpSpec;
use crate::error::{Error, Result};
use crate::fields::{Trajectory, VectorField3};
use crate::spectral::{Grid, SpectralField};
use crate::state::{make_initial_data, solve_forward, SolverConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random combination of cosine modes `j, k < modes` with amplitudes
/// decaying like `1/(1 + j + k)²`, scaled by `amplitude`.
pub fn random_smooth_scalar(grid: &Grid, rng: &mut impl Rng, modes: usize, amplitude: f64) -> SpectralField {
    let mut c = SpectralField::zeros(grid);
    let (mx, my) = (modes.min(grid.nx()), modes.min(grid.ny()));
    for k in 0..my {
        for j in 0..mx {
            let decay = 1.0 / ((1 + j + k) as f64).powi(2);
            let a: f64 = rng.gen_range(-1.0..1.0);
            c.coeffs[k * grid.nx() + j] = amplitude * decay * a;
        }
    }
    c
}

pub fn random_smooth_field(grid: &Grid, rng: &mut impl Rng, modes: usize, amplitude: f64) -> VectorField3 {
    let mut data = Vec::with_capacity(3 * grid.len());
    for _ in 0..3 {
        let c = random_smooth_scalar(grid, rng, modes, amplitude);
        data.extend(crate::spectral::to_nodal(&c, grid).expect("grid-sized coefficients"));
    }
    VectorField3::from_data(grid, data).expect("grid-sized data")
}

/// `a(x) + cos(πt/T) b(x)` with random smooth `a`, `b`.
pub fn random_smooth_control(
    grid: &Grid,
    t_final: f64,
    nt: usize,
    rng: &mut impl Rng,
    amplitude: f64,
) -> Result<Trajectory> {
    let a = random_smooth_field(grid, rng, 4, amplitude);
    let b = random_smooth_field(grid, rng, 4, 0.5 * amplitude);
    let frames = (0..=nt)
        .map(|k| {
            let t = t_final * k as f64 / nt as f64;
            a.plus((PI * t / t_final).cos(), &b)
        })
        .collect();
    Trajectory::new(t_final, frames)
}

/// Random unit-norm control direction of the same shape as [`random_smooth_control`].
pub fn random_direction(grid: &Grid, t_final: f64, nt: usize, rng: &mut impl Rng) -> Result<Trajectory> {
    let h = random_smooth_control(grid, t_final, nt, rng, 1.0)?;
    let n = h.l2_norm_sq().sqrt();
    Ok(h.scaled(1.0 / n))
}

/// Uniform tilted magnetization `(sinθ₀, 0, cosθ₀)`.
pub fn macrospin_initial(grid: &Grid, theta0: f64) -> VectorField3 {
    VectorField3::uniform(grid, [theta0.sin(), 0.0, theta0.cos()])
}

/// Smooth angle-field perturbation of `e₃`:
/// `θ = 0.3 s cos(πx/lx)`, `φ = 0.2 s cos(πy/ly)`.
pub fn perturbed_initial(grid: &Grid, scale: f64) -> Result<VectorField3> {
    let theta = SpectralField::cosine(grid, 1, 0, 0.3 * scale);
    let phi = SpectralField::cosine(grid, 0, 1, 0.2 * scale);
    make_initial_data(&theta, &phi, grid)
}

/// Constant-in-time smooth field `s (0.1 cos(πx/lx), 0.1 cos(πy/ly), 0.05)`
/// used with [`perturbed_initial`].
pub fn perturbed_control(grid: &Grid, t_final: f64, nt: usize, scale: f64) -> Result<Trajectory> {
    let (lx, ly) = (grid.lx(), grid.ly());
    let u = VectorField3::from_fn(grid, |x, y| {
        [
            0.1 * scale * (PI * x / lx).cos(),
            0.1 * scale * (PI * y / ly).cos(),
            0.05 * scale,
        ]
    });
    Trajectory::constant(&u, t_final, nt)
}

/// Scenario kinds understood by the command-line front end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    Stationary,
    Macrospin,
    Perturbed,
    InverseCrime,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stationary" => Some(ScenarioKind::Stationary),
            "macrospin" => Some(ScenarioKind::Macrospin),
            "perturbed" => Some(ScenarioKind::Perturbed),
            "inverse_crime" => Some(ScenarioKind::InverseCrime),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Stationary => "stationary",
            ScenarioKind::Macrospin => "macrospin",
            ScenarioKind::Perturbed => "perturbed",
            ScenarioKind::InverseCrime => "inverse_crime",
        }
    }
}

/// Parameters shared by every scenario kind.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub theta0: f64,
    pub field: f64,
    pub scale: f64,
    pub seed: u64,
    /// `e_mf` as a multiple of `||u†||²`, or of 1 when `u† = 0`.
    pub budget_factor: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            theta0: PI / 4.0,
            field: 1.0,
            scale: 1.0,
            seed: 0,
            budget_factor: 4.0,
        }
    }
}

/// A complete problem plus the control that generated its data.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub spec: OcpSpec,
    /// Control used to synthesize `m_d`.
    pub u_dagger: Trajectory,
}

/// Smooth constant-in-time control tangent to the unit sphere near `e₃`,
/// dominated by its uniform mode.
pub fn inverse_crime_control(grid: &Grid, t_final: f64, nt: usize, seed: u64, scale: f64) -> Result<Trajectory> {
    let mut r = rng(seed);
    let mut planes = Vec::with_capacity(3 * grid.len());
    for _ in 0..2 {
        let mut c = random_smooth_scalar(grid, &mut r, 3, 0.15 * scale);
        let mean: f64 = r.gen_range(0.3..0.6) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        c.coeffs[0] = mean * scale * grid.area().sqrt();
        planes.extend(crate::spectral::to_nodal(&c, grid)?);
    }
    planes.extend(std::iter::repeat(0.0).take(grid.len()));
    let u = VectorField3::from_data(grid, planes)?;
    Trajectory::constant(&u, t_final, nt)
}

/// Initial magnetization and generating control of a scenario kind.
pub fn default_data(
    kind: ScenarioKind,
    grid: &Grid,
    t_final: f64,
    nt: usize,
    params: &ScenarioParams,
) -> Result<(VectorField3, Trajectory)> {
    Ok(match kind {
        ScenarioKind::Stationary => (
            VectorField3::uniform(grid, [0.0, 0.0, 1.0]),
            Trajectory::zeros(grid, t_final, nt)?,
        ),
        ScenarioKind::Macrospin => (
            macrospin_initial(grid, params.theta0),
            Trajectory::constant(&VectorField3::uniform(grid, [0.0, 0.0, params.field]), t_final, nt)?,
        ),
        ScenarioKind::Perturbed => (
            perturbed_initial(grid, params.scale)?,
            perturbed_control(grid, t_final, nt, params.scale)?,
        ),
        ScenarioKind::InverseCrime => (
            perturbed_initial(grid, 1.0)?,
            inverse_crime_control(grid, t_final, nt, params.seed, params.scale)?,
        ),
    })
}

/// Synthesizes the target from `u†`: `m_d = G(u†)`, `m_Ω = m_d(T)`, and
/// `e_mf = budget_factor · ||u†||²` (or `budget_factor` when `u† = 0`).
pub fn from_data(
    kind: ScenarioKind,
    m0: VectorField3,
    u_dagger: Trajectory,
    cfg: &SolverConfig,
    budget_factor: f64,
) -> Result<Scenario> {
    if !(budget_factor > 0.0) {
        return Err(Error::Invalid("budget_factor must be positive".into()));
    }
    let grid = m0.grid().clone();
    let run = solve_forward(&m0, &u_dagger, cfg)?;
    let m_omega = run.trajectory.last().clone();
    let norm = u_dagger.l2_norm_sq();
    let e_mf = budget_factor * if norm > 0.0 { norm } else { 1.0 };
    Ok(Scenario {
        kind,
        spec: OcpSpec {
            grid,
            t_final: u_dagger.t_final(),
            nt: u_dagger.nt(),
            m0,
            m_d: run.trajectory,
            m_omega,
            e_mf,
        },
        u_dagger,
    })
}

/// Builds a scenario; `m_d` is the state generated by `u†`, so the target
/// is attainable.
pub fn build(
    kind: ScenarioKind,
    grid: &Grid,
    t_final: f64,
    cfg: &SolverConfig,
    params: &ScenarioParams,
) -> Result<Scenario> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Invalid(format!("T must be positive, got {t_final}")));
    }
    let (m0, u_dagger) = default_data(kind, grid, t_final, cfg.nt, params)?;
    from_data(kind, m0, u_dagger, cfg, params.budget_factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sphere_defect;

    #[test]
    fn seeded_data_is_reproducible() {
        let g = Grid::unit_square(8).unwrap();
        let a = random_smooth_field(&g, &mut rng(3), 4, 1.0);
        let b = random_smooth_field(&g, &mut rng(3), 4, 1.0);
        let c = random_smooth_field(&g, &mut rng(4), 4, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stationary_and_macrospin_data() {
        let g = Grid::unit_square(8).unwrap();
        let cfg = SolverConfig::new(8);
        let s = build(ScenarioKind::Stationary, &g, 1.0, &cfg, &ScenarioParams::default()).unwrap();
        assert_eq!(sphere_defect(&s.spec.m0), 0.0);
        assert!(s.spec.m_d.frames().iter().all(|f| f == &s.spec.m0));
        let p = ScenarioParams::default();
        let m = build(ScenarioKind::Macrospin, &g, 1.0, &cfg, &p).unwrap();
        assert_eq!(m.u_dagger.frame(3).at(5), [0.0, 0.0, 1.0]);
        assert!((m.spec.m0.at(0)[0] - (PI / 4.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn inverse_crime_target_is_reproducible() {
        let g = Grid::unit_square(8).unwrap();
        let cfg = SolverConfig::new(16);
        let p = ScenarioParams {
            seed: 11,
            ..ScenarioParams::default()
        };
        let a = build(ScenarioKind::InverseCrime, &g, 1.0, &cfg, &p).unwrap();
        let rerun = solve_forward(&a.spec.m0, &a.u_dagger, &cfg).unwrap();
        assert_eq!(rerun.trajectory, a.spec.m_d);
        assert!(a.u_dagger.frame(0).component(2).iter().all(|&z| z == 0.0));
        assert!((a.spec.e_mf - 4.0 * a.u_dagger.l2_norm_sq()).abs() < 1e-12);
    }
}
