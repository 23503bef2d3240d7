//! Cosine-basis Galerkin machinery on a rectangle with homogeneous Neumann
//! boundary conditions.
//!
//! Fields live on the cell-centred collocation nodes `x_i = lx (i + 1/2) / nx`
//! (likewise in `y`). The spectral coefficients are taken against the
//! L²(Ω)-orthonormal eigenfunctions of `-Δ + I`,
//!
//! ```text
//! ξ_jk(x, y) = sqrt(ε_j / lx) cos(jπx/lx) · sqrt(ε_k / ly) cos(kπy/ly),   ε_0 = 1, ε_j = 2
//! ```
//!
//! using the uniform node quadrature `lx·ly / (nx·ny)`, so Parseval holds
//! exactly between the nodal and the coefficient norm. First derivatives map
//! cosine series to sine series; the sine side uses the matching DST pair so
//! that the discrete gradient and divergence are exact negative adjoints.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};
use crate::fields::VectorField3;

/// Per-axis parity of a separable series.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Parity {
    Cos,
    Sin,
}

struct Axis {
    n: usize,
    len: f64,
    plan: Arc<dyn TransformType2And3<f64>>,
    /// `jπ / len` for `j = 0..=n`.
    wavenumber: Vec<f64>,
}

impl Axis {
    fn new(planner: &mut DctPlanner<f64>, n: usize, len: f64) -> Self {
        let plan = planner.plan_dct2(n);
        let wavenumber = (0..=n).map(|j| j as f64 * PI / len).collect();
        Axis {
            n,
            len,
            plan,
            wavenumber,
        }
    }

    fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.plan.get_scratch_len()]
    }

    /// Nodal values on one line to orthonormal coefficients.
    ///
    /// For `Sin`, slot `p` holds mode `p + 1`.
    fn forward(&self, line: &mut [f64], parity: Parity, scratch: &mut [f64]) {
        let n = self.n as f64;
        let edge = self.len.sqrt() / n;
        let bulk = (2.0 * self.len).sqrt() / n;
        match parity {
            Parity::Cos => {
                self.plan.process_dct2_with_scratch(line, scratch);
                line[0] *= edge;
                line[1..].iter_mut().for_each(|v| *v *= bulk);
            }
            Parity::Sin => {
                self.plan.process_dst2_with_scratch(line, scratch);
                let last = line.len() - 1;
                line[..last].iter_mut().for_each(|v| *v *= bulk);
                line[last] *= edge;
            }
        }
    }

    fn inverse(&self, line: &mut [f64], parity: Parity, scratch: &mut [f64]) {
        let edge = 2.0 / self.len.sqrt();
        let bulk = (2.0 / self.len).sqrt();
        match parity {
            Parity::Cos => {
                line[0] *= edge;
                line[1..].iter_mut().for_each(|v| *v *= bulk);
                self.plan.process_dct3_with_scratch(line, scratch);
            }
            Parity::Sin => {
                let last = line.len() - 1;
                line[..last].iter_mut().for_each(|v| *v *= bulk);
                line[last] *= edge;
                self.plan.process_dst3_with_scratch(line, scratch);
            }
        }
    }
}

struct Plans {
    x: Axis,
    y: Axis,
    eigen: EigenData,
}

/// Rectangle geometry and collocation resolution.
///
/// Cloning is cheap: the transform plans and eigenvalue tables are shared.
#[derive(Clone)]
pub struct Grid {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.lx.to_bits() == other.lx.to_bits()
            && self.ly.to_bits() == other.ly.to_bits()
    }
}

/// Eigenvalues of `-Δ` (`lambda`) and `-Δ + I` (`rho`) per mode, stored with
/// the same layout as [`SpectralField::coeffs`].
#[derive(Clone, Debug)]
pub struct EigenData {
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Grid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx.is_finite() && lx > 0.0) {
            return Err(Error::Invalid(format!("lx must be positive, got {lx}")));
        }
        if !(ly.is_finite() && ly > 0.0) {
            return Err(Error::Invalid(format!("ly must be positive, got {ly}")));
        }
        if nx < 4 || ny < 4 {
            return Err(Error::Invalid(format!(
                "need at least 4 nodes per axis, got {nx}x{ny}"
            )));
        }
        let mut planner = DctPlanner::new();
        let x = Axis::new(&mut planner, nx, lx);
        let y = Axis::new(&mut planner, ny, ly);
        let mut lambda = Vec::with_capacity(nx * ny);
        for k in 0..ny {
            for j in 0..nx {
                lambda.push(x.wavenumber[j].powi(2) + y.wavenumber[k].powi(2));
            }
        }
        let rho = lambda.iter().map(|l| l + 1.0).collect();
        Ok(Grid {
            lx,
            ly,
            nx,
            ny,
            plans: Arc::new(Plans {
                x,
                y,
                eigen: EigenData { lambda, rho },
            }),
        })
    }

    /// Unit square with `n x n` nodes.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(1.0, 1.0, n, n)
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of collocation nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lx * (i as f64 + 0.5) / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.ly * (j as f64 + 0.5) / self.ny as f64
    }

    /// Flat index of node `(ix, iy)`; `x` runs fastest.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// Area element of the node quadrature.
    pub fn cell_area(&self) -> f64 {
        self.lx * self.ly / (self.nx * self.ny) as f64
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn eigen(&self) -> &EigenData {
        &self.plans.eigen
    }

    /// Largest resolved eigenvalue of `-Δ`.
    pub fn lambda_max(&self) -> f64 {
        let p = &self.plans;
        p.x.wavenumber[self.nx - 1].powi(2) + p.y.wavenumber[self.ny - 1].powi(2)
    }

    pub(crate) fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape(format!(
                "{what} has {len} values, grid {}x{} needs {}",
                self.nx,
                self.ny,
                self.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn forward2(&self, f: &[f64], px: Parity, py: Parity) -> Vec<f64> {
        let mut out = f.to_vec();
        self.forward2_in_place(&mut out, px, py);
        out
    }

    pub(crate) fn forward2_in_place(&self, data: &mut [f64], px: Parity, py: Parity) {
        let (nx, ny) = (self.nx, self.ny);
        let p = &self.plans;
        let mut scratch = p.x.scratch();
        for row in data.chunks_exact_mut(nx) {
            p.x.forward(row, px, &mut scratch);
        }
        let mut scratch = p.y.scratch();
        let mut col = vec![0.0; ny];
        for ix in 0..nx {
            for iy in 0..ny {
                col[iy] = data[iy * nx + ix];
            }
            p.y.forward(&mut col, py, &mut scratch);
            for iy in 0..ny {
                data[iy * nx + ix] = col[iy];
            }
        }
    }

    pub(crate) fn inverse2(&self, c: &[f64], px: Parity, py: Parity) -> Vec<f64> {
        let mut out = c.to_vec();
        self.inverse2_in_place(&mut out, px, py);
        out
    }

    pub(crate) fn inverse2_in_place(&self, data: &mut [f64], px: Parity, py: Parity) {
        let (nx, ny) = (self.nx, self.ny);
        let p = &self.plans;
        let mut scratch = p.y.scratch();
        let mut col = vec![0.0; ny];
        for ix in 0..nx {
            for iy in 0..ny {
                col[iy] = data[iy * nx + ix];
            }
            p.y.inverse(&mut col, py, &mut scratch);
            for iy in 0..ny {
                data[iy * nx + ix] = col[iy];
            }
        }
        let mut scratch = p.x.scratch();
        for row in data.chunks_exact_mut(nx) {
            p.x.inverse(row, px, &mut scratch);
        }
    }

    /// Cosine coefficients to nodal `(∂x f, ∂y f)`.
    pub(crate) fn gradient_from_coeffs(&self, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let kx = &self.plans.x.wavenumber;
        let ky = &self.plans.y.wavenumber;
        // cos(jπx) -> -k_j sin(jπx); sine slot p carries mode p + 1, slot n-1 stays empty
        let mut gx = vec![0.0; nx * ny];
        let mut gy = vec![0.0; nx * ny];
        for k in 0..ny {
            for j in 1..nx {
                gx[k * nx + j - 1] = -kx[j] * c[k * nx + j];
            }
        }
        for k in 1..ny {
            for j in 0..nx {
                gy[(k - 1) * nx + j] = -ky[k] * c[k * nx + j];
            }
        }
        self.inverse2_in_place(&mut gx, Parity::Sin, Parity::Cos);
        self.inverse2_in_place(&mut gy, Parity::Cos, Parity::Sin);
        (gx, gy)
    }

    /// Nodal divergence `∂x fx + ∂y fy` of a flux whose normal component
    /// vanishes on the boundary. Exact negative adjoint of
    /// [`Grid::gradient_from_coeffs`] under the node quadrature.
    pub(crate) fn divergence(&self, fx: &[f64], fy: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let kx = &self.plans.x.wavenumber;
        let ky = &self.plans.y.wavenumber;
        let bx = self.forward2(fx, Parity::Sin, Parity::Cos);
        let by = self.forward2(fy, Parity::Cos, Parity::Sin);
        let mut c = vec![0.0; nx * ny];
        for k in 0..ny {
            for j in 1..nx {
                c[k * nx + j] += kx[j] * bx[k * nx + j - 1];
            }
        }
        for k in 1..ny {
            for j in 0..nx {
                c[k * nx + j] += ky[k] * by[(k - 1) * nx + j];
            }
        }
        self.inverse2_in_place(&mut c, Parity::Cos, Parity::Cos);
        c
    }

    /// Applies `coeff ↦ coeff · weight(lambda)` to a nodal scalar plane.
    pub(crate) fn apply_symbol(&self, f: &[f64], weight: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.forward2(f, Parity::Cos, Parity::Cos);
        for (v, &l) in c.iter_mut().zip(&self.plans.eigen.lambda) {
            *v *= weight(l);
        }
        self.inverse2_in_place(&mut c, Parity::Cos, Parity::Cos);
        c
    }

    /// Zeroes modes outside the 2/3 band, in place on a nodal plane.
    pub(crate) fn dealias_in_place(&self, f: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        self.forward2_in_place(f, Parity::Cos, Parity::Cos);
        let cx = (2 * nx) / 3;
        let cy = (2 * ny) / 3;
        for k in 0..ny {
            for j in 0..nx {
                if j >= cx || k >= cy {
                    f[k * nx + j] = 0.0;
                }
            }
        }
        self.inverse2_in_place(f, Parity::Cos, Parity::Cos);
    }
}

/// Cosine-series coefficients of one scalar component, mode `(j, k)` at
/// `coeffs[k * nx + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub nx: usize,
    pub ny: usize,
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralField {
            nx: grid.nx(),
            ny: grid.ny(),
            coeffs: vec![0.0; grid.len()],
        }
    }

    /// A single mode `(j, k)` carrying `value`.
    pub fn mode(grid: &Grid, j: usize, k: usize, value: f64) -> Self {
        let mut s = Self::zeros(grid);
        s.coeffs[k * grid.nx() + j] = value;
        s
    }

    /// Coefficient vector that reproduces `amplitude · cos(jπx/lx) cos(kπy/ly)`.
    pub fn cosine(grid: &Grid, j: usize, k: usize, amplitude: f64) -> Self {
        let ex = if j == 0 { 1.0 } else { 2.0 };
        let ey = if k == 0 { 1.0 } else { 2.0 };
        let norm = (ex / grid.lx()).sqrt() * (ey / grid.ly()).sqrt();
        Self::mode(grid, j, k, amplitude / norm)
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.coeffs[k * self.nx + j]
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    fn conforms(&self, grid: &Grid) -> Result<()> {
        if self.nx != grid.nx() || self.ny != grid.ny() || self.coeffs.len() != grid.len() {
            return Err(Error::Shape(format!(
                "spectral field {}x{} ({} coeffs) does not match grid {}x{}",
                self.nx,
                self.ny,
                self.coeffs.len(),
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(())
    }
}

/// Projects nodal values onto the cosine eigenbasis.
pub fn to_spectral(f: &[f64], grid: &Grid) -> Result<SpectralField> {
    grid.check_len(f.len(), "nodal field")?;
    Ok(SpectralField {
        nx: grid.nx(),
        ny: grid.ny(),
        coeffs: grid.forward2(f, Parity::Cos, Parity::Cos),
    })
}

/// Evaluates a cosine series at the collocation nodes.
pub fn to_nodal(c: &SpectralField, grid: &Grid) -> Result<Vec<f64>> {
    c.conforms(grid)?;
    Ok(grid.inverse2(&c.coeffs, Parity::Cos, Parity::Cos))
}

/// Componentwise spectral Laplacian.
pub fn laplacian(f: &VectorField3) -> VectorField3 {
    f.map_components(|g, c| g.apply_symbol(c, |l| -l))
}

/// `Σ_c |∇f_c|²` at each node.
pub fn gradient_sq(f: &VectorField3) -> Vec<f64> {
    let g = f.grid();
    let mut out = vec![0.0; g.len()];
    for c in 0..3 {
        let coeffs = g.forward2(f.component(c), Parity::Cos, Parity::Cos);
        let (dx, dy) = g.gradient_from_coeffs(&coeffs);
        for ((o, a), b) in out.iter_mut().zip(&dx).zip(&dy) {
            *o += a * a + b * b;
        }
    }
    out
}

/// Solves `(I - Δ) w = f` with Neumann conditions.
pub fn helmholtz_inverse(f: &VectorField3) -> VectorField3 {
    f.map_components(|g, c| g.apply_symbol(c, |l| 1.0 / (1.0 + l)))
}

/// Applies `I - Δ`.
pub fn helmholtz(f: &VectorField3) -> VectorField3 {
    f.map_components(|g, c| g.apply_symbol(c, |l| 1.0 + l))
}

/// Solves `(I - dt Δ) w = f`, the implicit half of an IMEX Euler step.
pub fn implicit_diffusion(f: &VectorField3, dt: f64) -> VectorField3 {
    f.map_components(|g, c| g.apply_symbol(c, |l| 1.0 / (1.0 + dt * l)))
}

/// L²(Ω) inner product under the node quadrature.
pub fn l2_inner(f: &VectorField3, g: &VectorField3) -> Result<f64> {
    f.conforms(g)?;
    Ok(dot_raw(f.data(), g.data()) * f.grid().cell_area())
}

/// `Σ_c (∇f_c, ∇g_c)` under the node quadrature.
pub fn gradient_inner(f: &VectorField3, g: &VectorField3) -> Result<f64> {
    f.conforms(g)?;
    let grid = f.grid();
    let df = Derivatives::of(f);
    let dg = Derivatives::of(g);
    let s = dot_raw(df.dx.data(), dg.dx.data()) + dot_raw(df.dy.data(), dg.dy.data());
    Ok(s * grid.cell_area())
}

pub(crate) fn dot_raw(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Laplacian and first derivatives of a vector field from one forward
/// transform per component.
pub(crate) struct Derivatives {
    pub lap: VectorField3,
    pub dx: VectorField3,
    pub dy: VectorField3,
}

impl Derivatives {
    pub fn of(f: &VectorField3) -> Self {
        let g = f.grid().clone();
        let mut lap = VectorField3::zeros(&g);
        let mut dx = VectorField3::zeros(&g);
        let mut dy = VectorField3::zeros(&g);
        for c in 0..3 {
            let coeffs = g.forward2(f.component(c), Parity::Cos, Parity::Cos);
            let (gx, gy) = g.gradient_from_coeffs(&coeffs);
            let mut l = coeffs;
            for (v, &lam) in l.iter_mut().zip(&g.eigen().lambda) {
                *v *= -lam;
            }
            g.inverse2_in_place(&mut l, Parity::Cos, Parity::Cos);
            lap.component_mut(c).copy_from_slice(&l);
            dx.component_mut(c).copy_from_slice(&gx);
            dy.component_mut(c).copy_from_slice(&gy);
        }
        Derivatives { lap, dx, dy }
    }

    /// `|∇f|²` per node.
    pub fn gradient_sq(&self) -> Vec<f64> {
        let n = self.dx.grid().len();
        (0..n)
            .map(|i| {
                (0..3)
                    .map(|c| self.dx.component(c)[i].powi(2) + self.dy.component(c)[i].powi(2))
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(g: &Grid, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Grid::new(0.0, 1.0, 8, 8).is_err());
        assert!(Grid::new(1.0, -1.0, 8, 8).is_err());
        assert!(Grid::new(1.0, 1.0, 3, 8).is_err());
    }

    #[test]
    fn nodes_are_cell_centred() {
        let g = Grid::new(2.0, 1.0, 4, 5).unwrap();
        assert_eq!(g.x(0), 0.25);
        assert_eq!(g.x(3), 1.75);
        assert!((g.y(2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues() {
        let g = Grid::new(2.0, 3.0, 6, 5).unwrap();
        let e = g.eigen();
        assert_eq!(e.lambda[0], 0.0);
        let want = (2.0 * PI / 2.0f64).powi(2) + (3.0 * PI / 3.0f64).powi(2);
        assert!((e.lambda[3 * 6 + 2] - want).abs() < 1e-12);
        for k in 0..5 {
            for j in 0..6 {
                let i = k * 6 + j;
                assert_eq!(e.rho[i], e.lambda[i] + 1.0);
                if j > 0 {
                    assert!(e.lambda[i] >= e.lambda[i - 1]);
                }
                if k > 0 {
                    assert!(e.lambda[i] >= e.lambda[i - 6]);
                }
            }
        }
    }

    #[test]
    fn constant_is_mode_zero() {
        let g = Grid::new(1.5, 0.5, 8, 6).unwrap();
        let s = to_spectral(&vec![1.0; g.len()], &g).unwrap();
        assert!((s.get(0, 0) - (1.5f64 * 0.5).sqrt()).abs() < 1e-14);
        assert!(max_abs(&s.coeffs[1..]) < 1e-14);
    }

    #[test]
    fn single_cosine_is_single_mode() {
        let g = Grid::new(1.0, 2.0, 16, 8).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|i| (PI * g.x(i % 16) / g.lx()).cos())
            .collect();
        let s = to_spectral(&f, &g).unwrap();
        let want = SpectralField::cosine(&g, 1, 0, 1.0);
        for (a, b) in s.coeffs.iter().zip(&want.coeffs) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn mode_zero_evaluates_to_scaled_constant() {
        let g = Grid::new(2.0, 2.0, 8, 8).unwrap();
        let f = to_nodal(&SpectralField::mode(&g, 0, 0, 3.0), &g).unwrap();
        for v in f {
            assert!((v - 1.5).abs() < 1e-14);
        }
        let z = to_nodal(&SpectralField::zeros(&g), &g).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_and_parseval() {
        for &(nx, ny) in &[(8, 8), (12, 20), (33, 17)] {
            let g = Grid::new(1.3, 0.7, nx, ny).unwrap();
            let f = random_plane(&g, nx as u64);
            let s = to_spectral(&f, &g).unwrap();
            let back = to_nodal(&s, &g).unwrap();
            let scale = max_abs(&f);
            for (a, b) in f.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
            let nodal = dot_raw(&f, &f) * g.cell_area();
            assert!((nodal - s.norm_sq()).abs() <= 1e-10 * nodal);
        }
    }

    #[test]
    fn sine_round_trip() {
        let g = Grid::new(1.0, 1.0, 10, 7).unwrap();
        let f = random_plane(&g, 3);
        for (px, py) in [(Parity::Sin, Parity::Cos), (Parity::Cos, Parity::Sin)] {
            let back = g.inverse2(&g.forward2(&f, px, py), px, py);
            for (a, b) in f.iter().zip(&back) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let g = Grid::unit_square(8).unwrap();
        assert!(matches!(to_spectral(&[0.0; 10], &g), Err(Error::Shape(_))));
        let s = SpectralField {
            nx: 4,
            ny: 4,
            coeffs: vec![0.0; 16],
        };
        assert!(matches!(to_nodal(&s, &g), Err(Error::Shape(_))));
    }

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let g = Grid::new(1.0, 1.4, 12, 10).unwrap();
        let f = random_plane(&g, 1);
        let px = random_plane(&g, 2);
        let py = random_plane(&g, 3);
        let c = g.forward2(&f, Parity::Cos, Parity::Cos);
        let (dx, dy) = g.gradient_from_coeffs(&c);
        let lhs = dot_raw(&dx, &px) + dot_raw(&dy, &py);
        let rhs = -dot_raw(&f, &g.divergence(&px, &py));
        assert!((lhs - rhs).abs() < 1e-11 * lhs.abs().max(1.0));
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        let g = Grid::new(1.0, 1.0, 16, 16).unwrap();
        let f = random_plane(&g, 9);
        let c = g.forward2(&f, Parity::Cos, Parity::Cos);
        let (dx, dy) = g.gradient_from_coeffs(&c);
        let div = g.divergence(&dx, &dy);
        let lap = g.apply_symbol(&f, |l| -l);
        let scale = max_abs(&lap);
        for (a, b) in div.iter().zip(&lap) {
            assert!((a - b).abs() < 1e-11 * scale);
        }
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let g = Grid::unit_square(12).unwrap();
        let mut low = to_nodal(&SpectralField::mode(&g, 2, 3, 1.0), &g).unwrap();
        let keep = low.clone();
        g.dealias_in_place(&mut low);
        for (a, b) in low.iter().zip(&keep) {
            assert!((a - b).abs() < 1e-14);
        }
        let mut high = to_nodal(&SpectralField::mode(&g, 9, 0, 1.0), &g).unwrap();
        g.dealias_in_place(&mut high);
        assert!(max_abs(&high) < 1e-14);
    }
}
