//! Three-component nodal vector fields, trajectories and the pointwise
//! algebra shared by every solver.

use crate::error::{Error, Result};
use crate::spectral::{laplacian, Grid};

/// A 3-vector at every collocation node.
///
/// Storage is component-major: three planes of `nx * ny` values, `x`
/// fastest within a plane.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField3 {
    grid: Grid,
    data: Vec<f64>,
}

impl VectorField3 {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField3 {
            grid: grid.clone(),
            data: vec![0.0; 3 * grid.len()],
        }
    }

    pub fn uniform(grid: &Grid, v: [f64; 3]) -> Self {
        let n = grid.len();
        let mut data = Vec::with_capacity(3 * n);
        for c in v {
            data.extend(std::iter::repeat(c).take(n));
        }
        VectorField3 {
            grid: grid.clone(),
            data,
        }
    }

    /// Samples `f(x, y)` at the nodes.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for iy in 0..grid.ny() {
            for ix in 0..grid.nx() {
                out.set(grid.index(ix, iy), f(grid.x(ix), grid.y(iy)));
            }
        }
        out
    }

    pub fn from_data(grid: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * grid.len() {
            return Err(Error::Shape(format!(
                "vector field needs {} values, got {}",
                3 * grid.len(),
                data.len()
            )));
        }
        Ok(VectorField3 {
            grid: grid.clone(),
            data,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, i: usize) -> [f64; 3] {
        let n = self.grid.len();
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    pub fn set(&mut self, i: usize, v: [f64; 3]) {
        let n = self.grid.len();
        self.data[i] = v[0];
        self.data[n + i] = v[1];
        self.data[2 * n + i] = v[2];
    }

    pub fn conforms(&self, other: &VectorField3) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Shape(format!(
                "fields live on different grids: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    pub(crate) fn map_components(&self, f: impl Fn(&Grid, &[f64]) -> Vec<f64>) -> VectorField3 {
        let mut out = Self::zeros(&self.grid);
        for c in 0..3 {
            let v = f(&self.grid, self.component(c));
            out.component_mut(c).copy_from_slice(&v);
        }
        out
    }

    /// Pointwise map over node vectors.
    pub fn map_nodes(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> VectorField3 {
        let mut out = Self::zeros(&self.grid);
        for i in 0..self.grid.len() {
            out.set(i, f(self.at(i)));
        }
        out
    }

    /// `self += a * other`. Panics if the grids differ.
    pub fn axpy(&mut self, a: f64, other: &VectorField3) {
        assert!(self.grid == other.grid, "axpy on different grids");
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> VectorField3 {
        VectorField3 {
            grid: self.grid.clone(),
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn scale_in_place(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    /// `self + a * other`. Panics if the grids differ.
    pub fn plus(&self, a: f64, other: &VectorField3) -> VectorField3 {
        let mut out = self.clone();
        out.axpy(a, other);
        out
    }

    /// Pointwise dot product.
    pub fn dot(&self, other: &VectorField3) -> Result<Vec<f64>> {
        self.conforms(other)?;
        Ok(dot_nodes(self, other))
    }

    /// Pointwise squared magnitude.
    pub fn norm_sq_nodes(&self) -> Vec<f64> {
        dot_nodes(self, self)
    }

    /// `||f||²` in L²(Ω).
    pub fn l2_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>() * self.grid.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub(crate) fn dot_nodes(a: &VectorField3, b: &VectorField3) -> Vec<f64> {
    let (a0, a1, a2) = (a.component(0), a.component(1), a.component(2));
    let (b0, b1, b2) = (b.component(0), b.component(1), b.component(2));
    (0..a.grid.len())
        .map(|i| a0[i] * b0[i] + a1[i] * b1[i] + a2[i] * b2[i])
        .collect()
}

pub(crate) fn cross_nodes(a: &VectorField3, b: &VectorField3) -> VectorField3 {
    let mut out = VectorField3::zeros(&a.grid);
    let n = a.grid.len();
    let (x, y) = (&a.data, &b.data);
    let o = &mut out.data;
    for i in 0..n {
        let (a0, a1, a2) = (x[i], x[n + i], x[2 * n + i]);
        let (b0, b1, b2) = (y[i], y[n + i], y[2 * n + i]);
        o[i] = a1 * b2 - a2 * b1;
        o[n + i] = a2 * b0 - a0 * b2;
        o[2 * n + i] = a0 * b1 - a1 * b0;
    }
    out
}

/// Multiplies each node vector by the matching scalar.
pub(crate) fn scale_nodes(s: &[f64], f: &VectorField3) -> VectorField3 {
    let mut out = f.clone();
    for c in 0..3 {
        for (v, k) in out.component_mut(c).iter_mut().zip(s) {
            *v *= k;
        }
    }
    out
}

#[inline]
pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Pointwise `a × b`.
pub fn cross(a: &VectorField3, b: &VectorField3) -> Result<VectorField3> {
    a.conforms(b)?;
    Ok(cross_nodes(a, b))
}

/// `Δm + u`: exchange plus applied field.
pub fn effective_field(m: &VectorField3, u: &VectorField3) -> Result<VectorField3> {
    m.conforms(u)?;
    let mut h = laplacian(m);
    h.axpy(1.0, u);
    Ok(h)
}

/// `max_x | |m(x)|² - 1 |`.
pub fn sphere_defect(m: &VectorField3) -> f64 {
    m.norm_sq_nodes()
        .into_iter()
        .fold(0.0, |acc, s| acc.max((s - 1.0).abs()))
}

/// Pointwise projection onto the unit sphere.
pub fn renormalize(m: &VectorField3) -> Result<VectorField3> {
    let n = m.grid.len();
    let mut out = m.clone();
    for i in 0..n {
        let v = m.at(i);
        let r = dot3(v, v).sqrt();
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Degenerate(format!(
                "node {i} has magnitude {r}, cannot normalize"
            )));
        }
        out.set(i, [v[0] / r, v[1] / r, v[2] / r]);
    }
    Ok(out)
}

/// Time-indexed sequence of fields on the uniform grid `t_k = k T / nt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    t_final: f64,
    frames: Vec<VectorField3>,
}

impl Trajectory {
    /// `frames` holds `nt + 1` snapshots from `t = 0` to `t = t_final`.
    pub fn new(t_final: f64, frames: Vec<VectorField3>) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::Invalid(format!(
                "horizon must be positive, got {t_final}"
            )));
        }
        if frames.len() < 2 {
            return Err(Error::Invalid("a trajectory needs at least two frames".into()));
        }
        for f in &frames[1..] {
            frames[0].conforms(f)?;
        }
        Ok(Trajectory { t_final, frames })
    }

    pub fn constant(field: &VectorField3, t_final: f64, nt: usize) -> Result<Self> {
        Self::new(t_final, vec![field.clone(); nt + 1])
    }

    pub fn zeros(grid: &Grid, t_final: f64, nt: usize) -> Result<Self> {
        Self::constant(&VectorField3::zeros(grid), t_final, nt)
    }

    /// Samples `f(t, x, y)` on the time grid.
    pub fn from_fn(
        grid: &Grid,
        t_final: f64,
        nt: usize,
        f: impl Fn(f64, f64, f64) -> [f64; 3],
    ) -> Result<Self> {
        let dt = t_final / nt as f64;
        let frames = (0..=nt)
            .map(|k| {
                let t = k as f64 * dt;
                VectorField3::from_fn(grid, |x, y| f(t, x, y))
            })
            .collect();
        Self::new(t_final, frames)
    }

    pub fn nt(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn grid(&self) -> &Grid {
        self.frames[0].grid()
    }

    pub fn frame(&self, k: usize) -> &VectorField3 {
        &self.frames[k]
    }

    pub fn frames(&self) -> &[VectorField3] {
        &self.frames
    }

    pub fn last(&self) -> &VectorField3 {
        self.frames.last().expect("trajectory is never empty")
    }

    pub fn into_frames(self) -> Vec<VectorField3> {
        self.frames
    }

    /// Same grid, same time grid.
    pub fn conforms(&self, other: &Trajectory) -> Result<()> {
        if self.nt() != other.nt() || self.t_final.to_bits() != other.t_final.to_bits() {
            return Err(Error::Shape(format!(
                "time grids differ: nt {} on [0, {}] vs nt {} on [0, {}]",
                self.nt(),
                self.t_final,
                other.nt(),
                other.t_final
            )));
        }
        self.frames[0].conforms(&other.frames[0])
    }

    /// Frame-wise `self + a * other`.
    pub fn plus(&self, a: f64, other: &Trajectory) -> Result<Trajectory> {
        self.conforms(other)?;
        let frames = self
            .frames
            .iter()
            .zip(&other.frames)
            .map(|(x, y)| x.plus(a, y))
            .collect();
        Ok(Trajectory {
            t_final: self.t_final,
            frames,
        })
    }

    pub fn scaled(&self, a: f64) -> Trajectory {
        Trajectory {
            t_final: self.t_final,
            frames: self.frames.iter().map(|f| f.scaled(a)).collect(),
        }
    }

    pub fn map_frames(&self, f: impl Fn(usize, &VectorField3) -> VectorField3) -> Trajectory {
        Trajectory {
            t_final: self.t_final,
            frames: self.frames.iter().enumerate().map(|(k, x)| f(k, x)).collect(),
        }
    }

    /// Trapezoid weights in time.
    pub fn time_weight(&self, k: usize) -> f64 {
        let dt = self.dt();
        if k == 0 || k == self.nt() {
            0.5 * dt
        } else {
            dt
        }
    }

    /// Trapezoidal `∫_0^T (f, g)_{L²} dt`.
    pub fn l2_inner(&self, other: &Trajectory) -> Result<f64> {
        self.conforms(other)?;
        let area = self.grid().cell_area();
        Ok(self
            .frames
            .iter()
            .zip(&other.frames)
            .enumerate()
            .map(|(k, (a, b))| {
                self.time_weight(k) * crate::spectral::dot_raw(a.data(), b.data()) * area
            })
            .sum())
    }

    /// `||f||²` in L²(Ω_T).
    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_inner(self).expect("self conforms")
    }

    /// Largest pointwise entry over all frames.
    pub fn max_abs(&self) -> f64 {
        self.frames.iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(1.0, 1.5, 8, 6).unwrap()
    }

    fn field(seed: &[f64]) -> VectorField3 {
        let g = grid();
        let s = seed.to_vec();
        VectorField3::from_fn(&g, move |x, y| {
            [
                s[0] + s[1] * (3.0 * x).sin(),
                s[2] * (x * y + s[3]).cos(),
                s[4] - s[5] * y * x,
            ]
        })
    }

    fn max_diff(a: &VectorField3, b: &VectorField3) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn basis_cross_products() {
        let g = grid();
        let e1 = VectorField3::uniform(&g, [1.0, 0.0, 0.0]);
        let e2 = VectorField3::uniform(&g, [0.0, 1.0, 0.0]);
        let e3 = VectorField3::uniform(&g, [0.0, 0.0, 1.0]);
        assert_eq!(cross(&e1, &e2).unwrap(), e3);
        assert_eq!(cross(&e1, &e1).unwrap(), VectorField3::zeros(&g));
    }

    #[test]
    fn cross_rejects_mismatched_grids() {
        let a = VectorField3::zeros(&grid());
        let b = VectorField3::zeros(&Grid::unit_square(8).unwrap());
        assert!(matches!(cross(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(effective_field(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn effective_field_examples() {
        let g = Grid::unit_square(16).unwrap();
        let m = VectorField3::uniform(&g, [0.0, 0.0, 1.0]);
        let zero = VectorField3::zeros(&g);
        assert!(effective_field(&m, &zero).unwrap().max_abs() < 1e-12);
        let u0 = VectorField3::uniform(&g, [0.3, -0.2, 0.1]);
        assert!(max_diff(&effective_field(&m, &u0).unwrap(), &u0) < 1e-12);

        let m = VectorField3::from_fn(&g, |x, _| [0.0, 0.0, (PI * x).cos()]);
        let h = effective_field(&m, &zero).unwrap();
        assert!(max_diff(&h, &m.scaled(-PI * PI)) < 1e-10);
    }

    #[test]
    fn sphere_defect_examples() {
        let g = grid();
        assert_eq!(sphere_defect(&VectorField3::uniform(&g, [0.0, 0.0, 1.0])), 0.0);
        assert_eq!(sphere_defect(&VectorField3::uniform(&g, [0.0, 0.0, 2.0])), 3.0);
    }

    #[test]
    fn renormalize_examples() {
        let g = grid();
        let e3 = VectorField3::uniform(&g, [0.0, 0.0, 1.0]);
        assert_eq!(renormalize(&e3).unwrap(), e3);
        assert_eq!(renormalize(&e3.scaled(2.0)).unwrap(), e3);
        let mut bad = e3.clone();
        bad.set(5, [0.0, 0.0, 0.0]);
        assert!(matches!(renormalize(&bad), Err(Error::Degenerate(_))));
    }

    #[test]
    fn trajectory_time_grid() {
        let g = grid();
        let t = Trajectory::zeros(&g, 2.0, 8).unwrap();
        assert_eq!(t.nt(), 8);
        assert!((t.dt() - 0.25).abs() < 1e-15);
        assert!((t.time(8) - 2.0).abs() < 1e-12);
        assert!(Trajectory::new(1.0, vec![VectorField3::zeros(&g)]).is_err());
        let other = VectorField3::zeros(&Grid::unit_square(8).unwrap());
        assert!(Trajectory::new(1.0, vec![VectorField3::zeros(&g), other]).is_err());
    }

    #[test]
    fn trapezoid_norm_of_constant() {
        let g = grid();
        let t = Trajectory::constant(&VectorField3::uniform(&g, [1.0, 2.0, 2.0]), 3.0, 7).unwrap();
        assert!((t.l2_norm_sq() - 9.0 * 1.5 * 3.0).abs() < 1e-12);
    }

    fn vals() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0f64..2.0, 6)
    }

    proptest! {
        #[test]
        fn cross_product_identities(a in vals(), b in vals(), c in vals(), alpha in -3.0f64..3.0) {
            let (a, b, c) = (field(&a), field(&b), field(&c));
            let axb = cross(&a, &b).unwrap();
            let bxa = cross(&b, &a).unwrap();
            prop_assert!(max_diff(&axb, &bxa.scaled(-1.0)) < 1e-13);

            // a × (b × c) = (a·c) b − (a·b) c
            let lhs = cross(&a, &cross(&b, &c).unwrap()).unwrap();
            let ac = a.dot(&c).unwrap();
            let ab = a.dot(&b).unwrap();
            let rhs = scale_nodes(&ac, &b).plus(-1.0, &scale_nodes(&ab, &c));
            prop_assert!(max_diff(&lhs, &rhs) < 1e-13 * (1.0 + lhs.max_abs()));

            // a·(b×c) = −(b×a)·c and a·(a×b) = 0
            let t1 = a.dot(&cross(&b, &c).unwrap()).unwrap();
            let t2 = bxa.dot(&c).unwrap();
            for (x, y) in t1.iter().zip(&t2) {
                prop_assert!((x + y).abs() < 1e-13 * (1.0 + x.abs()));
            }
            for v in a.dot(&axb).unwrap() {
                prop_assert!(v.abs() < 1e-13 * (1.0 + axb.max_abs() * a.max_abs()));
            }

            // bilinearity
            let left = cross(&a.scaled(alpha).plus(1.0, &b), &c).unwrap();
            let right = cross(&a, &c).unwrap().scaled(alpha).plus(1.0, &cross(&b, &c).unwrap());
            prop_assert!(max_diff(&left, &right) < 1e-12 * (1.0 + left.max_abs()));
        }

        #[test]
        fn renormalize_is_idempotent(a in vals()) {
            let f = field(&a).map_nodes(|v| [v[0] + 3.0, v[1], v[2]]);
            let once = renormalize(&f).unwrap();
            prop_assert!(sphere_defect(&once) <= 1e-15);
            let twice = renormalize(&once).unwrap();
            prop_assert!(max_diff(&once, &twice) <= 1e-15);
        }
    }
}
