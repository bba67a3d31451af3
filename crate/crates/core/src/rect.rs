//! Korn-type inequalities on thin rectangles `[0, h] x [0, p]`.
//!
//! Fields `(u, v)` live on a Chebyshev grid in `x` and either a Chebyshev or a
//! uniform periodic grid in `y`. The modified gradients are
//! `G_alpha = [[u_x, u_y], [v_x, v_y + alpha u]]` and
//! `G_* = [[u_x, u_y - v], [v_x, v_y + u]]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KornError, Result};
use crate::quadrature::{chebyshev_t, Axis, AxisKind, CompensatedSum};

/// `K_0 = (sqrt 2 + 1/pi) / pi`.
pub const K0: f64 = (std::f64::consts::SQRT_2 + 1.0 / PI) / PI;

/// Absolute trace tolerance, scaled by the field's magnitude when it exceeds 1.
pub const TRACE_TOL: f64 = 1e-12;

pub const DEFAULT_NX: usize = 16;
pub const DEFAULT_NY: usize = 48;

/// Tensor grid on `[x_lo, x_hi] x Y`.
pub struct RectGrid {
    x: Axis,
    y: Axis,
    laplace: OnceLock<Arc<LaplaceSolver>>,
}

impl fmt::Debug for RectGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RectGrid")
            .field("x", &(self.x.lo(), self.x.hi(), self.x.len()))
            .field(
                "y",
                &(self.y.kind(), self.y.lo(), self.y.hi(), self.y.len()),
            )
            .finish()
    }
}

impl RectGrid {
    /// Chebyshev nodes on `[0, h] x [0, p]`.
    pub fn new(h: f64, p: f64, nx: usize, ny: usize) -> Result<Arc<Self>> {
        Self::on(0.0, h, p, nx, ny)
    }

    /// Chebyshev nodes on `[x_lo, x_hi] x [0, p]`.
    pub fn on(x_lo: f64, x_hi: f64, p: f64, nx: usize, ny: usize) -> Result<Arc<Self>> {
        check_extent(x_hi - x_lo, p, nx, ny)?;
        Ok(Arc::new(Self::from_axes(
            Axis::lobatto(x_lo, x_hi, nx),
            Axis::lobatto(0.0, p, ny),
        )))
    }

    /// Chebyshev in `x`, uniform periodic in `y` on `[0, p)`.
    pub fn periodic(h: f64, p: f64, nx: usize, ny: usize) -> Result<Arc<Self>> {
        check_extent(h, p, nx, ny)?;
        Ok(Arc::new(Self::from_axes(
            Axis::lobatto(0.0, h, nx),
            Axis::periodic(0.0, p, ny),
        )))
    }

    fn from_axes(x: Axis, y: Axis) -> Self {
        Self {
            x,
            y,
            laplace: OnceLock::new(),
        }
    }

    /// Same `x` axis, `y` axis reflected to `[-p, p]` as two panels.
    pub fn mirrored(&self) -> Result<Arc<Self>> {
        if self.y.kind() != AxisKind::Lobatto || !self.y.is_single_panel() || self.y.lo() != 0.0 {
            return Err(KornError::Precondition(
                "mirroring needs a single-panel Chebyshev y axis starting at 0".into(),
            ));
        }
        Ok(Arc::new(Self::from_axes(self.x.clone(), self.y.mirrored())))
    }

    pub fn x_axis(&self) -> &Axis {
        &self.x
    }

    pub fn y_axis(&self) -> &Axis {
        &self.y
    }

    /// Thickness `h` (length of the `x` interval).
    pub fn h(&self) -> f64 {
        self.x.length()
    }

    /// Length of the `y` interval.
    pub fn p(&self) -> f64 {
        self.y.length()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x.len(), self.y.len())
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.y.len() + iy
    }

    pub fn node(&self, ix: usize, iy: usize) -> (f64, f64) {
        (self.x.nodes()[ix], self.y.nodes()[iy])
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        let (nx, ny) = self.shape();
        let mut acc = CompensatedSum::new();
        for ix in 0..nx {
            let wx = self.x.weights()[ix];
            for iy in 0..ny {
                acc.add(wx * self.y.weights()[iy] * values[self.index(ix, iy)]);
            }
        }
        acc.value()
    }

    pub fn norm_sq(&self, values: &[f64]) -> f64 {
        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        self.integrate(&sq)
    }

    pub fn norm(&self, values: &[f64]) -> f64 {
        self.norm_sq(values).sqrt()
    }

    pub fn dx(&self, values: &[f64]) -> Vec<f64> {
        let (nx, ny) = self.shape();
        let d = self.x.diff();
        let mut out = vec![0.0; values.len()];
        for iy in 0..ny {
            for i in 0..nx {
                let mut s = 0.0;
                for j in 0..nx {
                    s += d[(i, j)] * values[self.index(j, iy)];
                }
                out[self.index(i, iy)] = s;
            }
        }
        out
    }

    pub fn dy(&self, values: &[f64]) -> Vec<f64> {
        let (nx, ny) = self.shape();
        let d = self.y.diff();
        let mut out = vec![0.0; values.len()];
        for ix in 0..nx {
            let row = &values[ix * ny..(ix + 1) * ny];
            for i in 0..ny {
                let mut s = 0.0;
                for (j, v) in row.iter().enumerate() {
                    s += d[(i, j)] * v;
                }
                out[ix * ny + i] = s;
            }
        }
        out
    }

    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let (nx, ny) = self.shape();
        let mut out = Vec::with_capacity(self.len());
        for ix in 0..nx {
            for iy in 0..ny {
                let (x, y) = self.node(ix, iy);
                out.push(f(x, y));
            }
        }
        out
    }

    fn is_boundary(&self, ix: usize, iy: usize) -> bool {
        let (nx, ny) = self.shape();
        ix == 0 || ix == nx - 1 || iy == 0 || iy == ny - 1
    }

    /// Dirichlet Laplace solver of this grid, built on first use.
    pub fn laplace_solver(&self) -> Result<Arc<LaplaceSolver>> {
        if let Some(s) = self.laplace.get() {
            return Ok(s.clone());
        }
        let solver = Arc::new(LaplaceSolver::new(self)?);
        Ok(self.laplace.get_or_init(|| solver).clone())
    }
}

fn check_extent(h: f64, p: f64, nx: usize, ny: usize) -> Result<()> {
    if !(h > 0.0 && p > 0.0 && h.is_finite() && p.is_finite()) {
        return Err(KornError::Config(format!(
            "rectangle needs positive extents, got h={h}, p={p}"
        )));
    }
    if nx < 4 || ny < 4 {
        return Err(KornError::Resolution(format!(
            "rectangle grid {nx}x{ny} too coarse; need at least 4 nodes per axis"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    None,
    /// `u(x, 0) = u(x, p)`
    PeriodicInU,
    /// `v(x, 0) = 0`
    ZeroVAtBottom,
    /// `(u, v)(x, 0) = (u, v)(x, p)`
    PeriodicBoth,
}

impl BoundaryTag {
    /// True when every condition of `other` is also imposed by `self`.
    pub fn implies(&self, other: BoundaryTag) -> bool {
        use BoundaryTag::*;
        matches!(
            (self, other),
            (_, None)
                | (PeriodicBoth, PeriodicInU)
                | (PeriodicBoth, PeriodicBoth)
                | (PeriodicInU, PeriodicInU)
                | (ZeroVAtBottom, ZeroVAtBottom)
        )
    }
}

/// Planar field `(u, v)` on a [`RectGrid`].
#[derive(Debug, Clone)]
pub struct RectField {
    grid: Arc<RectGrid>,
    u: Vec<f64>,
    v: Vec<f64>,
    tag: BoundaryTag,
}

impl RectField {
    pub fn new(grid: Arc<RectGrid>, u: Vec<f64>, v: Vec<f64>, tag: BoundaryTag) -> Result<Self> {
        if u.len() != grid.len() || v.len() != grid.len() {
            return Err(KornError::Precondition(format!(
                "field arrays of length {} and {} on a grid of {} nodes",
                u.len(),
                v.len(),
                grid.len()
            )));
        }
        let f = Self { grid, u, v, tag };
        f.check_traces()?;
        Ok(f)
    }

    pub fn from_fn<F>(grid: Arc<RectGrid>, tag: BoundaryTag, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> (f64, f64),
    {
        let u = grid.sample(|x, y| f(x, y).0);
        let v = grid.sample(|x, y| f(x, y).1);
        Self::new(grid, u, v, tag)
    }

    pub fn zeros(grid: Arc<RectGrid>, tag: BoundaryTag) -> Self {
        let n = grid.len();
        Self {
            grid,
            u: vec![0.0; n],
            v: vec![0.0; n],
            tag,
        }
    }

    fn check_traces(&self) -> Result<()> {
        let g = &self.grid;
        let (nx, ny) = g.shape();
        let scale = self
            .u
            .iter()
            .chain(&self.v)
            .fold(1.0f64, |m, x| m.max(x.abs()));
        let tol = TRACE_TOL * scale;
        let lobatto = g.y.kind() == AxisKind::Lobatto;
        let periodic_pairs = |values: &[f64], name: &'static str| -> Result<()> {
            if !lobatto {
                return Ok(());
            }
            for ix in 0..nx {
                let a = values[g.index(ix, 0)];
                let b = values[g.index(ix, ny - 1)];
                if (a - b).abs() > tol {
                    return Err(KornError::Trace {
                        component: name,
                        location: format!("x = {}, y = 0 vs y = p", g.x.nodes()[ix]),
                        value: a - b,
                    });
                }
            }
            Ok(())
        };
        match self.tag {
            BoundaryTag::None => Ok(()),
            BoundaryTag::PeriodicInU => periodic_pairs(&self.u, "u"),
            BoundaryTag::PeriodicBoth => {
                periodic_pairs(&self.u, "u")?;
                periodic_pairs(&self.v, "v")
            }
            BoundaryTag::ZeroVAtBottom => {
                let iy =
                    g.y.nodes().iter().position(|&y| y == 0.0).ok_or_else(|| {
                        KornError::Precondition("grid has no node at y = 0".into())
                    })?;
                for ix in 0..nx {
                    let val = self.v[g.index(ix, iy)];
                    if val.abs() > tol {
                        return Err(KornError::Trace {
                            component: "v",
                            location: format!("x = {}, y = 0", g.x.nodes()[ix]),
                            value: val,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    pub fn grid(&self) -> &Arc<RectGrid> {
        &self.grid
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn tag(&self) -> BoundaryTag {
        self.tag
    }

    pub fn norm_u(&self) -> f64 {
        self.grid.norm(&self.u)
    }

    pub fn norm_v(&self) -> f64 {
        self.grid.norm(&self.v)
    }

    /// Fail with a precondition error unless the field carries `needed`.
    pub fn require(&self, needed: BoundaryTag) -> Result<()> {
        if self.tag.implies(needed) {
            Ok(())
        } else {
            Err(KornError::Precondition(format!(
                "hypothesis {needed:?} not carried by a field tagged {:?}",
                self.tag
            )))
        }
    }

    /// Restriction of a field on a mirrored grid to its `y >= 0` panel.
    pub fn restrict_upper(&self) -> Result<RectField> {
        let panels = self.grid.y.panels();
        if panels.len() != 2 {
            return Err(KornError::Precondition(
                "field is not on a mirrored grid".into(),
            ));
        }
        let upper = panels[1].clone();
        let n = upper.len();
        let y = Axis::lobatto(0.0, self.grid.y.hi(), n);
        let grid = Arc::new(RectGrid::from_axes(self.grid.x.clone(), y));
        let (nx, ny) = self.grid.shape();
        let mut u = Vec::with_capacity(nx * n);
        let mut v = Vec::with_capacity(nx * n);
        for ix in 0..nx {
            for iy in upper.clone() {
                u.push(self.u[ix * ny + iy]);
                v.push(self.v[ix * ny + iy]);
            }
        }
        let tag = if self.tag == BoundaryTag::ZeroVAtBottom {
            BoundaryTag::ZeroVAtBottom
        } else {
            BoundaryTag::None
        };
        RectField::new(grid, u, v, tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GradientKind {
    Alpha(f64),
    Star,
}

/// One of `G_alpha`, `G_*` or its symmetric part, stored entrywise.
#[derive(Debug, Clone)]
pub struct ModifiedGradient {
    pub kind: GradientKind,
    pub symmetric: bool,
    pub entries: [[Vec<f64>; 2]; 2],
    grid: Arc<RectGrid>,
}

impl ModifiedGradient {
    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[i][j]
    }

    /// `1/2 (G + G^T)`.
    pub fn symmetrized(&self) -> ModifiedGradient {
        let off: Vec<f64> = self.entries[0][1]
            .iter()
            .zip(&self.entries[1][0])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        ModifiedGradient {
            kind: self.kind,
            symmetric: true,
            entries: [
                [self.entries[0][0].clone(), off.clone()],
                [off, self.entries[1][1].clone()],
            ],
            grid: self.grid.clone(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        let mut acc = 0.0;
        for row in &self.entries {
            for e in row {
                acc += self.grid.norm_sq(e);
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

pub fn modified_gradient(f: &RectField, kind: GradientKind) -> ModifiedGradient {
    let g = &f.grid;
    let (ux, uy, vx, vy) = (g.dx(&f.u), g.dy(&f.u), g.dx(&f.v), g.dy(&f.v));
    let (e01, e11) = match kind {
        GradientKind::Alpha(a) => (uy, vy.iter().zip(&f.u).map(|(d, u)| d + a * u).collect()),
        GradientKind::Star => (
            uy.iter().zip(&f.v).map(|(d, v)| d - v).collect(),
            vy.iter().zip(&f.u).map(|(d, u)| d + u).collect(),
        ),
    };
    ModifiedGradient {
        kind,
        symmetric: false,
        entries: [[ux, e01], [vx, e11]],
        grid: g.clone(),
    }
}

/// Dense Chebyshev collocation of the Dirichlet Laplacian with a cached LU.
pub struct LaplaceSolver {
    lu: LU<f64, Dyn, Dyn>,
    operator: DMatrix<f64>,
}

impl LaplaceSolver {
    fn new(grid: &RectGrid) -> Result<Self> {
        if grid.x.kind() != AxisKind::Lobatto
            || grid.y.kind() != AxisKind::Lobatto
            || !grid.x.is_single_panel()
            || !grid.y.is_single_panel()
        {
            return Err(KornError::Precondition(
                "the Dirichlet solver needs single-panel Chebyshev axes".into(),
            ));
        }
        let (nx, ny) = grid.shape();
        let dxx = grid.x.diff() * grid.x.diff();
        let dyy = grid.y.diff() * grid.y.diff();
        let n = nx * ny;
        let mut a = DMatrix::zeros(n, n);
        for ix in 0..nx {
            for iy in 0..ny {
                let row = grid.index(ix, iy);
                if grid.is_boundary(ix, iy) {
                    a[(row, row)] = 1.0;
                    continue;
                }
                for j in 0..nx {
                    a[(row, grid.index(j, iy))] += dxx[(ix, j)];
                }
                for j in 0..ny {
                    a[(row, grid.index(ix, j))] += dyy[(iy, j)];
                }
            }
        }
        Ok(Self {
            lu: a.clone().lu(),
            operator: a,
        })
    }
}

/// Relative residual above which a Dirichlet solve is reported as failed.
pub const LAPLACE_TOL: f64 = 1e-9;

/// Harmonic function with the boundary values of `u`.
pub fn harmonic_projection(f: &RectField) -> Result<Vec<f64>> {
    harmonic_extension(&f.grid, &f.u)
}

/// Harmonic function with the boundary values of `values`.
pub fn harmonic_extension(grid: &RectGrid, values: &[f64]) -> Result<Vec<f64>> {
    let solver = grid.laplace_solver()?;
    let (nx, ny) = grid.shape();
    let mut rhs = DVector::zeros(grid.len());
    for ix in 0..nx {
        for iy in 0..ny {
            if grid.is_boundary(ix, iy) {
                let k = grid.index(ix, iy);
                rhs[k] = values[k];
            }
        }
    }
    let w = solver.lu.solve(&rhs).ok_or_else(|| KornError::Solver {
        residual: f64::INFINITY,
    })?;
    let res = (&solver.operator * &w - &rhs).amax();
    let scale = solver.operator.amax() * w.amax() + rhs.amax();
    let rel = if scale == 0.0 { 0.0 } else { res / scale };
    if !(rel <= LAPLACE_TOL) {
        return Err(KornError::Solver { residual: rel });
    }
    Ok(w.iter().copied().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionBounds {
    pub grad_defect: f64,
    pub grad_bound: f64,
    pub value_defect: f64,
    pub value_bound: f64,
}

impl ProjectionBounds {
    pub fn holds(&self) -> bool {
        self.grad_defect <= self.grad_bound && self.value_defect <= self.value_bound
    }
}

/// `||grad u - grad w|| <= pi K0 ||e_alpha||` and `||u - w|| <= K0 h ||e_alpha||`.
pub fn projection_bounds(f: &RectField, alpha: f64) -> Result<ProjectionBounds> {
    let w = harmonic_projection(f)?;
    let g = &f.grid;
    let d: Vec<f64> = f.u.iter().zip(&w).map(|(a, b)| a - b).collect();
    let grad_defect = (g.norm_sq(&g.dx(&d)) + g.norm_sq(&g.dy(&d))).sqrt();
    let e = modified_gradient(f, GradientKind::Alpha(alpha))
        .symmetrized()
        .norm();
    Ok(ProjectionBounds {
        grad_defect,
        grad_bound: PI * K0 * e,
        value_defect: g.norm(&d),
        value_bound: K0 * g.h() * e,
    })
}

/// `sinh(t)^2 - t^2` for `|t| <= 1e-2` by its Taylor series.
fn sinh_sq_defect_series(t: f64) -> f64 {
    let x = t * t;
    t.powi(4)
        * (1.0 / 3.0
            + x * (2.0 / 45.0 + x * (1.0 / 315.0 + x * (2.0 / 14175.0 + x * 2.0 / 467775.0))))
}

/// Switch point between the series and direct branches of [`psi`].
pub const PSI_SERIES_SWITCH: f64 = 1e-2;

/// `Psi(tau) = tau^4 / (sinh^2 tau - tau^2)`, extended by `Psi(0) = 3`.
pub fn psi(tau: f64) -> f64 {
    let t = tau.abs();
    if t < PSI_SERIES_SWITCH {
        psi_series(t)
    } else {
        psi_direct(t)
    }
}

/// Series branch, accurate for `tau < 1e-2`.
pub fn psi_series(tau: f64) -> f64 {
    let x = tau * tau;
    1.0 / (1.0 / 3.0
        + x * (2.0 / 45.0 + x * (1.0 / 315.0 + x * (2.0 / 14175.0 + x * 2.0 / 467775.0))))
}

/// Direct branch. Below 1 the defect `sinh^2 t - t^2` is built by doubling
/// from a series value, `S(2t) = 4 S(t) + 4 sinh^4 t`, which never subtracts.
pub fn psi_direct(tau: f64) -> f64 {
    let t = tau.abs();
    if t == 0.0 {
        return 3.0;
    }
    if t < 1.0 {
        let mut k = 0;
        let mut s = t;
        while s >= PSI_SERIES_SWITCH {
            s *= 0.5;
            k += 1;
        }
        let mut defect = sinh_sq_defect_series(s);
        for _ in 0..k {
            let sh2 = s * s + defect;
            defect = 4.0 * defect + 4.0 * sh2 * sh2;
            s *= 2.0;
        }
        t.powi(4) / defect
    } else {
        let e = (-2.0 * t).exp();
        let a = 1.0 - e;
        4.0 * t.powi(4) * e / (a * a - 4.0 * t * t * e)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    pub limit_at_zero: f64,
    pub limit_error: f64,
    pub monotone_decreasing: bool,
    pub grid_points: usize,
    /// `|series - direct|` relative, at the switch point.
    pub branch_gap: f64,
    /// Relative gap between the doubling and exponential forms at `tau = 1`.
    pub direct_gap: f64,
    pub samples: Vec<(f64, f64)>,
}

impl PsiReport {
    pub fn passes(&self) -> bool {
        self.limit_error <= 1e-9 && self.monotone_decreasing && self.branch_gap <= 1e-12
    }
}

pub fn psi_limit_checks() -> PsiReport {
    let limit = psi(1e-9);
    let n = 400;
    let grid: Vec<f64> = (0..n)
        .map(|i| 1e-3 * (20.0f64 / 1e-3).powf(i as f64 / (n - 1) as f64))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&t| psi(t)).collect();
    let monotone = values.windows(2).all(|w| w[1] < w[0]);
    let s = psi_series(PSI_SERIES_SWITCH);
    let d = psi_direct(PSI_SERIES_SWITCH);
    let below = {
        let e = (-2.0f64).exp();
        let a = 1.0 - e;
        4.0 * e / (a * a - 4.0 * e)
    };
    PsiReport {
        limit_at_zero: limit,
        limit_error: (limit - 3.0).abs(),
        monotone_decreasing: monotone,
        grid_points: n,
        branch_gap: (s - d).abs() / d,
        direct_gap: (psi_direct(1.0 - 1e-15) - below).abs() / below,
        samples: [0.1, 1.0, 2.0, 4.0].iter().map(|&t| (t, psi(t))).collect(),
    }
}

/// `sinh(t) - t` without cancellation.
fn sinh_minus_id(t: f64) -> f64 {
    if t.abs() < 0.5 {
        let x = t * t;
        let mut term = t * x / 6.0;
        let mut sum = term;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs() {
            term *= x / ((k + 1.0) * (k + 2.0));
            sum += term;
            k += 2.0;
        }
        sum
    } else {
        t.sinh() - t
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SharpCheck {
    pub h: f64,
    pub p: f64,
    pub tau: f64,
    /// `||w_y||^2 - ||w_x||^2`
    pub lhs: f64,
    /// `(2 sqrt(Psi(tau)) / h) ||w|| ||w_x||`
    pub rhs: f64,
    pub relative_gap: f64,
    /// `(pi/p)^2 (p/2) h`
    pub expected_lhs: f64,
    pub lhs_error: f64,
    /// `2 pi h / p`, the first Fourier index of the period-p analysis.
    pub first_mode_tau: f64,
    pub rhs_at_first_mode_tau: f64,
    pub norm_w: f64,
    pub norm_wx: f64,
    pub norm_wy: f64,
}

impl SharpCheck {
    pub fn equality_holds(&self, tol: f64) -> bool {
        self.relative_gap <= tol && self.lhs_error <= tol
    }
}

/// Closed-form norms of `w = cosh(pi (x - h/2) / p) sin(pi y / p)` on
/// `[0, h] x [0, p]` and both sides of the harmonic inequality at
/// `tau = pi h / p`.
pub fn sharp_harmonic_check(h: f64, p: f64) -> Result<SharpCheck> {
    if !(h > 0.0 && h < 1.0) || !(p > 0.0) {
        return Err(KornError::Config(format!(
            "need 0 < h < 1 and p > 0, got h={h}, p={p}"
        )));
    }
    let k = PI / p;
    let tau = k * h;
    // integrals over x in [0, h] of cosh^2 and sinh^2 of k (x - h/2)
    let sinh_tau_over_2k = tau.sinh() / (2.0 * k);
    let int_cosh2 = 0.5 * h + sinh_tau_over_2k;
    let int_sinh2 = sinh_minus_id(tau) / (2.0 * k);
    let half_p = 0.5 * p;
    let norm_w2 = half_p * int_cosh2;
    let norm_wx2 = k * k * half_p * int_sinh2;
    let norm_wy2 = k * k * half_p * int_cosh2;
    let lhs = norm_wy2 - norm_wx2;
    let rhs_at = |t: f64| 2.0 * psi(t).sqrt() / h * norm_w2.sqrt() * norm_wx2.sqrt();
    let rhs = rhs_at(tau);
    let expected = k * k * half_p * h;
    Ok(SharpCheck {
        h,
        p,
        tau,
        lhs,
        rhs,
        relative_gap: (lhs - rhs).abs() / rhs,
        expected_lhs: expected,
        lhs_error: (lhs - expected).abs() / expected,
        first_mode_tau: 2.0 * tau,
        rhs_at_first_mode_tau: rhs_at(2.0 * tau),
        norm_w: norm_w2.sqrt(),
        norm_wx: norm_wx2.sqrt(),
        norm_wy: norm_wy2.sqrt(),
    })
}

/// Extension `u(x, -y) = u(x, y)`, `v(x, -y) = -v(x, y)` to `[-p, p]`.
pub fn even_odd_extend(f: &RectField) -> Result<RectField> {
    f.require(BoundaryTag::ZeroVAtBottom)?;
    let grid = f.grid.mirrored()?;
    let (nx, ny) = f.grid.shape();
    let mut u = Vec::with_capacity(2 * nx * ny);
    let mut v = Vec::with_capacity(2 * nx * ny);
    for ix in 0..nx {
        for j in (0..ny).rev() {
            u.push(f.u[ix * ny + j]);
            v.push(-f.v[ix * ny + j]);
        }
        for j in 0..ny {
            u.push(f.u[ix * ny + j]);
            v.push(f.v[ix * ny + j]);
        }
    }
    RectField::new(grid, u, v, BoundaryTag::PeriodicInU)
}

/// `(u, (1 - x) v)`.
pub fn tilde_transform(f: &RectField) -> RectField {
    let g = &f.grid;
    let xs = g.sample(|x, _| x);
    RectField {
        grid: g.clone(),
        u: f.u.clone(),
        v: f.v.iter().zip(&xs).map(|(v, x)| (1.0 - x) * v).collect(),
        tag: BoundaryTag::None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Inequality {
    /// `||G_a||^2 <= 100 ||e_a|| (||u||/h + ||e_a||)`, needs `u` periodic.
    Basicineq100 { alpha: f64 },
    /// `||grad f||^2 <= C ||e|| (||u||/h + ||e||)`, needs `v(x, 0) = 0`.
    Poltora,
    /// `||u||^2 <= ||e_*||^2 + 2 ||G_*|| ||v|| + 2 ||v||^2`, needs full periodicity.
    Uest,
    /// `||G_*||^2 <= C (||e_*||^2 + ||e_*|| ||u||/h + ||v||^2)`, needs full periodicity.
    Crazy,
}

impl Inequality {
    pub fn name(&self) -> &'static str {
        match self {
            Inequality::Basicineq100 { .. } => "basicineq100",
            Inequality::Poltora => "poltora",
            Inequality::Uest => "uest",
            Inequality::Crazy => "crazy",
        }
    }

    pub fn hypothesis(&self) -> BoundaryTag {
        match self {
            Inequality::Basicineq100 { .. } => BoundaryTag::PeriodicInU,
            Inequality::Poltora => BoundaryTag::ZeroVAtBottom,
            Inequality::Uest | Inequality::Crazy => BoundaryTag::PeriodicBoth,
        }
    }
}

impl FromStr for Inequality {
    type Err = KornError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "basicineq100" | "basic" => Ok(Inequality::Basicineq100 { alpha: 0.0 }),
            "poltora" => Ok(Inequality::Poltora),
            "uest" => Ok(Inequality::Uest),
            "crazy" => Ok(Inequality::Crazy),
            other => Err(KornError::Config(format!("unknown inequality '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Margin {
    pub which: Inequality,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`
    pub margin: f64,
    /// Smallest constant making the inequality hold for this field; `None`
    /// for inequalities without a free constant.
    pub needed_constant: Option<f64>,
}

/// Both sides of `which` for `f`. For the inequalities with an unspecified
/// constant the right side uses the persisted measured constant.
pub fn verify_inequalities(f: &RectField, which: Inequality) -> Result<Margin> {
    verify_with_constants(f, which, &MeasuredConstants::persisted())
}

pub fn verify_with_constants(
    f: &RectField,
    which: Inequality,
    constants: &MeasuredConstants,
) -> Result<Margin> {
    f.require(which.hypothesis())?;
    let h = f.grid.h();
    let nu = f.norm_u();
    let out = |lhs: f64, unit: f64, c: Option<f64>| -> Margin {
        let (rhs, needed) = match c {
            Some(c) => (
                c * unit,
                Some(if unit > 0.0 {
                    lhs / unit
                } else if lhs > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }),
            ),
            None => (unit, None),
        };
        Margin {
            which,
            lhs,
            rhs,
            margin: rhs - lhs,
            needed_constant: needed,
        }
    };
    match which {
        Inequality::Basicineq100 { alpha } => {
            if !(-1.0..=1.0).contains(&alpha) {
                return Err(KornError::Config(format!(
                    "alpha = {alpha} outside [-1, 1]"
                )));
            }
            let g = modified_gradient(f, GradientKind::Alpha(alpha));
            let e = g.symmetrized().norm();
            let unit = e * (nu / h + e);
            let mut m = out(g.norm_sq(), unit, Some(100.0));
            m.needed_constant = m.needed_constant.filter(|c| c.is_finite());
            Ok(m)
        }
        Inequality::Poltora => {
            let g = modified_gradient(f, GradientKind::Alpha(0.0));
            let e = g.symmetrized().norm();
            Ok(out(g.norm_sq(), e * (nu / h + e), Some(constants.poltora)))
        }
        Inequality::Uest => {
            let g = modified_gradient(f, GradientKind::Star);
            let e = g.symmetrized().norm();
            let nv = f.norm_v();
            Ok(out(
                nu * nu,
                e * e + 2.0 * g.norm() * nv + 2.0 * nv * nv,
                None,
            ))
        }
        Inequality::Crazy => {
            let g = modified_gradient(f, GradientKind::Star);
            let e = g.symmetrized().norm();
            let nv = f.norm_v();
            Ok(out(
                g.norm_sq(),
                e * e + e * nu / h + nv * nv,
                Some(constants.crazy),
            ))
        }
    }
}

/// `||w_y||^2` against `(2 sqrt 3 / h) ||w|| ||w_x|| + ||w_x||^2` for a
/// harmonic `w` periodic in `y`.
pub fn harmonic_inequality(grid: &RectGrid, w: &[f64]) -> (f64, f64) {
    let wx = grid.norm(&grid.dx(w));
    let wy2 = grid.norm_sq(&grid.dy(w));
    (
        wy2,
        2.0 * 3f64.sqrt() / grid.h() * grid.norm(w) * wx + wx * wx,
    )
}

/// Periodic harmonic function
/// `sum_n (A_n e^{k_n s} + B_n e^{-k_n s}) (C_n cos k_n y + D_n sin k_n y)`,
/// `k_n = 2 pi n / p`, `s = x - x_mid`, with `n` running from 1.
pub fn synthesize_harmonic(grid: &RectGrid, coeffs: &[[f64; 4]]) -> Vec<f64> {
    let p = grid.p();
    let mid = 0.5 * (grid.x.lo() + grid.x.hi());
    grid.sample(|x, y| {
        let s = x - mid;
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = 2.0 * PI * (i + 1) as f64 / p;
                (c[0] * (k * s).exp() + c[1] * (-k * s).exp())
                    * (c[2] * (k * y).cos() + c[3] * (k * y).sin())
            })
            .sum()
    })
}

/// Random harmonic coefficients for [`synthesize_harmonic`].
pub fn random_harmonic_coeffs(modes: usize, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..modes)
        .map(|n| {
            let decay = 1.0 / (1.0 + (n * n) as f64);
            [
                rng.gen_range(-1.0..1.0) * decay,
                rng.gen_range(-1.0..1.0) * decay,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect()
}

/// Bumped whenever the corpus generator changes.
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldFamily {
    /// Random Chebyshev-trigonometric series.
    Smooth,
    /// `u = f(y)`, `v = -(x - x_mid) f'(y) + g(y)` with small strain.
    Kirchhoff,
}

/// Seeded random field carrying `tag`. Periodic directions use
/// trigonometric factors of period `p`.
pub fn random_rect_field(
    grid: Arc<RectGrid>,
    tag: BoundaryTag,
    family: FieldFamily,
    seed: u64,
) -> Result<RectField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(CORPUS_VERSION) << 48));
    let p = grid.p();
    let (lo, hi) = (grid.x.lo(), grid.x.hi());
    let mid = 0.5 * (lo + hi);
    let k1 = 2.0 * PI / p;
    let periodic_u = matches!(tag, BoundaryTag::PeriodicInU | BoundaryTag::PeriodicBoth);
    let periodic_v = tag == BoundaryTag::PeriodicBoth;
    let zero_v = tag == BoundaryTag::ZeroVAtBottom;
    const NXT: usize = 5;
    const NYT: usize = 5;

    // y-profile: trig series when periodic, Chebyshev otherwise
    let profile = |periodic: bool, rng: &mut ChaCha8Rng| -> Vec<[f64; 2]> {
        (0..NYT)
            .map(|j| {
                let d = 1.0 / (1.0 + (j * j) as f64);
                let a = rng.gen_range(-1.0..1.0) * d;
                let b = if periodic {
                    rng.gen_range(-1.0..1.0) * d
                } else {
                    0.0
                };
                [a, b]
            })
            .collect()
    };
    let eval_y = move |c: &[[f64; 2]], periodic: bool, y: f64, deriv: bool| -> f64 {
        c.iter()
            .enumerate()
            .map(|(j, ab)| {
                if periodic {
                    let k = k1 * j as f64;
                    if deriv {
                        k * (-ab[0] * (k * y).sin() + ab[1] * (k * y).cos())
                    } else {
                        ab[0] * (k * y).cos() + ab[1] * (k * y).sin()
                    }
                } else {
                    assert!(!deriv);
                    ab[0] * chebyshev_t(j, 2.0 * y / p - 1.0)
                }
            })
            .sum()
    };

    match family {
        FieldFamily::Smooth => {
            let mut cu = Vec::new();
            let mut cv = Vec::new();
            for i in 0..NXT {
                let d = 1.0 / (1.0 + (i * i) as f64);
                let pu = profile(periodic_u, &mut rng);
                let pv = profile(periodic_v, &mut rng);
                cu.push((d, pu));
                cv.push((d, pv));
            }
            RectField::from_fn(grid.clone(), tag, |x, y| {
                let s = 2.0 * (x - lo) / (hi - lo) - 1.0;
                let mut u = 0.0;
                let mut v = 0.0;
                for i in 0..NXT {
                    let t = chebyshev_t(i, s);
                    u += cu[i].0 * t * eval_y(&cu[i].1, periodic_u, y, false);
                    v += cv[i].0 * t * eval_y(&cv[i].1, periodic_v, y, false);
                }
                if zero_v {
                    v *= y / p;
                }
                (u, v)
            })
        }
        FieldFamily::Kirchhoff => {
            // f must be differentiable in closed form, so it is always trigonometric
            let fc = profile(true, &mut rng);
            let gc = profile(periodic_v, &mut rng);
            let eps = 10f64.powf(rng.gen_range(-3.0..0.0));
            RectField::from_fn(grid.clone(), tag, |x, y| {
                let (f, df) = if zero_v {
                    // f'(0) = 0: even cosine series
                    let f: f64 = fc
                        .iter()
                        .enumerate()
                        .map(|(j, ab)| ab[0] * (k1 * j as f64 * y).cos())
                        .sum();
                    let df: f64 = fc
                        .iter()
                        .enumerate()
                        .map(|(j, ab)| -ab[0] * k1 * j as f64 * (k1 * j as f64 * y).sin())
                        .sum();
                    (f, df)
                } else {
                    (eval_y(&fc, true, y, false), eval_y(&fc, true, y, true))
                };
                let mut g = eps * eval_y(&gc, periodic_v, y, false);
                if zero_v {
                    g *= y / p;
                }
                (f, -(x - mid) * df + g)
            })
        }
    }
}

/// Corpus specification: field `i` uses seed `seed * 1_000_003 + i` and the
/// Kirchhoff family for every third index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub count: usize,
    pub h: Vec<f64>,
    pub p: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CorpusSpec {
    pub fn standard(seed: u64) -> Self {
        Self {
            seed,
            count: 500,
            h: vec![0.2, 0.1, 0.05],
            p: PI,
            nx: DEFAULT_NX,
            ny: DEFAULT_NY,
        }
    }

    pub fn field_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
    }

    pub fn family(&self, i: usize) -> FieldFamily {
        if i % 3 == 2 {
            FieldFamily::Kirchhoff
        } else {
            FieldFamily::Smooth
        }
    }

    pub fn grid(&self, h: f64, tag: BoundaryTag) -> Result<Arc<RectGrid>> {
        if tag == BoundaryTag::PeriodicBoth {
            RectGrid::periodic(h, self.p, self.nx, self.ny)
        } else {
            RectGrid::new(h, self.p, self.nx, self.ny)
        }
    }

    pub fn field(&self, grid: &Arc<RectGrid>, tag: BoundaryTag, i: usize) -> Result<RectField> {
        random_rect_field(grid.clone(), tag, self.family(i), self.field_seed(i))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub which: Inequality,
    pub fields: usize,
    pub min_margin: f64,
    pub violations: usize,
    /// Largest `needed_constant` seen, when the inequality has one.
    pub max_needed_constant: Option<f64>,
    pub worst_field: usize,
    pub worst_h: f64,
}

/// Run `which` on every corpus field at every `h`. `alphas` is used only by
/// [`Inequality::Basicineq100`].
pub fn verify_corpus(
    spec: &CorpusSpec,
    which: Inequality,
    alphas: &[f64],
    constants: &MeasuredConstants,
) -> Result<CorpusReport> {
    let tag = which.hypothesis();
    let variants: Vec<Inequality> = match which {
        Inequality::Basicineq100 { .. } => alphas
            .iter()
            .map(|&alpha| Inequality::Basicineq100 { alpha })
            .collect(),
        other => vec![other],
    };
    let mut jobs = Vec::new();
    for &h in &spec.h {
        let grid = spec.grid(h, tag)?;
        for i in 0..spec.count {
            for v in &variants {
                jobs.push((grid.clone(), h, i, *v));
            }
        }
    }
    let results: Vec<Result<(f64, usize, Margin)>> = jobs
        .par_iter()
        .map(|(grid, h, i, v)| {
            let f = spec.field(grid, tag, *i)?;
            Ok((*h, *i, verify_with_constants(&f, *v, constants)?))
        })
        .collect();
    let mut report = CorpusReport {
        which,
        fields: 0,
        min_margin: f64::INFINITY,
        violations: 0,
        max_needed_constant: None,
        worst_field: 0,
        worst_h: 0.0,
    };
    for r in results {
        let (h, i, m) = r?;
        report.fields += 1;
        if m.margin < 0.0 {
            report.violations += 1;
        }
        let rel = m.margin / m.rhs.abs().max(f64::MIN_POSITIVE);
        let worst_rel = report.min_margin;
        if rel < worst_rel {
            report.min_margin = rel;
            report.worst_field = i;
            report.worst_h = h;
        }
        if let Some(c) = m.needed_constant {
            report.max_needed_constant =
                Some(report.max_needed_constant.map_or(c, |x: f64| x.max(c)));
        }
    }
    Ok(report)
}

/// Best constants of the inequalities whose constant the theory leaves
/// unspecified, measured over the versioned corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasuredConstants {
    pub corpus_version: u32,
    pub seed: u64,
    pub fields: usize,
    pub poltora: f64,
    pub crazy: f64,
}

const PERSISTED_CONSTANTS: &str = include_str!("../data/measured_constants.json");

/// Allowed growth of a measured constant before it counts as a regression.
pub const REGRESSION_SLACK: f64 = 1.05;

impl MeasuredConstants {
    pub fn persisted() -> Self {
        serde_json::from_str(PERSISTED_CONSTANTS).expect("shipped constants file parses")
    }

    /// Measure both constants on `spec`.
    pub fn measure(spec: &CorpusSpec) -> Result<Self> {
        let unit = MeasuredConstants {
            corpus_version: CORPUS_VERSION,
            seed: spec.seed,
            fields: spec.count,
            poltora: 1.0,
            crazy: 1.0,
        };
        let p = verify_corpus(spec, Inequality::Poltora, &[], &unit)?;
        let c = verify_corpus(spec, Inequality::Crazy, &[], &unit)?;
        Ok(MeasuredConstants {
            poltora: p.max_needed_constant.unwrap_or(0.0),
            crazy: c.max_needed_constant.unwrap_or(0.0),
            ..unit
        })
    }

    /// The `h` threshold `sqrt(1 / (2 C))` below which the `G_*` bound is
    /// derived, using the measured constant.
    pub fn crazy_h_threshold(&self) -> f64 {
        (1.0 / (2.0 * self.crazy)).sqrt()
    }
}
