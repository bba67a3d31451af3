//! Oscillatory test fields built from a single scalar function
//! `w(theta, z) = a^2 W(theta / a, (z - L/2) / b)`:
//!
//! `phi_r = -w_{theta theta}`,
//! `phi_theta = r w_theta + (r - 1) w_{theta theta theta}`,
//! `phi_z = -w_z + (r - 1) w_{theta theta z}`.
//!
//! With `a = h^{1/4}`, `b = 1` these are exactly the shell upper-bound fields.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KornError, Result};
use crate::fields::{DisplacementField, Grid3};
use crate::geometry::{FunctionSpace, ShellGeometry};
use crate::quadrature::{gauss_legendre, CompensatedSum};

/// Smooth function on `(-1, 1)^2`, compactly supported, with closed-form
/// partial derivatives.
pub trait Generator: Debug + Send + Sync {
    /// `d^i/d eta^i d^j/d zeta^j W(eta, zeta)`; zero outside the support.
    fn partial(&self, i: usize, j: usize, eta: f64, zeta: f64) -> f64;
}

/// `amplitude * (1 - eta^2)^p (1 - zeta^2)^q` on `(-1, 1)^2`.
#[derive(Debug, Clone)]
pub struct PolynomialBump {
    amplitude: f64,
    eta: Vec<Vec<f64>>,
    zeta: Vec<Vec<f64>>,
}

const MAX_ORDER: usize = 4;

fn bump_derivatives(power: u32) -> Vec<Vec<f64>> {
    // monomial coefficients of (1 - x^2)^power, lowest degree first
    let mut c = vec![1.0];
    for _ in 0..power {
        let mut next = vec![0.0; c.len() + 2];
        for (k, &v) in c.iter().enumerate() {
            next[k] += v;
            next[k + 2] -= v;
        }
        c = next;
    }
    let mut out = vec![c.clone()];
    for _ in 0..MAX_ORDER {
        let prev = out.last().unwrap();
        let d: Vec<f64> = prev
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &v)| k as f64 * v)
            .collect();
        out.push(if d.is_empty() { vec![0.0] } else { d });
    }
    out
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

impl PolynomialBump {
    pub fn new(eta_power: u32, zeta_power: u32) -> Self {
        Self {
            amplitude: 1.0,
            eta: bump_derivatives(eta_power),
            zeta: bump_derivatives(zeta_power),
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }
}

impl Default for PolynomialBump {
    fn default() -> Self {
        Self::new(6, 6)
    }
}

impl Generator for PolynomialBump {
    fn partial(&self, i: usize, j: usize, eta: f64, zeta: f64) -> f64 {
        assert!(
            i <= MAX_ORDER && j <= MAX_ORDER,
            "derivative order above {MAX_ORDER}"
        );
        if eta.abs() >= 1.0 || zeta.abs() >= 1.0 {
            return 0.0;
        }
        self.amplitude * horner(&self.eta[i], eta) * horner(&self.zeta[j], zeta)
    }
}

/// Generator plus microstructure scales.
#[derive(Debug, Clone)]
pub struct AnsatzGenerator {
    bump: Arc<dyn Generator>,
    a: f64,
    b: f64,
    b_eff: f64,
    geom: ShellGeometry,
}

impl AnsatzGenerator {
    /// Scales must satisfy `sqrt(h) <= a <= 1` and `h <= b <= 1`. When the
    /// axial support `(L/2 - b, L/2 + b)` does not fit in `(0, L)` it is
    /// shrunk to `b = L/2`; see [`AnsatzGenerator::support_shrunk`].
    pub fn new(geom: ShellGeometry, bump: Arc<dyn Generator>, a: f64, b: f64) -> Result<Self> {
        let h = geom.h();
        if !(a >= h.sqrt() && a <= 1.0) {
            return Err(KornError::Admissibility(format!(
                "angular scale a = {a} outside [sqrt(h), 1] = [{}, 1]",
                h.sqrt()
            )));
        }
        if !(b >= h && b <= 1.0) {
            return Err(KornError::Admissibility(format!(
                "axial scale b = {b} outside [h, 1] = [{h}, 1]"
            )));
        }
        Ok(Self {
            bump,
            a,
            b,
            b_eff: b.min(0.5 * geom.length()),
            geom,
        })
    }

    /// `a = h^{1/4}`, `b = 1` with the default bump.
    pub fn optimal(geom: ShellGeometry) -> Result<Self> {
        Self::new(
            geom,
            Arc::new(PolynomialBump::default()),
            geom.h().powf(0.25),
            1.0,
        )
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Requested axial scale.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Axial scale actually used.
    pub fn b_effective(&self) -> f64 {
        self.b_eff
    }

    pub fn support_shrunk(&self) -> bool {
        self.b_eff < self.b
    }

    pub fn geometry(&self) -> &ShellGeometry {
        &self.geom
    }

    /// `d^i/d theta^i d^j/dz^j w(theta, z)` with `w` extended 2 pi-periodically.
    pub fn w(&self, i: usize, j: usize, theta: f64, z: f64) -> f64 {
        let th = (theta + PI).rem_euclid(2.0 * PI) - PI;
        let eta = th / self.a;
        let zeta = (z - 0.5 * self.geom.length()) / self.b_eff;
        self.a * self.a * self.bump.partial(i, j, eta, zeta)
            / (self.a.powi(i as i32) * self.b_eff.powi(j as i32))
    }

    /// `(phi_r, phi_theta, phi_z)` at a point.
    pub fn displacement(&self, r: f64, theta: f64, z: f64) -> [f64; 3] {
        let w = |i, j| self.w(i, j, theta, z);
        [
            -w(2, 0),
            r * w(1, 0) + (r - 1.0) * w(3, 0),
            -w(0, 1) + (r - 1.0) * w(2, 1),
        ]
    }

    /// Closed-form cylindrical gradient at a point.
    pub fn gradient(&self, r: f64, theta: f64, z: f64) -> [[f64; 3]; 3] {
        let w = |i, j| self.w(i, j, theta, z);
        let s = r - 1.0;
        [
            [0.0, -w(1, 0) - w(3, 0), -w(2, 1)],
            [
                w(1, 0) + w(3, 0),
                s * (w(2, 0) + w(4, 0)) / r,
                r * w(1, 1) + s * w(3, 1),
            ],
            [
                w(2, 1),
                (-w(1, 1) + s * w(3, 1)) / r,
                -w(0, 2) + s * w(2, 2),
            ],
        ]
    }
}

/// The ansatz field sampled on `grid`, tagged with the clamped space.
pub fn build_ansatz(grid: Arc<Grid3>, gen: &AnsatzGenerator) -> Result<DisplacementField> {
    if grid.geometry() != gen.geometry() {
        return Err(KornError::Precondition(
            "grid geometry differs from the generator's".into(),
        ));
    }
    DisplacementField::from_fn(grid, Some(FunctionSpace::V0), |r, t, z| {
        gen.displacement(r, t, z)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnsatzReport {
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub b_effective: f64,
    pub support_shrunk: bool,
    /// `||e||^2 / ||grad phi||^2`
    pub rayleigh: f64,
    /// `||(grad phi)_{r theta}||^2`, `||phi_{r,z}||^2`, `||phi_{theta,z}||^2` over `||e||^2`.
    pub ratios: [f64; 3],
    pub grad_sq: f64,
    pub sym_sq: f64,
    /// Entrywise `||(grad phi)_{ij}||^2`.
    pub entries: [[f64; 3]; 3],
    /// Largest of `||e_rr||`, `||e_r theta||`, `||e_rz||` relative to `||e||`.
    pub first_row_defect: f64,
}

/// Quadrature points per direction used by [`ansatz_quotient`].
pub const QUAD_POINTS: (usize, usize, usize) = (16, 24, 24);

/// Rayleigh quotient and gradient-component ratios of the ansatz, by
/// tensor Gauss-Legendre quadrature over the support.
pub fn ansatz_quotient(gen: &AnsatzGenerator) -> Result<AnsatzReport> {
    let geom = gen.geometry();
    let (lo, hi) = geom.radial_interval();
    let (nr, nt, nz) = QUAD_POINTS;
    let (xr, wr) = gauss_legendre(nr);
    let (xt, wt) = gauss_legendre(nt);
    let (xz, wz) = gauss_legendre(nz);
    let hr = 0.5 * (hi - lo);
    let zc = 0.5 * geom.length();
    let b = gen.b_effective();

    let mut g_acc: [[CompensatedSum; 3]; 3] = Default::default();
    let mut e_acc: [[CompensatedSum; 3]; 3] = Default::default();
    for (i, &x) in xr.iter().enumerate() {
        let r = 1.0 + hr * x;
        for (j, &y) in xt.iter().enumerate() {
            let theta = gen.a() * y;
            for (k, &s) in xz.iter().enumerate() {
                let z = zc + b * s;
                let weight = wr[i] * hr * wt[j] * gen.a() * wz[k] * b * r;
                let g = gen.gradient(r, theta, z);
                for p in 0..3 {
                    for q in 0..3 {
                        g_acc[p][q].add(weight * g[p][q] * g[p][q]);
                        let e = 0.5 * (g[p][q] + g[q][p]);
                        e_acc[p][q].add(weight * e * e);
                    }
                }
            }
        }
    }
    let mut entries = [[0.0; 3]; 3];
    let mut grad_sq = 0.0;
    let mut sym_sq = 0.0;
    let mut esq = [[0.0; 3]; 3];
    for p in 0..3 {
        for q in 0..3 {
            entries[p][q] = g_acc[p][q].value();
            esq[p][q] = e_acc[p][q].value();
            grad_sq += entries[p][q];
            sym_sq += esq[p][q];
        }
    }
    if grad_sq <= 0.0 {
        return Err(KornError::Degenerate(
            "ansatz field has zero gradient".into(),
        ));
    }
    let first_row = esq[0][0].max(esq[0][1]).max(esq[0][2]);
    Ok(AnsatzReport {
        h: geom.h(),
        a: gen.a(),
        b: gen.b(),
        b_effective: b,
        support_shrunk: gen.support_shrunk(),
        rayleigh: sym_sq / grad_sq,
        ratios: [
            entries[0][1] / sym_sq,
            entries[0][2] / sym_sq,
            entries[1][2] / sym_sq,
        ],
        grad_sq,
        sym_sq,
        entries,
        first_row_defect: (first_row / sym_sq).sqrt(),
    })
}

/// Order estimates `max{a^-6, a^-4 b^-2, b^-4}` and
/// `max{h^2 a^-6 b^-2, h^2 a^-8, b^-4}` of the gradient and strain norms.
pub fn order_estimates(h: f64, a: f64, b: f64) -> (f64, f64) {
    let grad = a.powi(-6).max(a.powi(-4) * b.powi(-2)).max(b.powi(-4));
    let sym = (h * h * a.powi(-6) * b.powi(-2))
        .max(h * h * a.powi(-8))
        .max(b.powi(-4));
    (grad, sym)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalePoint {
    /// `a = h^{k/8}`
    pub k: u32,
    /// `b = h^{j/4}`
    pub j: u32,
    pub a: f64,
    pub b: f64,
    pub rayleigh: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleSearch {
    pub h: f64,
    pub points: Vec<ScalePoint>,
    pub best: ScalePoint,
}

impl ScaleSearch {
    /// True when the minimum sits at `a = h^{1/4}`, `b = 1`.
    pub fn optimum_at_quarter_power(&self) -> bool {
        self.best.k == 2 && self.best.j == 0
    }
}

/// Rayleigh quotient over the grid `a in {h^{k/8}}_{k=0..4}`, `b in {h^{j/4}}_{j=0..3}`.
pub fn scale_search(geom: ShellGeometry, bump: Arc<dyn Generator>) -> Result<ScaleSearch> {
    let h = geom.h();
    let grid: Vec<(u32, u32)> = (0..=4).flat_map(|k| (0..=3).map(move |j| (k, j))).collect();
    let points: Vec<Result<ScalePoint>> = grid
        .par_iter()
        .map(|&(k, j)| {
            let a = h.powf(f64::from(k) / 8.0);
            let b = h.powf(f64::from(j) / 4.0);
            let gen = AnsatzGenerator::new(geom, bump.clone(), a, b)?;
            Ok(ScalePoint {
                k,
                j,
                a,
                b,
                rayleigh: ansatz_quotient(&gen)?.rayleigh,
            })
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let best = points
        .iter()
        .min_by(|x, y| x.rayleigh.total_cmp(&y.rayleigh))
        .expect("nonempty scale grid")
        .clone();
    Ok(ScaleSearch { h, points, best })
}
