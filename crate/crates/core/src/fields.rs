//! Displacement fields on the shell `C_h`, their cylindrical gradient, the
//! matrix `A` (the gradient with the `1/r` factors dropped), and the L^2
//! norms used throughout the estimates.
//!
//! Fields live on a tensor grid: Chebyshev-Gauss-Lobatto in `r` and `z`,
//! uniform periodic in `theta`. Differentiation is spectral along every axis
//! and every integral carries the volume measure `r dr dtheta dz`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Component, KornError, Result};
use crate::geometry::{FunctionSpace, ShellGeometry};
use crate::quadrature::{chebyshev_t, Axis, CompensatedSum};

/// Default radial, angular and axial node counts.
pub const DEFAULT_GRID: (usize, usize, usize) = (16, 64, 64);

/// Trace conditions are enforced to this tolerance, relative to the field's
/// largest nodal value (or absolutely when that is below one).
pub const TRACE_TOL: f64 = 1e-12;

/// Fewest nodes per axis for which the spectral derivative is considered
/// meaningful.
pub const MIN_DIFF_NODES: usize = 4;

/// Tensor quadrature/collocation grid on `I_h x [0, 2 pi) x [0, L]`.
#[derive(Debug, Clone)]
pub struct Grid3 {
    geom: ShellGeometry,
    radial: Axis,
    angular: Axis,
    axial: Axis,
    /// Radial weights multiplied by `r`.
    radial_volume_weights: Vec<f64>,
}

impl Grid3 {
    pub fn new(geom: ShellGeometry, nr: usize, ntheta: usize, nz: usize) -> Result<Arc<Self>> {
        if nr < 2 || nz < 2 || ntheta < 2 {
            return Err(KornError::Resolution(format!(
                "grid needs at least two nodes per axis, got ({nr}, {ntheta}, {nz})"
            )));
        }
        let (r0, r1) = geom.radial_interval();
        let radial = Axis::lobatto(r0, r1, nr);
        let angular = Axis::periodic(0.0, 2.0 * PI, ntheta);
        let axial = Axis::lobatto(0.0, geom.length(), nz);
        let radial_volume_weights = radial
            .nodes()
            .iter()
            .zip(radial.weights())
            .map(|(r, w)| r * w)
            .collect();
        Ok(Arc::new(Self {
            geom,
            radial,
            angular,
            axial,
            radial_volume_weights,
        }))
    }

    pub fn with_defaults(geom: ShellGeometry) -> Result<Arc<Self>> {
        let (nr, nt, nz) = DEFAULT_GRID;
        Self::new(geom, nr, nt, nz)
    }

    pub fn geometry(&self) -> &ShellGeometry {
        &self.geom
    }

    pub fn radial(&self) -> &Axis {
        &self.radial
    }

    pub fn angular(&self) -> &Axis {
        &self.angular
    }

    pub fn axial(&self) -> &Axis {
        &self.axial
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.radial.len(), self.angular.len(), self.axial.len())
    }

    pub fn len(&self) -> usize {
        let (a, b, c) = self.shape();
        a * b * c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ir: usize, it: usize, iz: usize) -> usize {
        (ir * self.angular.len() + it) * self.axial.len() + iz
    }

    /// `(r, theta, z)` at a node.
    pub fn node(&self, ir: usize, it: usize, iz: usize) -> (f64, f64, f64) {
        (
            self.radial.nodes()[ir],
            self.angular.nodes()[it],
            self.axial.nodes()[iz],
        )
    }

    /// Integral of nodal values over `C_h` with measure `r dr dtheta dz`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        let (nr, nt, nz) = self.shape();
        let mut acc = CompensatedSum::new();
        for ir in 0..nr {
            let wr = self.radial_volume_weights[ir];
            for it in 0..nt {
                let wt = self.angular.weights()[it];
                let base = self.index(ir, it, 0);
                for iz in 0..nz {
                    acc.add(wr * wt * self.axial.weights()[iz] * values[base + iz]);
                }
            }
        }
        acc.value()
    }

    /// Squared L^2 norm of nodal values.
    pub fn norm_sq(&self, values: &[f64]) -> f64 {
        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        self.integrate(&sq)
    }

    fn map_nodes<F: Fn(f64, f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let (nr, nt, nz) = self.shape();
        let mut out = Vec::with_capacity(self.len());
        for ir in 0..nr {
            for it in 0..nt {
                for iz in 0..nz {
                    let (r, t, z) = self.node(ir, it, iz);
                    out.push(f(r, t, z));
                }
            }
        }
        out
    }

    fn d_radial(&self, f: &[f64]) -> Vec<f64> {
        let (nr, nt, nz) = self.shape();
        let block = nt * nz;
        let d = self.radial.diff();
        let mut out = vec![0.0; f.len()];
        for i in 0..nr {
            let dst = &mut out[i * block..(i + 1) * block];
            for l in 0..nr {
                let c = d[(i, l)];
                let src = &f[l * block..(l + 1) * block];
                dst.iter_mut().zip(src).for_each(|(o, s)| *o += c * s);
            }
        }
        out
    }

    fn d_angular(&self, f: &[f64]) -> Vec<f64> {
        let (nr, nt, nz) = self.shape();
        let d = self.angular.diff();
        let mut out = vec![0.0; f.len()];
        for i in 0..nr {
            for j in 0..nt {
                let dst = self.index(i, j, 0);
                for l in 0..nt {
                    let c = d[(j, l)];
                    if c == 0.0 {
                        continue;
                    }
                    let src = self.index(i, l, 0);
                    for k in 0..nz {
                        out[dst + k] += c * f[src + k];
                    }
                }
            }
        }
        out
    }

    fn d_axial(&self, f: &[f64]) -> Vec<f64> {
        let (nr, nt, nz) = self.shape();
        let d = self.axial.diff();
        let mut out = vec![0.0; f.len()];
        for i in 0..nr {
            for j in 0..nt {
                let base = self.index(i, j, 0);
                for k in 0..nz {
                    let mut s = 0.0;
                    for l in 0..nz {
                        s += d[(k, l)] * f[base + l];
                    }
                    out[base + k] = s;
                }
            }
        }
        out
    }
}

/// Vector field `phi = phi_r e_r + phi_theta e_theta + phi_z e_z` sampled on a grid.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    grid: Arc<Grid3>,
    comps: [Vec<f64>; 3],
    space: Option<FunctionSpace>,
}

impl DisplacementField {
    /// Build from nodal component arrays. When `space` is given its trace
    /// conditions are checked at the `z = 0` and `z = L` nodes.
    pub fn from_components(
        grid: Arc<Grid3>,
        space: Option<FunctionSpace>,
        comps: [Vec<f64>; 3],
    ) -> Result<Self> {
        for (c, values) in Component::ALL.iter().zip(&comps) {
            if values.len() != grid.len() {
                return Err(KornError::Precondition(format!(
                    "{c} has {} values, grid has {} nodes",
                    values.len(),
                    grid.len()
                )));
            }
        }
        let field = Self { grid, comps, space };
        if let Some(space) = space {
            field.check_traces(space)?;
        }
        Ok(field)
    }

    /// Sample a closed-form field `(r, theta, z) -> [phi_r, phi_theta, phi_z]`.
    pub fn from_fn<F>(grid: Arc<Grid3>, space: Option<FunctionSpace>, f: F) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> [f64; 3],
    {
        let (nr, nt, nz) = grid.shape();
        let mut comps = [
            Vec::with_capacity(grid.len()),
            Vec::with_capacity(grid.len()),
            Vec::with_capacity(grid.len()),
        ];
        for ir in 0..nr {
            for it in 0..nt {
                for iz in 0..nz {
                    let (r, t, z) = grid.node(ir, it, iz);
                    let v = f(r, t, z);
                    for c in 0..3 {
                        comps[c].push(v[c]);
                    }
                }
            }
        }
        Self::from_components(grid, space, comps)
    }

    pub fn zeros(grid: Arc<Grid3>, space: Option<FunctionSpace>) -> Self {
        let n = grid.len();
        Self {
            grid,
            comps: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            space,
        }
    }

    fn check_traces(&self, space: FunctionSpace) -> Result<()> {
        let scale = self
            .comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = TRACE_TOL * scale;
        let (nr, nt, nz) = self.grid.shape();
        for c in Component::ALL {
            let tr = space.trace(c);
            let ends = [(tr.bottom, 0usize, "z=0"), (tr.top, nz - 1, "z=L")];
            for (active, iz, label) in ends {
                if !active {
                    continue;
                }
                for ir in 0..nr {
                    for it in 0..nt {
                        let v = self.comps[c.index()][self.grid.index(ir, it, iz)];
                        if v.abs() > tol {
                            return Err(KornError::Trace {
                                component: c.name(),
                                location: label.to_string(),
                                value: v,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    pub fn geometry(&self) -> &ShellGeometry {
        self.grid.geometry()
    }

    pub fn space(&self) -> Option<FunctionSpace> {
        self.space
    }

    pub fn component(&self, c: Component) -> &[f64] {
        &self.comps[c.index()]
    }

    /// `||phi||^2`, summed over the three components.
    pub fn norm_sq(&self) -> f64 {
        self.comps.iter().map(|c| self.grid.norm_sq(c)).sum()
    }

    /// `||phi||^2 + ||grad phi||^2`.
    pub fn h1_norm_sq(&self) -> Result<f64> {
        Ok(self.norm_sq() + cylindrical_gradient(self)?.norm_sq())
    }

    /// Sum of two fields on the same grid.
    pub fn add(&self, other: &DisplacementField) -> Result<Self> {
        if !Arc::ptr_eq(&self.grid, &other.grid) {
            return Err(KornError::Precondition(
                "fields live on different grids".into(),
            ));
        }
        let comps = std::array::from_fn(|c| {
            self.comps[c]
                .iter()
                .zip(&other.comps[c])
                .map(|(a, b)| a + b)
                .collect()
        });
        let space = if self.space == other.space {
            self.space
        } else {
            None
        };
        Ok(Self {
            grid: self.grid.clone(),
            comps,
            space,
        })
    }
}

/// 3x3 matrix field in the cylindrical frame; entry `(i, j)` with
/// `0 = r, 1 = theta, 2 = z`.
#[derive(Debug, Clone)]
pub struct GradField {
    grid: Arc<Grid3>,
    entries: [[Vec<f64>; 3]; 3],
}

impl GradField {
    pub fn new(grid: Arc<Grid3>, entries: [[Vec<f64>; 3]; 3]) -> Result<Self> {
        for row in &entries {
            for e in row {
                if e.len() != grid.len() {
                    return Err(KornError::Precondition(
                        "matrix entry does not conform to grid".into(),
                    ));
                }
            }
        }
        Ok(Self { grid, entries })
    }

    /// Constant matrix field.
    pub fn constant(grid: Arc<Grid3>, m: [[f64; 3]; 3]) -> Self {
        let n = grid.len();
        let entries = std::array::from_fn(|i| std::array::from_fn(|j| vec![m[i][j]; n]));
        Self { grid, entries }
    }

    pub fn grid(&self) -> &Arc<Grid3> {
        &self.grid
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[i][j]
    }

    /// Value of the matrix at one node.
    pub fn at(&self, ir: usize, it: usize, iz: usize) -> [[f64; 3]; 3] {
        let k = self.grid.index(ir, it, iz);
        std::array::from_fn(|i| std::array::from_fn(|j| self.entries[i][j][k]))
    }

    /// `1/2 (G + G^T)` pointwise.
    pub fn symmetrize(&self) -> GradField {
        let entries = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                self.entries[i][j]
                    .iter()
                    .zip(&self.entries[j][i])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect()
            })
        });
        GradField {
            grid: self.grid.clone(),
            entries,
        }
    }

    pub fn sub(&self, other: &GradField) -> GradField {
        let entries = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                self.entries[i][j]
                    .iter()
                    .zip(&other.entries[i][j])
                    .map(|(a, b)| a - b)
                    .collect()
            })
        });
        GradField {
            grid: self.grid.clone(),
            entries,
        }
    }

    pub fn entry_norm_sq(&self, i: usize, j: usize) -> f64 {
        self.grid.norm_sq(&self.entries[i][j])
    }

    /// Frobenius-in-frame squared L^2 norm.
    pub fn norm_sq(&self) -> f64 {
        let grid = &self.grid;
        let pointwise: Vec<f64> = (0..grid.len())
            .map(|k| {
                let mut s = 0.0;
                for row in &self.entries {
                    for e in row {
                        s += e[k] * e[k];
                    }
                }
                s
            })
            .collect();
        grid.integrate(&pointwise)
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sq().max(0.0).sqrt()
    }

    /// Largest pointwise `|G_ij - G_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..3 {
            for j in 0..i {
                for (a, b) in self.entries[i][j].iter().zip(&self.entries[j][i]) {
                    m = m.max((a - b).abs());
                }
            }
        }
        m
    }
}

/// First partial derivatives `d[c][axis]` of every component, axis order `(r, theta, z)`.
struct Partials {
    d: [[Vec<f64>; 3]; 3],
}

fn partials(field: &DisplacementField) -> Result<Partials> {
    let grid = &field.grid;
    let (nr, nt, nz) = grid.shape();
    if nr < MIN_DIFF_NODES || nz < MIN_DIFF_NODES || nt < MIN_DIFF_NODES {
        return Err(KornError::Resolution(format!(
            "differentiation needs at least {MIN_DIFF_NODES} nodes per axis, grid is ({nr}, {nt}, {nz})"
        )));
    }
    let d = std::array::from_fn(|c| {
        let f = &field.comps[c];
        [grid.d_radial(f), grid.d_angular(f), grid.d_axial(f)]
    });
    Ok(Partials { d })
}

fn radius_field(grid: &Grid3) -> Vec<f64> {
    grid.map_nodes(|r, _, _| r)
}

/// Assemble the gradient-type matrix. With `scaled = true` the `1/r`
/// factors of the second column are dropped, which yields `A`.
fn assemble(field: &DisplacementField, scaled: bool) -> Result<GradField> {
    let p = partials(field)?;
    let grid = field.grid.clone();
    let r = radius_field(&grid);
    let (phr, pht) = (&field.comps[0], &field.comps[1]);
    let inv = |k: usize| if scaled { 1.0 } else { 1.0 / r[k] };
    let n = grid.len();
    let col2 = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..n).map(|k| f(k) * inv(k)).collect() };

    let [[r_r, r_t, r_z], [t_r, t_t, t_z], [z_r, z_t, z_z]] = p.d;
    let e01 = col2(&|k| r_t[k] - pht[k]);
    let e11 = col2(&|k| t_t[k] + phr[k]);
    let e21 = col2(&|k| z_t[k]);
    GradField::new(grid, [[r_r, e01, r_z], [t_r, e11, t_z], [z_r, e21, z_z]])
}

/// The gradient of `phi` in cylindrical coordinates:
///
/// ```text
/// [ phi_r,r   (phi_r,theta - phi_theta)/r   phi_r,z     ]
/// [ phi_th,r  (phi_th,theta + phi_r)/r      phi_th,z    ]
/// [ phi_z,r   phi_z,theta / r               phi_z,z     ]
/// ```
pub fn cylindrical_gradient(field: &DisplacementField) -> Result<GradField> {
    assemble(field, false)
}

/// Symmetric part `e = 1/2 (G + G^T)`.
pub fn symmetrize(g: &GradField) -> GradField {
    g.symmetrize()
}

/// The matrix `A`: the cylindrical gradient with the `1/r` factors removed
/// from the second column.
pub fn scaled_gradient_a(field: &DisplacementField) -> Result<GradField> {
    assemble(field, true)
}

/// L^2 norm of a scalar nodal array over the shell.
pub fn l2_norm(grid: &Grid3, values: &[f64]) -> f64 {
    grid.norm_sq(values).max(0.0).sqrt()
}

/// L^2 norms of the entries of `A` and of its symmetrizations.
///
/// `g12^2 = ||phi_th,r||^2 + ||phi_r,th - phi_th||^2` and
/// `e12^2 = ||phi_th,r + phi_r,th - phi_th||^2`, and likewise for the other
/// off-diagonal pairs. Diagonal entries coincide: `g_ii = e_ii`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentNorms {
    pub g11: f64,
    pub g22: f64,
    pub g33: f64,
    pub g12: f64,
    pub g13: f64,
    pub g23: f64,
    pub e11: f64,
    pub e22: f64,
    pub e33: f64,
    pub e12: f64,
    pub e13: f64,
    pub e23: f64,
    pub norm_phi_r: f64,
    pub norm_phi_theta: f64,
}

impl ComponentNorms {
    /// `||A||^2`.
    pub fn a_norm_sq(&self) -> f64 {
        [self.g11, self.g22, self.g33, self.g12, self.g13, self.g23]
            .iter()
            .map(|x| x * x)
            .sum()
    }

    /// `||A_sym||^2`; the off-diagonal sums enter as `2 (e_ij / 2)^2`.
    pub fn a_sym_norm_sq(&self) -> f64 {
        self.e11 * self.e11
            + self.e22 * self.e22
            + self.e33 * self.e33
            + 0.5 * (self.e12 * self.e12 + self.e13 * self.e13 + self.e23 * self.e23)
    }
}

pub fn component_norms(field: &DisplacementField) -> Result<ComponentNorms> {
    let a = scaled_gradient_a(field)?;
    let grid = &field.grid;
    let nrm = |v: &[f64]| l2_norm(grid, v);
    let pair = |i: usize, j: usize| {
        let g = (grid.norm_sq(a.entry(i, j)) + grid.norm_sq(a.entry(j, i)))
            .max(0.0)
            .sqrt();
        let s: Vec<f64> = a
            .entry(i, j)
            .iter()
            .zip(a.entry(j, i))
            .map(|(x, y)| x + y)
            .collect();
        (g, nrm(&s))
    };
    let (g12, e12) = pair(0, 1);
    let (g13, e13) = pair(0, 2);
    let (g23, e23) = pair(1, 2);
    let g11 = nrm(a.entry(0, 0));
    let g22 = nrm(a.entry(1, 1));
    let g33 = nrm(a.entry(2, 2));
    Ok(ComponentNorms {
        g11,
        g22,
        g33,
        g12,
        g13,
        g23,
        e11: g11,
        e22: g22,
        e33: g33,
        e12,
        e13,
        e23,
        norm_phi_r: nrm(&field.comps[0]),
        norm_phi_theta: nrm(&field.comps[1]),
    })
}

/// Infinitesimal rigid motions written in cylindrical components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigidMotion {
    TranslationX,
    TranslationY,
    TranslationZ,
    RotationX,
    RotationY,
    RotationZ,
}

impl RigidMotion {
    pub const ALL: [RigidMotion; 6] = [
        RigidMotion::TranslationX,
        RigidMotion::TranslationY,
        RigidMotion::TranslationZ,
        RigidMotion::RotationX,
        RigidMotion::RotationY,
        RigidMotion::RotationZ,
    ];

    pub fn eval(&self, r: f64, theta: f64, z: f64) -> [f64; 3] {
        let (s, c) = theta.sin_cos();
        match self {
            RigidMotion::TranslationX => [c, -s, 0.0],
            RigidMotion::TranslationY => [s, c, 0.0],
            RigidMotion::TranslationZ => [0.0, 0.0, 1.0],
            // e_x cross x = (0, -z, y)
            RigidMotion::RotationX => [-z * s, -z * c, r * s],
            // e_y cross x = (z, 0, -x)
            RigidMotion::RotationY => [z * c, -z * s, -r * c],
            RigidMotion::RotationZ => [0.0, r, 0.0],
        }
    }
}

/// Seeded smooth random field: a truncated Fourier-Chebyshev series with
/// coefficient scale `1/(1+k^2)` per index, multiplied by `z/L` and/or
/// `1 - z/L` wherever `space` demands a vanishing trace.
pub fn random_smooth_field(
    grid: Arc<Grid3>,
    space: Option<FunctionSpace>,
    seed: u64,
) -> Result<DisplacementField> {
    const RADIAL: usize = 4;
    const ANGULAR: usize = 4;
    const AXIAL: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = |k: usize| 1.0 / (1.0 + (k * k) as f64);
    // coeffs[c][a][k][cos/sin][b]
    let mut coeffs = vec![0.0; 3 * RADIAL * ANGULAR * 2 * AXIAL];
    let mut idx = 0;
    for _c in 0..3 {
        for a in 0..RADIAL {
            for k in 0..ANGULAR {
                for _trig in 0..2 {
                    for b in 0..AXIAL {
                        coeffs[idx] = rng.gen_range(-1.0..1.0) * decay(a) * decay(k) * decay(b);
                        idx += 1;
                    }
                }
            }
        }
    }
    let geom = *grid.geometry();
    let (r0, r1) = geom.radial_interval();
    let len = geom.length();
    let traces = space.map(|s| s.traces());
    let eval = |r: f64, theta: f64, z: f64| -> [f64; 3] {
        let rho = (2.0 * r - r0 - r1) / (r1 - r0);
        let zeta = 2.0 * z / len - 1.0;
        let ta: Vec<f64> = (0..RADIAL).map(|a| chebyshev_t(a, rho)).collect();
        let tb: Vec<f64> = (0..AXIAL).map(|b| chebyshev_t(b, zeta)).collect();
        std::array::from_fn(|c| {
            let mut s = 0.0;
            let mut idx = c * RADIAL * ANGULAR * 2 * AXIAL;
            for ta_a in &ta {
                for k in 0..ANGULAR {
                    let (sk, ck) = (k as f64 * theta).sin_cos();
                    for trig in [ck, sk] {
                        for tb_b in &tb {
                            s += coeffs[idx] * ta_a * trig * tb_b;
                            idx += 1;
                        }
                    }
                }
            }
            if let Some(tr) = traces {
                if tr[c].bottom {
                    s *= z / len;
                }
                if tr[c].top {
                    s *= 1.0 - z / len;
                }
            }
            s
        })
    };
    DisplacementField::from_fn(grid, space, eval)
}
