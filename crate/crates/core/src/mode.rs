//! Fourier reduction of the shell quadratic forms.
//!
//! A circumferential mode is the real family
//! `(F_r cos n theta, F_theta sin n theta, F_z cos n theta)`; at `n = 0` every
//! angular factor is 1. This is the complex profile `(f_r, f_theta, f_z) e^{i n theta}`
//! with `f_theta = i F_theta`, so the real pencil has the same spectrum as the
//! Hermitian one.
//!
//! The `(r, z)` path keeps polynomial profiles in `z` with the end traces of
//! the space built into the basis. The `(m, n)` path fixes the axial factor
//! to `sin(pi m z / L)` or `cos(pi m z / L)` and leaves a radial problem; it is
//! exact only for the parity spaces.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{extreme_eig, sym_eig, EigenResult, PencilSpec, Which, DEFAULT_SEED};
use crate::error::{KornError, Result};
use crate::fields::{DisplacementField, Grid3};
use crate::geometry::{EndTraces, FunctionSpace, ShellGeometry};
use crate::quadrature::{gauss_legendre, legendre_table};

/// Radial and axial polynomial resolution of a mode basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    /// Number of Legendre polynomials in `r`.
    pub nr: usize,
    /// Maximal Legendre degree in `z`.
    pub dz: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { nr: 6, dz: 24 }
    }
}

impl Resolution {
    pub fn new(nr: usize, dz: usize) -> Self {
        Self { nr, dz }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuotientKind {
    /// `||e||^2 / ||grad phi||^2`, minimized.
    Korn,
    /// `||(grad phi)_{r theta}||^2 / ||e||^2`, maximized.
    ComponentRTheta,
    /// `||phi_{r,z}||^2 / ||e||^2`, maximized.
    ComponentRZ,
    /// `||phi_{theta,z}||^2 / ||e||^2`, maximized.
    ComponentThetaZ,
}

impl QuotientKind {
    pub const ALL: [QuotientKind; 4] = [
        QuotientKind::Korn,
        QuotientKind::ComponentRTheta,
        QuotientKind::ComponentRZ,
        QuotientKind::ComponentThetaZ,
    ];

    pub fn which(&self) -> Which {
        match self {
            QuotientKind::Korn => Which::Smallest,
            _ => Which::Largest,
        }
    }

    pub fn forms(&self) -> (Form, Form) {
        match self {
            QuotientKind::Korn => (Form::SymGradient, Form::Gradient),
            QuotientKind::ComponentRTheta => (Form::GradEntry(0, 1), Form::SymGradient),
            QuotientKind::ComponentRZ => (Form::GradEntry(0, 2), Form::SymGradient),
            QuotientKind::ComponentThetaZ => (Form::GradEntry(1, 2), Form::SymGradient),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            QuotientKind::Korn => "korn",
            QuotientKind::ComponentRTheta => "r-theta",
            QuotientKind::ComponentRZ => "r-z",
            QuotientKind::ComponentThetaZ => "theta-z",
        }
    }
}

impl fmt::Display for QuotientKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuotientKind {
    type Err = KornError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "korn" => Ok(QuotientKind::Korn),
            "r-theta" | "rtheta" => Ok(QuotientKind::ComponentRTheta),
            "r-z" | "rz" => Ok(QuotientKind::ComponentRZ),
            "theta-z" | "thetaz" => Ok(QuotientKind::ComponentThetaZ),
            other => Err(KornError::Config(format!(
                "unknown quotient kind '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn from_space(space: FunctionSpace) -> Option<Parity> {
        match space {
            FunctionSpace::ParityOdd => Some(Parity::Odd),
            FunctionSpace::ParityEven => Some(Parity::Even),
            _ => None,
        }
    }

    pub fn space(&self) -> FunctionSpace {
        match self {
            Parity::Odd => FunctionSpace::ParityOdd,
            Parity::Even => FunctionSpace::ParityEven,
        }
    }
}

/// Fourier mode label. `m` and `parity` are present together, exactly when
/// the `(m, n)` path is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub n: i64,
    pub m: Option<u32>,
    pub parity: Option<Parity>,
}

impl ModeIndex {
    pub fn circumferential(n: i64) -> Self {
        Self {
            n,
            m: None,
            parity: None,
        }
    }

    pub fn full(m: u32, n: i64, parity: Parity) -> Self {
        Self {
            n,
            m: Some(m),
            parity: Some(parity),
        }
    }
}

impl PartialOrd for ModeIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ModeIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.m, self.n, self.parity).cmp(&(other.m, other.n, other.parity))
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.m {
            Some(m) => write!(f, "(m={m}, n={})", self.n),
            None => write!(f, "n={}", self.n),
        }
    }
}

/// A quadratic form over the mode coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// `||grad phi||^2`
    Gradient,
    /// `||e(phi)||^2`
    SymGradient,
    /// `||(grad phi)_{ij}||^2`
    GradEntry(usize, usize),
    /// `||e(phi)_{ij}||^2`
    SymEntry(usize, usize),
}

/// One summand of a gradient entry: `coef * r^rpow * d_r^pr d_z^pz F_comp`.
#[derive(Debug, Clone, Copy)]
struct Term {
    comp: usize,
    pr: usize,
    pz: usize,
    rpow: i32,
    coef: f64,
}

const fn t(comp: usize, pr: usize, pz: usize, rpow: i32, coef: f64) -> Term {
    Term {
        comp,
        pr,
        pz,
        rpow,
        coef,
    }
}

fn gradient_terms(n: f64) -> [[Vec<Term>; 3]; 3] {
    [
        [
            vec![t(0, 1, 0, 0, 1.0)],
            vec![t(0, 0, 0, -1, -n), t(1, 0, 0, -1, -1.0)],
            vec![t(0, 0, 1, 0, 1.0)],
        ],
        [
            vec![t(1, 1, 0, 0, 1.0)],
            vec![t(1, 0, 0, -1, n), t(0, 0, 0, -1, 1.0)],
            vec![t(1, 0, 1, 0, 1.0)],
        ],
        [
            vec![t(2, 1, 0, 0, 1.0)],
            vec![t(2, 0, 0, -1, -n)],
            vec![t(2, 0, 1, 0, 1.0)],
        ],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trig {
    Sin,
    Cos,
}

/// Axial factor family of one component.
#[derive(Debug, Clone)]
enum AxialSpace {
    /// Combinations of Legendre polynomials of `t = 2z/L - 1`.
    Legendre {
        combos: Vec<Vec<(usize, f64)>>,
        degree: usize,
    },
    /// A single `sin(kz)` or `cos(kz)`; empty when it vanishes identically.
    Trig { kind: Trig, k: f64, present: bool },
}

impl AxialSpace {
    fn legendre(traces: EndTraces, degree: usize) -> Self {
        let combos: Vec<Vec<(usize, f64)>> = match (traces.bottom, traces.top) {
            (true, true) => (0..degree - 1)
                .map(|k| vec![(k, 1.0), (k + 2, -1.0)])
                .collect(),
            (true, false) => (0..degree).map(|k| vec![(k, 1.0), (k + 1, 1.0)]).collect(),
            (false, true) => (0..degree).map(|k| vec![(k, 1.0), (k + 1, -1.0)]).collect(),
            (false, false) => (0..=degree).map(|k| vec![(k, 1.0)]).collect(),
        };
        AxialSpace::Legendre { combos, degree }
    }

    fn len(&self) -> usize {
        match self {
            AxialSpace::Legendre { combos, .. } => combos.len(),
            AxialSpace::Trig { present, .. } => usize::from(*present),
        }
    }

    /// Values of the basis functions (or of their `z` derivatives) at `z`.
    fn eval(&self, z: f64, length: f64, deriv: usize) -> Vec<f64> {
        match self {
            AxialSpace::Legendre { combos, degree } => {
                let tz = 2.0 * z / length - 1.0;
                let (p, dp) = legendre_table(degree + 1, tz);
                let src = if deriv == 0 { &p } else { &dp };
                let scale = if deriv == 0 { 1.0 } else { 2.0 / length };
                combos
                    .iter()
                    .map(|c| scale * c.iter().map(|&(j, a)| a * src[j]).sum::<f64>())
                    .collect()
            }
            AxialSpace::Trig { kind, k, present } => {
                if !present {
                    return Vec::new();
                }
                let v = match (kind, deriv) {
                    (Trig::Sin, 0) => (k * z).sin(),
                    (Trig::Cos, 0) => (k * z).cos(),
                    (Trig::Sin, _) => k * (k * z).cos(),
                    (Trig::Cos, _) => -k * (k * z).sin(),
                };
                vec![v]
            }
        }
    }

    fn quadrature_points(&self) -> usize {
        match self {
            AxialSpace::Legendre { degree, .. } => degree + 6,
            AxialSpace::Trig { k, .. } => (k.abs() * 2.0) as usize + 40,
        }
    }
}

/// Discrete trial space of one Fourier mode: Legendre profiles in `r` times
/// the axial families of the three components.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    geom: ShellGeometry,
    space: FunctionSpace,
    mode: ModeIndex,
    resolution: Resolution,
    axial: [AxialSpace; 3],
    offsets: [usize; 4],
}

impl ModeBasis {
    /// Basis of the `(r, z)` reduction at circumferential wavenumber `n`.
    pub fn theta(
        space: FunctionSpace,
        geom: ShellGeometry,
        n: i64,
        resolution: Resolution,
    ) -> Result<Self> {
        if resolution.nr < 2 || resolution.dz < 2 {
            return Err(KornError::Resolution(format!(
                "mode resolution ({}, {}) cannot carry the end traces; need nr >= 2 and dz >= 2",
                resolution.nr, resolution.dz
            )));
        }
        let tr = space.traces();
        let axial = [
            AxialSpace::legendre(tr[0], resolution.dz),
            AxialSpace::legendre(tr[1], resolution.dz),
            AxialSpace::legendre(tr[2], resolution.dz),
        ];
        Ok(Self::with_axial(
            geom,
            space,
            ModeIndex::circumferential(n),
            resolution,
            axial,
        ))
    }

    /// Basis of the `(m, n)` reduction in a parity space.
    pub fn theta_z(
        space: FunctionSpace,
        geom: ShellGeometry,
        m: u32,
        n: i64,
        nr: usize,
    ) -> Result<Self> {
        let parity = Parity::from_space(space).ok_or_else(|| {
            KornError::Precondition(format!(
                "the (m, n) reduction is exact only for parity spaces, got {space}"
            ))
        })?;
        if nr < 2 {
            return Err(KornError::Resolution(format!(
                "radial resolution {nr} too small; need at least 2"
            )));
        }
        let k = PI * f64::from(m) / geom.length();
        let (first, last) = match parity {
            Parity::Odd => (Trig::Sin, Trig::Cos),
            Parity::Even => (Trig::Cos, Trig::Sin),
        };
        let fam = |kind: Trig| AxialSpace::Trig {
            kind,
            k,
            present: !(kind == Trig::Sin && m == 0),
        };
        let axial = [fam(first), fam(first), fam(last)];
        Ok(Self::with_axial(
            geom,
            space,
            ModeIndex::full(m, n, parity),
            Resolution::new(nr, 0),
            axial,
        ))
    }

    fn with_axial(
        geom: ShellGeometry,
        space: FunctionSpace,
        mode: ModeIndex,
        resolution: Resolution,
        axial: [AxialSpace; 3],
    ) -> Self {
        let mut offsets = [0usize; 4];
        for c in 0..3 {
            offsets[c + 1] = offsets[c] + resolution.nr * axial[c].len();
        }
        Self {
            geom,
            space,
            mode,
            resolution,
            axial,
            offsets,
        }
    }

    pub fn dim(&self) -> usize {
        self.offsets[3]
    }

    pub fn mode(&self) -> ModeIndex {
        self.mode
    }

    pub fn space(&self) -> FunctionSpace {
        self.space
    }

    pub fn geometry(&self) -> &ShellGeometry {
        &self.geom
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    fn theta_weight(&self) -> f64 {
        if self.mode.n == 0 {
            2.0 * PI
        } else {
            PI
        }
    }

    fn radial_matrix(&self, a: (usize, i32), b: (usize, i32)) -> DMatrix<f64> {
        let nr = self.resolution.nr;
        let (lo, hi) = self.geom.radial_interval();
        let half = 0.5 * (hi - lo);
        let (x, w) = gauss_legendre(nr + 8);
        let mut m = DMatrix::zeros(nr, nr);
        for (&xq, &wq) in x.iter().zip(&w) {
            let r = 1.0 + half * xq;
            let (p, dp) = legendre_table(nr - 1, xq);
            let va: Vec<f64> = (0..nr)
                .map(|k| if a.0 == 0 { p[k] } else { dp[k] / half })
                .collect();
            let vb: Vec<f64> = (0..nr)
                .map(|k| if b.0 == 0 { p[k] } else { dp[k] / half })
                .collect();
            let weight = wq * half * r.powi(1 + a.1 + b.1);
            for i in 0..nr {
                for j in 0..nr {
                    m[(i, j)] += weight * va[i] * vb[j];
                }
            }
        }
        m
    }

    fn axial_matrix(&self, a: (usize, usize), b: (usize, usize)) -> DMatrix<f64> {
        let (sa, sb) = (&self.axial[a.0], &self.axial[b.0]);
        let length = self.geom.length();
        let q = sa.quadrature_points().max(sb.quadrature_points());
        let (x, w) = gauss_legendre(q);
        let mut m = DMatrix::zeros(sa.len(), sb.len());
        for (&xq, &wq) in x.iter().zip(&w) {
            let z = 0.5 * length * (xq + 1.0);
            let va = sa.eval(z, length, a.1);
            let vb = sb.eval(z, length, b.1);
            for i in 0..va.len() {
                for j in 0..vb.len() {
                    m[(i, j)] += 0.5 * length * wq * va[i] * vb[j];
                }
            }
        }
        m
    }

    fn entry_form(&self, terms: &[Term]) -> DMatrix<f64> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        let tw = self.theta_weight();
        for ta in terms {
            for tb in terms {
                if self.axial[ta.comp].len() == 0 || self.axial[tb.comp].len() == 0 {
                    continue;
                }
                let mr = self.radial_matrix((ta.pr, ta.rpow), (tb.pr, tb.rpow));
                let mz = self.axial_matrix((ta.comp, ta.pz), (tb.comp, tb.pz));
                let block = mr.kronecker(&mz) * (tw * ta.coef * tb.coef);
                let (r0, c0) = (self.offsets[ta.comp], self.offsets[tb.comp]);
                let mut view = out.view_mut((r0, c0), (block.nrows(), block.ncols()));
                view += &block;
            }
        }
        out
    }

    /// Matrix of `form` over the basis coefficients.
    pub fn form(&self, form: Form) -> DMatrix<f64> {
        let g = gradient_terms(self.mode.n as f64);
        let sym_terms = |i: usize, j: usize| -> Vec<Term> {
            g[i][j]
                .iter()
                .chain(g[j][i].iter())
                .map(|tm| Term {
                    coef: 0.5 * tm.coef,
                    ..*tm
                })
                .collect()
        };
        let dim = self.dim();
        let mut m = match form {
            Form::GradEntry(i, j) => self.entry_form(&g[i][j]),
            Form::SymEntry(i, j) => self.entry_form(&sym_terms(i, j)),
            Form::Gradient => {
                let mut acc = DMatrix::zeros(dim, dim);
                for row in &g {
                    for terms in row {
                        acc += self.entry_form(terms);
                    }
                }
                acc
            }
            Form::SymGradient => {
                let mut acc = DMatrix::zeros(dim, dim);
                for i in 0..3 {
                    for j in 0..3 {
                        acc += self.entry_form(&sym_terms(i, j));
                    }
                }
                acc
            }
        };
        m = 0.5 * (&m + m.transpose());
        m
    }

    /// Profile values `(F_r, F_theta, F_z)` at `(r, z)`.
    pub fn profile(&self, coeffs: &DVector<f64>, r: f64, z: f64) -> [f64; 3] {
        let nr = self.resolution.nr;
        let (lo, hi) = self.geom.radial_interval();
        let x = (2.0 * r - lo - hi) / (hi - lo);
        let (p, _) = legendre_table(nr - 1, x);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let az = self.axial[c].eval(z, self.geom.length(), 0);
            let nz = az.len();
            let mut s = 0.0;
            for ir in 0..nr {
                for (iz, a) in az.iter().enumerate() {
                    s += coeffs[self.offsets[c] + ir * nz + iz] * p[ir] * a;
                }
            }
            out[c] = s;
        }
        out
    }

    /// Angular factors of the three components at `theta`.
    pub fn angular_factors(&self, theta: f64) -> [f64; 3] {
        if self.mode.n == 0 {
            return [1.0; 3];
        }
        let nt = self.mode.n as f64 * theta;
        [nt.cos(), nt.sin(), nt.cos()]
    }

    /// The 3D displacement field represented by `coeffs`, sampled on `grid`.
    pub fn field(&self, coeffs: &DVector<f64>, grid: Arc<Grid3>) -> Result<DisplacementField> {
        if coeffs.len() != self.dim() {
            return Err(KornError::Precondition(format!(
                "{} coefficients for a basis of dimension {}",
                coeffs.len(),
                self.dim()
            )));
        }
        if grid.geometry() != &self.geom {
            return Err(KornError::Precondition(
                "grid geometry differs from the mode geometry".into(),
            ));
        }
        DisplacementField::from_fn(grid, Some(self.space), |r, theta, z| {
            let f = self.profile(coeffs, r, z);
            let a = self.angular_factors(theta);
            [f[0] * a[0], f[1] * a[1], f[2] * a[2]]
        })
    }
}

/// Assembled pencil of one mode and one quotient kind.
#[derive(Debug, Clone)]
pub struct ModeProblem {
    pub numerator: DMatrix<f64>,
    pub denominator: DMatrix<f64>,
    pub kind: QuotientKind,
    pub basis: ModeBasis,
}

impl ModeProblem {
    pub fn new(basis: ModeBasis, kind: QuotientKind) -> Self {
        let (fnum, fden) = kind.forms();
        Self {
            numerator: basis.form(fnum),
            denominator: basis.form(fden),
            kind,
            basis,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn mode(&self) -> ModeIndex {
        self.basis.mode()
    }

    /// Numerator and denominator values at `coeffs`.
    pub fn evaluate(&self, coeffs: &DVector<f64>) -> (f64, f64) {
        (
            coeffs.dot(&(&self.numerator * coeffs)),
            coeffs.dot(&(&self.denominator * coeffs)),
        )
    }

    /// Most negative eigenvalue of `N` and of `D` relative to their norms.
    pub fn definiteness_defect(&self) -> (f64, f64) {
        let rel = |m: &DMatrix<f64>| {
            let norm = m.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let e = SymmetricEigen::new(m.clone());
            e.eigenvalues.min() / norm
        };
        (rel(&self.numerator), rel(&self.denominator))
    }

    /// Extreme generalized eigenvalue of the pencil. Directions on which both
    /// forms vanish (rigid motions with zero gradient) are deflated first.
    pub fn solve(&self, tol: f64) -> Result<EigenResult> {
        self.solve_seeded(tol, DEFAULT_SEED)
    }

    /// [`ModeProblem::solve`] with an explicit seed for the starting block.
    pub fn solve_seeded(&self, tol: f64, seed: u64) -> Result<EigenResult> {
        let spec = PencilSpec::new(
            self.numerator.clone(),
            self.denominator.clone(),
            self.kind.which(),
        )
        .with_tol(tol)
        .with_seed(seed);
        match extreme_eig(&spec) {
            Err(KornError::SingularPencil { .. }) | Err(KornError::IllConditioned { .. }) => {
                self.solve_deflated(tol, seed)
            }
            other => other,
        }
    }

    fn solve_deflated(&self, tol: f64, seed: u64) -> Result<EigenResult> {
        let (vals, vecs) = sym_eig(&self.denominator);
        let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-12 * max).collect();
        let kernel: Vec<usize> = (0..vals.len())
            .filter(|&i| vals[i] <= 1e-12 * max)
            .collect();
        let nnorm = self.numerator.norm().max(f64::MIN_POSITIVE);
        for &i in &kernel {
            let v = vecs.column(i);
            if (&self.numerator * v).norm() > 1e-8 * nnorm {
                return Err(KornError::Degenerate(format!(
                    "{} quotient is unbounded at mode {}: the denominator vanishes on a direction the numerator sees",
                    self.kind,
                    self.mode()
                )));
            }
        }
        if keep.is_empty() {
            return Err(KornError::Degenerate(format!(
                "denominator vanishes identically at mode {}",
                self.mode()
            )));
        }
        let cols: Vec<DVector<f64>> = keep.iter().map(|&i| vecs.column(i).into_owned()).collect();
        let q = DMatrix::from_columns(&cols);
        let n = q.transpose() * &self.numerator * &q;
        let d = q.transpose() * &self.denominator * &q;
        let spec = PencilSpec::new(
            0.5 * (&n + n.transpose()),
            0.5 * (&d + d.transpose()),
            self.kind.which(),
        )
        .with_tol(tol)
        .with_seed(seed);
        let mut res = extreme_eig(&spec)?;
        res.vector = &q * &res.vector;
        Ok(res)
    }
}

/// Pencil of the `(r, z)` reduction at wavenumber `n`.
pub fn reduce_theta(
    space: FunctionSpace,
    geom: ShellGeometry,
    n: i64,
    kind: QuotientKind,
    resolution: Resolution,
) -> Result<ModeProblem> {
    Ok(ModeProblem::new(
        ModeBasis::theta(space, geom, n, resolution)?,
        kind,
    ))
}

/// Pencil of the `(m, n)` reduction in a parity space.
pub fn reduce_theta_z(
    space: FunctionSpace,
    geom: ShellGeometry,
    m: u32,
    n: i64,
    kind: QuotientKind,
    nr: usize,
) -> Result<ModeProblem> {
    let basis = ModeBasis::theta_z(space, geom, m, n, nr)?;
    if basis.dim() == 0 {
        return Err(KornError::Degenerate(format!(
            "empty mode basis at {}",
            basis.mode()
        )));
    }
    Ok(ModeProblem::new(basis, kind))
}

/// Default circumferential truncation `ceil(4 h^{-1/4})`.
pub fn default_n_max(h: f64) -> usize {
    (4.0 * h.powf(-0.25)).ceil() as usize
}

pub const DEFAULT_M_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReductionPath {
    /// `(m, n)` for parity spaces, `(r, z)` otherwise.
    Auto,
    /// `(r, z)` for every space.
    Axial,
}

#[derive(Debug, Clone)]
pub struct EnvelopeOptions {
    pub n_max: usize,
    pub m_max: usize,
    pub resolution: Resolution,
    pub tol: f64,
    pub path: ReductionPath,
    pub seed: u64,
}

impl EnvelopeOptions {
    pub fn for_geometry(geom: &ShellGeometry) -> Self {
        Self {
            n_max: default_n_max(geom.h()),
            m_max: DEFAULT_M_MAX,
            resolution: Resolution::default(),
            tol: 1e-10,
            path: ReductionPath::Auto,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeValue {
    pub mode: ModeIndex,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Envelope {
    pub space: FunctionSpace,
    pub kind: QuotientKind,
    /// Per-mode extremes sorted by mode index.
    pub modes: Vec<ModeValue>,
    pub extreme: ModeValue,
    /// Set when the extreme sits on the truncation boundary.
    pub truncation_warning: Option<String>,
}

impl Envelope {
    /// Extreme over the circumferential wavenumbers, one entry per `n`.
    pub fn by_wavenumber(&self) -> Vec<(i64, f64)> {
        let mut out: Vec<(i64, f64)> = Vec::new();
        for mv in &self.modes {
            match out.iter_mut().find(|(n, _)| *n == mv.mode.n) {
                Some(slot) => {
                    if better(self.kind, mv.value, slot.1) {
                        slot.1 = mv.value;
                    }
                }
                None => out.push((mv.mode.n, mv.value)),
            }
        }
        out.sort_by_key(|(n, _)| *n);
        out
    }
}

fn better(kind: QuotientKind, a: f64, b: f64) -> bool {
    match kind.which() {
        Which::Smallest => a < b,
        Which::Largest => a > b,
    }
}

/// Extreme of the mode-wise generalized eigenvalues over `0 <= n <= n_max`
/// (and `0 <= m <= m_max` on the `(m, n)` path). Negative `n` give the same
/// spectra and are not solved.
pub fn mode_envelope(
    space: FunctionSpace,
    geom: ShellGeometry,
    kind: QuotientKind,
    opts: &EnvelopeOptions,
) -> Result<Envelope> {
    if opts.n_max < 1 || opts.m_max < 1 {
        return Err(KornError::Precondition(format!(
            "truncation bounds must be at least 1, got n_max={} m_max={}",
            opts.n_max, opts.m_max
        )));
    }
    let one_d = space.is_parity() && opts.path == ReductionPath::Auto;
    let mut modes: Vec<ModeIndex> = Vec::new();
    for n in 0..=opts.n_max as i64 {
        if one_d {
            let parity = Parity::from_space(space).expect("parity space");
            for m in 0..=opts.m_max as u32 {
                modes.push(ModeIndex::full(m, n, parity));
            }
        } else {
            modes.push(ModeIndex::circumferential(n));
        }
    }

    let solved: Vec<Result<ModeValue>> = modes
        .par_iter()
        .map(|mode| {
            let problem = match mode.m {
                Some(m) => reduce_theta_z(space, geom, m, mode.n, kind, opts.resolution.nr)?,
                None => reduce_theta(space, geom, mode.n, kind, opts.resolution)?,
            };
            let r = problem.solve_seeded(opts.tol, opts.seed)?;
            Ok(ModeValue {
                mode: *mode,
                value: r.value,
                residual: r.residual,
                iterations: r.iterations,
            })
        })
        .collect();
    let mut values = Vec::with_capacity(solved.len());
    for r in solved {
        values.push(r?);
    }
    values.sort_by(|a, b| a.mode.cmp(&b.mode));

    let extreme = values
        .iter()
        .fold(None::<&ModeValue>, |acc, mv| match acc {
            Some(best) if !better(kind, mv.value, best.value) => Some(best),
            _ => Some(mv),
        })
        .expect("at least one mode")
        .clone();

    let mut warning = None;
    if extreme.mode.n as usize == opts.n_max {
        warning = Some(format!(
            "extreme at n = n_max = {}; enlarge the circumferential truncation",
            opts.n_max
        ));
    } else if extreme.mode.m.map_or(false, |m| m as usize == opts.m_max) {
        warning = Some(format!(
            "extreme at m = m_max = {}; enlarge the axial truncation",
            opts.m_max
        ));
    }

    Ok(Envelope {
        space,
        kind,
        modes: values,
        extreme,
        truncation_warning: warning,
    })
}

/// Mode envelope that doubles the violated truncation bound until the
/// extreme moves inside it, at most `max_rounds` times.
pub fn mode_envelope_adaptive(
    space: FunctionSpace,
    geom: ShellGeometry,
    kind: QuotientKind,
    opts: &EnvelopeOptions,
    max_rounds: usize,
) -> Result<Envelope> {
    let mut opts = opts.clone();
    let mut env = mode_envelope(space, geom, kind, &opts)?;
    for _ in 0..max_rounds {
        if env.truncation_warning.is_none() {
            break;
        }
        if env.extreme.mode.n as usize == opts.n_max {
            opts.n_max *= 2;
        } else {
            opts.m_max *= 2;
        }
        env = mode_envelope(space, geom, kind, &opts)?;
    }
    Ok(env)
}
