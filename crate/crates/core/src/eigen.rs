//! Extreme generalized eigenvalues of symmetric pencils `(N, D)` with `D`
//! positive definite: `N x = lambda D x`.
//!
//! The smallest eigenvalue is found by shift-and-invert block subspace
//! iteration on `(N - sigma D)^{-1} D`; the largest by block LOBPCG with the
//! exact preconditioner `D^{-1}`. Both use Rayleigh-Ritz on the block.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{KornError, Result};

/// Pivot ratio of the denominator's Cholesky factor above which a solve is refused.
pub const MAX_PIVOT_RATIO: f64 = 1e14;

pub const DEFAULT_SEED: u64 = 0x5eed_1234;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Debug, Clone)]
pub struct PencilSpec {
    pub numerator: DMatrix<f64>,
    pub denominator: DMatrix<f64>,
    pub which: Which,
    /// Relative residual target, in `(0, 1e-2]`.
    pub tol: f64,
    pub max_iter: usize,
    /// Shift used by the smallest-eigenvalue iteration.
    pub shift: f64,
    pub block: usize,
    pub seed: u64,
}

impl PencilSpec {
    pub fn new(numerator: DMatrix<f64>, denominator: DMatrix<f64>, which: Which) -> Self {
        Self {
            numerator,
            denominator,
            which,
            tol: 1e-10,
            max_iter: match which {
                Which::Smallest => 500,
                Which::Largest => 3000,
            },
            shift: 0.0,
            block: 6,
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.numerator.nrows()
    }

    fn validate(&self) -> Result<()> {
        let n = self.numerator.nrows();
        if self.numerator.ncols() != n
            || self.denominator.nrows() != n
            || self.denominator.ncols() != n
        {
            return Err(KornError::Precondition(format!(
                "pencil dimensions disagree: N is {}x{}, D is {}x{}",
                self.numerator.nrows(),
                self.numerator.ncols(),
                self.denominator.nrows(),
                self.denominator.ncols()
            )));
        }
        if n == 0 {
            return Err(KornError::Degenerate("empty pencil".into()));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(KornError::Precondition(format!(
                "tolerance {} outside (0, 1e-2]",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub value: f64,
    /// D-normalized eigenvector.
    pub vector: DVector<f64>,
    /// `||N x - lambda D x|| / (|lambda| ||D x||)`.
    pub residual: f64,
    pub iterations: usize,
    /// Ratio of the largest to the smallest squared Cholesky pivot of `D`.
    pub pivot_ratio: f64,
}

/// Eigenpairs of the symmetric matrix `m`, ascending. Each eigenvalue is the
/// Rayleigh quotient of its own eigenvector; `SymmetricEigen` can return the
/// vectors permuted against the values.
pub fn sym_eig(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvectors
        .column_iter()
        .map(|v| {
            let v = v.into_owned();
            (v.dot(&(m * &v)) / v.norm_squared(), v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let vals = pairs.iter().map(|p| p.0).collect();
    let vecs = DMatrix::from_columns(&pairs.into_iter().map(|p| p.1).collect::<Vec<_>>());
    (vals, vecs)
}

/// Ritz values ascending and the matching `B`-orthonormal vectors of the small
/// dense pencil `(a, b)`.
pub(crate) fn small_pencil_eig(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let chol = Cholesky::new(b.clone())?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let mut c = &linv * a * linv.transpose();
    c = 0.5 * (&c + c.transpose());
    let (vals, vecs) = sym_eig(&c);
    Some((vals, linv.transpose() * vecs))
}

fn pivot_ratio(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0f64, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

fn relative_residual(
    n: &DMatrix<f64>,
    d: &DMatrix<f64>,
    x: &DVector<f64>,
    lambda: f64,
    floor: f64,
) -> f64 {
    let dx = d * x;
    let r = n * x - lambda * &dx;
    let denom = dx.norm() * lambda.abs().max(floor);
    if denom == 0.0 {
        return if r.norm() == 0.0 { 0.0 } else { f64::INFINITY };
    }
    r.norm() / denom
}

/// Iterations without a 10% residual improvement after which a stagnated
/// iterate is accepted.
pub const STALL_ITERS: usize = 40;
/// Stagnated iterates are only accepted within this factor of `tol`.
pub const STALL_FACTOR: f64 = 100.0;

fn stalled_best(best: &Option<EigenResult>, stalled: usize, tol: f64) -> Option<EigenResult> {
    match best {
        Some(b) if stalled >= STALL_ITERS && b.residual <= STALL_FACTOR * tol => Some(b.clone()),
        _ => None,
    }
}

/// Orthonormalize the columns of `s` in the `d` inner product, dropping
/// numerically dependent directions.
fn d_orthonormalize(s: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let mut gram = s.transpose() * d * s;
    gram = 0.5 * (&gram + gram.transpose());
    let (vals, vecs) = sym_eig(&gram);
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let cols: Vec<DVector<f64>> = (0..vals.len())
        .filter(|&i| vals[i] > 1e-13 * max)
        .map(|i| s * vecs.column(i) / vals[i].sqrt())
        .collect();
    DMatrix::from_columns(&cols)
}

fn random_block(n: usize, b: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, b, |_, _| rng.gen_range(-1.0..1.0))
}

fn scale_floor(n: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let dn = d.norm();
    if dn == 0.0 {
        0.0
    } else {
        1e-4 * n.norm() / dn
    }
}

/// Requested extreme generalized eigenvalue of `spec`.
pub fn extreme_eig(spec: &PencilSpec) -> Result<EigenResult> {
    spec.validate()?;
    let n = &spec.numerator;
    let d = &spec.denominator;
    let dim = spec.dim();

    let Some(chol_d) = Cholesky::new(d.clone()) else {
        let (_, vecs) = sym_eig(d);
        return Err(KornError::SingularPencil {
            vector: vecs.column(0).into_owned(),
        });
    };
    let pivots = pivot_ratio(&chol_d);
    if pivots > MAX_PIVOT_RATIO {
        return Err(KornError::IllConditioned { ratio: pivots });
    }

    let floor = scale_floor(n, d);
    let block = spec.block.clamp(1, dim);
    let mut result = if dim <= 3 * block {
        dense_rayleigh_ritz(spec, floor)?
    } else {
        match spec.which {
            Which::Smallest => shift_invert(spec, block, floor)?,
            Which::Largest => lobpcg_largest(spec, &chol_d, block, floor)?,
        }
    };
    result.pivot_ratio = pivots;

    let x = &result.vector;
    let dnorm = x.dot(&(d * x)).sqrt();
    result.vector = x / dnorm;
    let x = &result.vector;
    result.value = x.dot(&(n * x)) / x.dot(&(d * x));
    result.residual = relative_residual(n, d, x, result.value, floor);
    Ok(result)
}

fn dense_rayleigh_ritz(spec: &PencilSpec, floor: f64) -> Result<EigenResult> {
    let (vals, vecs) = small_pencil_eig(&spec.numerator, &spec.denominator)
        .ok_or_else(|| KornError::Degenerate("denominator lost definiteness".into()))?;
    let k = match spec.which {
        Which::Smallest => 0,
        Which::Largest => vals.len() - 1,
    };
    let x = vecs.column(k).into_owned();
    let residual = relative_residual(&spec.numerator, &spec.denominator, &x, vals[k], floor);
    Ok(EigenResult {
        value: vals[k],
        vector: x,
        residual,
        iterations: 1,
        pivot_ratio: 1.0,
    })
}

fn shift_invert(spec: &PencilSpec, block: usize, floor: f64) -> Result<EigenResult> {
    let n = &spec.numerator;
    let d = &spec.denominator;
    let dim = spec.dim();

    // N is only PSD for some pencils; move the shift left until N - sigma D factors.
    let mut sigma = spec.shift;
    let mut step = (n.trace().abs() / d.trace().abs()).max(1e-300) * 1e-8;
    let chol_k = loop {
        if let Some(c) = Cholesky::new(n - sigma * d) {
            break c;
        }
        sigma -= step;
        step *= 10.0;
        if !sigma.is_finite() || step > 1e300 {
            return Err(KornError::Degenerate(
                "could not find a shift making N - sigma D definite".into(),
            ));
        }
    };

    let mut x = d_orthonormalize(&random_block(dim, block, spec.seed), d);
    let mut best: Option<EigenResult> = None;
    let mut stalled = 0;
    for it in 1..=spec.max_iter {
        let y = chol_k.solve(&(d * &x));
        let q = d_orthonormalize(&y, d);
        let a = q.transpose() * n * &q;
        let b = q.transpose() * d * &q;
        let (vals, vecs) = small_pencil_eig(&a, &b)
            .ok_or_else(|| KornError::Degenerate("Ritz pencil lost definiteness".into()))?;
        x = &q * &vecs;
        let x0 = x.column(0).into_owned();
        let res = relative_residual(n, d, &x0, vals[0], floor);
        let cand = EigenResult {
            value: vals[0],
            vector: x0,
            residual: res,
            iterations: it,
            pivot_ratio: 1.0,
        };
        if res <= spec.tol {
            return Ok(cand);
        }
        if best.as_ref().map_or(true, |b| res < 0.9 * b.residual) {
            stalled = 0;
        } else {
            stalled += 1;
        }
        if best.as_ref().map_or(true, |b| res < b.residual) {
            best = Some(cand);
        }
        if let Some(b) = stalled_best(&best, stalled, spec.tol) {
            return Ok(b);
        }
    }
    let best = best.expect("at least one iteration ran");
    Err(KornError::NotConverged {
        iterations: spec.max_iter,
        residual: best.residual,
        best: Box::new(best),
    })
}

fn lobpcg_largest(
    spec: &PencilSpec,
    chol_d: &Cholesky<f64, Dyn>,
    block: usize,
    floor: f64,
) -> Result<EigenResult> {
    let n = &spec.numerator;
    let d = &spec.denominator;
    let dim = spec.dim();

    let mut x = d_orthonormalize(&random_block(dim, block, spec.seed), d);
    let (vals, vecs) = small_pencil_eig(&(x.transpose() * n * &x), &(x.transpose() * d * &x))
        .ok_or_else(|| KornError::Degenerate("initial block is rank deficient".into()))?;
    x = &x * &vecs;
    let mut theta: Vec<f64> = vals.into_iter().rev().collect();
    x = reverse_columns(&x);
    let mut p: Option<DMatrix<f64>> = None;
    let mut best: Option<EigenResult> = None;
    let mut stalled = 0;

    for it in 1..=spec.max_iter {
        let nx = n * &x;
        let dx = d * &x;
        let mut r = nx.clone();
        for (j, &t) in theta.iter().enumerate() {
            let col = r.column(j) - t * dx.column(j);
            r.set_column(j, &col);
        }
        let x0 = x.column(0).into_owned();
        let res = relative_residual(n, d, &x0, theta[0], floor);
        let cand = EigenResult {
            value: theta[0],
            vector: x0,
            residual: res,
            iterations: it,
            pivot_ratio: 1.0,
        };
        if res <= spec.tol {
            return Ok(cand);
        }
        if best.as_ref().map_or(true, |b| res < 0.9 * b.residual) {
            stalled = 0;
        } else {
            stalled += 1;
        }
        if best.as_ref().map_or(true, |b| res < b.residual) {
            best = Some(cand);
        }
        if let Some(b) = stalled_best(&best, stalled, spec.tol) {
            return Ok(b);
        }

        let w = chol_d.solve(&r);
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(3 * block);
        let mut dcols: Vec<DVector<f64>> = Vec::with_capacity(3 * block);
        for c in x.column_iter() {
            push_d_orthogonal(&mut cols, &mut dcols, c.into_owned(), d);
        }
        let nbase = cols.len();
        for c in w.column_iter() {
            push_d_orthogonal(&mut cols, &mut dcols, c.into_owned(), d);
        }
        if let Some(p) = &p {
            for c in p.column_iter() {
                push_d_orthogonal(&mut cols, &mut dcols, c.into_owned(), d);
            }
        }
        if cols.len() == nbase {
            // residual directions are all numerically inside the block
            return Ok(cand_from(&x, &theta, n, d, floor, it));
        }
        let s = DMatrix::from_columns(&cols);
        let mut a = s.transpose() * n * &s;
        a = 0.5 * (&a + a.transpose());
        let (vals, vecs) = sym_eig(&a);
        let m = vals.len();
        let keep = block.min(m);
        let top: Vec<DVector<f64>> = (0..keep)
            .map(|k| vecs.column(m - 1 - k).into_owned())
            .collect();
        let x_new = &s * DMatrix::from_columns(&top);
        theta = (0..keep).map(|k| vals[m - 1 - k]).collect();
        // search direction: the new block with its old-block component removed
        let coeff = x.transpose() * d * &x_new;
        p = Some(&x_new - &x * coeff);
        x = x_new;
    }
    let best = best.expect("at least one iteration ran");
    Err(KornError::NotConverged {
        iterations: spec.max_iter,
        residual: best.residual,
        best: Box::new(best),
    })
}

fn cand_from(
    x: &DMatrix<f64>,
    theta: &[f64],
    n: &DMatrix<f64>,
    d: &DMatrix<f64>,
    floor: f64,
    it: usize,
) -> EigenResult {
    let x0 = x.column(0).into_owned();
    EigenResult {
        residual: relative_residual(n, d, &x0, theta[0], floor),
        value: theta[0],
        vector: x0,
        iterations: it,
        pivot_ratio: 1.0,
    }
}

/// Append `v` to a D-orthonormal set after two rounds of Gram-Schmidt,
/// unless it is numerically dependent on the set.
fn push_d_orthogonal(
    cols: &mut Vec<DVector<f64>>,
    dcols: &mut Vec<DVector<f64>>,
    mut v: DVector<f64>,
    d: &DMatrix<f64>,
) {
    let norm0 = v.dot(&(d * &v)).sqrt();
    if norm0 == 0.0 || !norm0.is_finite() {
        return;
    }
    v /= norm0;
    for _ in 0..2 {
        for (c, dc) in cols.iter().zip(dcols.iter()) {
            let proj = dc.dot(&v);
            v.axpy(-proj, c, 1.0);
        }
    }
    let dv = d * &v;
    let norm = v.dot(&dv).sqrt();
    if norm < 1e-10 {
        return;
    }
    cols.push(v / norm);
    dcols.push(dv / norm);
}

fn reverse_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = m.column_iter().rev().map(|c| c.into_owned()).collect();
    DMatrix::from_columns(&cols)
}
