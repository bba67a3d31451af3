#![allow(dead_code)]

use std::sync::Arc;

use korn_core::eigen::Which;
use korn_core::fields::{cylindrical_gradient, Grid3};
use korn_core::mode::{Form, ModeBasis};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Full spectrum of the pencil `(n, d)` by dense factorization. Directions
/// where `d` vanishes to `1e-12` relative are removed first.
pub fn dense_spectrum(n: &DMatrix<f64>, d: &DMatrix<f64>) -> Vec<f64> {
    let de = SymmetricEigen::new(d.clone());
    let max = de.eigenvalues.amax();
    // eigenvalues are taken from each vector since the returned pairing is unreliable
    let cols: Vec<DVector<f64>> = de
        .eigenvectors
        .column_iter()
        .map(|v| (v.dot(&(d * v)), v.into_owned()))
        .filter(|(lam, _)| *lam > 1e-12 * max)
        .map(|(lam, v)| v / lam.sqrt())
        .collect();
    let w = DMatrix::from_columns(&cols);
    let c = w.transpose() * n * &w;
    let c = 0.5 * (&c + c.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Extreme eigenvalue of `(n, d)` via Cholesky of `d` when it is positive
/// definite, otherwise via [`dense_spectrum`].
pub fn dense_extreme(n: &DMatrix<f64>, d: &DMatrix<f64>, which: Which) -> f64 {
    let ev = match d.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            let li = l.clone().try_inverse().unwrap();
            let c = &li * n * li.transpose();
            let c = 0.5 * (&c + c.transpose());
            let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ev
        }
        None => dense_spectrum(n, d),
    };
    match which {
        Which::Smallest => ev[0],
        Which::Largest => *ev.last().unwrap(),
    }
}

/// Random coefficient vector with entries in `[-1, 1]`.
pub fn random_coeffs(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0))
}

/// 3D grid fine enough to differentiate and integrate fields of `basis`
/// exactly up to rounding.
pub fn oracle_grid(basis: &ModeBasis, extra_n: i64) -> Arc<Grid3> {
    let n = basis.mode().n.abs().max(extra_n.abs()) as usize;
    let nr = basis.resolution().nr.max(2) + 14;
    let ntheta = 4 * n + 8;
    let nz = match basis.mode().m {
        Some(m) => 2 * m as usize + 40,
        None => 2 * basis.resolution().dz + 12,
    };
    Grid3::new(*basis.geometry(), nr, ntheta, nz).unwrap()
}

/// Value of `form` on a 3D field sampled on `grid`, by spectral
/// differentiation and Clenshaw-Curtis quadrature.
pub fn quadrature_form(field: &korn_core::fields::DisplacementField, form: Form) -> f64 {
    let g = cylindrical_gradient(field).unwrap();
    match form {
        Form::Gradient => g.norm_sq(),
        Form::SymGradient => g.symmetrize().norm_sq(),
        Form::GradEntry(i, j) => g.entry_norm_sq(i, j),
        Form::SymEntry(i, j) => g.symmetrize().entry_norm_sq(i, j),
    }
}

/// Dirichlet problem `-lap(phi) = f` on `[0, 1]^2` with zero data, five-point
/// stencil on an `n x n` cell grid, solved by conjugate gradients. Returns
/// interior values indexed `(i - 1) * (n - 1) + (j - 1)`.
pub fn fd_poisson_unit_square(n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let m = n - 1;
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| (i - 1) * m + (j - 1);
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; m * m];
        for i in 1..=m {
            for j in 1..=m {
                let c = x[idx(i, j)];
                let mut s = 4.0 * c;
                if i > 1 {
                    s -= x[idx(i - 1, j)];
                }
                if i < m {
                    s -= x[idx(i + 1, j)];
                }
                if j > 1 {
                    s -= x[idx(i, j - 1)];
                }
                if j < m {
                    s -= x[idx(i, j + 1)];
                }
                y[idx(i, j)] = s / (h * h);
            }
        }
        y
    };
    let mut b = vec![0.0; m * m];
    for i in 1..=m {
        for j in 1..=m {
            b[idx(i, j)] = f(i as f64 * h, j as f64 * h);
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; m * m];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-26 * dot(&b, &b);
    for _ in 0..20 * m * m {
        if rr <= stop {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..p.len() {
            p[k] = r[k] + beta * p[k];
        }
    }
    x
}
