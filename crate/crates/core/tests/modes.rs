mod common;

use common::*;
use korn_core::eigen::Which;
use korn_core::fields::DisplacementField;
use korn_core::mode::*;
use korn_core::{FunctionSpace, ShellGeometry};
use nalgebra::SymmetricEigen;

const SPACES_2D: [FunctionSpace; 6] = [
    FunctionSpace::V0,
    FunctionSpace::V1,
    FunctionSpace::V2,
    FunctionSpace::Vstar,
    FunctionSpace::ParityOdd,
    FunctionSpace::ParityEven,
];

const FORMS: [Form; 5] = [
    Form::Gradient,
    Form::SymGradient,
    Form::GradEntry(0, 1),
    Form::GradEntry(0, 2),
    Form::GradEntry(1, 2),
];

const KINDS: [QuotientKind; 4] = [
    QuotientKind::Korn,
    QuotientKind::ComponentRTheta,
    QuotientKind::ComponentRZ,
    QuotientKind::ComponentThetaZ,
];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn bases(geom: ShellGeometry) -> Vec<ModeBasis> {
    let mut out = Vec::new();
    for (i, space) in SPACES_2D.iter().enumerate() {
        for n in [0, 1, 3] {
            out.push(
                ModeBasis::theta(*space, geom, n + i as i64 % 2, Resolution::new(4, 6)).unwrap(),
            );
        }
    }
    for space in [FunctionSpace::ParityOdd, FunctionSpace::ParityEven] {
        for (m, n) in [(0, 2), (1, 0), (2, 5), (3, 1)] {
            out.push(ModeBasis::theta_z(space, geom, m, n, 5).unwrap());
        }
    }
    out
}

#[test]
fn assembled_forms_match_3d_quadrature() {
    let geom = ShellGeometry::new(0.1, 2.0).unwrap();
    let bases = bases(geom);
    let mut profiles = 0;
    let mut worst: f64 = 0.0;
    for (b, basis) in bases.iter().cycle().take(50).enumerate() {
        let grid = oracle_grid(basis, 0);
        let c = random_coeffs(basis.dim(), 1000 + b as u64);
        let field = basis.field(&c, grid).unwrap();
        for form in FORMS {
            let m = basis.form(form);
            let assembled = c.dot(&(&m * &c));
            let quad = quadrature_form(&field, form);
            let scale = quadrature_form(&field, Form::Gradient);
            let err = (assembled - quad).abs() / scale;
            worst = worst.max(err);
            assert!(
                err < 1e-8,
                "mode {} form {form:?}: assembled {assembled:e} vs quadrature {quad:e}",
                basis.mode()
            );
        }
        profiles += 1;
    }
    assert_eq!(profiles, 50);
    println!("worst relative deviation {worst:e}");
}

#[test]
fn random_profile_at_n3_matches_quadrature() {
    let geom = ShellGeometry::new(0.1, 1.0).unwrap();
    let basis = ModeBasis::theta(FunctionSpace::V1, geom, 3, Resolution::new(5, 8)).unwrap();
    let c = random_coeffs(basis.dim(), 3);
    let field = basis.field(&c, oracle_grid(&basis, 0)).unwrap();
    let a = c.dot(&(basis.form(Form::SymGradient) * &c));
    assert!(rel(a, quadrature_form(&field, Form::SymGradient)) < 1e-8);
}

#[test]
fn axial_stretch_closed_form() {
    // phi = (0, 0, cos(pi z / L)) in the odd family: e_zz = -(pi/L) sin(pi z/L)
    let (h, l) = (0.1, 2.0);
    let geom = ShellGeometry::new(h, l).unwrap();
    let basis = ModeBasis::theta_z(FunctionSpace::ParityOdd, geom, 1, 0, 2).unwrap();
    let mut c = nalgebra::DVector::zeros(basis.dim());
    // constant radial profile in the z component: find the coefficient that
    // reproduces f_z = 1 at two radii
    for k in 0..basis.dim() {
        let mut e = nalgebra::DVector::zeros(basis.dim());
        e[k] = 1.0;
        let p0 = basis.profile(&e, 1.0 - h / 4.0, 0.0);
        let p1 = basis.profile(&e, 1.0 + h / 4.0, 0.0);
        if p0[2] != 0.0 && (p0[2] - p1[2]).abs() < 1e-14 {
            c[k] = 1.0 / p0[2];
        }
    }
    let value = c.dot(&(basis.form(Form::SymGradient) * &c));
    // int over r in I_h of r dr = h; int_0^{2 pi} dtheta = 2 pi; int sin^2 = L/2
    let expected = (std::f64::consts::PI / l).powi(2) * 2.0 * std::f64::consts::PI * h * l / 2.0;
    assert!(rel(value, expected) < 1e-12, "{value} vs {expected}");
}

#[test]
fn small_pencils_match_dense_factorization() {
    let geom = ShellGeometry::new(0.1, 2.0).unwrap();
    let mut checked = 0;
    for space in SPACES_2D {
        for kind in KINDS {
            for n in [0, 1, 2, 5] {
                let p = reduce_theta(space, geom, n, kind, Resolution::new(4, 8)).unwrap();
                if p.dim() > 200 {
                    continue;
                }
                let got = match p.solve(1e-10) {
                    Ok(r) => r.value,
                    Err(korn_core::KornError::Degenerate(_)) => continue,
                    Err(e) => panic!("{space} {kind} n={n}: {e}"),
                };
                let want = dense_extreme(&p.numerator, &p.denominator, kind.which());
                let top = dense_extreme(&p.numerator, &p.denominator, Which::Largest).abs();
                assert!(
                    (got - want).abs() <= 1e-8 * want.abs() + 1e-12 * top,
                    "{space} {kind} n={n}: {got:e} vs dense {want:e}"
                );
                checked += 1;
            }
        }
        if space.is_parity() {
            for (m, n) in [(0, 1), (1, 2), (4, 3)] {
                let p = reduce_theta_z(space, geom, m, n, QuotientKind::Korn, 6).unwrap();
                let got = p.solve(1e-10).unwrap().value;
                let want = dense_extreme(&p.numerator, &p.denominator, Which::Smallest);
                assert!(
                    (got - want).abs() <= 1e-8 * want.abs().max(1e-12),
                    "{space} ({m},{n})"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 60);
}

#[test]
fn envelope_with_unit_truncation_matches_dense() {
    let geom = ShellGeometry::new(0.2, 1.0).unwrap();
    let mut opts = EnvelopeOptions::for_geometry(&geom);
    opts.n_max = 1;
    opts.m_max = 1;
    opts.resolution = Resolution::new(3, 4);
    let env = mode_envelope(FunctionSpace::V2, geom, QuotientKind::Korn, &opts).unwrap();
    let dense = (0..=1)
        .map(|n| {
            let p = reduce_theta(
                FunctionSpace::V2,
                geom,
                n,
                QuotientKind::Korn,
                opts.resolution,
            )
            .unwrap();
            dense_extreme(&p.numerator, &p.denominator, Which::Smallest)
        })
        .fold(f64::INFINITY, f64::min);
    assert!(rel(env.extreme.value, dense) < 1e-8);
}

#[test]
fn pencils_are_symmetric_and_semidefinite() {
    let geom = ShellGeometry::new(0.05, 2.0).unwrap();
    for space in SPACES_2D {
        for kind in KINDS {
            let p = reduce_theta(space, geom, 3, kind, Resolution::new(5, 10)).unwrap();
            for m in [&p.numerator, &p.denominator] {
                let asym = (m - m.transpose()).amax();
                assert!(asym <= 1e-12 * m.amax());
                let ev = SymmetricEigen::new(m.clone()).eigenvalues;
                assert!(
                    ev.min() >= -1e-10 * ev.amax(),
                    "{space} {kind}: {}",
                    ev.min()
                );
            }
        }
    }
}

#[test]
fn constrained_spaces_have_definite_gradient_form() {
    let geom = ShellGeometry::new(0.1, 2.0).unwrap();
    for space in [FunctionSpace::V1, FunctionSpace::V2, FunctionSpace::Vstar] {
        for n in 0..4 {
            let p =
                reduce_theta(space, geom, n, QuotientKind::Korn, Resolution::new(4, 8)).unwrap();
            assert!(p.denominator.clone().cholesky().is_some(), "{space} n={n}");
            assert!(p.solve(1e-10).unwrap().value > 0.0);
        }
    }
}

#[test]
fn distinct_modes_decouple() {
    let geom = ShellGeometry::new(0.1, 2.0).unwrap();
    let cases: Vec<(ModeBasis, ModeBasis)> = vec![
        (
            ModeBasis::theta(FunctionSpace::V1, geom, 2, Resolution::new(4, 6)).unwrap(),
            ModeBasis::theta(FunctionSpace::V1, geom, 5, Resolution::new(4, 6)).unwrap(),
        ),
        (
            ModeBasis::theta(FunctionSpace::V0, geom, 0, Resolution::new(4, 6)).unwrap(),
            ModeBasis::theta(FunctionSpace::V0, geom, 3, Resolution::new(4, 6)).unwrap(),
        ),
        (
            ModeBasis::theta_z(FunctionSpace::ParityOdd, geom, 1, 3, 4).unwrap(),
            ModeBasis::theta_z(FunctionSpace::ParityOdd, geom, 2, 3, 4).unwrap(),
        ),
        (
            ModeBasis::theta_z(FunctionSpace::ParityEven, geom, 0, 1, 4).unwrap(),
            ModeBasis::theta_z(FunctionSpace::ParityEven, geom, 3, 2, 4).unwrap(),
        ),
    ];
    for (k, (a, b)) in cases.iter().enumerate() {
        let grid = {
            let ga = oracle_grid(a, b.mode().n);
            let gb = oracle_grid(b, a.mode().n);
            if ga.len() >= gb.len() {
                ga
            } else {
                gb
            }
        };
        let ca = random_coeffs(a.dim(), 50 + k as u64);
        let cb = random_coeffs(b.dim(), 90 + k as u64);
        let fa = a.field(&ca, grid.clone()).unwrap();
        let fb = b.field(&cb, grid.clone()).unwrap();
        let sum: DisplacementField = fa.add(&fb).unwrap();
        for form in FORMS {
            let split = ca.dot(&(a.form(form) * &ca)) + cb.dot(&(b.form(form) * &cb));
            let whole = quadrature_form(&sum, form);
            let scale = quadrature_form(&sum, Form::Gradient);
            assert!(
                (split - whole).abs() <= 1e-8 * scale,
                "case {k} {form:?}: {split:e} vs {whole:e}"
            );
        }
    }
}

#[test]
fn parity_paths_agree() {
    let geom = ShellGeometry::new(0.1, 2.0).unwrap();
    for space in [FunctionSpace::ParityOdd, FunctionSpace::ParityEven] {
        for n in 1..=6 {
            let two_d = reduce_theta(space, geom, n, QuotientKind::Korn, Resolution::default())
                .unwrap()
                .solve(1e-10)
                .unwrap()
                .value;
            let one_d = (0..=12)
                .filter_map(|m| {
                    reduce_theta_z(space, geom, m, n, QuotientKind::Korn, 6)
                        .unwrap()
                        .solve(1e-10)
                        .ok()
                        .map(|r| r.value)
                })
                .fold(f64::INFINITY, f64::min);
            let gap = (two_d - one_d).abs();
            assert!(
                gap <= 0.05 * two_d.max(one_d) + 1e-9,
                "{space} n={n}: 2D {two_d:e} vs 1D {one_d:e}"
            );
        }
    }
}

#[test]
fn larger_spaces_have_smaller_korn_constants() {
    let geom = ShellGeometry::new(0.1, 2.0).unwrap();
    let res = Resolution::new(5, 12);
    for n in 0..=5 {
        let k = |s| {
            reduce_theta(s, geom, n, QuotientKind::Korn, res)
                .unwrap()
                .solve(1e-10)
                .map(|r| r.value)
                .unwrap_or(0.0)
        };
        let (v0, v1, odd) = (
            k(FunctionSpace::V0),
            k(FunctionSpace::V1),
            k(FunctionSpace::ParityOdd),
        );
        let (v2, vstar) = (k(FunctionSpace::V2), k(FunctionSpace::Vstar));
        let slack = 1e-9;
        assert!(v0 >= v1 * (1.0 - slack), "n={n}: V0 {v0} < V1 {v1}");
        assert!(
            v1 >= odd * (1.0 - slack) - 1e-12,
            "n={n}: V1 {v1} < odd {odd}"
        );
        assert!(
            v0 >= v2 * (1.0 - slack) && v2 >= vstar * (1.0 - slack),
            "n={n}"
        );
        assert!(v1 >= vstar * (1.0 - slack), "n={n}");
    }
}

#[test]
fn solver_value_is_rayleigh_quotient() {
    let geom = ShellGeometry::new(0.05, 2.0).unwrap();
    for kind in KINDS {
        let p = reduce_theta(FunctionSpace::V1, geom, 4, kind, Resolution::new(5, 12)).unwrap();
        let r = p.solve(1e-10).unwrap();
        let (num, den) = p.evaluate(&r.vector);
        assert!(rel(num / den, r.value) < 1e-12, "{kind}");
        assert!(r.residual <= 1e-10);
    }
}

#[test]
fn korn_optimal_wavenumber_grows() {
    let mut prev = 0;
    for h in [0.1, 0.025] {
        let geom = ShellGeometry::new(h, 2.0).unwrap();
        let opts = EnvelopeOptions::for_geometry(&geom);
        let env =
            mode_envelope_adaptive(FunctionSpace::V1, geom, QuotientKind::Korn, &opts, 3).unwrap();
        assert!(env.truncation_warning.is_none());
        assert!(env.extreme.mode.n > prev);
        prev = env.extreme.mode.n;
    }
}
