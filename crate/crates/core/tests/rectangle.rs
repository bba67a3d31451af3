mod common;

use std::f64::consts::PI;

use korn_core::rect::*;
use korn_core::KornError;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn tilde_identity_holds_pointwise() {
    let spec = CorpusSpec::standard(3);
    let grid = spec.grid(0.1, BoundaryTag::PeriodicBoth).unwrap();
    for i in 0..20 {
        let f = spec.field(&grid, BoundaryTag::PeriodicBoth, i).unwrap();
        let g = grid.clone();
        let gs = modified_gradient(&f, GradientKind::Star);
        let gt = modified_gradient(&tilde_transform(&f), GradientKind::Alpha(1.0));
        let x = g.sample(|x, _| x);
        let (v, vx, vy) = (f.v(), g.dx(f.v()), g.dy(f.v()));
        let n = g.len();
        let corr = [
            [vec![0.0; n], v.iter().map(|v| -v).collect::<Vec<_>>()],
            [
                (0..n).map(|k| v[k] + x[k] * vx[k]).collect(),
                (0..n).map(|k| x[k] * vy[k]).collect(),
            ],
        ];
        let scale = gs
            .entries
            .iter()
            .flatten()
            .flatten()
            .fold(1.0f64, |m, v| m.max(v.abs()));
        for a in 0..2 {
            for b in 0..2 {
                let rebuilt: Vec<f64> = (0..n).map(|k| gt.entry(a, b)[k] + corr[a][b][k]).collect();
                assert!(
                    max_abs_diff(gs.entry(a, b), &rebuilt) < 1e-11 * scale,
                    "field {i} entry ({a},{b})"
                );
            }
        }
        // symmetric parts differ by [[0, -x v_x / 2], [-x v_x / 2, -x v_y]]
        let es = gs.symmetrized();
        let et = gt.symmetrized();
        for k in 0..n {
            assert!(
                (et.entry(0, 1)[k] - es.entry(0, 1)[k] + 0.5 * x[k] * vx[k]).abs() < 1e-11 * scale
            );
            assert!((et.entry(1, 1)[k] - es.entry(1, 1)[k] + x[k] * vy[k]).abs() < 1e-11 * scale);
        }
    }
}

#[test]
fn harmonic_input_is_fixed() {
    let g = RectGrid::new(0.2, 1.5, 12, 20).unwrap();
    let f = RectField::from_fn(g.clone(), BoundaryTag::None, |x, y| {
        (x * y + 3.0 * x - y, 0.0)
    })
    .unwrap();
    let w = harmonic_projection(&f).unwrap();
    assert!(max_abs_diff(&w, f.u()) < 1e-10);
}

#[test]
fn projection_of_x_squared_matches_finite_differences() {
    // w = x^2 - phi with -lap(phi) = -2, phi = 0 on the boundary
    let g = RectGrid::on(0.0, 1.0, 1.0, 24, 24).unwrap();
    let f = RectField::from_fn(g.clone(), BoundaryTag::None, |x, _| (x * x, 0.0)).unwrap();
    let w = harmonic_projection(&f).unwrap();
    let coarse = 64;
    let fine = 2 * coarse;
    let a = common::fd_poisson_unit_square(coarse, |_, _| -2.0);
    let b = common::fd_poisson_unit_square(fine, |_, _| -2.0);
    let probe = 8;
    let mut worst: f64 = 0.0;
    for i in 1..probe {
        for j in 1..probe {
            let (x, y) = (i as f64 / probe as f64, j as f64 / probe as f64);
            let ia = (i * coarse / probe - 1) * (coarse - 1) + (j * coarse / probe - 1);
            let ib = (i * fine / probe - 1) * (fine - 1) + (j * fine / probe - 1);
            let phi = (4.0 * b[ib] - a[ia]) / 3.0;
            let oracle = x * x - phi;
            let rx = g.x_axis().interpolation_row(x);
            let ry = g.y_axis().interpolation_row(y);
            let (nx, ny) = g.shape();
            let mut spectral = 0.0;
            for p in 0..nx {
                for q in 0..ny {
                    spectral += rx[p] * ry[q] * w[g.index(p, q)];
                }
            }
            worst = worst.max((spectral - oracle).abs());
        }
    }
    assert!(worst < 1e-6, "max deviation {worst:e}");
}

#[test]
fn projection_bounds_hold_with_explicit_constant() {
    assert!((K0 - 0.55147).abs() < 1e-5);
    let spec = CorpusSpec::standard(11);
    for h in [0.2, 0.1] {
        let grid = spec.grid(h, BoundaryTag::None).unwrap();
        for i in 0..100 {
            let f = spec.field(&grid, BoundaryTag::None, i).unwrap();
            for alpha in [-1.0, 0.0, 1.0] {
                let b = projection_bounds(&f, alpha).unwrap();
                assert!(b.holds(), "h={h} field {i} alpha={alpha}: {b:?}");
            }
        }
    }
}

#[test]
fn projection_is_orthogonal_to_harmonic_gradients() {
    let spec = CorpusSpec::standard(5);
    let g = RectGrid::new(0.2, 2.0, 16, 32).unwrap();
    let harmonic = [
        g.sample(|x, y| x * y),
        g.sample(|x, y| x * x - y * y),
        g.sample(|x, y| (PI * x / 2.0).exp() * (PI * y / 2.0).sin()),
        g.sample(|x, y| (x - 0.1).cosh() * y.cos() + (x - 0.1).sinh() * y.sin()),
    ];
    for i in 0..10 {
        let f = spec.field(&g, BoundaryTag::None, i).unwrap();
        let w = harmonic_projection(&f).unwrap();
        let d: Vec<f64> = f.u().iter().zip(&w).map(|(a, b)| a - b).collect();
        let (dx, dy) = (g.dx(&d), g.dy(&d));
        let scale = (g.norm_sq(&dx) + g.norm_sq(&dy)).sqrt();
        for q in &harmonic {
            let (qx, qy) = (g.dx(q), g.dy(q));
            let prod: Vec<f64> = (0..g.len())
                .map(|k| dx[k] * qx[k] + dy[k] * qy[k])
                .collect();
            let qn = (g.norm_sq(&qx) + g.norm_sq(&qy)).sqrt();
            assert!(g.integrate(&prod).abs() <= 1e-8 * scale * qn, "field {i}");
        }
    }
}

#[test]
fn harmonic_inequality_on_synthesized_fields() {
    for (h, p) in [(0.1, PI), (0.05, 1.0), (0.2, 2.0 * PI)] {
        let g = RectGrid::periodic(h, p, 28, 96).unwrap();
        for seed in 0..30 {
            let w = synthesize_harmonic(&g, &random_harmonic_coeffs(20, seed));
            let lap: Vec<f64> = {
                let (xx, yy) = (g.dx(&g.dx(&w)), g.dy(&g.dy(&w)));
                xx.iter().zip(&yy).map(|(a, b)| a + b).collect()
            };
            let scale =
                w.iter().fold(1.0f64, |m, v| m.max(v.abs())) * (2.0 * PI * 20.0 / p).powi(2);
            assert!(
                lap.iter().all(|v| v.abs() < 1e-7 * scale),
                "h={h} seed {seed} not harmonic"
            );
            let (lhs, rhs) = harmonic_inequality(&g, &w);
            assert!(lhs <= rhs, "h={h} seed {seed}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn psi_matches_independent_series() {
    // sinh^2 t - t^2 = sum_{k>=2} 2^{2k-1} t^{2k} / (2k)!
    let oracle = |t: f64| {
        let mut s = 0.0f64;
        let mut term = 2.0f64.powi(3) * t.powi(4) / 24.0;
        let mut k = 2;
        while term > 1e-30 * s.max(1e-300) {
            s += term;
            term *= 4.0 * t * t / (((2 * k + 1) * (2 * k + 2)) as f64);
            k += 1;
        }
        t.powi(4) / s
    };
    for t in [1e-3, 5e-3, 0.01, 0.05, 0.1, 0.5, 0.9, 1.0, 1.5, 3.0, 6.0] {
        let a = psi(t);
        let b = oracle(t);
        assert!((a - b).abs() <= 2e-14 * b, "tau={t}: {a} vs {b}");
    }
    assert!((psi(0.1) - 2.996).abs() < 1e-4);
}

#[test]
fn psi_is_decreasing_on_random_pairs() {
    use proptest::prelude::*;
    proptest!(|(a in 1e-4f64..30.0, b in 1e-4f64..30.0)| {
        prop_assume!((a - b).abs() > 1e-9 * a.max(b));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(psi(lo) > psi(hi));
    });
}

#[test]
fn sharp_extremal_matches_numerical_quadrature() {
    for (h, p) in [(0.1, PI), (0.05, PI), (0.1, 1.0), (0.3, 0.7)] {
        let c = sharp_harmonic_check(h, p).unwrap();
        let g = RectGrid::new(h, p, 24, 48).unwrap();
        let k = PI / p;
        let w = g.sample(|x, y| (k * (x - h / 2.0)).cosh() * (k * y).sin());
        let wx = g.dx(&w);
        let wy = g.dy(&w);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(g.norm(&w), c.norm_w) < 1e-12);
        assert!(rel(g.norm(&wx), c.norm_wx) < 1e-10);
        assert!(rel(g.norm(&wy), c.norm_wy) < 1e-12);
        assert!(c.equality_holds(1e-10), "{c:?}");
        assert!(rel(c.lhs, k * k * p / 2.0 * h) < 1e-13);
        // boundary values of the extremal vanish, so the periodicity hypothesis holds
        let (nx, ny) = g.shape();
        for ix in 0..nx {
            assert!(w[g.index(ix, 0)].abs() < 1e-15 && w[g.index(ix, ny - 1)].abs() < 1e-14);
        }
        // the first Fourier index of the period-p analysis gives a strictly smaller bound
        assert!(c.rhs_at_first_mode_tau < c.lhs);
    }
}

#[test]
fn even_odd_extension_doubles_norms() {
    let spec = CorpusSpec::standard(9);
    for h in [0.2, 0.05] {
        let grid = spec.grid(h, BoundaryTag::ZeroVAtBottom).unwrap();
        for i in 0..30 {
            let f = spec.field(&grid, BoundaryTag::ZeroVAtBottom, i).unwrap();
            let e = even_odd_extend(&f).unwrap();
            let rel = |a: f64, b: f64| (a - 2.0 * b).abs() / (2.0 * b).max(1e-300);
            let g0 = modified_gradient(&f, GradientKind::Alpha(0.0));
            let g1 = modified_gradient(&e, GradientKind::Alpha(0.0));
            assert!(rel(g1.norm_sq(), g0.norm_sq()) < 1e-12);
            assert!(rel(g1.symmetrized().norm_sq(), g0.symmetrized().norm_sq()) < 1e-12);
            assert!(rel(e.norm_u().powi(2), f.norm_u().powi(2)) < 1e-12);
            let back = e.restrict_upper().unwrap();
            assert_eq!(back.u(), f.u());
            assert_eq!(back.v(), f.v());
            // the extension is periodic in u and satisfies the fixed-constant bound
            let m = verify_inequalities(&e, Inequality::Basicineq100 { alpha: 0.0 }).unwrap();
            assert!(m.margin >= 0.0);
        }
    }
}

#[test]
fn extension_requires_zero_bottom_trace() {
    let g = RectGrid::new(0.1, 1.0, 8, 8).unwrap();
    let f = RectField::from_fn(g, BoundaryTag::None, |x, y| (x, 1.0 + y)).unwrap();
    assert!(matches!(
        even_odd_extend(&f),
        Err(KornError::Precondition(_))
    ));
}

#[test]
fn fixed_constant_inequalities_hold_on_corpus() {
    let spec = CorpusSpec::standard(1);
    let c = MeasuredConstants::persisted();
    let basic = verify_corpus(
        &spec,
        Inequality::Basicineq100 { alpha: 0.0 },
        &[-1.0, 0.0, 1.0],
        &c,
    )
    .unwrap();
    assert_eq!(basic.fields, 4500);
    assert_eq!(basic.violations, 0, "{basic:?}");
    let uest = verify_corpus(&spec, Inequality::Uest, &[], &c).unwrap();
    assert_eq!(uest.fields, 1500);
    assert_eq!(uest.violations, 0, "{uest:?}");
}

#[test]
fn measured_constants_do_not_regress() {
    let spec = CorpusSpec::standard(1);
    let persisted = MeasuredConstants::persisted();
    let now = MeasuredConstants::measure(&spec).unwrap();
    assert!(
        now.poltora <= persisted.poltora * REGRESSION_SLACK,
        "{now:?}"
    );
    assert!(now.crazy <= persisted.crazy * REGRESSION_SLACK, "{now:?}");
    for h in &spec.h {
        assert!(*h < persisted.crazy_h_threshold());
    }
}

#[test]
fn corpus_is_reproducible() {
    let spec = CorpusSpec::standard(4);
    let grid = spec.grid(0.1, BoundaryTag::PeriodicInU).unwrap();
    for i in [0, 2, 7] {
        let a = spec.field(&grid, BoundaryTag::PeriodicInU, i).unwrap();
        let b = spec.field(&grid, BoundaryTag::PeriodicInU, i).unwrap();
        assert_eq!(a.u(), b.u());
        assert_eq!(a.v(), b.v());
    }
}

#[test]
fn tags_are_checked_on_construction() {
    let g = RectGrid::new(0.1, 1.0, 8, 8).unwrap();
    let err = RectField::from_fn(g.clone(), BoundaryTag::PeriodicInU, |_, y| (y, 0.0)).unwrap_err();
    assert!(matches!(err, KornError::Trace { component: "u", .. }));
    let err = RectField::from_fn(g, BoundaryTag::PeriodicBoth, |_, y| {
        ((2.0 * PI * y).cos(), y)
    })
    .unwrap_err();
    assert!(matches!(err, KornError::Trace { component: "v", .. }));
}
