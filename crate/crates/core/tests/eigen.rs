mod common;

use korn_core::eigen::{extreme_eig, PencilSpec, Which, STALL_FACTOR};
use korn_core::KornError;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spd(dim: usize, cond: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let q = a.qr().q();
    let diag = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            cond.powf(i as f64 / (dim - 1) as f64)
        } else {
            0.0
        }
    });
    let m = &q * diag * q.transpose();
    0.5 * (&m + m.transpose())
}

fn rayleigh(n: &DMatrix<f64>, d: &DMatrix<f64>, x: &nalgebra::DVector<f64>) -> f64 {
    x.dot(&(n * x)) / x.dot(&(d * x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reciprocal_pencils_agree(dim in 4usize..60, seed in 0u64..10_000, cn in 1.0f64..1e6, cd in 1.0f64..1e4) {
        let n = spd(dim, cn, seed);
        let d = spd(dim, cd, seed + 1);
        let small = extreme_eig(&PencilSpec::new(n.clone(), d.clone(), Which::Smallest)).unwrap();
        let large = extreme_eig(&PencilSpec::new(d.clone(), n.clone(), Which::Largest)).unwrap();
        let want = common::dense_extreme(&n, &d, Which::Smallest);
        // the dense oracle is only accurate to about eps * cond(N) * cond(D)
        let rel = 1e-10 + 1e-15 * cn * cd;
        prop_assert!((small.value - want).abs() <= rel * want.abs(), "{} vs {}", small.value, want);
        prop_assert!((small.value * large.value - 1.0).abs() <= rel);
        let rq = rayleigh(&n, &d, &small.vector);
        prop_assert!((rq - small.value).abs() <= 1e-10 * small.value.abs());
        // iterative paths may stop at a stagnated residual within STALL_FACTOR of tol
        prop_assert!(small.residual <= (1e-10 + rel).max(STALL_FACTOR * 1e-10), "residual {:e}", small.residual);
    }

    #[test]
    fn largest_matches_dense(dim in 4usize..60, seed in 0u64..10_000) {
        let n = spd(dim, 1e3, seed);
        let d = spd(dim, 10.0, seed + 7);
        let got = extreme_eig(&PencilSpec::new(n.clone(), d.clone(), Which::Largest)).unwrap();
        let want = common::dense_extreme(&n, &d, Which::Largest);
        prop_assert!((got.value - want).abs() <= 1e-8 * want);
        let rq = rayleigh(&n, &d, &got.vector);
        prop_assert!((rq - got.value).abs() <= 1e-10 * got.value);
    }
}

#[test]
fn results_are_seed_deterministic() {
    let n = spd(80, 1e4, 3);
    let d = spd(80, 1e2, 4);
    let a =
        extreme_eig(&PencilSpec::new(n.clone(), d.clone(), Which::Smallest).with_seed(9)).unwrap();
    let b = extreme_eig(&PencilSpec::new(n, d, Which::Smallest).with_seed(9)).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
}

#[test]
fn singular_denominator_is_reported() {
    let n = spd(10, 10.0, 1);
    let mut d = spd(10, 10.0, 2);
    let v = d.column(0).clone_owned();
    d -= &v * v.transpose()
        / v.dot(&nalgebra::DVector::from_fn(10, |i, _| {
            if i == 0 {
                1.0
            } else {
                0.0
            }
        }));
    let d = DMatrix::from_fn(
        10,
        10,
        |i, j| if i == 0 || j == 0 { 0.0 } else { d[(i, j)] },
    );
    match extreme_eig(&PencilSpec::new(n, d, Which::Smallest)) {
        Err(KornError::SingularPencil { vector }) => assert!(vector[0].abs() > 0.99),
        other => panic!("expected a singular pencil, got {other:?}"),
    }
}

#[test]
fn ill_conditioned_denominator_is_reported() {
    let n = spd(12, 10.0, 5);
    let d = spd(12, 1e17, 6);
    let r = extreme_eig(&PencilSpec::new(n, d, Which::Smallest));
    assert!(
        matches!(
            r,
            Err(KornError::IllConditioned { .. }) | Err(KornError::SingularPencil { .. })
        ),
        "{r:?}"
    );
}

#[test]
fn zero_eigenvalue_converges() {
    let mut n = spd(30, 100.0, 11);
    let v = nalgebra::DVector::from_fn(30, |i, _| (i as f64 + 1.0).sin());
    let proj = DMatrix::identity(30, 30) - &v * v.transpose() / v.norm_squared();
    n = &proj * n * &proj;
    let d = spd(30, 10.0, 12);
    let r = extreme_eig(&PencilSpec::new(n, d, Which::Smallest)).unwrap();
    assert!(r.value.abs() < 1e-9, "{}", r.value);
}
