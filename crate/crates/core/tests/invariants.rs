use std::sync::Arc;

use korn_core::ansatz::{build_ansatz, AnsatzGenerator};
use korn_core::fields::*;
use korn_core::{FunctionSpace, ShellGeometry};

fn grid(h: f64, l: f64, n: (usize, usize, usize)) -> Arc<Grid3> {
    Grid3::new(ShellGeometry::new(h, l).unwrap(), n.0, n.1, n.2).unwrap()
}

#[test]
fn rigid_motions_are_strain_free() {
    for (h, n) in [(0.2, (8, 16, 8)), (0.05, (10, 24, 12)), (0.1, (16, 32, 16))] {
        let g = grid(h, 1.5, n);
        for rm in RigidMotion::ALL {
            let f =
                DisplacementField::from_fn(g.clone(), None, |r, t, z| rm.eval(r, t, z)).unwrap();
            let e = cylindrical_gradient(&f).unwrap().symmetrize().l2_norm();
            let h1 = f.h1_norm_sq().unwrap().sqrt();
            assert!(e < 1e-10 * h1, "{rm:?} on {n:?}: |e| = {e:e}");
        }
    }
}

#[test]
fn scaled_gradient_is_close_to_gradient() {
    for h in [0.2, 0.1, 0.05] {
        let g = grid(h, 1.0, (8, 16, 12));
        for seed in 0..200 {
            let f = random_smooth_field(g.clone(), None, seed).unwrap();
            let grad = cylindrical_gradient(&f).unwrap();
            let a = scaled_gradient_a(&f).unwrap();
            let d = grad.sub(&a).l2_norm();
            let ds = grad.symmetrize().sub(&a.symmetrize()).l2_norm();
            assert!(ds <= d * (1.0 + 1e-12), "h={h} seed {seed}");
            assert!(
                d <= h * a.l2_norm(),
                "h={h} seed {seed}: {d} > {}",
                h * a.l2_norm()
            );
        }
    }
}

#[test]
fn component_norm_relations() {
    let g = grid(0.1, 2.0, (10, 16, 16));
    for seed in 0..40 {
        let f = random_smooth_field(g.clone(), Some(FunctionSpace::V1), seed).unwrap();
        let c = component_norms(&f).unwrap();
        for (e, gg) in [(c.e12, c.g12), (c.e13, c.g13), (c.e23, c.g23)] {
            assert!(e * e <= 2.0 * gg * gg * (1.0 + 1e-12));
        }
        // phi_theta vanishes at both ends in V1
        let asym = c.a_sym_norm_sq().sqrt();
        assert!(
            c.g23 * c.g23 <= 2.0 * asym * (asym + c.norm_phi_r),
            "seed {seed}"
        );
        // Poincare in z for phi_theta
        let grad = scaled_gradient_a(&f).unwrap();
        let l = 2.0;
        let bound = l / std::f64::consts::PI * l2_norm(&g, grad.entry(1, 2));
        assert!(c.norm_phi_theta <= bound * (1.0 + 1e-10), "seed {seed}");
    }
}

#[test]
fn korn_type_constant_stays_bounded_in_h() {
    let mut per_h = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        let g = grid(h, 2.0, (8, 16, 16));
        let mut worst: f64 = 0.0;
        for seed in 0..40 {
            for space in [FunctionSpace::V1, FunctionSpace::V2] {
                let f = random_smooth_field(g.clone(), Some(space), seed).unwrap();
                let c = component_norms(&f).unwrap();
                let asym = c.a_sym_norm_sq().sqrt();
                let unit = asym * (c.norm_phi_r / h + asym);
                worst = worst.max(c.a_norm_sq() / unit);
            }
        }
        per_h.push(worst);
    }
    println!("measured constants per h: {per_h:?}");
    assert!(per_h.windows(2).all(|w| w[1] <= 1.25 * w[0]), "{per_h:?}");
}

#[test]
fn shell_volume_is_exact() {
    for (h, l) in [(0.3, 1.0), (0.01, 4.0)] {
        let g = grid(h, l, (6, 8, 6));
        let ones = vec![1.0; g.len()];
        let v = g.integrate(&ones);
        let exact = 2.0 * std::f64::consts::PI * l * h;
        assert!((v - exact).abs() <= 1e-12 * exact);
    }
}

#[test]
fn ansatz_gradient_matches_spectral_differentiation() {
    let geom = ShellGeometry::new(0.1, 2.0).unwrap();
    let gen = AnsatzGenerator::optimal(geom).unwrap();
    let g = Grid3::new(geom, 8, 512, 96).unwrap();
    let f = build_ansatz(g.clone(), &gen).unwrap();
    let grad = cylindrical_gradient(&f).unwrap();
    let (nr, nt, nz) = g.shape();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for ir in [0, nr / 2, nr - 1] {
        for it in (0..nt).step_by(7) {
            for iz in (1..nz - 1).step_by(5) {
                let (r, t, z) = g.node(ir, it, iz);
                let exact = gen.gradient(r, t, z);
                let num = grad.at(ir, it, iz);
                for i in 0..3 {
                    for j in 0..3 {
                        worst = worst.max((exact[i][j] - num[i][j]).abs());
                        scale = scale.max(exact[i][j].abs());
                    }
                }
            }
        }
    }
    assert!(worst <= 1e-3 * scale, "{worst:e} vs scale {scale:e}");
    let e = grad.symmetrize();
    let first_row = (0..3).map(|j| e.entry_norm_sq(0, j)).sum::<f64>().sqrt();
    assert!(first_row <= 1e-3 * e.l2_norm());
}
