use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ibcomposite::bench::{fit_slope, identity_residuals, relative_error, IdentityFields};
use ibcomposite::ddf::{moment_residual, Kernel};
use ibcomposite::grid::{CellField, FaceField, Field, GridSpec, Space};
use ibcomposite::immersed::{circle_body, markers_for_ratio, Markers, Orientation, SurfaceScalar};
use ibcomposite::indicator::build_indicator;
use ibcomposite::linsolve::{bicgstab, make_poisson, LinearOperator, PoissonKind};
use ibcomposite::ops::{interp_c_to_f, interp_f_to_c};

fn grid() -> impl Strategy<Value = GridSpec> {
    (4usize..14, 4usize..14, 0.05f64..2.0, 0.05f64..2.0, -3.0f64..3.0, -3.0f64..3.0)
        .prop_map(|(nx, ny, dx, dy, ox, oy)| GridSpec::new(nx, ny, dx, dy, [ox, oy]).unwrap())
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n)
}

fn cell_field() -> impl Strategy<Value = CellField> {
    grid().prop_flat_map(|g| values(g.len()).prop_map(move |v| CellField::from_flat(g, &v)))
}

/// Circle well inside a 24 by 24 box of half width 2, marker spacing between
/// 0.5 and 1.3 cells.
fn markers() -> impl Strategy<Value = Markers> {
    (0.6f64..1.1, -0.3f64..0.3, -0.3f64..0.3, 0.5f64..1.3).prop_map(|(r, cx, cy, ratio)| {
        let g = GridSpec::centered_square(24, 2.0).unwrap();
        let n = markers_for_ratio(r, ratio, g.dx);
        Markers::new(g, Kernel::default(), circle_body([cx, cy], r, n, Orientation::Outward).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn staggering_offsets(g in grid()) {
        let c = g.coords(Space::C);
        for (sp, off) in [(Space::Fx, [0.5, 0.0]), (Space::Fy, [0.0, 0.5]), (Space::N, [0.5, 0.5])] {
            for (a, b) in g.coords(sp).iter().zip(&c) {
                prop_assert!((a[0] - b[0] - off[0] * g.dx).abs() <= 1e-12 * (1.0 + b[0].abs()));
                prop_assert!((a[1] - b[1] - off[1] * g.dy).abs() <= 1e-12 * (1.0 + b[1].abs()));
            }
        }
    }

    #[test]
    fn mul_commutes_and_associates(g in grid(), seed in any::<u64>()) {
        let f = IdentityFields::random(g, &mut ChaCha8Rng::seed_from_u64(seed));
        let (a, b, c) = (&f.v1, &f.v2, &interp_c_to_f(&f.s1));
        prop_assert_eq!(a.mul(b).unwrap(), b.mul(a).unwrap());
        let l = a.mul(b).unwrap().mul(c).unwrap();
        let r = a.mul(&b.mul(c).unwrap()).unwrap();
        prop_assert!(l.sub(&r).unwrap().max_abs() <= 1e-15);
    }

    #[test]
    fn operator_identities_on_random_grids(g in grid(), seed in any::<u64>()) {
        let f = IdentityFields::random(g, &mut ChaCha8Rng::seed_from_u64(seed));
        for (name, r) in identity_residuals(&f) {
            prop_assert!(r <= 1e-11, "{} residual {}", name, r);
        }
    }

    #[test]
    fn center_face_averages_are_adjoint(g in grid(), seed in any::<u64>()) {
        let f = IdentityFields::random(g, &mut ChaCha8Rng::seed_from_u64(seed));
        let lhs: f64 = interp_c_to_f(&f.s1).flatten().iter().zip(f.v1.flatten()).map(|(a, b)| a * b).sum();
        let rhs: f64 = f.s1.data.iter().zip(&interp_f_to_c(&f.v1).data).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn kernel_moments(r in -0.5f64..0.5) {
        let k = Kernel::default();
        prop_assert!(moment_residual(&k, 0, r).unwrap() <= 1e-12);
        prop_assert!(moment_residual(&k, 1, r).unwrap() <= 1e-12);
    }

    #[test]
    fn scaling_preserves_shape(f in cell_field(), c in -5.0f64..5.0) {
        let s = f.scale(c);
        prop_assert_eq!(s.grid, f.grid);
        prop_assert_eq!(s.data.len(), f.data.len());
        let back = f.add(&s).unwrap().sub(&s).unwrap();
        prop_assert!(back.sub(&f).unwrap().max_abs() <= 1e-13);
    }

    #[test]
    fn least_squares_slope_recovers_power_law(p in 0.5f64..3.0, c in 0.01f64..100.0) {
        let h: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = h.iter().map(|x| c * x.powf(p)).collect();
        prop_assert!((fit_slope(&h, &e).unwrap() - p).abs() <= 1e-10);
    }

    #[test]
    fn relative_error_is_scale_free(v in values(20), s in 0.1f64..100.0) {
        let exact: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let (a, b) = relative_error(&v, &exact, None).unwrap();
        let vs: Vec<f64> = v.iter().map(|x| x * s).collect();
        let es: Vec<f64> = exact.iter().map(|x| x * s).collect();
        let (a2, b2) = relative_error(&vs, &es, None).unwrap();
        prop_assert!((a - a2).abs() <= 1e-12 * (1.0 + a) && (b - b2).abs() <= 1e-12 * (1.0 + b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regularization_conserves_mass(m in markers(), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = SurfaceScalar((0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let g = m.grid;
        let total = m.reg_c(&s).data.iter().sum::<f64>() * g.cell_area();
        let want: f64 = s.0.iter().zip(&m.body.ds).map(|(a, b)| a * b).sum();
        prop_assert!((total - want).abs() <= 1e-12 * (1.0 + want.abs()), "{} vs {}", total, want);
    }

    #[test]
    fn interpolation_is_regularization_transpose(m in markers(), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = m.grid;
        let u = CellField::from_flat(g, &(0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
        let s = SurfaceScalar((0..m.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let lhs: f64 = m.interp_c(&u).0.iter().zip(&s.0).zip(&m.body.ds).map(|((a, b), w)| a * b * w).sum();
        let rhs: f64 = u.data.iter().zip(&m.reg_c(&s).data).map(|(a, b)| a * b).sum::<f64>() * g.cell_area();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn distance_weighted_interpolation_of_constant_vanishes(m in markers(), c in -5.0f64..5.0) {
        let u = CellField::constant(m.grid, c);
        prop_assert!(m.interp_c1n(&u).max_abs() <= 1e-12 * (1.0 + c.abs()));
        prop_assert!((m.interp_c(&u).0.iter().fold(0.0_f64, |a, v| a.max((v - c).abs()))) <= 1e-12 * (1.0 + c.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn indicator_complementary_and_exact_away_from_interface(m in markers()) {
        let solver = make_poisson(PoissonKind::Lgf, &m.grid).unwrap();
        let set = build_indicator(&m, solver.as_ref(), 1.0).unwrap();
        for (p, q) in set.hp_c.data.iter().zip(&set.hm_c.data) {
            prop_assert!((p + q - 1.0).abs() <= 1e-15);
        }
        for (a, b) in set.hp_f.flatten().iter().zip(set.hm_f.flatten()) {
            prop_assert!((a + b - 1.0).abs() <= 1e-15);
        }
        let cx = m.body.x.iter().map(|p| p[0]).sum::<f64>() / m.len() as f64;
        let cy = m.body.x.iter().map(|p| p[1]).sum::<f64>() / m.len() as f64;
        let r = ((m.body.x[0][0] - cx).powi(2) + (m.body.x[0][1] - cy).powi(2)).sqrt();
        for (k, p) in m.grid.coords(Space::C).iter().enumerate() {
            let dist = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt() - r;
            if dist.abs() > 4.0 * m.grid.dx {
                let want = if dist > 0.0 { 1.0 } else { 0.0 };
                prop_assert!((set.hp_c.data[k] - want).abs() <= 2e-3, "cell {} value {}", k, set.hp_c.data[k]);
            }
        }
    }

    #[test]
    fn bicgstab_solves_diagonally_dominant(seed in any::<u64>(), n in 5usize..40) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 2.0 * n as f64 } else { rng.gen_range(-1.0..1.0) }).collect())
            .collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let op = LinearOperator::new(n, n, |x| a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect());
        let (x, _) = bicgstab(&op, &b, 1e-12, 10 * n).unwrap();
        let r = op.apply(&x);
        let res = r.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        prop_assert!(res <= 1e-10 * b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0));
        // linearity
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = x.iter().zip(&y).map(|(p, q)| 2.0 * p - 3.0 * q).collect();
        let lhs = op.apply(&comb);
        let (ax, ay) = (op.apply(&x), op.apply(&y));
        for k in 0..n {
            prop_assert!((lhs[k] - (2.0 * ax[k] - 3.0 * ay[k])).abs() <= 1e-10 * (1.0 + lhs[k].abs()));
        }
    }
}

#[test]
fn face_field_shapes_follow_grid() {
    let g = GridSpec::new(5, 7, 0.3, 0.2, [0.0, 0.0]).unwrap();
    let v = FaceField::zeros(g);
    assert_eq!(v.x.len(), 35);
    assert_eq!(v.y.len(), 35);
    assert!(FaceField::new(g, vec![0.0; 34], vec![0.0; 35]).is_err());
}
