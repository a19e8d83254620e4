//! Property-based invariants: kernel symmetry and truncation, moment
//! linearity, concentration-gauge monotonicity and the Chebyshev-type tail
//! bound, over randomized inputs.

use proptest::prelude::*;

use rbk_core::grid::{moments, ui_functional, DensityState, SizeGrid};
use rbk_core::kernel::{kernel_bounds, truncate, KernelSpec};

fn arb_kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.1f64..10.0).prop_map(|c| KernelSpec::constant(c).unwrap()),
        (0.0f64..0.99, 0.1f64..4.0).prop_map(|(b, c)| KernelSpec::power_product(b, c).unwrap()),
        (0.0f64..0.99).prop_map(|b| KernelSpec::exp_remainder(b).unwrap()),
    ]
}

fn arb_density(n_nodes: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5.0, n_nodes)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_eval_is_bitwise_symmetric(
        spec in arb_kernel(),
        s in 1e-3f64..500.0,
        p in 1e-3f64..500.0,
    ) {
        let a = spec.eval(s, p).unwrap();
        let b = spec.eval(p, s).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn truncation_agrees_inside_and_vanishes_outside(
        spec in arb_kernel(),
        n in 1.0f64..50.0,
        s in 1e-3f64..100.0,
        p in 1e-3f64..100.0,
    ) {
        let tk = truncate(spec.clone(), n).unwrap();
        let full = spec.eval(s, p).unwrap();
        let cut = tk.eval(s, p).unwrap();
        if s <= n && p <= n {
            prop_assert_eq!(cut.to_bits(), full.to_bits());
        } else {
            prop_assert_eq!(cut, 0.0);
        }
    }

    #[test]
    fn alpha_dominated_on_unit_box(
        spec in arb_kernel(),
        s in 1.0f64..200.0,
        p in 1.0f64..200.0,
    ) {
        let excess = spec.alpha(s, p) - spec.a_const() * spec.r(s) * spec.r(p);
        prop_assert!(excess <= 1e-12, "excess {excess}");
    }

    #[test]
    fn theta_is_monotone_in_split_for_sublinear_coupling(
        c in 0.1f64..5.0,
        beta in 0.0f64..=0.5,
        use_power in any::<bool>(),
    ) {
        // theta(a) = c²·a^{2beta-1} for the power family, so the decay in `a`
        // holds exactly when beta <= 1/2 (and always for constant kernels).
        let spec = if use_power {
            KernelSpec::power_product(beta, c).unwrap()
        } else {
            KernelSpec::constant(c).unwrap()
        };
        let grid = SizeGrid::new(32.0, 0.25).unwrap();
        let tk = truncate(spec, 32.0).unwrap();
        let mut prev = f64::INFINITY;
        for a in [2.0, 4.0, 8.0, 16.0, 32.0] {
            let b = kernel_bounds(&tk, a, &grid).unwrap();
            prop_assert!(b.theta <= prev * (1.0 + 1e-12), "theta rose at a = {}", a);
            prev = b.theta;
        }
    }

    #[test]
    fn theta_follows_power_law_above_half(
        c in 0.1f64..5.0,
        beta in 0.51f64..0.99,
    ) {
        // Above beta = 1/2 the large-size coupling grows like a^{2beta-1};
        // the grid maximization must land on the closed-form value at nodes.
        let spec = KernelSpec::power_product(beta, c).unwrap();
        let grid = SizeGrid::new(32.0, 0.25).unwrap();
        let tk = truncate(spec, 32.0).unwrap();
        let mut prev = 0.0f64;
        for a in [2.0, 4.0, 8.0, 16.0] {
            let b = kernel_bounds(&tk, a, &grid).unwrap();
            let analytic = c * c * a.powf(2.0 * beta - 1.0);
            prop_assert!((b.theta - analytic).abs() <= 1e-9 * analytic);
            prop_assert!(b.theta >= prev, "growth expected above beta = 1/2");
            prev = b.theta;
        }
    }

    #[test]
    fn moments_additive_and_tail_chebyshev(f in arb_density(40), g in arb_density(40)) {
        let grid = SizeGrid::new(10.0, 0.25).unwrap();
        let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let mf = moments(&DensityState::new(grid.clone(), f, 0.0).unwrap(), &[1.0, 4.0]);
        let mg = moments(&DensityState::new(grid.clone(), g, 0.0).unwrap(), &[1.0, 4.0]);
        let ms = moments(&DensityState::new(grid, sum, 0.0).unwrap(), &[1.0, 4.0]);
        prop_assert!((ms.m0 - (mf.m0 + mg.m0)).abs() <= 1e-9 * (1.0 + ms.m0));
        prop_assert!((ms.m1 - (mf.m1 + mg.m1)).abs() <= 1e-9 * (1.0 + ms.m1));
        // tail(R) <= norm01 / R for R >= 1
        for (r, t) in &ms.tail {
            prop_assert!(t * r <= ms.norm01 * (1.0 + 1e-12), "tail({r}) = {t}");
        }
    }

    #[test]
    fn concentration_gauge_monotone_and_bounded(
        f in arb_density(40),
        delta1 in 0.05f64..1.0,
        grow in 0.05f64..2.0,
    ) {
        let grid = SizeGrid::new(10.0, 0.25).unwrap();
        let st = DensityState::new(grid, f.clone(), 0.0).unwrap();
        let delta2 = delta1 + grow;
        let v1 = ui_functional(&st, 5.0, delta1).unwrap();
        let v2 = ui_functional(&st, 5.0, delta2).unwrap();
        let v_wider = ui_functional(&st, 8.0, delta1).unwrap();
        prop_assert!(v1 <= v2 * (1.0 + 1e-12), "not monotone in delta: {v1} > {v2}");
        prop_assert!(v1 <= v_wider * (1.0 + 1e-12), "not monotone in a");

        let m = moments(&st, &[]);
        let below: f64 = 0.25 * f.iter().take(20).sum::<f64>(); // nodes <= 5
        let fmax = f.iter().take(20).cloned().fold(0.0, f64::max);
        prop_assert!(v1 <= below + 1e-12);
        prop_assert!(v1 <= delta1 * fmax + 1e-12);
        prop_assert!(v1 <= m.m0 + 1e-12);
    }
}
