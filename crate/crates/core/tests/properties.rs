use indiff::conjugacy::{Conjugate, DualPoint};
use indiff::field::{Field, Order};
use indiff::representative::{pareto_allocation, representative_utility, weights_from_allocation, PrimalPoint};
use indiff::{MakerPanel, Payoff, TreeSpec, UtilitySpec, WeightVector};
use proptest::prelude::*;

fn utility() -> impl Strategy<Value = UtilitySpec> {
    prop_oneof![
        (0.3f64..3.0).prop_map(|g| UtilitySpec::exponential(g).unwrap()),
        (
            prop::collection::vec(0.1f64..2.0, 2..4),
            prop::collection::vec(0.3f64..3.0, 2..4)
        )
            .prop_map(|(w, r)| {
                let n = w.len().min(r.len());
                UtilitySpec::sum_of_exponentials(w[..n].to_vec(), r[..n].to_vec()).unwrap()
            }),
    ]
}

fn panel(max: usize) -> impl Strategy<Value = MakerPanel> {
    prop::collection::vec(utility(), 1..=max).prop_map(|u| MakerPanel::new(u).unwrap())
}

fn weights(m: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.1f64..1.0, m).prop_map(|v| WeightVector::new(v).unwrap().normalized())
}

fn rates(u: &UtilitySpec) -> (f64, f64) {
    match u.kind() {
        indiff::utility::UtilityKind::Exponential { gamma } => (*gamma, *gamma),
        indiff::utility::UtilityKind::SumOfExponentials { rates, .. } => (
            rates.iter().cloned().fold(f64::INFINITY, f64::min),
            rates.iter().cloned().fold(0.0, f64::max),
        ),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn utilities_are_increasing_and_concave(u in utility(), x in -20.0f64..20.0) {
        prop_assert!(u.marginal(x) > 0.0);
        prop_assert!(u.second_derivative(x) < 0.0);
        prop_assert!(u.value(x) < 0.0);
        let (lo, hi) = rates(&u);
        let a = u.risk_aversion(x);
        prop_assert!(a >= lo * (1.0 - 1e-12) && a <= hi * (1.0 + 1e-12));
        prop_assert!(a * u.risk_tolerance(x) - 1.0 < 1e-12);
        let c = u.bound_constant();
        prop_assert!(a >= 1.0 / c * (1.0 - 1e-12) && a <= c * (1.0 + 1e-12));
        prop_assert!(u.value(x + 0.5) > u.value(x));
    }

    #[test]
    fn marginal_matches_central_differences(u in utility(), x in -10.0f64..10.0) {
        let h = 1e-5;
        let fd = (u.value(x + h) - u.value(x - h)) / (2.0 * h);
        // relative: u' spans thirty orders of magnitude on this range
        prop_assert!((u.marginal(x) - fd).abs() <= 1e-6 * u.marginal(x));
    }

    #[test]
    fn exponential_utility_vanishes_at_large_wealth(g in 1.0f64..3.0) {
        let u = UtilitySpec::exponential(g).unwrap();
        prop_assert!(u.value(40.0) > -1e-10 * u.value(0.0).abs());
    }

    #[test]
    fn inverse_marginal_round_trips(u in utility(), x in -20.0f64..20.0) {
        let back = u.inverse_marginal(u.marginal(x)).unwrap();
        prop_assert!((back - x).abs() < 1e-10 * (1.0 + x.abs()));
    }

    #[test]
    fn representative_split_is_optimal(
        (p, v) in panel(3).prop_flat_map(|p| { let m = p.len(); (Just(p), weights(m)) }),
        x in -2.0f64..2.0,
        shift in prop::collection::vec(-0.5f64..0.5, 3),
    ) {
        let rep = representative_utility(&p, &v, x).unwrap();
        let split = &rep.split.0;
        prop_assert!((split.iter().sum::<f64>() - x).abs() < 1e-9);
        // any other feasible split does no better
        let m = p.len();
        let mean = shift[..m].iter().sum::<f64>() / m as f64;
        let other: f64 = p.makers().iter().zip(split).zip(&shift[..m]).zip(v.as_slice())
            .map(|(((u, s), d), w)| w * u.value(s + d - mean))
            .sum();
        prop_assert!(rep.r >= other - 1e-12);
        // dr/dx by central differences
        let h = 1e-5;
        let up = representative_utility(&p, &v, x + h).unwrap().r;
        let dn = representative_utility(&p, &v, x - h).unwrap().r;
        prop_assert!(((up - dn) / (2.0 * h) - rep.y).abs() < 1e-6 * (1.0 + rep.y.abs()));
    }

    #[test]
    fn representative_is_homogeneous_in_weights(
        (p, v) in panel(3).prop_flat_map(|p| { let m = p.len(); (Just(p), weights(m)) }),
        x in -2.0f64..2.0,
        c in 0.1f64..10.0,
    ) {
        let r = representative_utility(&p, &v, x).unwrap().r;
        let scaled = WeightVector::new(v.as_slice().iter().map(|w| c * w).collect()).unwrap();
        let rc = representative_utility(&p, &scaled, x).unwrap().r;
        prop_assert!((rc - c * r).abs() < 1e-10 * (1.0 + rc.abs()));
    }

    #[test]
    fn pareto_weights_recovered(
        (p, v) in panel(3).prop_flat_map(|p| { let m = p.len(); (Just(p), weights(m)) }),
        sigma in -2.0f64..2.0,
    ) {
        let a = PrimalPoint::initial(v.clone(), 0);
        let alpha = pareto_allocation(&p, &a, sigma).unwrap();
        let back = weights_from_allocation(&p, &alpha).unwrap();
        for (x, y) in back.as_slice().iter().zip(v.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn tree_moments_match(steps in 0usize..6, dim in 1usize..3, p in 0.2f64..0.8) {
        let mut spec = TreeSpec::new(steps, 1.0, dim, Payoff::expression("B1").unwrap(), vec![]);
        spec.prob_up = p;
        let tree = spec.build().unwrap();
        prop_assert!(tree.moment_defects().max() < 1e-13);
        let total: f64 = {
            let mut s = 0.0;
            tree.for_each_leaf(tree.root(), |_, w| s += w);
            s
        };
        prop_assert!((total - 1.0).abs() < 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conjugate_is_monotone_and_homogeneous(
        p in panel(3),
        scale in 0.3f64..3.0,
        bump in 0.01f64..0.5,
        q in -1.0f64..1.0,
        y in 0.2f64..5.0,
    ) {
        let tree = TreeSpec::new(3, 1.0, 1, Payoff::expression("0.3*B").unwrap(), vec![Payoff::expression("1 + 0.5*B").unwrap()])
            .build().unwrap();
        let field = Field::new(&p, &tree);
        let conj = Conjugate::new(&field);
        let m = p.len();
        let u: Vec<f64> = (0..m).map(|i| -scale * (1.0 + 0.2 * i as f64)).collect();
        let g = conj.g(&DualPoint::new(u.clone(), 1.0, vec![q]).unwrap(), tree.root()).unwrap();
        // more utility needs more cash
        let mut higher = u.clone();
        higher[0] *= 1.0 - bump;
        let gh = conj.g(&DualPoint::new(higher, 1.0, vec![q]).unwrap(), tree.root()).unwrap();
        prop_assert!(gh > g);
        // G(u, y, q) = y G(u, 1, q)
        let gy = conj.g(&DualPoint::new(u, y, vec![q]).unwrap(), tree.root()).unwrap();
        prop_assert!((gy - y * g).abs() < 1e-8 * (1.0 + gy.abs()));
    }

    #[test]
    fn field_is_decreasing_in_weights_and_increasing_in_cash(
        p in panel(3),
        x in -1.0f64..1.0,
    ) {
        let tree = TreeSpec::new(2, 1.0, 1, Payoff::expression("B").unwrap(), vec![]).build().unwrap();
        let field = Field::new(&p, &tree);
        let a = PrimalPoint::new(WeightVector::uniform(p.len()), x, vec![]);
        let f = field.at(&a, tree.root(), Order::Hessian).unwrap();
        prop_assert!(f.grad_x > 0.0);
        prop_assert!(f.h_xx() < 0.0);
        prop_assert!(f.grad_v.iter().all(|g| *g < 0.0));
    }
}
