use proptest::prelude::*;

use omega_core::levy::{phi, HyperExpJumps, LevyModel, Phase};
use omega_core::mc::{simulate_step, PathRng, PathState, Simulator, StopSet};
use omega_core::numerics::{find_root, integrate, Bracket};
use omega_core::scale::build_scale;
use omega_core::thresholds::{find_y_tilde, g_fn, z_star};
use omega_core::valuation::solve;
use omega_core::Context;

fn arb_model() -> impl Strategy<Value = LevyModel> {
    (
        -0.5f64..0.5,
        0.05f64..0.5,
        0.0f64..1.0,
        0.5f64..2.0,
        2.5f64..5.0,
        0.05f64..0.95,
        any::<bool>(),
    )
        .prop_map(|(gamma, sigma, lam, e1, e2, p, two)| {
            let phases = if two {
                vec![Phase { p, eta: e1 }, Phase { p: 1.0 - p, eta: e2 }]
            } else {
                vec![Phase { p: 1.0, eta: e1 }]
            };
            LevyModel::new(gamma, sigma, HyperExpJumps { intensity: lam, phases }).unwrap()
        })
}

fn example() -> Context {
    let m = LevyModel::new(
        0.3,
        0.2,
        HyperExpJumps {
            intensity: 0.6,
            phases: vec![Phase { p: 1.0, eta: 1.0 }],
        },
    )
    .unwrap();
    Context::new(m, 0.05, 1.0, 10.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn brent_recovers_cubic_root(root in -5.0f64..5.0, c in 0.1f64..3.0) {
        let f = |x: f64| (x - root) * ((x - root).powi(2) + c);
        let x = find_root(f, Bracket::new(f, -10.0, 10.0).unwrap(), 1e-13).unwrap();
        prop_assert!((x - root).abs() < 1e-10);
    }

    #[test]
    fn quadrature_exact_on_polynomials(a in -3.0f64..0.0, b in 0.1f64..3.0, c0 in -2.0f64..2.0, c3 in -2.0f64..2.0) {
        let f = |x: f64| c0 + c3 * x.powi(3);
        let exact = c0 * (b - a) + c3 * (b.powi(4) - a.powi(4)) / 4.0;
        let q = integrate(f, a, b, 1e-12).unwrap().value;
        prop_assert!((q - exact).abs() < 1e-11 * (1.0 + exact.abs()));
    }

    #[test]
    fn phi_inverts_psi(m in arb_model(), r in 0.01f64..2.0) {
        let p = phi(&m, r).unwrap();
        prop_assert!(p > 0.0);
        prop_assert!((m.psi_raw(p) - r).abs() < 1e-9 * (1.0 + r));
        prop_assert!(m.psi_prime(p) > 0.0);
        let p2 = phi(&m, r * 1.5).unwrap();
        prop_assert!(p2 > p);
    }

    #[test]
    fn psi_convex(m in arb_model(), b in 0.0f64..10.0) {
        prop_assert!(m.psi_second(b) > 0.0);
    }

    #[test]
    fn scale_positive_increasing(m in arb_model(), r in 0.01f64..1.0, x in 0.01f64..8.0) {
        let w = build_scale(&m, r).unwrap();
        prop_assert!(w.eval_scaled(x) > 0.0);
        prop_assume!(w.phi_r * x < 600.0);
        prop_assert!(w.eval(x, 0) > 0.0);
        prop_assert!(w.eval(x, 1) > 0.0);
        prop_assert!(w.eval(-x, 0) == 0.0);
    }

    #[test]
    fn scale_laplace_transform(m in arb_model(), r in 0.05f64..1.0, shift in 0.5f64..3.0) {
        let w = build_scale(&m, r).unwrap();
        let beta = w.phi_r + shift;
        let num = integrate(|x| (-shift * x).exp() * w.eval_scaled(x), 0.0, 60.0 / shift, 1e-12).unwrap().value;
        let exact = 1.0 / (m.psi_raw(beta) - r);
        prop_assert!((num / exact - 1.0).abs() < 1e-7, "{num} vs {exact}");
    }

    #[test]
    fn two_rate_forms_agree(a in 1.0f64..3.0, dx in 0.01f64..4.0) {
        let c = example();
        let t = c.two_rate(3.0);
        let x = a + dx;
        let w1 = t.eval(x, a).unwrap();
        let w2 = t.eval_complement(x, a).unwrap();
        prop_assert!((w1 - w2).abs() <= 1e-9 * w1.abs().max(1.0));
    }

    #[test]
    fn kernel_log_concave(x in 0.01f64..10.0) {
        let c = example();
        prop_assert!(c.i(x, 2) * c.i(x, 0) <= c.i(x, 1).powi(2));
    }

    #[test]
    fn z_star_first_order(y in 0.5f64..2.78) {
        let c = example();
        let z = z_star(&c, y).unwrap();
        prop_assert!(z > y);
        prop_assert!((y.exp() * g_fn(&c, z - y) / c.strike - 1.0).abs() < 1e-9);
    }

    #[test]
    fn value_dominates_payoff(y in 1.0f64..5.0, x in 0.0f64..6.0) {
        let c = example();
        let sol = solve(&c, y).unwrap();
        prop_assert!(sol.region.is_well_formed());
        let v = sol.value(&c, x).unwrap();
        let payoff = (x.exp() - c.strike).max(0.0);
        prop_assert!(v >= payoff - 1e-9 * (1.0 + payoff), "v={v}, payoff={payoff}");
        if sol.region.contains(x) {
            prop_assert!((v - (x.exp() - c.strike)).abs() <= 1e-8 * (1.0 + payoff));
        }
    }

    #[test]
    fn clock_bounds_pathwise(m in arb_model(), y in -1.0f64..1.0, r in 0.01f64..0.2, q in 0.1f64..2.0, seed in any::<u64>()) {
        let sim = Simulator::new(&m, y, r, q);
        let mut rng = PathRng::for_path(seed, 0, false);
        let mut st = PathState::start(&sim, 0.0, &mut rng);
        for _ in 0..500 {
            simulate_step(&sim, &mut st, 1e-2, &StopSet::none(), &mut rng);
            prop_assert!(st.a >= r * st.t - 1e-12 && st.a <= (r + q) * st.t + 1e-12);
        }
    }
}

#[test]
fn region_shapes_follow_level_order() {
    let c = example();
    let yt = find_y_tilde(&c).unwrap();
    let mut last_lower = f64::INFINITY;
    for y in [1.0, 2.0, 2.5, yt - 1e-3] {
        let lo = solve(&c, y).unwrap().region.lower_end().unwrap();
        assert!(lo < last_lower, "ray start must fall as y rises");
        last_lower = lo;
    }
}
