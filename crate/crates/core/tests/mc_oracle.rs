use omega_core::levy::{HyperExpJumps, LevyModel, Phase};
use omega_core::mc::{
    estimate_region_strategy, estimate_two_sided, estimate_upcross_discount, standard_checks, McEstimate, PathConfig,
};
use omega_core::valuation::{solve, v_under, StoppingRegion};
use omega_core::Context;

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

fn smoke(ctx: &Context, cfg: &PathConfig) -> McEstimate {
    estimate_upcross_discount(ctx, 3.2, 3.9, 3.0, cfg).unwrap()
}

#[test]
fn halving_dt_is_within_two_standard_errors() {
    let c = example();
    let cfg = PathConfig::new(c.r, 100_000, 11);
    let coarse = smoke(&c, &cfg);
    let fine = smoke(&c, &PathConfig { dt: cfg.dt / 2.0, ..cfg.clone() });
    let se = coarse.std_error.max(fine.std_error);
    assert!((coarse.mean - fine.mean).abs() < 2.0 * se, "{coarse:?} vs {fine:?}");
}

#[test]
fn antithetic_does_not_inflate_error() {
    let c = example();
    let cfg = PathConfig::new(c.r, 100_000, 12);
    let with = smoke(&c, &cfg);
    let without = smoke(&c, &PathConfig { antithetic: false, ..cfg });
    assert!(with.std_error <= 1.05 * without.std_error, "{with:?} vs {without:?}");
}

#[test]
fn reproducible_bit_for_bit() {
    let c = example();
    let cfg = PathConfig::new(c.r, 2_000, 13);
    let sol = solve(&c, 3.0).unwrap();
    let a = estimate_region_strategy(&c, 3.4, 3.0, &sol.region, &cfg).unwrap();
    let b = estimate_region_strategy(&c, 3.4, 3.0, &sol.region, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_rate_limit_below_level() {
    // x and z far below y: constant discount r + q throughout.
    let c = example();
    let cfg = PathConfig::new(c.r, 20_000, 14);
    let est = estimate_upcross_discount(&c, 0.0, 0.4, 5.0, &cfg).unwrap();
    let exact = (c.phi_rq * (0.0 - 0.4)).exp();
    assert!(est.z_score(exact).abs() < 4.0, "{est:?} vs {exact}");
}

#[test]
fn lower_exit_only_matches_single_rate_value() {
    // With y above everything and no upper barrier the payoff at the
    // down-crossing of a is v̲, and v̲ is (r+q)-harmonic away from the
    // barrier, so the estimate reproduces v̲(x) for a < k̲ < x.
    let c = example();
    let cfg = PathConfig::new(c.r, 20_000, 15);
    let a = c.k_under - 0.5;
    let region = StoppingRegion::ray(c.k_under);
    let x = c.k_under - 0.2;
    let est = estimate_region_strategy(&c, x, 10.0, &region, &cfg).unwrap();
    assert!(est.z_score(v_under(&c, x)).abs() < 4.0, "{est:?}");
    let est = estimate_two_sided(&c, x, 10.0, a, f64::INFINITY, &cfg).unwrap();
    assert!(est.mean > 0.0 && est.mean < v_under(&c, x));
}

#[test]
fn standard_checks_pass_at_reduced_size() {
    let c = example();
    let cfg = PathConfig::new(c.r, 20_000, 16);
    for y in [2.7, 3.0] {
        let checks = standard_checks(&c, y, &cfg).unwrap();
        assert!(checks.len() >= 4);
        for ch in checks {
            assert!(ch.z_score.abs() < 4.0, "y={y}: {ch:?}");
        }
    }
}

#[test]
fn sub_martingale_is_rejected() {
    let m = example().model;
    let c = Context::new(m, 0.01, 1.0, 10.0).unwrap();
    let cfg = PathConfig::new(c.r, 10, 1);
    assert!(standard_checks(&c, 3.0, &cfg).is_err());
}
