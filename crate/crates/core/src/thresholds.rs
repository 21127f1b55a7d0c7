//! Critical levels: `g`, `H`, `ū`, `z*(y)`, `ȳ`, `y₀`, `ỹ`, `y_m`, the
//! exercise pair `(a*(y), b*(y))` and the martingale-case `y_∞`, `a_∞*(y)`.

use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::levy::Variation;
use crate::numerics::{find_root, geometric_grid, golden_max, linspace, Bracket};
use crate::valuation::{chi_fn, delta_dx_unchecked, delta_infinity_fn, delta_unchecked, UpCrossing};

/// Two levels closer than this are treated as equal when dispatching on `ỹ`.
pub const LEVEL_EQ_TOL: f64 = 1e-9;
/// Offset in `y` used to probe the continuity of `b*(·)`.
pub const BRANCH_PROBE: f64 = 1e-3;
/// Jump in `b*` across the probe that is reported as branching.
pub const BRANCH_JUMP: f64 = 0.05;

/// `g(u) = e^u (1 − 1/Λ̄(u))`.
pub fn g_fn(ctx: &Context, u: f64) -> f64 {
    u.exp() * (1.0 - 1.0 / ctx.hazard(u))
}

/// `H(u) = (Φ(r+q) − 1) Λ̄(u) − W^{(r)′}(u)/I^{(r,q)}(u)` for `u ≥ 0`; the
/// sign of `g′`.
pub fn h_sign_fn(ctx: &Context, u: f64) -> f64 {
    if u < 0.0 {
        return (ctx.phi_rq - 1.0) * ctx.phi_rq;
    }
    (ctx.phi_rq - 1.0) * ctx.hazard(u) - ctx.w(u, 1) / ctx.i(u, 0)
}

/// `g′(u) = e^u H(u)/Λ̄(u)²`.
pub fn g_deriv(ctx: &Context, u: f64) -> f64 {
    if u < 0.0 {
        return u.exp() * (ctx.phi_rq - 1.0) / ctx.phi_rq;
    }
    let lam = ctx.hazard(u);
    u.exp() * h_sign_fn(ctx, u) / (lam * lam)
}

/// `ū`: `−∞` or `0` when up-crossing strategies stay optimal, otherwise the
/// largest local minimum of `g`.
pub fn find_u_bar(ctx: &Context) -> Result<f64> {
    ctx.require_super("u_bar")?;
    if let Some(&u) = ctx.cache.u_bar.get() {
        return Ok(u);
    }
    let u = compute_u_bar(ctx)?;
    Ok(*ctx.cache.u_bar.get_or_init(|| u))
}

fn compute_u_bar(ctx: &Context) -> Result<f64> {
    let cond1 = crate::levy::cond1(&ctx.model, ctx.r, ctx.q)?;
    if cond1 {
        return Ok(match ctx.model.variation() {
            Variation::Unbounded => f64::NEG_INFINITY,
            Variation::Bounded => 0.0,
        });
    }
    let grid = geometric_grid(1e-6, 50.0, 2000);
    let hs: Vec<f64> = grid.iter().map(|&u| h_sign_fn(ctx, u)).collect();
    let last = (0..grid.len() - 1).rev().find(|&i| hs[i] < 0.0 && hs[i + 1] >= 0.0);
    match last {
        Some(i) => {
            let f = |u: f64| h_sign_fn(ctx, u);
            find_root(f, Bracket::from_values(grid[i], grid[i + 1], hs[i], hs[i + 1])?, ctx.tol.root_abs)
        }
        // H(0+) < 0 while H stays negative up to 50: the minimum is beyond
        // the search window.
        None => Err(Error::ConvergenceError("no sign change of H on [1e-6, 50]".into())),
    }
}

/// `ȳ = log(K/g(ū))`, `+∞` when `ū = −∞`.
pub fn find_y_bar(ctx: &Context) -> Result<f64> {
    let u = find_u_bar(ctx)?;
    if let Some(&v) = ctx.cache.y_bar.get() {
        return Ok(v);
    }
    let v = if u == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        (ctx.strike / g_fn(ctx, u)).ln()
    };
    Ok(*ctx.cache.y_bar.get_or_init(|| v))
}

/// Optimal up-crossing threshold `z*(y) = y + inf{u > ū : e^y g(u) > K}`.
pub fn z_star(ctx: &Context, y: f64) -> Result<f64> {
    let u_bar = find_u_bar(ctx)?;
    let y_bar = find_y_bar(ctx)?;
    if y > y_bar {
        return Err(Error::DomainError(format!("z*(y) needs y <= y_bar = {y_bar}, got {y}")));
    }
    let target = ctx.strike * (-y).exp();
    let lo = if u_bar == f64::NEG_INFINITY {
        // g is increasing; on u < 0 it is e^u (Φ(r+q) − 1)/Φ(r+q).
        if y >= ctx.k_under {
            return Ok(ctx.k_under);
        }
        0.0
    } else {
        u_bar
    };
    let f = |u: f64| g_fn(ctx, u) - target;
    if f(lo) >= 0.0 {
        // Only reachable at y = ȳ up to rounding.
        return Ok(y + lo);
    }
    let mut hi = lo.max(0.0) + 1.0;
    while f(hi) <= 0.0 {
        hi = 2.0 * hi + 1.0;
        if hi > 700.0 {
            return Err(Error::ConvergenceError(format!("cannot bracket z*({y})")));
        }
    }
    let u = find_root(f, Bracket::new(f, lo, hi)?, ctx.tol.root_abs)?;
    Ok(y + u)
}

/// `y₀ = −log(sup_{u ≤ ū} g(u)/K)`.
pub fn find_y0(ctx: &Context) -> Result<f64> {
    let u_bar = find_u_bar(ctx)?;
    if u_bar == f64::NEG_INFINITY {
        return Err(Error::RegimeError("y0 is undefined when u_bar = -inf".into()));
    }
    ctx.cache
        .y0
        .get_or_init(|| {
            let left = (ctx.phi_rq - 1.0) / ctx.phi_rq;
            let mut sup = left.max(g_fn(ctx, 0.0));
            if u_bar > 0.0 {
                let grid = linspace(0.0, u_bar, 200);
                let (i, v) = grid
                    .iter()
                    .map(|&u| g_fn(ctx, u))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
                let lo = grid[i.saturating_sub(1)];
                let hi = grid[(i + 1).min(grid.len() - 1)];
                let (_, refined) = golden_max(&|u| g_fn(ctx, u), lo, hi, 1e-12);
                sup = sup.max(v).max(refined);
            }
            Ok((ctx.strike / sup).ln())
        })
        .clone()
}

/// `sup_{x < ū + y} R(x; y)` and its maximizer.
pub fn sup_ratio(ctx: &Context, y: f64) -> Result<(f64, f64)> {
    let u_bar = find_u_bar(ctx)?;
    let up = UpCrossing::new(ctx, y, z_star(ctx, y)?);
    let hi = u_bar + y;
    let lo = ctx.k_under - 5.0;
    let ratio = |x: f64| up.ratio(ctx, x);

    // Grid clustered around k̲, where the maximizer sits at the critical level.
    let mut grid = linspace(lo, hi, 400);
    for k in 1..=40 {
        let off = 1e-4 * (1.35f64).powi(k);
        grid.push(ctx.k_under - off);
        grid.push(ctx.k_under + off);
    }
    grid.push(ctx.k_under);
    grid.retain(|&x| x >= lo && x <= hi);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let vals: Vec<f64> = grid.iter().map(|&x| ratio(x)).collect();
    let mut best = 0;
    for i in 1..vals.len() {
        if vals[i] > vals[best] {
            best = i;
        }
    }
    let (mut x_best, mut v_best) = (grid[best], vals[best]);
    if best > 0 && best + 1 < grid.len() {
        let (x, v) = golden_max(&ratio, grid[best - 1], grid[best + 1], 1e-12);
        if v > v_best {
            x_best = x;
            v_best = v;
        }
    }
    Ok((v_best, x_best))
}

/// `ỹ = inf{y ≤ ȳ : sup_{x<ū+y} R(x;y) = 1}`.
pub fn find_y_tilde(ctx: &Context) -> Result<f64> {
    ctx.cache.y_tilde.get_or_init(|| compute_y_tilde(ctx)).clone()
}

fn compute_y_tilde(ctx: &Context) -> Result<f64> {
    let y0 = find_y0(ctx)?;
    let y_bar = find_y_bar(ctx)?;
    let f = |y: f64| sup_ratio(ctx, y).map(|(s, _)| s - 1.0).unwrap_or(f64::NAN);
    let (f_lo, f_hi) = (f(y0), f(y_bar));
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::ConvergenceError(format!(
            "sup R - 1 not bracketed on [{y0}, {y_bar}]: {f_lo}, {f_hi}"
        )));
    }
    find_root(f, Bracket::from_values(y0, y_bar, f_lo, f_hi)?, 1e-11)
}

/// `y_m`: the root of `χ` on `[k̲, k̄)`.
pub fn find_y_m(ctx: &Context) -> Result<f64> {
    ctx.require_super("y_m")?;
    ctx.cache
        .y_m
        .get_or_init(|| {
            let f = |x: f64| chi_fn(ctx, x);
            let lo = ctx.k_under;
            let mut hi = ctx.k_over;
            while f(hi) >= 0.0 {
                hi += 1.0;
                if hi > ctx.k_over + 50.0 {
                    return Err(Error::ConvergenceError("chi has no root above k_under".into()));
                }
            }
            find_root(f, Bracket::new(f, lo, hi)?, ctx.tol.root_abs)
        })
        .clone()
}

/// All `y`-independent thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    #[serde(with = "crate::export::extended_f64")]
    pub u_bar: f64,
    #[serde(with = "crate::export::extended_f64")]
    pub y_bar: f64,
    #[serde(with = "crate::export::opt_extended_f64")]
    pub y0: Option<f64>,
    #[serde(with = "crate::export::opt_extended_f64")]
    pub y_tilde: Option<f64>,
    pub y_m: f64,
    pub k_under: f64,
    pub k_over: f64,
    pub r: f64,
    pub q: f64,
    pub strike: f64,
}

/// Collects the thresholds of the super-martingale case.
pub fn threshold_set(ctx: &Context) -> Result<ThresholdSet> {
    ctx.require_super("threshold set")?;
    let u_bar = find_u_bar(ctx)?;
    let finite = u_bar > f64::NEG_INFINITY;
    Ok(ThresholdSet {
        u_bar,
        y_bar: find_y_bar(ctx)?,
        y0: if finite { Some(find_y0(ctx)?) } else { None },
        y_tilde: if finite { Some(find_y_tilde(ctx)?) } else { None },
        y_m: find_y_m(ctx)?,
        k_under: ctx.k_under,
        k_over: ctx.k_over,
        r: ctx.r,
        q: ctx.q,
        strike: ctx.strike,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExercisePair {
    pub a_star: f64,
    pub b_star: f64,
    pub y: f64,
}

/// Minimum of `Δ(·, a; y)` over `(y, x_max]` and its location.
fn min_delta(ctx: &Context, y: f64, a: f64, x_max: f64) -> (f64, f64) {
    let grid = linspace(y, x_max, 41);
    let vals: Vec<f64> = grid.iter().skip(1).map(|&x| delta_unchecked(ctx, y, a, x)).collect();
    let mut best = 0;
    for i in 1..vals.len() {
        if vals[i] < vals[best] {
            best = i;
        }
    }
    let i = best + 1;
    let lo = grid[i - 1];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    let (x, neg) = golden_max(&|x| -delta_unchecked(ctx, y, a, x), lo, hi, 1e-9);
    if -neg < vals[best] {
        (-neg, x)
    } else {
        (vals[best], grid[i])
    }
}

/// The pair `(a*(y), b*(y))` without the continuity probe.
pub fn find_pair_unchecked(ctx: &Context, y: f64) -> Result<ExercisePair> {
    let y_tilde = find_y_tilde(ctx)?;
    let y_m = find_y_m(ctx)?;
    if !(y > y_tilde && y < y_m) {
        return Err(Error::RegimeError(format!(
            "exercise pair needs y in ({y_tilde}, {y_m}), got {y}"
        )));
    }
    let x_max = z_star(ctx, y_tilde)?;
    let m = |a: f64| min_delta(ctx, y, a, x_max).0;
    let lo = ctx.k_under;
    let hi = y - 1e-9;
    let (m_lo, m_hi) = (m(lo), m(hi));
    if !(m_lo > 0.0 && m_hi <= 0.0) {
        return Err(Error::NoRoot(format!(
            "min Delta does not change sign in a over [{lo}, {hi}]: {m_lo}, {m_hi}"
        )));
    }
    let a_star = find_root(m, Bracket::from_values(lo, hi, m_lo, m_hi)?, 1e-10)?;

    // b* is the stationary point of Δ(·, a*; y) at the global minimum.
    let (_, x_min) = min_delta(ctx, y, a_star, x_max);
    let d = |x: f64| delta_dx_unchecked(ctx, y, a_star, x);
    let mut half = 1e-3;
    let b_star = loop {
        let (l, h) = ((x_min - half).max(y + 1e-12), (x_min + half).min(x_max));
        if let Ok(br) = Bracket::new(d, l, h) {
            break find_root(d, br, 1e-11)?;
        }
        half *= 2.0;
        if half > x_max - y {
            break x_min;
        }
    };
    Ok(ExercisePair { a_star, b_star, y })
}

/// The pair `(a*(y), b*(y))` for `y ∈ (ỹ, y_m)`, with a continuity check
/// of `b*(·)` at a nearby level.
pub fn find_pair(ctx: &Context, y: f64) -> Result<ExercisePair> {
    let pair = find_pair_unchecked(ctx, y)?;
    let y_m = find_y_m(ctx)?;
    let y_probe = if y + BRANCH_PROBE < y_m { y + BRANCH_PROBE } else { y - BRANCH_PROBE };
    if let Ok(probe) = find_pair_unchecked(ctx, y_probe) {
        if (probe.b_star - pair.b_star).abs() > BRANCH_JUMP {
            return Err(Error::BranchingDetected {
                y,
                b_here: pair.b_star,
                b_probe: probe.b_star,
            });
        }
    }
    Ok(pair)
}

/// `y_∞ = k̲ + log(Φ(r+q)(Φ(r+q) − 1)/(Φ′(r) q))/(Φ(r+q) − 1)`.
pub fn find_y_infinity(ctx: &Context) -> Result<f64> {
    ctx.require_martingale("y_inf")?;
    let p = ctx.phi_rq;
    Ok(ctx.k_under + (p * (p - 1.0) / (ctx.phi_r_prime * ctx.q)).ln() / (p - 1.0))
}

/// `a_∞*(y)`: the root of `Δ_∞(·; y)` on `(k̲, y)`.
pub fn find_a_infinity(ctx: &Context, y: f64) -> Result<f64> {
    ctx.require_martingale("a_inf")?;
    let f = |a: f64| delta_infinity_fn(ctx, y, a).unwrap_or(f64::NAN);
    let (lo, hi) = (ctx.k_under, y);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::NoRoot(format!(
            "Delta_inf does not change sign on ({lo}, {hi}): {f_lo}, {f_hi}"
        )));
    }
    find_root(f, Bracket::from_values(lo, hi, f_lo, f_hi)?, ctx.tol.root_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::tests::{sec6, sec6_martingale};
    use crate::context::Context;
    use crate::levy::{HyperExpJumps, LevyModel, Phase};

    #[test]
    fn u_bar_and_y_bar() {
        let c = sec6();
        let u = find_u_bar(&c).unwrap();
        assert!((u - 0.282_670_6).abs() < 1e-6, "{u}");
        assert!(g_deriv(&c, u).abs() < 1e-9);
        let yb = find_y_bar(&c).unwrap();
        assert!((yb - 3.119_593_1).abs() < 1e-6, "{yb}");
        assert!((z_star(&c, yb).unwrap() - (yb + u)).abs() < 1e-8);
        let h40 = h_sign_fn(&c, 40.0);
        assert!((h40 - c.phi_r * (c.phi_r - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn g_left_branch() {
        let c = sec6();
        let k = (c.phi_rq - 1.0) / c.phi_rq;
        assert!((g_fn(&c, -0.7) - (-0.7f64).exp() * k).abs() < 1e-15);
        assert!((g_deriv(&c, -0.7) - (-0.7f64).exp() * k).abs() < 1e-15);
        let u: f64 = 60.0;
        assert!((g_fn(&c, u) / (u.exp() * (1.0 - 1.0 / c.phi_r)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn g_deriv_matches_finite_difference() {
        let c = sec6();
        for u in [0.05, 0.2827, 1.0, 3.0] {
            let h = 1e-6;
            let fd = (g_fn(&c, u + h) - g_fn(&c, u - h)) / (2.0 * h);
            assert!((fd - g_deriv(&c, u)).abs() < 1e-7 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn z_star_values() {
        let c = sec6();
        assert!((z_star(&c, 2.7).unwrap().exp() - 54.163_59).abs() < 1e-3);
        assert!((z_star(&c, -20.0).unwrap() - c.k_over).abs() < 1e-3);
        assert!(z_star(&c, 3.2).is_err());
        let mut prev = f64::INFINITY;
        for y in linspace(-3.0, find_y_bar(&c).unwrap(), 20) {
            let z = z_star(&c, y).unwrap();
            assert!(z < prev && z >= c.k_under && z < c.k_over);
            assert!((c.strike - y.exp() * g_fn(&c, z - y)).abs() < 1e-9);
            prev = z;
        }
    }

    #[test]
    fn y0_y_tilde_y_m() {
        let c = sec6();
        let y0 = find_y0(&c).unwrap();
        assert!((y0 - c.k_under).abs() < 1e-9, "{y0}");
        let yt = find_y_tilde(&c).unwrap();
        assert!((yt - 2.786_992_4).abs() < 1e-6, "{yt}");
        let (s, x0) = sup_ratio(&c, yt).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
        assert!((x0 - c.k_under).abs() < 1e-3);
        assert!((z_star(&c, yt).unwrap().exp() - 50.988_32).abs() < 1e-3);
        let ym = find_y_m(&c).unwrap();
        assert!((ym - 3.738_326_8).abs() < 1e-6, "{ym}");
        assert!(chi_fn(&c, ym - 0.1) > 0.0 && chi_fn(&c, ym + 0.1) < 0.0);
        let yb = find_y_bar(&c).unwrap();
        assert!(y0 < yt && yt < yb && yb <= ym && ym < c.k_over);
    }

    #[test]
    fn pair_at_three() {
        let c = sec6();
        let p = find_pair(&c, 3.0).unwrap();
        assert!((p.a_star.exp() - 19.180_10).abs() < 2e-3, "{}", p.a_star.exp());
        assert!((p.b_star.exp() - 47.626_53).abs() < 2e-3, "{}", p.b_star.exp());
        let yt = find_y_tilde(&c).unwrap();
        let ym = find_y_m(&c).unwrap();
        let zt = z_star(&c, yt).unwrap();
        assert!(c.k_under < p.a_star && p.a_star < 3.0 && ym < p.b_star && p.b_star < zt);
        assert!(delta_unchecked(&c, 3.0, p.a_star, p.b_star).abs() < 1e-6);
        assert!(delta_dx_unchecked(&c, 3.0, p.a_star, p.b_star).abs() < 1e-6);
    }

    #[test]
    fn pair_outside_window_is_regime_error() {
        let c = sec6();
        assert!(matches!(find_pair(&c, 2.7), Err(Error::RegimeError(_))));
        assert!(matches!(find_pair(&c, 3.9), Err(Error::RegimeError(_))));
    }

    #[test]
    fn lemma_predicate_implies_positive_u_bar() {
        // ψ(1) > 0, σ > 0 and q above ψ(r/ψ(1)) − r.
        let c = sec6();
        let bound = c.model.psi_raw(c.r / c.psi_1) - c.r;
        assert!(c.q > bound);
        assert!(find_u_bar(&c).unwrap() > 0.0);
    }

    #[test]
    fn cond1_model_has_minus_infinite_u_bar() {
        let m = LevyModel::brownian(0.0, 1.0).unwrap();
        let c = Context::new(m, 1.0, 0.5, 10.0).unwrap();
        assert_eq!(find_u_bar(&c).unwrap(), f64::NEG_INFINITY);
        assert_eq!(find_y_bar(&c).unwrap(), f64::INFINITY);
        assert!(matches!(find_y0(&c), Err(Error::RegimeError(_))));
        assert_eq!(z_star(&c, c.k_under + 0.1).unwrap(), c.k_under);
        let z = z_star(&c, c.k_under - 1.0).unwrap();
        assert!(z > c.k_under && z < c.k_over);
    }

    #[test]
    fn bounded_variation_cond1_gives_zero() {
        // No Gaussian part: W(0) = 1/γ and the condition can hold.
        let m = LevyModel::new(
            2.0,
            0.0,
            HyperExpJumps {
                intensity: 0.2,
                phases: vec![Phase { p: 1.0, eta: 3.0 }],
            },
        )
        .unwrap();
        let c = Context::new(m, 3.0, 0.5, 10.0).unwrap();
        let holds = crate::levy::cond1(&c.model, c.r, c.q).unwrap();
        let u = find_u_bar(&c).unwrap();
        assert_eq!(holds, u == 0.0);
        assert!(u >= 0.0);
    }

    #[test]
    fn martingale_levels() {
        let c = sec6_martingale();
        let yi = find_y_infinity(&c).unwrap();
        assert!(yi > c.k_under);
        let v = crate::valuation::v_infinity_fn(&c, yi, c.k_under).unwrap();
        assert!((v - (c.big_k_under() - c.strike)).abs() < 1e-9);
        let a = find_a_infinity(&c, yi + 1.0).unwrap();
        assert!(a > c.k_under && a < yi + 1.0);
        assert!(delta_infinity_fn(&c, yi + 1.0, a).unwrap().abs() < 1e-8);
        assert!(matches!(find_y_infinity(&sec6()), Err(Error::RegimeError(_))));
    }
}
