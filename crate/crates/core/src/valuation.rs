//! Value-function building blocks and the top-level solver.
//!
//! All quantities are in log-price `x`. `v̲`/`v̄` are the perpetual call
//! values at constant rates `r + q` and `r`; `Δ` is the excess of the
//! two-sided strategy value over `v̲`.

use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::levy::{MartingaleClass, RegimeReport};
use crate::numerics::{integrate_with_breaks, QuadratureResult};
use crate::thresholds::{self, LEVEL_EQ_TOL};

const DELTA_REL: f64 = 1e-12;
const DELTA_ABS: f64 = 1e-15;

/// Perpetual call value at constant rate `r + q`.
pub fn v_under(ctx: &Context, x: f64) -> f64 {
    if x <= ctx.k_under {
        (ctx.phi_rq * (x - ctx.k_under)).exp() * (ctx.big_k_under() - ctx.strike)
    } else {
        x.exp() - ctx.strike
    }
}

/// Perpetual call value at constant rate `r`; `e^x` in the martingale case.
pub fn v_over(ctx: &Context, x: f64) -> Result<f64> {
    match ctx.class {
        MartingaleClass::SuperMartingale => Ok(if x <= ctx.k_over {
            (ctx.phi_r * (x - ctx.k_over)).exp() * (ctx.big_k_over() - ctx.strike)
        } else {
            x.exp() - ctx.strike
        }),
        MartingaleClass::Martingale => Ok(x.exp()),
        MartingaleClass::SubMartingale => Err(Error::RegimeError("v_over is infinite when r < psi(1)".into())),
    }
}

/// `h(x) = v̲(x) − (e^x − K)`.
pub fn h_fn(ctx: &Context, x: f64) -> f64 {
    if x >= ctx.k_under {
        0.0
    } else {
        v_under(ctx, x) - (x.exp() - ctx.strike)
    }
}

/// `f(x) = ∫_{(−∞, k̲)} h(z) Π(−x + dz)` for `x ≥ k̲`.
pub fn f_fn(ctx: &Context, x: f64) -> Result<f64> {
    if x < ctx.k_under {
        return Err(Error::DomainError(format!("f needs x >= k_under, got {x}")));
    }
    Ok(f_unchecked(ctx, x))
}

pub(crate) fn f_unchecked(ctx: &Context, x: f64) -> f64 {
    ctx.f_terms()
        .iter()
        .map(|&(b, eta)| b * (eta * (ctx.k_under - x)).exp())
        .sum()
}

fn drift_gap(ctx: &Context) -> f64 {
    match ctx.class {
        MartingaleClass::Martingale => 0.0,
        _ => ctx.r - ctx.psi_1,
    }
}

/// `χ(x) = (L − r) v̲(x)`.
pub fn chi_fn(ctx: &Context, x: f64) -> f64 {
    if x < ctx.k_under {
        ctx.q * v_under(ctx, x)
    } else {
        ctx.r * ctx.strike - drift_gap(ctx) * x.exp() + f_unchecked(ctx, x)
    }
}

/// `q v̲(x) − χ(x)`, which vanishes below `k̲`.
pub fn chi_gap(ctx: &Context, x: f64) -> f64 {
    if x < ctx.k_under {
        0.0
    } else {
        (ctx.q + drift_gap(ctx)) * x.exp() - (ctx.r + ctx.q) * ctx.strike - f_unchecked(ctx, x)
    }
}

/// The up-crossing strategy `T_z^+` at level `y`.
#[derive(Debug, Clone, Copy)]
pub struct UpCrossing {
    pub y: f64,
    pub z: f64,
    payoff_z: f64,
    i_z: f64,
}

impl UpCrossing {
    pub fn new(ctx: &Context, y: f64, z: f64) -> Self {
        UpCrossing {
            y,
            z,
            payoff_z: (z.exp() - ctx.strike).max(0.0),
            i_z: ctx.i(z - y, 0),
        }
    }

    /// `U(x; y, z)`.
    pub fn value(&self, ctx: &Context, x: f64) -> f64 {
        if x >= self.z {
            x.exp() - ctx.strike
        } else {
            self.payoff_z * ctx.i(x - self.y, 0) / self.i_z
        }
    }

    /// `R(x; y) = (e^x − K)/U(x; y, z)`.
    pub fn ratio(&self, ctx: &Context, x: f64) -> f64 {
        (x.exp() - ctx.strike) / self.value(ctx, x)
    }
}

/// `U(x; y, z)`: value of stopping at the first passage above `z`.
pub fn u_fn(ctx: &Context, y: f64, z: f64, x: f64) -> f64 {
    UpCrossing::new(ctx, y, z).value(ctx, x)
}

/// `R(x; y)` against the optimal up-crossing threshold `z*(y)`.
pub fn r_fn(ctx: &Context, y: f64, x: f64) -> Result<f64> {
    let z = thresholds::z_star(ctx, y)?;
    Ok(UpCrossing::new(ctx, y, z).ratio(ctx, x))
}

fn quad<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64]) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    match integrate_with_breaks(&f, a, b, breaks, DELTA_REL, DELTA_ABS) {
        Ok(QuadratureResult { value, .. }) => value,
        // Fall back to a looser tolerance rather than failing a whole solve.
        Err(_) => integrate_with_breaks(&f, a, b, breaks, 1e-9, 1e-12)
            .map(|r| r.value)
            .unwrap_or(f64::NAN),
    }
}

/// `Δ(x, a; y) = ∫_a^y W^{(r,q)}(x,w)[q v̲(w) − χ(w)] dw − ∫_y^{x∨y} W^{(r)}(x−w) χ(w) dw`.
pub fn delta_fn(ctx: &Context, y: f64, a: f64, x: f64) -> Result<f64> {
    if !(a >= ctx.k_under && a < y) {
        return Err(Error::DomainError(format!(
            "Delta needs k_under <= a < y, got a={a}, y={y}"
        )));
    }
    Ok(delta_unchecked(ctx, y, a, x))
}

pub(crate) fn delta_unchecked(ctx: &Context, y: f64, a: f64, x: f64) -> f64 {
    if x <= a {
        return 0.0;
    }
    let tr = ctx.two_rate(y);
    let first = quad(
        |w| tr.eval_unchecked(x, w) * chi_gap(ctx, w),
        a,
        x.min(y),
        &[ctx.k_under],
    );
    let second = quad(|w| ctx.w(x - w, 0) * chi_fn(ctx, w), y, x, &[ctx.k_under]);
    first - second
}

/// `∂_x Δ(x, a; y)`.
pub fn delta_dx_fn(ctx: &Context, y: f64, a: f64, x: f64) -> Result<f64> {
    delta_fn(ctx, y, a, x)?;
    Ok(delta_dx_unchecked(ctx, y, a, x))
}

pub(crate) fn delta_dx_unchecked(ctx: &Context, y: f64, a: f64, x: f64) -> f64 {
    if x <= a {
        return 0.0;
    }
    let tr = ctx.two_rate(y);
    let first = quad(|w| tr.eval_dx(x, w) * chi_gap(ctx, w), a, x.min(y), &[ctx.k_under]);
    if x < y {
        first + ctx.w_rq(0.0, 0) * chi_gap(ctx, x)
    } else {
        let second = quad(|w| ctx.w(x - w, 1) * chi_fn(ctx, w), y, x, &[ctx.k_under]);
        first - ctx.w(0.0, 0) * chi_fn(ctx, x) - second
    }
}

fn check_two_sided(ctx: &Context, y: f64, a: f64, b: f64, x: f64) -> Result<()> {
    if !(ctx.k_under <= a && a <= y && y < b && a < x && x < b) {
        return Err(Error::DomainError(format!(
            "two-sided value needs k_under <= a <= y < b and a < x < b, got a={a}, y={y}, b={b}, x={x}"
        )));
    }
    Ok(())
}

/// `V(x; y, a, b) = E_x[e^{−A_τ} v̲(X_τ)]` with `τ` the first exit from `(a, b)`,
/// through `v̲(x) + Δ(x,a;y) − W^{(r,q)}(x,a)/W^{(r,q)}(b,a) · Δ(b,a;y)`.
pub fn two_sided_value(ctx: &Context, y: f64, a: f64, b: f64, x: f64) -> Result<f64> {
    check_two_sided(ctx, y, a, b, x)?;
    let tr = ctx.two_rate(y);
    let ratio = tr.eval_unchecked(x, a) / tr.eval_unchecked(b, a);
    Ok(v_under(ctx, x) + delta_unchecked(ctx, y, a, x) - ratio * delta_unchecked(ctx, y, a, b))
}

/// The same value by direct quadrature against the resolvent kernel
/// `u^{(r,q)}(x, w; y, a, b)`.
pub fn two_sided_value_kernel(ctx: &Context, y: f64, a: f64, b: f64, x: f64) -> Result<f64> {
    check_two_sided(ctx, y, a, b, x)?;
    let tr = ctx.two_rate(y);
    let ratio = tr.eval_unchecked(x, a) / tr.eval_unchecked(b, a);
    let below = quad(
        |w| (ratio * tr.eval_unchecked(b, w) - tr.eval_unchecked(x, w)) * (-chi_gap(ctx, w)),
        a,
        y,
        &[x, ctx.k_under],
    );
    let above = quad(
        |w| (ratio * ctx.w(b - w, 0) - ctx.w(x - w, 0)) * chi_fn(ctx, w),
        y,
        b,
        &[x, ctx.k_under],
    );
    Ok(v_under(ctx, x) + below + above)
}

/// `E_x[e^{−A_τ} 1{T_b^+ < T_a^−}] = W^{(r,q)}(x,a)/W^{(r,q)}(b,a)`.
pub fn up_hit_discount(ctx: &Context, y: f64, a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a <= y && y <= b && x <= b) {
        return Err(Error::DomainError(format!("up-hit needs a <= y <= b, x <= b; got a={a}, y={y}, b={b}, x={x}")));
    }
    let tr = ctx.two_rate(y);
    Ok(tr.eval_unchecked(x, a) / tr.eval_unchecked(b, a))
}

/// Value of never stopping in the martingale case,
/// `(Φ(r+q) − 1)/Φ′(r) · e^y · I^{(r,q)}(x − y)`.
pub fn v_infinity_fn(ctx: &Context, y: f64, x: f64) -> Result<f64> {
    ctx.require_martingale("V_inf")?;
    Ok((ctx.phi_rq - 1.0) / ctx.phi_r_prime * y.exp() * ctx.i(x - y, 0))
}

/// `Δ_∞(a; y) = ∫_a^y T^{(r,q)}(w)(χ(w) − q v̲(w)) dw + ∫_y^∞ e^{−w} χ(w) dw`.
pub fn delta_infinity_fn(ctx: &Context, y: f64, a: f64) -> Result<f64> {
    ctx.require_martingale("Delta_inf")?;
    if !(a >= ctx.k_under && a <= y && y >= ctx.k_under) {
        return Err(Error::DomainError(format!("Delta_inf needs k_under <= a <= y, got a={a}, y={y}")));
    }
    let tr = ctx.two_rate(y);
    let body = quad(|w| -tr.t_kernel(w) * chi_gap(ctx, w), a, y, &[]);
    let tail_f: f64 = ctx
        .f_terms()
        .iter()
        .map(|&(b, eta)| b * (eta * (ctx.k_under - y)).exp() * (-y).exp() / (1.0 + eta))
        .sum();
    Ok(body + ctx.r * ctx.strike * (-y).exp() + tail_f)
}

/// Shape of the stopping region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Empty,
    Ray,
    PointPlusRay,
    IntervalPlusRay,
    Interval,
    Point,
}

/// Closed interval in log-price; `hi = +∞` marks the ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    #[serde(with = "crate::export::extended_f64")]
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRegion {
    pub intervals: Vec<Interval>,
    pub shape: Shape,
}

impl StoppingRegion {
    pub fn empty() -> Self {
        StoppingRegion {
            intervals: Vec::new(),
            shape: Shape::Empty,
        }
    }

    pub fn ray(lo: f64) -> Self {
        StoppingRegion {
            intervals: vec![Interval { lo, hi: f64::INFINITY }],
            shape: Shape::Ray,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|iv| x >= iv.lo && x <= iv.hi)
    }

    /// Lowest point of the region, if any.
    pub fn lower_end(&self) -> Option<f64> {
        self.intervals.first().map(|iv| iv.lo)
    }

    /// Sortedness, disjointness and a single trailing ray.
    pub fn is_well_formed(&self) -> bool {
        let n = self.intervals.len();
        self.intervals.iter().enumerate().all(|(i, iv)| {
            iv.lo <= iv.hi && (iv.hi.is_finite() || i + 1 == n) && (i == 0 || self.intervals[i - 1].hi < iv.lo)
        })
    }
}

/// Thresholds relevant to a single level `y`; absent ones are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelThresholds {
    pub k_under: Option<f64>,
    pub k_over: Option<f64>,
    #[serde(with = "crate::export::opt_extended_f64")]
    pub u_bar: Option<f64>,
    pub y_tilde: Option<f64>,
    pub y_m: Option<f64>,
    pub z_star: Option<f64>,
    pub a_star: Option<f64>,
    pub b_star: Option<f64>,
    pub y_inf: Option<f64>,
    pub a_inf: Option<f64>,
}

/// How the value function is evaluated for a given level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueRule {
    /// `r < ψ(1)`: the value is infinite.
    Infinite,
    /// `U(x; y, z)`.
    UpCrossing { z: f64 },
    /// `v̲`.
    Under,
    /// `v̲ + 1{a < x < b} Δ(x, a; y)`.
    TwoSided { a: f64, b: f64 },
    /// `V_∞` (martingale case, empty or single-point region).
    WaitForever,
    /// `v̲ + 1{x > a} Δ(x, a; y)` (martingale case).
    LowerBand { a: f64 },
}

/// Optimal stopping region and value rule for one level `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub y: f64,
    pub region: StoppingRegion,
    pub rule: ValueRule,
    pub thresholds: LevelThresholds,
    pub regime: RegimeReport,
}

impl Solution {
    /// `v(x; y)`, or `None` when the value is infinite.
    pub fn value(&self, ctx: &Context, x: f64) -> Option<f64> {
        let y = self.y;
        Some(match self.rule {
            ValueRule::Infinite => return None,
            ValueRule::UpCrossing { z } => u_fn(ctx, y, z, x),
            ValueRule::Under => v_under(ctx, x),
            ValueRule::TwoSided { a, b } => {
                if x > a && x < b {
                    v_under(ctx, x) + delta_unchecked(ctx, y, a, x)
                } else {
                    v_under(ctx, x)
                }
            }
            ValueRule::WaitForever => v_infinity_fn(ctx, y, x).ok()?,
            ValueRule::LowerBand { a } => {
                if x > a {
                    v_under(ctx, x) + delta_unchecked(ctx, y, a, x)
                } else {
                    v_under(ctx, x)
                }
            }
        })
    }

    pub fn infinite_value(&self) -> bool {
        self.rule == ValueRule::Infinite
    }
}

/// Solves the stopping problem at level `y`.
pub fn solve(ctx: &Context, y: f64) -> Result<Solution> {
    let regime = ctx.regime_report()?;
    let mut th = LevelThresholds {
        u_bar: regime.u_bar,
        ..Default::default()
    };
    if ctx.k_under.is_finite() {
        th.k_under = Some(ctx.k_under);
    }
    if ctx.k_over.is_finite() {
        th.k_over = Some(ctx.k_over);
    }
    let (region, rule) = match ctx.class {
        MartingaleClass::SubMartingale => (StoppingRegion::empty(), ValueRule::Infinite),
        MartingaleClass::Martingale => {
            let y_inf = thresholds::find_y_infinity(ctx)?;
            th.y_inf = Some(y_inf);
            if y < y_inf - LEVEL_EQ_TOL {
                (StoppingRegion::empty(), ValueRule::WaitForever)
            } else if y <= y_inf + LEVEL_EQ_TOL {
                let region = StoppingRegion {
                    intervals: vec![Interval { lo: ctx.k_under, hi: ctx.k_under }],
                    shape: Shape::Point,
                };
                (region, ValueRule::WaitForever)
            } else {
                let a = thresholds::find_a_infinity(ctx, y)?;
                th.a_inf = Some(a);
                let region = StoppingRegion {
                    intervals: vec![Interval { lo: ctx.k_under, hi: a }],
                    shape: Shape::Interval,
                };
                (region, ValueRule::LowerBand { a })
            }
        }
        MartingaleClass::SuperMartingale => {
            let u_bar = thresholds::find_u_bar(ctx)?;
            let y_m = thresholds::find_y_m(ctx)?;
            th.y_m = Some(y_m);
            if u_bar == f64::NEG_INFINITY {
                if y < ctx.k_under {
                    let z = thresholds::z_star(ctx, y)?;
                    th.z_star = Some(z);
                    (StoppingRegion::ray(z), ValueRule::UpCrossing { z })
                } else {
                    th.z_star = Some(ctx.k_under);
                    (StoppingRegion::ray(ctx.k_under), ValueRule::Under)
                }
            } else {
                let y_tilde = thresholds::find_y_tilde(ctx)?;
                th.y_tilde = Some(y_tilde);
                if y < y_tilde - LEVEL_EQ_TOL {
                    let z = thresholds::z_star(ctx, y)?;
                    th.z_star = Some(z);
                    (StoppingRegion::ray(z), ValueRule::UpCrossing { z })
                } else if y <= y_tilde + LEVEL_EQ_TOL {
                    let z = thresholds::z_star(ctx, y_tilde)?;
                    th.z_star = Some(z);
                    let region = StoppingRegion {
                        intervals: vec![
                            Interval { lo: ctx.k_under, hi: ctx.k_under },
                            Interval { lo: z, hi: f64::INFINITY },
                        ],
                        shape: Shape::PointPlusRay,
                    };
                    (region, ValueRule::UpCrossing { z })
                } else if y < y_m {
                    let pair = thresholds::find_pair(ctx, y)?;
                    th.a_star = Some(pair.a_star);
                    th.b_star = Some(pair.b_star);
                    let region = StoppingRegion {
                        intervals: vec![
                            Interval { lo: ctx.k_under, hi: pair.a_star },
                            Interval { lo: pair.b_star, hi: f64::INFINITY },
                        ],
                        shape: Shape::IntervalPlusRay,
                    };
                    (region, ValueRule::TwoSided { a: pair.a_star, b: pair.b_star })
                } else {
                    (StoppingRegion::ray(ctx.k_under), ValueRule::Under)
                }
            }
        }
    };
    Ok(Solution {
        y,
        region,
        rule,
        thresholds: th,
        regime,
    })
}

/// One tabulated point of the value function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub x: f64,
    pub price: f64,
    /// `None` when the value is infinite.
    pub v: Option<f64>,
    pub payoff: f64,
    pub in_region: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueProfile {
    pub y: f64,
    pub rows: Vec<ProfileRow>,
    pub solution: Solution,
}

impl ValueProfile {
    pub fn infinite_value(&self) -> bool {
        self.solution.infinite_value()
    }
}

/// Default tabulation grid: 600 points over `[k̲ − 2, k̄ + 0.5]`; in the
/// martingale case `k̄` is replaced by `y + 1`.
pub fn default_grid(ctx: &Context, y: f64, n: usize) -> Vec<f64> {
    let hi = if ctx.k_over.is_finite() { ctx.k_over + 0.5 } else { ctx.k_under.max(y) + 1.5 };
    let lo = if ctx.k_under.is_finite() { ctx.k_under - 2.0 } else { ctx.strike.ln() - 2.0 };
    crate::numerics::linspace(lo, hi, n)
}

/// Tabulates `v(·; y)` on `grid`.
pub fn value_profile(ctx: &Context, y: f64, grid: &[f64]) -> Result<ValueProfile> {
    use rayon::prelude::*;
    let solution = solve(ctx, y)?;
    let rows = grid
        .par_iter()
        .map(|&x| {
            let payoff = (x.exp() - ctx.strike).max(0.0);
            let in_region = solution.region.contains(x);
            let v = if in_region {
                Some(payoff)
            } else {
                solution.value(ctx, x)
            };
            ProfileRow {
                x,
                price: x.exp(),
                v,
                payoff,
                in_region,
            }
        })
        .collect();
    Ok(ValueProfile { y, rows, solution })
}
