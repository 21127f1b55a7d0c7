//! Bracketed root finding, adaptive Gauss–Kronrod quadrature and polynomial
//! root extraction.
//!
//! Everything here is a pure function of its inputs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration cap for [`find_root`].
pub const MAX_ROOT_ITERATIONS: usize = 200;

/// Default tolerances shared by the analytic modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Absolute bracket width at which root searches stop.
    pub root_abs: f64,
    /// Relative accuracy requested from quadrature.
    pub quad_rel: f64,
    /// Absolute accuracy floor for quadrature.
    pub quad_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            root_abs: 1e-12,
            quad_rel: 1e-10,
            quad_abs: 1e-14,
        }
    }
}

/// An interval across which a function changes sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Bracket {
    /// Evaluates `f` at both ends and checks for a sign change.
    pub fn new<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<Self> {
        Self::from_values(lo, hi, f(lo), f(hi))
    }

    pub fn from_values(lo: f64, hi: f64, f_lo: f64, f_hi: f64) -> Result<Self> {
        let b = Bracket { lo, hi, f_lo, f_hi };
        if !(lo < hi) || !f_lo.is_finite() || !f_hi.is_finite() || f_lo * f_hi > 0.0 {
            return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
        }
        Ok(b)
    }
}

/// Brent's method: inverse-quadratic / secant steps with a bisection
/// fallback. Stops once the bracket is narrower than `tol_abs`.
pub fn find_root<F: Fn(f64) -> f64>(f: F, bracket: Bracket, tol_abs: f64) -> Result<f64> {
    if !(tol_abs > 0.0) {
        return Err(Error::DegenerateInput(format!("root tolerance {tol_abs}")));
    }
    let Bracket { lo, hi, f_lo, f_hi } = Bracket::from_values(bracket.lo, bracket.hi, bracket.f_lo, bracket.f_hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }

    let (mut a, mut b, mut c) = (lo, hi, hi);
    let (mut fa, mut fb, mut fc) = (f_lo, f_hi, f_hi);
    let mut d = b - a;
    let mut e = d;

    for _ in 0..MAX_ROOT_ITERATIONS {
        if (fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol_abs;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::DegenerateInput(format!("non-finite function value at {b}")));
        }
    }
    Err(Error::MaxIterations(MAX_ROOT_ITERATIONS))
}

/// Outcome of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub subdivisions: usize,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077589687339226,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

// 10-point Gauss weights, paired with the odd-indexed Kronrod nodes.
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    roundoff_limited: bool,
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = (fc * WGK[10]).abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();

    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (1.0f64).min((200.0 * err / res_asc).powf(1.5));
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    let roundoff_limited = err <= floor;
    if roundoff_limited {
        err = floor;
    }
    Segment {
        a,
        b,
        value,
        error: err,
        roundoff_limited,
    }
}

/// Adaptive Gauss–Kronrod (21-point) quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol_rel: f64) -> Result<QuadratureResult> {
    integrate_with_breaks(f, a, b, &[], tol_rel, Tolerances::default().quad_abs)
}

/// Adaptive quadrature with the interval pre-split at the supplied kink
/// points. Break points outside `(a, b)` are ignored.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol_rel: f64,
    tol_abs: f64,
) -> Result<QuadratureResult> {
    const MAX_SEGMENTS: usize = 2000;
    if !(a <= b) {
        return Err(Error::DomainError(format!("integration bounds reversed: [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            subdivisions: 0,
        });
    }
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
    points.sort_by(|x, y| x.partial_cmp(y).unwrap());
    points.dedup();
    let mut edges = Vec::with_capacity(points.len() + 2);
    edges.push(a);
    edges.extend(points);
    edges.push(b);

    let mut segs: Vec<Segment> = edges.windows(2).map(|w| gk21(&f, w[0], w[1])).collect();
    loop {
        let value: f64 = segs.iter().map(|s| s.value).sum();
        let error: f64 = segs.iter().map(|s| s.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::NonConvergence { a, b, error: f64::INFINITY });
        }
        let target = (tol_rel * value.abs()).max(tol_abs);
        let worst = segs
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.roundoff_limited)
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap())
            .map(|(i, _)| i);
        let done = error <= target || worst.is_none();
        if done {
            return Ok(QuadratureResult {
                value,
                abs_error_estimate: error,
                subdivisions: segs.len(),
            });
        }
        if segs.len() >= MAX_SEGMENTS {
            return Err(Error::NonConvergence { a, b, error });
        }
        let s = segs.swap_remove(worst.unwrap());
        let mid = 0.5 * (s.a + s.b);
        if !(mid > s.a && mid < s.b) {
            // Interval can no longer be split in floating point.
            segs.push(Segment { roundoff_limited: true, ..s });
            continue;
        }
        segs.push(gk21(&f, s.a, mid));
        segs.push(gk21(&f, mid, s.b));
    }
}

/// Evaluates `sum coeffs[k] * z^k` (ascending order) by Horner's rule.
pub fn poly_eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn poly_eval_deriv(coeffs: &[f64], z: Complex64) -> Complex64 {
    let n = coeffs.len();
    (1..n)
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, k| acc * z + coeffs[k] * k as f64)
}

/// All complex roots of the real polynomial `sum coeffs[k] x^k`
/// (coefficients in ascending order), via companion-matrix eigenvalues
/// followed by Newton polishing.
pub fn polynomial_roots(coeffs: &[f64], tol: f64) -> Result<Vec<Complex64>> {
    let last = coeffs.iter().rposition(|&c| c != 0.0);
    let Some(deg) = last else {
        return Err(Error::DegenerateInput("all polynomial coefficients are zero".into()));
    };
    if deg == 0 {
        return Err(Error::DegenerateInput("constant polynomial has no roots".into()));
    }
    if coeffs[..=deg].iter().any(|c| !c.is_finite()) {
        return Err(Error::DegenerateInput("non-finite polynomial coefficient".into()));
    }
    let c = &coeffs[..=deg];
    let lead = c[deg];

    let mut companion = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -c[i] / lead;
    }
    let eig = companion.complex_eigenvalues();

    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut roots: Vec<Complex64> = eig
        .iter()
        .map(|&z0| {
            let z0 = Complex64::new(z0.re, z0.im);
            let mut z = z0;
            let mut best = (poly_eval(c, z).norm(), z);
            for _ in 0..8 {
                let dp = poly_eval_deriv(c, z);
                if dp.norm() == 0.0 {
                    break;
                }
                z -= poly_eval(c, z) / dp;
                let res = poly_eval(c, z).norm();
                if res < best.0 {
                    best = (res, z);
                }
            }
            best.1
        })
        .collect();

    // Snap numerically real roots and enforce exact conjugate pairs.
    for z in roots.iter_mut() {
        if z.im.abs() <= 1e-12 * z.norm().max(1.0) {
            z.im = 0.0;
        }
    }
    roots.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
    let mut i = 0;
    while i < roots.len() {
        if roots[i].im != 0.0 && i + 1 < roots.len() && roots[i + 1].im != 0.0 {
            let re = 0.5 * (roots[i].re + roots[i + 1].re);
            let im = 0.5 * (roots[i].im.abs() + roots[i + 1].im.abs());
            roots[i] = Complex64::new(re, -im);
            roots[i + 1] = Complex64::new(re, im);
            i += 2;
        } else {
            i += 1;
        }
    }

    for z in &roots {
        let res = poly_eval(c, *z).norm();
        if res > tol * norm.max(1.0) * (1.0 + z.norm()).powi(deg as i32) {
            return Err(Error::ConvergenceError(format!(
                "polynomial root {z} has residual {res:e}"
            )));
        }
    }
    Ok(roots)
}

/// Maximizes `f` over the supplied sorted grid, then refines the best cell
/// by golden-section search. Returns `(argmax, max)`.
pub fn grid_golden_max<F: Fn(f64) -> f64>(f: F, grid: &[f64], tol: f64) -> (f64, f64) {
    assert!(!grid.is_empty());
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let (mut best, mut best_v) = (0, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    if grid.len() < 3 {
        return (grid[best], best_v);
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (x, v) = golden_max(&f, lo, hi, tol);
    if v >= best_v {
        (x, v)
    } else {
        (grid[best], best_v)
    }
}

/// Golden-section search for a maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Geometric grid of `n` points from `lo` to `hi` (both positive).
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| lo * ratio.powi(i as i32)).collect()
}

/// Uniform grid of `n` points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + h * i as f64 }).collect()
}
