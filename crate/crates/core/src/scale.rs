//! Scale functions of the hyper-exponential model as exponential sums.
//!
//! `W^{(r)}` has the rational Laplace transform `1/(ψ(β) − r)`; partial
//! fractions give `W^{(r)}(x) = Σ c_j e^{ζ_j x}` for `x ≥ 0`. The occupation
//! kernel `I^{(r,q)}`, the hazard `Λ̄` and the two-rate function
//! `W^{(r,q)}(x, a)` all inherit closed forms from that representation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::levy::{phi, LevyModel};
use crate::numerics::{integrate_with_breaks, poly_eval, polynomial_roots};

/// Roots closer than this are treated as repeated.
pub const REPEATED_ROOT_TOL: f64 = 1e-9;

/// `(e^{δL} − 1)/δ`, stable for small `δL`.
fn expm1_ratio(delta: Complex64, len: f64) -> Complex64 {
    let t = delta * len;
    if t.norm() < 1e-3 {
        len * (1.0 + t / 2.0 + t * t / 6.0 + t * t * t / 24.0)
    } else {
        (t.exp() - 1.0) / delta
    }
}

/// `W^{(r)}` as `Σ c_j e^{ζ_j x}` on `[0, ∞)`, zero on `(−∞, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialSumScale {
    pub rate: f64,
    /// Pairs `(c_j, ζ_j)`.
    pub terms: Vec<(Complex64, Complex64)>,
    pub phi_r: f64,
}

/// Builds `W^{(rate)}` by partial-fraction inversion.
pub fn build_scale(model: &LevyModel, rate: f64) -> Result<ExponentialSumScale> {
    let p = phi(model, rate)?;
    build_scale_with_phi(model, rate, p)
}

/// As [`build_scale`] with the dominant exponent pinned to `phi_r`.
pub fn build_scale_with_phi(model: &LevyModel, rate: f64, phi_r: f64) -> Result<ExponentialSumScale> {
    if !(rate > 0.0) {
        return Err(Error::DomainError(format!("scale function needs rate > 0, got {rate}")));
    }
    let (denom, numer) = model.cleared_polynomial(rate);
    let mut roots = polynomial_roots(&denom, 1e-10)?;
    for i in 0..roots.len() {
        for j in 0..i {
            if (roots[i] - roots[j]).norm() < REPEATED_ROOT_TOL {
                return Err(Error::RepeatedRoot(roots[i].re));
            }
        }
    }
    // The companion eigenvalue is accurate to ~1e-15 relative; Φ from the
    // bracketed solver is the reference value.
    let dominant = roots
        .iter()
        .enumerate()
        .filter(|(_, z)| z.im == 0.0)
        .max_by(|a, b| a.1.re.partial_cmp(&b.1.re).unwrap())
        .map(|(i, _)| i)
        .ok_or_else(|| Error::ConvergenceError("no real root in the scale denominator".into()))?;
    if (roots[dominant].re - phi_r).abs() > 1e-6 * phi_r.max(1.0) {
        return Err(Error::ConvergenceError(format!(
            "largest real root {} differs from Phi = {phi_r}",
            roots[dominant].re
        )));
    }
    roots[dominant] = Complex64::new(phi_r, 0.0);

    let dcoef: Vec<f64> = denom.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
    let terms = roots
        .iter()
        .map(|&z| (poly_eval(&numer, z) / poly_eval(&dcoef, z), z))
        .collect();
    Ok(ExponentialSumScale { rate, terms, phi_r })
}

impl ExponentialSumScale {
    /// `d^order/dx^order W(x)`; right derivatives at 0, zero for `x < 0`.
    pub fn eval(&self, x: f64, order: u32) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.eval_complex(x, order).re
    }

    fn eval_complex(&self, x: f64, order: u32) -> Complex64 {
        self.terms
            .iter()
            .map(|&(c, z)| c * z.powu(order) * (z * x).exp())
            .sum()
    }

    /// Largest imaginary residue relative to the value at `x`.
    pub fn imaginary_residue(&self, x: f64) -> f64 {
        let v = self.eval_complex(x, 0);
        v.im.abs() / v.re.abs().max(f64::MIN_POSITIVE)
    }

    /// `e^{−Φ(r)x} W(x)`, accurate for large `x`.
    pub fn eval_scaled(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.terms
            .iter()
            .map(|&(c, z)| c * ((z - self.phi_r) * x).exp())
            .sum::<Complex64>()
            .re
    }
}

/// `I^{(r,q)}(x) = ∫_0^∞ e^{−Φ(r+q)u} W^{(r)}(u + x) du`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationKernel {
    pub r: f64,
    pub q: f64,
    pub phi_rq: f64,
    /// Pairs `(c_j/(Φ(r+q) − ζ_j), ζ_j)`.
    pub terms: Vec<(Complex64, Complex64)>,
}

pub fn build_i(scale_r: &ExponentialSumScale, q: f64, phi_rq: f64) -> OccupationKernel {
    let terms = scale_r
        .terms
        .iter()
        .map(|&(c, z)| (c / (phi_rq - z), z))
        .collect();
    OccupationKernel {
        r: scale_r.rate,
        q,
        phi_rq,
        terms,
    }
}

impl OccupationKernel {
    pub fn eval(&self, x: f64, order: u32) -> f64 {
        if x < 0.0 {
            return self.phi_rq.powi(order as i32) * (self.phi_rq * x).exp() / self.q;
        }
        self.terms
            .iter()
            .map(|&(d, z)| d * z.powu(order) * (z * x).exp())
            .sum::<Complex64>()
            .re
    }
}

/// `Λ̄(x) = Φ(r+q) − W^{(r)}(x)/I^{(r,q)}(x)`.
pub fn hazard(scale_r: &ExponentialSumScale, kernel: &OccupationKernel, x: f64) -> f64 {
    if x < 0.0 {
        return kernel.phi_rq;
    }
    if x > 200.0 {
        // Both terms grow like e^{Φ(r)x}; use the scaled sums.
        let w = scale_r.eval_scaled(x);
        let i: f64 = kernel
            .terms
            .iter()
            .map(|&(d, z)| d * ((z - scale_r.phi_r) * x).exp())
            .sum::<Complex64>()
            .re;
        return kernel.phi_rq - w / i;
    }
    kernel.phi_rq - scale_r.eval(x, 0) / kernel.eval(x, 0)
}

/// The pair `W^{(r)}`, `W^{(r+q)}` with the occupation level `y`, giving
/// `W^{(r,q)}(x, a)` and its limit kernel.
#[derive(Debug, Clone, Copy)]
pub struct TwoRateScale<'a> {
    pub w_r: &'a ExponentialSumScale,
    pub w_rq: &'a ExponentialSumScale,
    pub q: f64,
    pub y: f64,
}

impl TwoRateScale<'_> {
    /// `∫_{lo}^{hi} W^{(r)(order)}(x − z) W^{(r+q)}(z − a) dz` for
    /// `a ≤ lo ≤ hi ≤ x`.
    pub fn convolution(&self, x: f64, a: f64, lo: f64, hi: f64, order: u32) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let len = hi - lo;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(c, z) in &self.w_r.terms {
            let cz = c * z.powu(order);
            for &(d, xi) in &self.w_rq.terms {
                let delta = xi - z;
                let e_lo = z * (x - lo) + xi * (lo - a);
                let part = if (delta * len).norm() < 1e-3 {
                    e_lo.exp() * expm1_ratio(delta, len)
                } else {
                    let e_hi = z * (x - hi) + xi * (hi - a);
                    (e_hi.exp() - e_lo.exp()) / delta
                };
                acc += cz * d * part;
            }
        }
        acc.re
    }

    fn check(&self, a: f64) -> Result<()> {
        if a > self.y {
            return Err(Error::DomainError(format!("W^(r,q) needs a <= y, got a={a}, y={}", self.y)));
        }
        Ok(())
    }

    /// `W^{(r)}(x − a) + q ∫_a^{y} W^{(r)}(x − z) W^{(r+q)}(z − a) dz`.
    pub fn eval(&self, x: f64, a: f64) -> Result<f64> {
        self.check(a)?;
        Ok(self.eval_unchecked(x, a))
    }

    pub(crate) fn eval_unchecked(&self, x: f64, a: f64) -> f64 {
        if x < a {
            return 0.0;
        }
        if x <= self.y {
            return self.w_rq.eval(x - a, 0);
        }
        self.w_r.eval(x - a, 0) + self.q * self.convolution(x, a, a, self.y, 0)
    }

    /// The complementary form `W^{(r+q)}(x − a) − q ∫_y^{x∨y} W^{(r)}(x − z) W^{(r+q)}(z − a) dz`.
    pub fn eval_complement(&self, x: f64, a: f64) -> Result<f64> {
        self.check(a)?;
        if x < a {
            return Ok(0.0);
        }
        Ok(self.w_rq.eval(x - a, 0) - self.q * self.convolution(x, a, self.y, x.max(self.y), 0))
    }

    /// Quadrature version of [`TwoRateScale::eval`], kept as an
    /// independent check of the closed-form convolution.
    pub fn eval_quadrature(&self, x: f64, a: f64) -> Result<f64> {
        self.check(a)?;
        if x <= a {
            return Ok(0.0);
        }
        let hi = self.y.min(x);
        let inner = integrate_with_breaks(
            |z| self.w_r.eval(x - z, 0) * self.w_rq.eval(z - a, 0),
            a,
            hi,
            &[],
            1e-13,
            1e-15,
        )?;
        Ok(self.w_r.eval(x - a, 0) + self.q * inner.value)
    }

    /// `∂_x W^{(r,q)}(x, a)` for `x > a`.
    pub fn eval_dx(&self, x: f64, a: f64) -> f64 {
        if x <= a {
            return 0.0;
        }
        if x <= self.y {
            return self.w_rq.eval(x - a, 1);
        }
        self.w_r.eval(x - a, 1) + self.q * self.convolution(x, a, a, self.y, 1)
    }

    /// `T^{(r,q)}(a) = e^{−a} + q ∫_a^y e^{−z} W^{(r+q)}(z − a) dz`, the
    /// normalized limit of `e^{−b} W^{(r,q)}(b, a)` when `Φ(r) = 1`.
    pub fn t_kernel(&self, a: f64) -> f64 {
        let base = (-a).exp();
        if a >= self.y {
            return base;
        }
        let len = self.y - a;
        let s: Complex64 = self
            .w_rq
            .terms
            .iter()
            .map(|&(d, xi)| d * expm1_ratio(xi - 1.0, len))
            .sum();
        base * (1.0 + self.q * s.re)
    }
}
