//! Per-problem cache: model, rates, strike, scale functions and the
//! thresholds derived from them.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::levy::{self, martingale_class, phi, LevyModel, MartingaleClass, RegimeReport};
use crate::numerics::Tolerances;
use crate::scale::{build_i, build_scale, build_scale_with_phi, hazard, ExponentialSumScale, OccupationKernel, TwoRateScale};

/// Everything that depends on `(model, r, q, K)` but not on the level `y`.
#[derive(Debug)]
pub struct Context {
    pub model: LevyModel,
    pub r: f64,
    pub q: f64,
    pub strike: f64,
    pub tol: Tolerances,
    pub class: MartingaleClass,
    pub psi_1: f64,
    /// `Φ(r)`, pinned to exactly 1 in the martingale case.
    pub phi_r: f64,
    pub phi_rq: f64,
    /// `Φ′(r) = 1/ψ′(Φ(r))`.
    pub phi_r_prime: f64,
    /// `log K̲`, the exercise level at constant rate `r + q`.
    pub k_under: f64,
    /// `log K̄` at constant rate `r`; `+∞` outside the super-martingale case.
    pub k_over: f64,
    pub scale_r: ExponentialSumScale,
    pub scale_rq: ExponentialSumScale,
    pub kernel: OccupationKernel,
    /// `f(x) = Σ B_i e^{η_i(k̲ − x)}` on `[k̲, ∞)`, stored as `(B_i, η_i)`.
    f_terms: Vec<(f64, f64)>,
    pub(crate) cache: Cache,
}

#[derive(Debug, Default)]
pub(crate) struct Cache {
    pub u_bar: OnceLock<f64>,
    pub y_bar: OnceLock<f64>,
    pub y0: OnceLock<Result<f64>>,
    pub y_tilde: OnceLock<Result<f64>>,
    pub y_m: OnceLock<Result<f64>>,
}

impl Context {
    pub fn new(model: LevyModel, r: f64, q: f64, strike: f64) -> Result<Self> {
        Self::with_tolerances(model, r, q, strike, Tolerances::default())
    }

    pub fn with_tolerances(model: LevyModel, r: f64, q: f64, strike: f64, tol: Tolerances) -> Result<Self> {
        model.validate()?;
        for (name, v) in [("r", r), ("q", q), ("strike_K", strike)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidModel(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let class = martingale_class(&model, r);
        let psi_1 = model.psi_raw(1.0);
        let phi_rq = phi(&model, r + q)?;
        let (phi_r, scale_r) = match class {
            MartingaleClass::Martingale => (1.0, build_scale_with_phi(&model, r, 1.0)?),
            _ => {
                let s = build_scale(&model, r)?;
                (s.phi_r, s)
            }
        };
        let phi_r_prime = 1.0 / model.psi_prime(phi_r);
        let scale_rq = build_scale(&model, r + q)?;
        let kernel = build_i(&scale_r, q, phi_rq);

        let k_under = if phi_rq > 1.0 {
            (phi_rq * strike / (phi_rq - 1.0)).ln()
        } else {
            f64::NAN
        };
        let k_over = match class {
            MartingaleClass::SuperMartingale => (phi_r * strike / (phi_r - 1.0)).ln(),
            _ => f64::INFINITY,
        };

        let big_k_under = k_under.exp();
        let a = big_k_under - strike;
        let lam = model.jumps.intensity;
        let f_terms = model
            .jumps
            .phases
            .iter()
            .map(|ph| {
                let e = ph.eta;
                let b = lam * ph.p * (e * a / (phi_rq + e) - e * big_k_under / (1.0 + e) + strike);
                (b, e)
            })
            .collect();

        Ok(Context {
            model,
            r,
            q,
            strike,
            tol,
            class,
            psi_1,
            phi_r,
            phi_rq,
            phi_r_prime,
            k_under,
            k_over,
            scale_r,
            scale_rq,
            kernel,
            f_terms,
            cache: Cache::default(),
        })
    }

    pub fn require_super(&self, what: &str) -> Result<()> {
        if self.class != MartingaleClass::SuperMartingale {
            return Err(Error::RegimeError(format!("{what} requires r > psi(1)")));
        }
        Ok(())
    }

    pub fn require_martingale(&self, what: &str) -> Result<()> {
        if self.class != MartingaleClass::Martingale {
            return Err(Error::RegimeError(format!("{what} requires r = psi(1)")));
        }
        Ok(())
    }

    pub fn require_finite_value(&self, what: &str) -> Result<()> {
        if self.class == MartingaleClass::SubMartingale {
            return Err(Error::RegimeError(format!("{what} is undefined when r < psi(1)")));
        }
        Ok(())
    }

    /// `K̲ = e^{k̲}`.
    pub fn big_k_under(&self) -> f64 {
        self.k_under.exp()
    }

    /// `K̄ = e^{k̄}`.
    pub fn big_k_over(&self) -> f64 {
        self.k_over.exp()
    }

    pub fn w(&self, x: f64, order: u32) -> f64 {
        self.scale_r.eval(x, order)
    }

    pub fn w_rq(&self, x: f64, order: u32) -> f64 {
        self.scale_rq.eval(x, order)
    }

    pub fn i(&self, x: f64, order: u32) -> f64 {
        self.kernel.eval(x, order)
    }

    pub fn hazard(&self, x: f64) -> f64 {
        hazard(&self.scale_r, &self.kernel, x)
    }

    pub fn two_rate(&self, y: f64) -> TwoRateScale<'_> {
        TwoRateScale {
            w_r: &self.scale_r,
            w_rq: &self.scale_rq,
            q: self.q,
            y,
        }
    }

    pub(crate) fn f_terms(&self) -> &[(f64, f64)] {
        &self.f_terms
    }

    /// Regime classification; computes `ū` in the super-martingale case.
    pub fn regime_report(&self) -> Result<RegimeReport> {
        let cond1 = self.class == MartingaleClass::SuperMartingale && levy::cond1(&self.model, self.r, self.q)?;
        let u_bar = match self.class {
            MartingaleClass::SuperMartingale => Some(crate::thresholds::find_u_bar(self)?),
            _ => None,
        };
        Ok(RegimeReport {
            martingale_class: self.class,
            variation: self.model.variation(),
            cond1_holds: cond1,
            u_bar,
            hypothesis1: levy::Hypothesis1::Implied,
            psi_1: self.psi_1,
            phi_r: self.phi_r,
            phi_rq: self.phi_rq,
            zero_sigma: self.model.sigma == 0.0,
        })
    }
}
