//! Spectrally negative Lévy model with hyper-exponential downward jumps.
//!
//! The process is `X_t = x + γt + σB_t − Σ Y_i` with `Y_i` drawn from a
//! finite mixture of exponentials arriving at rate `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{find_root, Bracket};

/// One exponential component of the jump-size mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub p: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperExpJumps {
    pub intensity: f64,
    pub phases: Vec<Phase>,
}

impl HyperExpJumps {
    pub fn none() -> Self {
        HyperExpJumps {
            intensity: 0.0,
            phases: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.intensity >= 0.0) || !self.intensity.is_finite() {
            return Err(Error::InvalidModel(format!("jump intensity {}", self.intensity)));
        }
        if self.intensity == 0.0 && self.phases.is_empty() {
            return Ok(());
        }
        if self.phases.is_empty() {
            return Err(Error::InvalidModel("positive jump intensity without phases".into()));
        }
        let mut total = 0.0;
        for (i, ph) in self.phases.iter().enumerate() {
            if !(ph.p > 0.0) || !(ph.eta > 0.0) || !ph.eta.is_finite() {
                return Err(Error::InvalidModel(format!("phase {i}: p={}, eta={}", ph.p, ph.eta)));
            }
            if self.phases[..i].iter().any(|o| o.eta == ph.eta) {
                return Err(Error::InvalidModel(format!("repeated jump rate eta={}", ph.eta)));
            }
            total += ph.p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("phase weights sum to {total}")));
        }
        Ok(())
    }

    /// Mean jump size `Σ p_i/η_i`.
    pub fn mean_size(&self) -> f64 {
        self.phases.iter().map(|ph| ph.p / ph.eta).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variation {
    Bounded,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    /// Drift of the bounded-variation (compound Poisson) form.
    pub gamma: f64,
    pub sigma: f64,
    pub jumps: HyperExpJumps,
}

impl LevyModel {
    pub fn new(gamma: f64, sigma: f64, jumps: HyperExpJumps) -> Result<Self> {
        let m = LevyModel { gamma, sigma, jumps };
        m.validate()?;
        Ok(m)
    }

    /// Brownian motion with drift and no jumps.
    pub fn brownian(gamma: f64, sigma: f64) -> Result<Self> {
        Self::new(gamma, sigma, HyperExpJumps::none())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidModel(format!("gamma={}, sigma={}", self.gamma, self.sigma)));
        }
        self.jumps.validate()?;
        if self.sigma == 0.0 && !(self.gamma > 0.0) {
            return Err(Error::InvalidModel(
                "without a Gaussian part the drift gamma must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Drift `μ` of the Lévy–Itô decomposition with truncation at `|x| < 1`.
    pub fn mu(&self) -> f64 {
        let small_jumps: f64 = self
            .jumps
            .phases
            .iter()
            .map(|ph| ph.p * (1.0 - (-ph.eta).exp() * (1.0 + ph.eta)) / ph.eta)
            .sum();
        self.gamma - self.jumps.intensity * small_jumps
    }

    pub fn variation(&self) -> Variation {
        if self.sigma > 0.0 {
            Variation::Unbounded
        } else {
            Variation::Bounded
        }
    }

    /// `ψ(β)` without the domain check; valid for `β > −min η_i`.
    pub fn psi_raw(&self, beta: f64) -> f64 {
        let jumps: f64 = self
            .jumps
            .phases
            .iter()
            .map(|ph| ph.p * (ph.eta / (ph.eta + beta) - 1.0))
            .sum();
        self.gamma * beta + 0.5 * self.sigma * self.sigma * beta * beta + self.jumps.intensity * jumps
    }

    pub fn psi_prime(&self, beta: f64) -> f64 {
        let jumps: f64 = self
            .jumps
            .phases
            .iter()
            .map(|ph| ph.p * ph.eta / ((ph.eta + beta) * (ph.eta + beta)))
            .sum();
        self.gamma + self.sigma * self.sigma * beta - self.jumps.intensity * jumps
    }

    pub fn psi_second(&self, beta: f64) -> f64 {
        let jumps: f64 = self
            .jumps
            .phases
            .iter()
            .map(|ph| 2.0 * ph.p * ph.eta / (ph.eta + beta).powi(3))
            .sum();
        self.sigma * self.sigma + self.jumps.intensity * jumps
    }

    /// Largest root `Φ(0)` of `ψ(β) = 0`.
    pub fn phi_zero(&self) -> Result<f64> {
        if self.psi_prime(0.0) >= 0.0 {
            return Ok(0.0);
        }
        // ψ dips below zero first; Φ(0) lies beyond the minimizer.
        let mut hi = 1.0;
        while self.psi_raw(hi) <= 0.0 {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::BracketFailure(0.0));
            }
        }
        let lo = self.argmin_psi(hi)?;
        let f = |b: f64| self.psi_raw(b);
        find_root(f, Bracket::new(f, lo, hi)?, 1e-14)
    }

    fn argmin_psi(&self, hi: f64) -> Result<f64> {
        let f = |b: f64| self.psi_prime(b);
        find_root(f, Bracket::new(f, 0.0, hi)?, 1e-14)
    }

    /// Polynomial coefficients (ascending) of `(ψ(β) − rate)·∏(η_i + β)`,
    /// together with the numerator `∏(η_i + β)`.
    pub fn cleared_polynomial(&self, rate: f64) -> (Vec<f64>, Vec<f64>) {
        let mut numer = vec![1.0];
        for ph in &self.jumps.phases {
            numer = poly_mul(&numer, &[ph.eta, 1.0]);
        }
        let quad = [
            -(self.jumps.intensity + rate),
            self.gamma,
            0.5 * self.sigma * self.sigma,
        ];
        let mut denom = poly_mul(&numer, &quad);
        for (i, ph) in self.jumps.phases.iter().enumerate() {
            let mut others = vec![self.jumps.intensity * ph.p * ph.eta];
            for (j, o) in self.jumps.phases.iter().enumerate() {
                if j != i {
                    others = poly_mul(&others, &[o.eta, 1.0]);
                }
            }
            for (k, c) in others.iter().enumerate() {
                denom[k] += c;
            }
        }
        while denom.len() > 1 && *denom.last().unwrap() == 0.0 {
            denom.pop();
        }
        (denom, numer)
    }
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Laplace exponent `ψ(β) = log E[e^{βX_1}]` for `β ≥ 0`.
pub fn laplace_exponent(model: &LevyModel, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidBeta(beta));
    }
    if beta == 0.0 {
        return Ok(0.0);
    }
    Ok(model.psi_raw(beta))
}

/// Right inverse `Φ(rate)`: the largest root of `ψ(β) = rate`.
pub fn phi(model: &LevyModel, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::DomainError(format!("phi requires a positive rate, got {rate}")));
    }
    let lo = model.phi_zero()?;
    let mut hi = lo + 1.0;
    while model.psi_raw(hi) <= rate {
        hi = lo + 2.0 * (hi - lo);
        if hi > 1e6 {
            return Err(Error::BracketFailure(rate));
        }
    }
    let f = |b: f64| model.psi_raw(b) - rate;
    find_root(f, Bracket::new(f, lo, hi)?, 1e-14)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MartingaleClass {
    SuperMartingale,
    Martingale,
    SubMartingale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis1 {
    Implied,
    Assumed,
    Violated,
}

/// Tolerance on `|r − ψ(1)|` below which the martingale case is selected.
pub const MARTINGALE_TOL: f64 = 1e-12;

pub fn martingale_class(model: &LevyModel, r: f64) -> MartingaleClass {
    let d = r - model.psi_raw(1.0);
    if d.abs() <= MARTINGALE_TOL {
        MartingaleClass::Martingale
    } else if d > 0.0 {
        MartingaleClass::SuperMartingale
    } else {
        MartingaleClass::SubMartingale
    }
}

/// `W^{(r)}(0)` and `W^{(r)′}(0+)` from the small-time behaviour of `X`.
pub fn scale_at_zero(model: &LevyModel, r: f64) -> (f64, f64) {
    if model.sigma > 0.0 {
        (0.0, 2.0 / (model.sigma * model.sigma))
    } else {
        let g = model.gamma;
        (1.0 / g, (r + model.jumps.intensity) / (g * g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub martingale_class: MartingaleClass,
    pub variation: Variation,
    pub cond1_holds: bool,
    /// `−∞` when up-crossing strategies stay optimal, `None` outside the
    /// super-martingale case.
    #[serde(with = "crate::export::opt_extended_f64")]
    pub u_bar: Option<f64>,
    pub hypothesis1: Hypothesis1,
    pub psi_1: f64,
    pub phi_r: f64,
    pub phi_rq: f64,
    /// Set when `σ = 0`; the scale function is then only piecewise smooth at 0.
    pub zero_sigma: bool,
}

/// Tests the explicit sufficient and necessary condition for up-crossing
/// strategies to stay optimal.
pub fn cond1(model: &LevyModel, r: f64, q: f64) -> Result<bool> {
    let p = phi(model, r + q)?;
    let (w0, w1) = scale_at_zero(model, r);
    Ok((p - 1.0) * (p - q * w0) - q * w1 >= 0.0)
}

/// Classifies the problem for given rates and strike.
pub fn classify(model: &LevyModel, r: f64, q: f64, k: f64) -> Result<RegimeReport> {
    let ctx = crate::context::Context::new(model.clone(), r, q, k)?;
    ctx.regime_report()
}
