//! Monte Carlo oracle for strategy values under the Omega clock.
//!
//! Paths are simulated step by step: Gaussian increments for the diffusion,
//! exact exponential arrival times for the jumps. A path stops on first entry
//! into a target set; continuous entries between grid points are caught by the
//! Brownian-bridge crossing probability. The discount `A_t = rt + q·(time
//! below y)` uses the trapezoid rule on each sub-step.
//!
//! The step is `dt` near any level of interest (`y` and the target set's
//! endpoints) and grows with the squared distance to the nearest level, so a
//! bridge crossing over a coarse step has probability below `e^{-128}`.
//! Weights `e^{-A}` that fall under a floor are handled by Russian roulette.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::levy::{HyperExpJumps, LevyModel, MartingaleClass, Phase};
use crate::numerics::linspace;
use crate::valuation::{solve, two_sided_value, up_hit_discount, v_infinity_fn, v_under, StoppingRegion, ValueRule};

/// Coarse steps keep the nearest level at least this many standard deviations away.
const FAR_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub x0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Upper bound on a single step far from every level.
    pub max_step: f64,
    /// Roulette floor for the path weight; `0` disables roulette.
    pub roulette_floor: f64,
}

impl PathConfig {
    /// Defaults for rate `r`: horizon with `e^{-r·horizon} = 1e-8`.
    pub fn new(r: f64, n_paths: usize, seed: u64) -> Self {
        PathConfig {
            x0: 0.0,
            horizon: (1e8f64).ln() / r,
            dt: 1e-3,
            n_paths,
            seed,
            antithetic: true,
            max_step: 0.25,
            roulette_floor: 1e-2,
        }
    }

    pub fn with_x0(&self, x0: f64) -> Self {
        PathConfig { x0, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.n_paths == 0 || !(self.horizon >= 0.0) || !(self.max_step >= self.dt) {
            return Err(Error::Config(format!(
                "invalid path config: dt={}, n_paths={}, horizon={}, max_step={}",
                self.dt, self.n_paths, self.horizon, self.max_step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY.copysign(self.mean - target)
            }
        } else {
            (self.mean - target) / self.std_error
        }
    }

    fn scaled(self, c: f64) -> Self {
        McEstimate {
            mean: self.mean * c,
            std_error: self.std_error * c.abs(),
            n: self.n,
        }
    }
}

/// Dynamics plus the clock: discount rate `r` above `y`, `r + q` below.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub gamma: f64,
    pub sigma: f64,
    pub intensity: f64,
    /// Cumulative phase weights paired with the rates.
    phases: Vec<(f64, f64)>,
    pub y: f64,
    pub r: f64,
    pub q: f64,
}

impl Simulator {
    pub fn new(model: &LevyModel, y: f64, r: f64, q: f64) -> Self {
        let mut acc = 0.0;
        let phases = model
            .jumps
            .phases
            .iter()
            .map(|ph| {
                acc += ph.p;
                (acc, ph.eta)
            })
            .collect();
        Simulator {
            gamma: model.gamma,
            sigma: model.sigma,
            intensity: model.jumps.intensity,
            phases,
            y,
            r,
            q,
        }
    }

    fn next_jump_time<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.intensity > 0.0 {
            let e: f64 = rng.sample(Exp1);
            e / self.intensity
        } else {
            f64::INFINITY
        }
    }

    fn jump_size<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let eta = self
            .phases
            .iter()
            .find(|(c, _)| u < *c)
            .or(self.phases.last())
            .map(|&(_, e)| e)
            .unwrap_or(1.0);
        let e: f64 = rng.sample(Exp1);
        e / eta
    }

    /// Time spent below `y` on a sub-step of length `h` from `x0` to `x1`.
    fn occupation(&self, x0: f64, x1: f64, h: f64) -> f64 {
        let below = |x: f64| if x < self.y { 1.0 } else { 0.0 };
        if self.sigma > 0.0 || (x0 < self.y) == (x1 < self.y) {
            0.5 * h * (below(x0) + below(x1))
        } else {
            // Linear path: exact split at the crossing.
            let frac = (self.y - x0) / (x1 - x0);
            if x0 < self.y {
                h * frac
            } else {
                h * (1.0 - frac)
            }
        }
    }
}

/// Position, elapsed time, accumulated discount and time to the next jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub t: f64,
    pub x: f64,
    pub a: f64,
    pub next_jump: f64,
}

impl PathState {
    pub fn start(sim: &Simulator, x0: f64, rng: &mut PathRng) -> Self {
        PathState {
            t: 0.0,
            x: x0,
            a: 0.0,
            next_jump: sim.next_jump_time(&mut rng.events),
        }
    }
}

/// Random streams of one path. Gaussian increments come from a stream shared
/// (with flipped sign) inside an antithetic pair; jumps and bridge uniforms
/// come from a stream of the path's own.
#[derive(Debug, Clone)]
pub struct PathRng {
    gauss: ChaCha8Rng,
    sign: f64,
    events: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, gauss_stream: u64, events_stream: u64, sign: f64) -> Self {
        PathRng {
            gauss: stream_rng(seed, gauss_stream),
            sign,
            events: stream_rng(seed, events_stream),
        }
    }

    /// Path `i` of a run; pairs `(2k, 2k+1)` share Gaussians when `antithetic`.
    pub fn for_path(seed: u64, i: u64, antithetic: bool) -> Self {
        if antithetic {
            let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
            PathRng::new(seed, 2 * (i / 2), 2 * i + 1, sign)
        } else {
            PathRng::new(seed, 2 * i, 2 * i + 1, 1.0)
        }
    }

    fn normal(&mut self) -> f64 {
        let z: f64 = self.gauss.sample(StandardNormal);
        self.sign * z
    }
}

/// Union of closed intervals where the path stops.
#[derive(Debug, Clone, PartialEq)]
pub struct StopSet {
    intervals: Vec<(f64, f64)>,
}

impl StopSet {
    pub fn none() -> Self {
        StopSet { intervals: Vec::new() }
    }

    pub fn new(mut intervals: Vec<(f64, f64)>) -> Self {
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        StopSet { intervals }
    }

    pub fn from_region(region: &StoppingRegion) -> Self {
        Self::new(region.intervals.iter().map(|iv| (iv.lo, iv.hi)).collect())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }

    fn endpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().flat_map(|&(lo, hi)| [lo, hi]).filter(|v| v.is_finite())
    }

    /// Nearest endpoint strictly above `x` that opens an interval, and the
    /// nearest one strictly below that closes an interval.
    fn neighbours(&self, x: f64) -> (Option<f64>, Option<f64>) {
        let up = self.intervals.iter().map(|&(lo, _)| lo).filter(|&lo| lo > x).fold(None, |m: Option<f64>, v| {
            Some(m.map_or(v, |m| m.min(v)))
        });
        let down = self.intervals.iter().map(|&(_, hi)| hi).filter(|&hi| hi < x).fold(None, |m: Option<f64>, v| {
            Some(m.map_or(v, |m| m.max(v)))
        });
        (up, down)
    }
}

/// Advances a continuous (jump-free) sub-step of length `h`; returns the entry
/// point when the path enters `stop`.
fn diffuse<R: Rng>(
    sim: &Simulator,
    st: &mut PathState,
    h: f64,
    z: f64,
    stop: &StopSet,
    rng: &mut R,
) -> Option<f64> {
    let x0 = st.x;
    let x1 = x0 + sim.gamma * h + sim.sigma * h.sqrt() * z;
    let (up, down) = stop.neighbours(x0);

    // Entry at a grid point or by straddling an interval.
    let straddle = match (up, down) {
        (Some(u), _) if x1 >= u => Some(u),
        (_, Some(d)) if x1 <= d => Some(d),
        _ => None,
    };
    let entry = straddle.or_else(|| {
        let var = sim.sigma * sim.sigma * h;
        if var == 0.0 {
            return None;
        }
        let p_up = up.map_or(0.0, |u| (-2.0 * (u - x0) * (u - x1) / var).exp());
        let p_down = down.map_or(0.0, |d| (-2.0 * (x0 - d) * (x1 - d) / var).exp());
        if p_up + p_down < 1e-300 {
            return None;
        }
        let v: f64 = rng.random();
        if v < p_up {
            up
        } else if v < p_up + p_down {
            down
        } else {
            None
        }
    });

    match entry {
        Some(level) => {
            // Entry time unknown within the sub-step; charge half of it.
            let used = 0.5 * h;
            st.a += sim.r * used + sim.q * sim.occupation(x0, level, used);
            st.t += used;
            st.x = level;
            Some(level)
        }
        None => {
            st.a += sim.r * h + sim.q * sim.occupation(x0, x1, h);
            st.t += h;
            st.x = x1;
            None
        }
    }
}

/// Advances the path by `dt`, splitting the step at jump times; returns the
/// entry point if the path enters `stop` during the step.
pub fn simulate_step(sim: &Simulator, st: &mut PathState, dt: f64, stop: &StopSet, rng: &mut PathRng) -> Option<f64> {
    debug_assert!(dt > 0.0);
    let mut remaining = dt;
    while st.next_jump < remaining {
        let s = st.next_jump;
        remaining -= s;
        let z = rng.normal();
        if let Some(x) = diffuse(sim, st, s, z, stop, &mut rng.events) {
            return Some(x);
        }
        st.x -= sim.jump_size(&mut rng.events);
        st.next_jump = sim.next_jump_time(&mut rng.events);
        if stop.contains(st.x) {
            return Some(st.x);
        }
    }
    st.next_jump -= remaining;
    let z = rng.normal();
    diffuse(sim, st, remaining, z, stop, &mut rng.events)
}

/// Step length: `dt` near a level, growing as the squared distance otherwise.
fn step_size(sim: &Simulator, x: f64, levels: &[f64], cfg: &PathConfig) -> f64 {
    if sim.sigma == 0.0 {
        return cfg.dt;
    }
    let d = levels.iter().map(|&l| (x - l).abs()).fold(f64::INFINITY, f64::min);
    let h = (d / (FAR_SIGMAS * sim.sigma)).powi(2);
    h.clamp(cfg.dt, cfg.max_step)
}

/// One path: discounted payoff at the first entry into `stop`, `0` past the
/// horizon.
fn run_path<P: Fn(f64) -> f64>(
    sim: &Simulator,
    stop: &StopSet,
    payoff: &P,
    cfg: &PathConfig,
    rng: &mut PathRng,
) -> f64 {
    if stop.contains(cfg.x0) {
        return payoff(cfg.x0);
    }
    let mut levels: Vec<f64> = stop.endpoints().collect();
    levels.push(sim.y);
    let mut st = PathState::start(sim, cfg.x0, rng);
    // log of the roulette boost on top of e^{-A}
    let mut log_boost = 0.0;
    let result = loop {
        if st.t >= cfg.horizon {
            break 0.0;
        }
        let h = step_size(sim, st.x, &levels, cfg).min(cfg.horizon - st.t);
        if let Some(x) = simulate_step(sim, &mut st, h, stop, rng) {
            break (log_boost - st.a).exp() * payoff(x);
        }
        if cfg.roulette_floor > 0.0 {
            let w = (log_boost - st.a).exp();
            if w < cfg.roulette_floor {
                let u: f64 = rng.events.random();
                if u * cfg.roulette_floor >= w {
                    break 0.0;
                }
                log_boost = st.a + cfg.roulette_floor.ln();
            }
        }
    };
    let tol = 1e-9 * (1.0 + st.t);
    assert!(
        st.a >= sim.r * st.t - tol && st.a <= (sim.r + sim.q) * st.t + tol,
        "clock bound violated: A={}, t={}",
        st.a,
        st.t
    );
    result
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (l, r) = v.split_at(v.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean and standard error of the discounted payoff over `cfg.n_paths`
/// paths; antithetic pairs are averaged before the variance is taken.
pub fn estimate<P: Fn(f64) -> f64 + Sync>(sim: &Simulator, stop: &StopSet, payoff: P, cfg: &PathConfig) -> Result<McEstimate> {
    cfg.validate()?;
    let samples: Vec<f64> = if cfg.antithetic {
        let pairs = cfg.n_paths.div_ceil(2);
        (0..pairs as u64)
            .into_par_iter()
            .map(|i| {
                let a = run_path(sim, stop, &payoff, cfg, &mut PathRng::for_path(cfg.seed, 2 * i, true));
                let b = run_path(sim, stop, &payoff, cfg, &mut PathRng::for_path(cfg.seed, 2 * i + 1, true));
                0.5 * (a + b)
            })
            .collect()
    } else {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| run_path(sim, stop, &payoff, cfg, &mut PathRng::for_path(cfg.seed, i, false)))
            .collect()
    };
    let m = samples.len() as f64;
    let mean = pairwise_sum(&samples) / m;
    let sq: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
    let var = if samples.len() > 1 { pairwise_sum(&sq) / (m - 1.0) } else { 0.0 };
    Ok(McEstimate {
        mean,
        std_error: (var / m).sqrt(),
        n: cfg.n_paths,
    })
}

/// `E_x[e^{-A(T_z^+)}]`.
pub fn estimate_upcross_discount(ctx: &Context, x: f64, z: f64, y: f64, cfg: &PathConfig) -> Result<McEstimate> {
    let sim = Simulator::new(&ctx.model, y, ctx.r, ctx.q);
    estimate(&sim, &StopSet::new(vec![(z, f64::INFINITY)]), |_| 1.0, &cfg.with_x0(x))
}

/// `E_x[e^{-A(τ)} v̲(X_τ)]` with `τ` the first exit from `(a, b)`; `b = ∞`
/// waits for the down-crossing only.
pub fn estimate_two_sided(ctx: &Context, x: f64, y: f64, a: f64, b: f64, cfg: &PathConfig) -> Result<McEstimate> {
    let sim = Simulator::new(&ctx.model, y, ctx.r, ctx.q);
    let mut iv = vec![(f64::NEG_INFINITY, a)];
    if b.is_finite() {
        iv.push((b, f64::INFINITY));
    }
    estimate(&sim, &StopSet::new(iv), |x| v_under(ctx, x), &cfg.with_x0(x))
}

/// `E_x[e^{-A(T_b^+)}; T_b^+ < T_a^-]`.
pub fn estimate_up_hit(ctx: &Context, x: f64, y: f64, a: f64, b: f64, cfg: &PathConfig) -> Result<McEstimate> {
    let sim = Simulator::new(&ctx.model, y, ctx.r, ctx.q);
    let stop = StopSet::new(vec![(f64::NEG_INFINITY, a), (b, f64::INFINITY)]);
    estimate(&sim, &stop, |x| if x >= b { 1.0 } else { 0.0 }, &cfg.with_x0(x))
}

/// `E_x[e^{-A(τ)}(e^{X_τ} − K)^+]` with `τ` the first entry into `region`.
/// An overshoot below every component simply keeps the path running until it
/// re-enters, which is the re-adjustment to the region's lowest point.
pub fn estimate_region_strategy(
    ctx: &Context,
    x: f64,
    y: f64,
    region: &StoppingRegion,
    cfg: &PathConfig,
) -> Result<McEstimate> {
    if !region.is_well_formed() {
        return Err(Error::DomainError("stopping region is not well formed".into()));
    }
    let sim = Simulator::new(&ctx.model, y, ctx.r, ctx.q);
    let k = ctx.strike;
    estimate(&sim, &StopSet::from_region(region), |x| (x.exp() - k).max(0.0), &cfg.with_x0(x))
}

/// Model under the measure with density `e^{X_t − x − ψ(1)t}`.
pub fn esscher_model(model: &LevyModel) -> Result<LevyModel> {
    let lam = model.jumps.intensity;
    let weights: Vec<f64> = model.jumps.phases.iter().map(|ph| ph.p * ph.eta / (ph.eta + 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let jumps = if lam == 0.0 {
        HyperExpJumps::none()
    } else {
        HyperExpJumps {
            intensity: lam * total,
            phases: model
                .jumps
                .phases
                .iter()
                .zip(&weights)
                .map(|(ph, w)| Phase {
                    p: w / total,
                    eta: ph.eta + 1.0,
                })
                .collect(),
        }
    };
    LevyModel::new(model.gamma + model.sigma * model.sigma, model.sigma, jumps)
}

/// Value of never stopping in the martingale case, `lim E_x[e^{-A_t} e^{X_t}]`,
/// as `e^x E¹[e^{−q·(time below y)}]` under the tilted measure. Paths stop
/// once `X` clears `y + margin`; the neglected return probability decays like
/// `e^{-margin}`.
pub fn estimate_never_stop(ctx: &Context, x: f64, y: f64, margin: f64, cfg: &PathConfig) -> Result<McEstimate> {
    ctx.require_martingale("never-stop value")?;
    let tilted = esscher_model(&ctx.model)?;
    let sim = Simulator::new(&tilted, y, 0.0, ctx.q);
    let stop = StopSet::new(vec![(y + margin, f64::INFINITY)]);
    let est = estimate(&sim, &stop, |_| 1.0, &cfg.with_x0(x))?;
    Ok(est.scaled(x.exp()))
}

/// One analytic value against its Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCheck {
    pub name: String,
    pub x: f64,
    pub analytic: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub n: usize,
}

impl McCheck {
    pub fn new(name: &str, x: f64, analytic: f64, est: McEstimate) -> Self {
        McCheck {
            name: name.into(),
            x,
            analytic,
            mean: est.mean,
            std_error: est.std_error,
            z_score: est.z_score(analytic),
            n: est.n,
        }
    }
}

/// Three continuation points between `k̲ − 1` and the start of the top ray.
pub fn interior_points(ctx: &Context, region: &StoppingRegion) -> Vec<f64> {
    let top = region.intervals.last().map_or(ctx.k_under + 1.0, |iv| iv.lo);
    let cands: Vec<f64> = linspace(ctx.k_under - 1.0, top, 41)
        .into_iter()
        .filter(|&x| !region.contains(x))
        .collect();
    if cands.is_empty() {
        return Vec::new();
    }
    let n = cands.len();
    let mut pts = vec![cands[n / 4], cands[n / 2], cands[(3 * n) / 4]];
    pts.dedup();
    pts
}

/// The checks that apply at level `y`: the up-crossing discount, the
/// strategy-specific identities and the optimal value at interior points.
pub fn standard_checks(ctx: &Context, y: f64, cfg: &PathConfig) -> Result<Vec<McCheck>> {
    ctx.require_finite_value("Monte Carlo verification")?;
    let mut out = Vec::new();
    // Independent streams per check.
    let mut k = 0u64;
    let mut next = || {
        k += 1;
        PathConfig { seed: cfg.seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15), ..cfg.clone() }
    };
    let (x, z) = (y + 0.2, y + 0.9);
    out.push(McCheck::new(
        "upcross_discount",
        x,
        ctx.i(x - y, 0) / ctx.i(z - y, 0),
        estimate_upcross_discount(ctx, x, z, y, &next())?,
    ));
    let sol = solve(ctx, y)?;
    if ctx.class == MartingaleClass::Martingale {
        let x = y;
        out.push(McCheck::new(
            "never_stop",
            x,
            v_infinity_fn(ctx, y, x)?,
            estimate_never_stop(ctx, x, y, 15.0, &PathConfig { roulette_floor: 0.0, horizon: 1e4, ..next() })?,
        ));
        return Ok(out);
    }
    match sol.rule {
        ValueRule::UpCrossing { z } => {
            let x = z - 1.0;
            let est = estimate_region_strategy(ctx, x, y, &StoppingRegion::ray(z), &next())?;
            out.push(McCheck::new("upcross_value", x, sol.value(ctx, x).unwrap_or(f64::NAN), est));
        }
        ValueRule::TwoSided { a, b } => {
            let x = 0.5 * (a + b);
            out.push(McCheck::new("up_hit", x, up_hit_discount(ctx, y, a, b, x)?, estimate_up_hit(ctx, x, y, a, b, &next())?));
            out.push(McCheck::new(
                "two_sided",
                x,
                two_sided_value(ctx, y, a, b, x)?,
                estimate_two_sided(ctx, x, y, a, b, &next())?,
            ));
        }
        _ => {}
    }
    for x in interior_points(ctx, &sol.region) {
        let est = estimate_region_strategy(ctx, x, y, &sol.region, &next())?;
        out.push(McCheck::new("optimal_value", x, sol.value(ctx, x).unwrap_or(f64::NAN), est));
    }
    Ok(out)
}
