//! The four concrete parameterizations of the iteration -- Original,
//! Optimal, Optimal Time-Independent, and Optimal Aggressive Hedge -- as
//! schedule factories, plus the multiplicative-weights formulation and
//! score-function utilities used to cross-check them.

use crate::engine::LossVector;
use crate::error::{Error, Result};
use crate::schedule::{BetaRule, Schedule, WeightRule};
use crate::simplex::Portfolio;

/// Loss range `[-mu, rho]`: `mu` is the largest gain magnitude, `rho` the
/// largest loss. All parameter formulas consume these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBounds {
    mu: f64,
    rho: f64,
}

impl LossBounds {
    pub fn new(mu: f64, rho: f64) -> Result<Self> {
        if !mu.is_finite() || !rho.is_finite() || mu < 0.0 || rho < 0.0 {
            return Err(Error::param(format!(
                "loss bounds must be finite and nonnegative, got mu={mu}, rho={rho}"
            )));
        }
        if mu + rho <= 0.0 {
            return Err(Error::param("degenerate loss bounds: mu + rho must be positive"));
        }
        Ok(Self { mu, rho })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Width `mu + rho` of the admissible loss interval.
    pub fn sum(&self) -> f64 {
        self.mu + self.rho
    }
}

/// Parameters of a score function `U(z) = gamma^(a z + b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeParams {
    gamma: f64,
    a: f64,
    b: f64,
    bounds: LossBounds,
}

impl HedgeParams {
    pub fn new(gamma: f64, a: f64, b: f64, bounds: LossBounds) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::param(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !(a > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::param(format!(
                "score transform needs a > 0 and finite b, got a={a}, b={b}"
            )));
        }
        Ok(Self { gamma, a, b, bounds })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn bounds(&self) -> &LossBounds {
        &self.bounds
    }

    /// Score function value `U(z) = gamma^(a z + b)`.
    pub fn score(&self, z: f64) -> f64 {
        ((self.a * z + self.b) * self.gamma.ln()).exp()
    }
}

/// Unnormalized product weights, held in the log domain so that runs of
/// 10^5 steps cannot underflow or overflow the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    log_w: Vec<f64>,
}

impl WeightVector {
    /// The uniform start `w_0 = (1/n, ..., 1/n)`.
    pub fn uniform(n: usize) -> Self {
        Self {
            log_w: vec![-(n as f64).ln(); n],
        }
    }

    pub fn from_weights(w: &[f64]) -> Result<Self> {
        if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::state("weights must be positive and finite"));
        }
        Ok(Self {
            log_w: w.iter().map(|x| x.ln()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.log_w.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    /// Literal weights `exp(log w)`. May underflow to zero for display when
    /// the spread of log-weights is extreme; use [`WeightVector::portfolio`]
    /// for anything that feeds computation.
    pub fn weights(&self) -> Vec<f64> {
        self.log_w.iter().map(|x| x.exp()).collect()
    }

    /// Normalized weights as a portfolio (softmax of the log-weights).
    pub fn portfolio(&self) -> Portfolio {
        let top = self.log_w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut w: Vec<f64> = self.log_w.iter().map(|&x| (x - top).exp()).collect();
        let sum: f64 = w.iter().sum();
        for v in &mut w {
            *v /= sum;
        }
        Portfolio::new(w).expect("softmax output is a valid portfolio")
    }
}

/// Upper bound of the score-function condition to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpperBoundForm {
    /// Chord form `1 - (1 - gamma)(z + mu)/(mu + rho)`: tight at both
    /// endpoints for scores of the `gamma^((z+mu)/(mu+rho))` family.
    Chord,
    /// The `1 - (1 - z)(z + mu)/(mu + rho)` form kept for comparison; it is
    /// not endpoint-consistent and fails even the mu=0, rho=1 base case.
    Literal,
}

/// Result of sweeping the score-function condition over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreCheck {
    pub pass: bool,
    /// Largest signed violation across the grid: positive means the
    /// condition is broken somewhere, negative is the tightest margin.
    pub worst_violation: f64,
}

/// Upper bound `L(a, b) = max(|-a mu + b|, |a rho + b|)` on the dual norm of
/// any admissible transformed loss `a z + b`.
pub fn oracle_bound_l(a: f64, b: f64, bounds: &LossBounds) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::param(format!("slope a must be positive, got {a}")));
    }
    Ok(f64::max(
        (-a * bounds.mu() + b).abs(),
        (a * bounds.rho() + b).abs(),
    ))
}

/// Constant schedule `lambda_t = ln(1/gamma)`, `beta_t = 1`: the
/// multiplicative-weights update `w <- w * gamma^(a loss + b)` seen through
/// the dual-averaging lens.
pub fn original_hedge_schedule(params: &HedgeParams) -> Schedule {
    Schedule::new(
        WeightRule::Constant((1.0 / params.gamma()).ln()),
        BetaRule::One,
        params.a(),
        params.b(),
    )
    .expect("validated params yield a valid schedule")
}

/// The horizon-tuned update parameter `gamma = 1/(sqrt(2 ln(n)/T) + 1)` of
/// the classic analysis.
pub fn freund_schapire_gamma(n: usize, horizon: u64) -> Result<f64> {
    check_dims(n, horizon)?;
    Ok(1.0 / ((2.0 * (n as f64).ln() / horizon as f64).sqrt() + 1.0))
}

/// Optimal constant parameterization for a known horizon:
/// `gamma* = exp(-(2/(a*(mu+rho))) sqrt(2 ln(n)/T))`, `b* = a*(mu-rho)/2`.
///
/// The product `ln(1/gamma*) * L(a*, b*)` equals `sqrt(2 ln(n)/T)` whatever
/// `a*` is, so the induced trajectory does not depend on `a*`.
pub fn optimal_hedge_params(
    n: usize,
    horizon: u64,
    bounds: &LossBounds,
    a_star: f64,
) -> Result<HedgeParams> {
    check_dims(n, horizon)?;
    check_a_star(a_star)?;
    let ratio = (2.0 * (n as f64).ln() / horizon as f64).sqrt();
    let gamma = (-(2.0 / (a_star * bounds.sum())) * ratio).exp();
    HedgeParams::new(gamma, a_star, 0.5 * (bounds.mu() - bounds.rho()) * a_star, *bounds)
}

/// Horizon-free variant: constant `lambda_t = ln(1/gamma*)` with
/// `gamma* = exp(-2 sqrt(2 ln n)/(a*(mu+rho)))` and the growing beta
/// recurrence `beta_0 = beta_1 = 1`, `beta_{t+1} = beta_t + 1/beta_t`.
pub fn time_independent_schedule(
    n: usize,
    bounds: &LossBounds,
    a_star: f64,
) -> Result<Schedule> {
    if n < 2 {
        return Err(Error::param(format!("need at least 2 products, got {n}")));
    }
    check_a_star(a_star)?;
    let gamma = (-(2.0 * (2.0 * (n as f64).ln()).sqrt()) / (a_star * bounds.sum())).exp();
    Schedule::new(
        WeightRule::Constant((1.0 / gamma).ln()),
        BetaRule::Recurrence,
        a_star,
        0.5 * (bounds.mu() - bounds.rho()) * a_star,
    )
}

/// Recency-weighted variant: `lambda_t = ln(1/gamma*) (t+1)^2` with
/// `gamma* = exp(-2 sqrt(7 ln n)/(a*(mu+rho)))` and `beta_t = t^2.5`
/// (`beta_0 := 1`; the engine only ever projects with `beta_{t+1}`, so the
/// substitution never touches a trajectory).
pub fn aggressive_schedule(n: usize, bounds: &LossBounds, a_star: f64) -> Result<Schedule> {
    if n < 2 {
        return Err(Error::param(format!("need at least 2 products, got {n}")));
    }
    check_a_star(a_star)?;
    let gamma = (-(2.0 * (7.0 * (n as f64).ln()).sqrt()) / (a_star * bounds.sum())).exp();
    Schedule::new(
        WeightRule::QuadraticRamp((1.0 / gamma).ln()),
        BetaRule::PowTwoPointFive,
        a_star,
        0.5 * (bounds.mu() - bounds.rho()) * a_star,
    )
}

/// One multiplicative-weights step,
/// `w_{t+1,i} = exp(-lambda_t (a loss_i + b)/beta_{t+1}) * w_{t,i}^(beta_t/beta_{t+1})`,
/// computed in the log domain. With `beta = 1` throughout this reduces to
/// the classic `w * gamma^(a loss + b)`.
pub fn hedge_weight_step(
    w: &WeightVector,
    loss: &LossVector,
    schedule: &Schedule,
    t: u64,
) -> Result<WeightVector> {
    if loss.dim() != w.dim() {
        return Err(Error::input(format!(
            "loss vector has {} entries, expected {}",
            loss.dim(),
            w.dim()
        )));
    }
    let lambda = schedule.lambda_at(t);
    let beta_now = schedule.beta_at(t);
    let beta_next = schedule.beta_at(t + 1);
    let (a, b) = (schedule.affine_a(), schedule.affine_b());
    let carry = beta_now / beta_next;
    let log_w = w
        .log_weights()
        .iter()
        .zip(loss.values())
        .map(|(&lw, &l)| -lambda * (a * l + b) / beta_next + carry * lw)
        .collect();
    Ok(WeightVector { log_w })
}

/// Sweeps both inequalities of the score-function condition
/// `gamma^((z+mu)/(mu+rho)) <= U(z) <= upper(z)` over a uniform grid on
/// `[-mu, rho]`.
pub fn score_condition_check(
    params: &HedgeParams,
    grid: usize,
    form: UpperBoundForm,
) -> Result<ScoreCheck> {
    if grid < 2 {
        return Err(Error::param(format!("grid must have at least 2 points, got {grid}")));
    }
    let bounds = params.bounds();
    let (mu, width) = (bounds.mu(), bounds.sum());
    let gamma = params.gamma();
    let mut worst = f64::NEG_INFINITY;
    for k in 0..grid {
        let z = -mu + width * k as f64 / (grid - 1) as f64;
        let q = (z + mu) / width;
        let u = params.score(z);
        let lower = (q * gamma.ln()).exp();
        let upper = match form {
            UpperBoundForm::Chord => 1.0 - (1.0 - gamma) * q,
            UpperBoundForm::Literal => 1.0 - (1.0 - z) * q,
        };
        worst = worst.max(lower - u).max(u - upper);
    }
    Ok(ScoreCheck {
        pass: worst <= 1e-12,
        worst_violation: worst,
    })
}

/// The four shipped parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Original,
    Optimal,
    TimeIndependent,
    Aggressive,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Original,
        Variant::Optimal,
        Variant::TimeIndependent,
        Variant::Aggressive,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Optimal => "optimal",
            Variant::TimeIndependent => "time-independent",
            Variant::Aggressive => "aggressive",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag.trim() {
            "original" | "fs" => Ok(Variant::Original),
            "optimal" => Ok(Variant::Optimal),
            "time-independent" => Ok(Variant::TimeIndependent),
            "aggressive" => Ok(Variant::Aggressive),
            other => Err(Error::param(format!(
                "unknown variant '{other}' (expected original, optimal, time-independent or aggressive)"
            ))),
        }
    }

    /// Whether the parameterization needs the horizon T up front.
    pub fn needs_horizon(&self) -> bool {
        matches!(self, Variant::Original | Variant::Optimal)
    }

    /// Builds the variant's schedule from the problem dimensions and loss
    /// bounds. Horizon-dependent variants reject `horizon = None`.
    pub fn schedule(
        &self,
        n: usize,
        horizon: Option<u64>,
        bounds: &LossBounds,
        a_star: f64,
    ) -> Result<Schedule> {
        match self {
            Variant::Original => {
                let horizon = require_horizon(self, horizon)?;
                // Classic tuning: gamma from the horizon formula, the affine
                // transform mapping [-mu, rho] onto [0, 1].
                let gamma = freund_schapire_gamma(n, horizon)?;
                let width = bounds.sum();
                let params =
                    HedgeParams::new(gamma, 1.0 / width, bounds.mu() / width, *bounds)?;
                Ok(original_hedge_schedule(&params))
            }
            Variant::Optimal => {
                let horizon = require_horizon(self, horizon)?;
                let params = optimal_hedge_params(n, horizon, bounds, a_star)?;
                Ok(original_hedge_schedule(&params))
            }
            Variant::TimeIndependent => time_independent_schedule(n, bounds, a_star),
            Variant::Aggressive => aggressive_schedule(n, bounds, a_star),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

fn require_horizon(variant: &Variant, horizon: Option<u64>) -> Result<u64> {
    horizon.ok_or_else(|| {
        Error::param(format!(
            "the {} variant needs a fixed horizon T and cannot run on an unbounded stream",
            variant.tag()
        ))
    })
}

fn check_dims(n: usize, horizon: u64) -> Result<()> {
    if n < 2 {
        return Err(Error::param(format!("need at least 2 products, got {n}")));
    }
    if horizon < 1 {
        return Err(Error::param("horizon must be at least 1"));
    }
    Ok(())
}

fn check_a_star(a_star: f64) -> Result<()> {
    if !(a_star > 0.0) || !a_star.is_finite() {
        return Err(Error::param(format!("a* must be positive and finite, got {a_star}")));
    }
    Ok(())
}
