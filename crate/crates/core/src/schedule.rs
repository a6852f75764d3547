//! Step-weight and projection-parameter schedules.
//!
//! A [`Schedule`] pairs the weight sequence `lambda_t`, the non-decreasing
//! projection parameters `beta_t`, and the affine score transform
//! `g = a * loss + b` that together parameterize one variant of the
//! iteration.

use crate::error::{Error, Result};

/// Rule generating the per-step weights `lambda_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightRule {
    /// `lambda_t = c` for all t.
    Constant(f64),
    /// `lambda_t = c * (t + 1)^2` -- recent losses dominate.
    QuadraticRamp(f64),
}

impl WeightRule {
    #[inline]
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            WeightRule::Constant(c) => c,
            WeightRule::QuadraticRamp(c) => {
                let k = (t + 1) as f64;
                c * k * k
            }
        }
    }
}

/// Rule generating the projection parameters `beta_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRule {
    /// `beta_t = 1` for all t.
    One,
    /// `beta_0 = beta_1 = 1`, then `beta_{t+1} = beta_t + 1/beta_t`.
    ///
    /// Grows like `sqrt(2t)`, staying within
    /// `[sqrt(2t-1), 1/(1+sqrt(3)) + sqrt(2t-1)]` for t >= 1, which is what
    /// makes a horizon-free constant weight possible.
    Recurrence,
    /// `beta_t = t^2.5` for t >= 1; `beta_0 := 1` (the engine never projects
    /// with `beta_0`, it only feeds the bound calculator).
    PowTwoPointFive,
}

impl BetaRule {
    /// Point query. O(t) for [`BetaRule::Recurrence`]; prefer [`BetaRule::iter`]
    /// for sequential access.
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            BetaRule::One => 1.0,
            BetaRule::Recurrence => {
                let mut b = 1.0;
                for _ in 1..t {
                    b += 1.0 / b;
                }
                b
            }
            BetaRule::PowTwoPointFive => {
                if t == 0 {
                    1.0
                } else {
                    (t as f64).powf(2.5)
                }
            }
        }
    }

    /// Iterator over `beta_0, beta_1, beta_2, ...` in O(1) per step.
    pub fn iter(&self) -> BetaIter {
        BetaIter { rule: *self, t: 0, recurrence: 1.0 }
    }
}

/// Sequential generator of a beta sequence; see [`BetaRule::iter`].
#[derive(Debug, Clone)]
pub struct BetaIter {
    rule: BetaRule,
    t: u64,
    recurrence: f64,
}

impl Iterator for BetaIter {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let t = self.t;
        self.t += 1;
        let v = match self.rule {
            BetaRule::One => 1.0,
            BetaRule::Recurrence => {
                if t <= 1 {
                    1.0
                } else {
                    self.recurrence += 1.0 / self.recurrence;
                    self.recurrence
                }
            }
            BetaRule::PowTwoPointFive => {
                if t == 0 {
                    1.0
                } else {
                    (t as f64).powf(2.5)
                }
            }
        };
        Some(v)
    }
}

/// One variant's full parameterization of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    weights: WeightRule,
    betas: BetaRule,
    affine_a: f64,
    affine_b: f64,
}

impl Schedule {
    pub fn new(weights: WeightRule, betas: BetaRule, affine_a: f64, affine_b: f64) -> Result<Self> {
        let lambda0 = weights.at(0);
        if !(lambda0 > 0.0) || !lambda0.is_finite() {
            return Err(Error::param(format!(
                "step weights must be positive, lambda_0 = {lambda0}"
            )));
        }
        if !(affine_a > 0.0) || !affine_a.is_finite() {
            return Err(Error::param(format!(
                "score transform slope must be positive, a = {affine_a}"
            )));
        }
        if !affine_b.is_finite() {
            return Err(Error::param("score transform offset must be finite"));
        }
        Ok(Self { weights, betas, affine_a, affine_b })
    }

    #[inline]
    pub fn lambda_at(&self, t: u64) -> f64 {
        self.weights.at(t)
    }

    #[inline]
    pub fn beta_at(&self, t: u64) -> f64 {
        self.betas.at(t)
    }

    pub fn beta_iter(&self) -> BetaIter {
        self.betas.iter()
    }

    pub fn weight_rule(&self) -> WeightRule {
        self.weights
    }

    pub fn beta_rule(&self) -> BetaRule {
        self.betas
    }

    /// Slope of the score transform `g = a * loss + b`.
    #[inline]
    pub fn affine_a(&self) -> f64 {
        self.affine_a
    }

    /// Offset of the score transform.
    #[inline]
    pub fn affine_b(&self) -> f64 {
        self.affine_b
    }
}
