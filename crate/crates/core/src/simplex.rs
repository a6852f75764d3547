//! Geometry of the standard simplex: the entropic prox-function and the
//! parametrized mirror operator in numerically stable log-domain form.

use crate::error::{Error, Result};

/// Absolute tolerance on the weight sum after renormalization.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Largest deviation of the raw weight sum from 1 that construction absorbs
/// by renormalizing; anything larger is rejected as a logic bug.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A point on the standard simplex: the capital allocation across products.
///
/// Entries are nonnegative and sum to one (renormalized on construction when
/// the raw sum drifts by at most [`RENORMALIZE_TOLERANCE`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    weights: Vec<f64>,
}

impl Portfolio {
    /// Builds a portfolio, renormalizing away floating-point drift.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::domain(format!(
                "portfolio needs at least 2 products, got {}",
                weights.len()
            )));
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::domain(format!(
                    "portfolio entry {} is {w}, expected a finite nonnegative share",
                    i + 1
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::domain(format!(
                "portfolio weights sum to {sum}, too far from 1 to renormalize"
            )));
        }
        let mut weights = weights;
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self { weights })
    }

    /// The uniform portfolio `(1/n, ..., 1/n)`, the prox-center.
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 2, "portfolio needs at least 2 products");
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Index of the largest share; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

/// Accumulated negated weighted scores, the dual state of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector {
    coords: Vec<f64>,
}

impl DualVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            coords: vec![0.0; n],
        }
    }

    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("dual vector entries must be finite"));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// `self += scale * v`, entrywise.
    pub(crate) fn add_scaled(&mut self, scale: f64, v: &[f64]) {
        debug_assert_eq!(self.coords.len(), v.len());
        for (c, &x) in self.coords.iter_mut().zip(v) {
            *c += scale * x;
        }
    }
}

/// Value of the entropic prox-function, in nats; always in `[0, ln n]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ProxValue {
    value: f64,
}

impl ProxValue {
    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Entropic prox-function `d(x) = ln(n) + sum_i x_i ln(x_i)`.
///
/// Vanishes at the uniform portfolio and attains `ln n` at the vertices;
/// `0 * ln 0 := 0` by continuity.
pub fn entropic_prox(x: &Portfolio) -> ProxValue {
    let n = x.dim() as f64;
    // Summing x*ln(x*n) instead of ln(n) + sum x*ln(x) avoids the
    // cancellation that would otherwise leave ~n*eps residue at the center.
    let mut acc = 0.0;
    for &w in x.weights() {
        if w > 0.0 {
            acc += w * (w * n).ln();
        }
    }
    // Rounding can still leave acc a hair outside [0, ln n]; clamp it back.
    ProxValue {
        value: acc.clamp(0.0, n.ln()),
    }
}

/// Parametrized mirror operator: softmax of `s / beta`, computed in the log
/// domain (max-subtraction) so that huge dual coordinates cannot overflow.
///
/// This is the closed form of `argmax_x { <s, x - x0> - beta * d(x) }` over
/// the simplex.
pub fn mirror_project(s: &DualVector, beta: f64) -> Result<Portfolio> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param(format!(
            "projection parameter beta must be positive and finite, got {beta}"
        )));
    }
    let coords = s.coords();
    let top = coords.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut weights: Vec<f64> = coords.iter().map(|&c| ((c - top) / beta).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    // Already normalized; construct directly. Entries below 1e-300 are kept
    // as-is (no flooring) -- downstream code never takes a log of a share.
    Ok(Portfolio { weights })
}

/// Dual norm of a score vector: `max_i |g_i|`.
pub fn dual_norm_inf(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |a, &b| a.max(b.abs()))
}
