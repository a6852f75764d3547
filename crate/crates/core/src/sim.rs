//! Regime-shift market model: multivariate normal losses whose mean vector
//! is mutated at regime boundaries, flipping the sign of more and more
//! product means as time proceeds.

use crate::error::{Error, Result};
use crate::rng::{CounterRng, RngSeed};
use crate::tape::Tape;

/// Dense square matrix, row-major. Just enough linear algebra for the
/// covariance handling here.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("matrix rows must form a square"));
        }
        Ok(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// `y = self * v` assuming `self` is lower triangular (entries above the
    /// diagonal are ignored).
    pub fn lower_matvec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let row = &self.data[i * self.n..i * self.n + i + 1];
            out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    /// Largest absolute difference between `self * self^T` (lower
    /// triangular reading) and `other`.
    pub fn reconstruction_error(&self, other: &Matrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let mut v = 0.0;
                for k in 0..=i.min(j) {
                    v += self.get(i, k) * self.get(j, k);
                }
                worst = worst.max((v - other.get(i, j)).abs());
            }
        }
        worst
    }
}

/// Largest diagonal jitter applied before declaring a matrix indefinite.
pub const CHOLESKY_JITTER: f64 = 1e-10;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive-semidefinite
/// matrix. Semidefinite pivots are flattened to zero columns; if a pivot is
/// genuinely negative the factorization is retried once with a diagonal
/// jitter of [`CHOLESKY_JITTER`], and failure after that is an input error.
pub fn cholesky(cov: &Matrix) -> Result<Matrix> {
    let n = cov.n();
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (cov.get(i, j), cov.get(j, i));
            if (a - b).abs() > SYMMETRY_TOLERANCE * 1.0_f64.max(a.abs()).max(b.abs()) {
                return Err(Error::input(format!(
                    "covariance is not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    factorize(cov, 0.0)
        .or_else(|_| factorize(cov, CHOLESKY_JITTER))
        .map_err(|_| Error::input("covariance is not positive semidefinite (even after jitter)"))
}

fn factorize(cov: &Matrix, jitter: f64) -> Result<Matrix> {
    let n = cov.n();
    let scale = (0..n).fold(1.0f64, |a, i| a.max(cov.get(i, i).abs()));
    let tol = 1e-12 * scale;
    let mut l = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = cov.get(i, j) + if i == j { jitter } else { 0.0 };
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum < -tol {
                    return Err(Error::input(format!("negative pivot {sum} at row {i}")));
                }
                l.set(i, j, sum.max(0.0).sqrt());
            } else {
                let pivot = l.get(j, j);
                if pivot > 0.0 {
                    l.set(i, j, sum / pivot);
                } else if sum.abs() > tol {
                    return Err(Error::input(format!(
                        "zero pivot with nonzero coupling at ({i}, {j})"
                    )));
                }
            }
        }
    }
    Ok(l)
}

/// Per-step loss distribution within one regime: `loss = mean + L z`,
/// `z` standard normal, `L` the cached Cholesky factor of the covariance.
#[derive(Debug, Clone)]
pub struct MarketModel {
    mean: Vec<f64>,
    covariance: Matrix,
    chol: Matrix,
}

/// Stream index reserved for drawing the synthetic model itself;
/// replication tapes use streams `1..=runs`.
pub const MODEL_STREAM: u64 = 0;

impl MarketModel {
    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        if mean.len() != covariance.n() {
            return Err(Error::input(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                covariance.n(),
                covariance.n()
            )));
        }
        if mean.len() < 2 {
            return Err(Error::input("market model needs at least 2 products"));
        }
        let chol = cholesky(&covariance)?;
        Ok(Self { mean, covariance, chol })
    }

    /// Synthetic stand-in for a historical (mean, covariance) pair: means
    /// uniform on `[-mean_scale, mean_scale]`, covariance
    /// `cov_scale * (B B^T / n + ridge * I)` with `B` standard normal. All
    /// draws come from stream [`MODEL_STREAM`] of `seed`, so every
    /// replication of an experiment shares the same base market.
    pub fn synthetic(
        n: usize,
        seed: u64,
        mean_scale: f64,
        cov_scale: f64,
        ridge: f64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::param(format!("need at least 2 products, got {n}")));
        }
        if !(cov_scale >= 0.0) || !(ridge >= 0.0) || !(mean_scale >= 0.0) {
            return Err(Error::param("model scales must be nonnegative"));
        }
        let mut rng = CounterRng::new(RngSeed::new(seed, MODEL_STREAM));
        let mean: Vec<f64> = (0..n).map(|_| rng.range(-mean_scale, mean_scale)).collect();
        let mut b = vec![0.0; n * n];
        rng.fill_standard_normal(&mut b);
        let mut cov = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
                let mut v = cov_scale * dot / n as f64;
                if i == j {
                    v += cov_scale * ridge;
                }
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        Self::new(mean, cov)
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn chol(&self) -> &Matrix {
        &self.chol
    }
}

/// How the mean vector mutates at one regime boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Probability that a product's coefficient is negative.
    pub flip_prob: f64,
    /// Range the coefficient magnitude is drawn from.
    pub magnitude: (f64, f64),
    /// Magnitude of the additive per-regime drift.
    pub drift: f64,
}

/// Regime layout of a tape: the period and the per-transition mutation
/// parameters. Transitions beyond the configured lists reuse the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSchedule {
    period: u64,
    flip_probs: Vec<f64>,
    perturb_scale: Vec<(f64, f64)>,
    drift: Vec<f64>,
}

impl ShiftSchedule {
    pub fn new(
        period: u64,
        flip_probs: Vec<f64>,
        perturb_scale: Vec<(f64, f64)>,
        drift: Vec<f64>,
    ) -> Result<Self> {
        if period < 1 {
            return Err(Error::param("regime period must be at least 1 step"));
        }
        if flip_probs.is_empty()
            || flip_probs.len() != perturb_scale.len()
            || flip_probs.len() != drift.len()
        {
            return Err(Error::param(
                "flip_probs, perturb_scale and drift must be non-empty and equally long",
            ));
        }
        for (k, &p) in flip_probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("flip probability {p} outside [0, 1]")));
            }
            if k > 0 && p < flip_probs[k - 1] {
                return Err(Error::param("flip probabilities must be non-decreasing"));
            }
        }
        for (k, &(lo, hi)) in perturb_scale.iter().enumerate() {
            if !(0.0 <= lo && lo <= hi) {
                return Err(Error::param(format!("bad perturbation range [{lo}, {hi}]")));
            }
            if k > 0 && (lo < perturb_scale[k - 1].0 || hi < perturb_scale[k - 1].1) {
                return Err(Error::param("perturbation magnitudes must be non-decreasing"));
            }
        }
        if drift.iter().any(|&d| d < 0.0) {
            return Err(Error::param("drift magnitudes must be nonnegative"));
        }
        Ok(Self { period, flip_probs, perturb_scale, drift })
    }

    /// The experiment's default mutation ladder: flip probabilities
    /// `0.5, 0.75, 1.0, 1.0, ...`, coefficient ranges
    /// `[1 + 0.25k, 1.5 + 0.25k]` for the k-th transition, drift `1e-3`.
    pub fn default_ladder(period: u64, transitions: usize) -> Result<Self> {
        let transitions = transitions.max(1);
        let base = [0.5, 0.75, 1.0];
        let flip_probs = (0..transitions)
            .map(|k| base[k.min(base.len() - 1)])
            .collect();
        let perturb_scale = (1..=transitions)
            .map(|k| (1.0 + 0.25 * k as f64, 1.5 + 0.25 * k as f64))
            .collect();
        Self::new(period, flip_probs, perturb_scale, vec![1e-3; transitions])
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn transitions(&self) -> usize {
        self.flip_probs.len()
    }

    /// Parameters of the k-th transition (0-based: regime k -> regime k+1).
    pub fn transition(&self, k: usize) -> Transition {
        let i = k.min(self.flip_probs.len() - 1);
        Transition {
            flip_prob: self.flip_probs[i],
            magnitude: self.perturb_scale[i],
            drift: self.drift[i],
        }
    }
}

/// Resolved per-regime means for one tape, drawn before any loss.
#[derive(Debug, Clone)]
pub struct RegimePlan {
    means: Vec<Vec<f64>>,
    flips: Vec<Vec<bool>>,
}

impl RegimePlan {
    /// Draws the mean mutation for `regimes` regimes. Draw order per
    /// transition: for each product a flip uniform then a magnitude uniform,
    /// then one drift uniform for the regime.
    pub fn generate(
        model: &MarketModel,
        shifts: &ShiftSchedule,
        regimes: usize,
        rng: &mut CounterRng,
    ) -> Self {
        let n = model.n();
        let mut means = vec![model.mean().to_vec()];
        let mut flips = Vec::new();
        for k in 0..regimes.saturating_sub(1) {
            let tr = shifts.transition(k);
            let prev = means[k].clone();
            let mut next = vec![0.0; n];
            let mut regime_flips = vec![false; n];
            let mut coefs = vec![0.0; n];
            for i in 0..n {
                let flip = rng.uniform() < tr.flip_prob;
                let magnitude = rng.range(tr.magnitude.0, tr.magnitude.1);
                regime_flips[i] = flip;
                coefs[i] = if flip { -magnitude } else { magnitude };
            }
            let drift = rng.range(-tr.drift, tr.drift);
            for i in 0..n {
                next[i] = coefs[i] * prev[i] + drift;
            }
            means.push(next);
            flips.push(regime_flips);
        }
        Self { means, flips }
    }

    pub fn regime_mean(&self, j: usize) -> &[f64] {
        &self.means[j]
    }

    pub fn regimes(&self) -> usize {
        self.means.len()
    }

    /// Sign flips drawn at the k-th transition.
    pub fn flips(&self, k: usize) -> &[bool] {
        &self.flips[k]
    }
}

/// Number of regimes a horizon spans: `ceil(T / period)`.
pub fn regime_count(horizon: u64, period: u64) -> usize {
    horizon.div_ceil(period) as usize
}

/// Generates a full loss tape: the regime plan is drawn first, then one
/// normal vector per step (`ceil(n/2)` Box-Muller pairs each), so the tape
/// is a pure function of `(model, shifts, horizon, seed)`.
pub fn sample_losses(
    model: &MarketModel,
    shifts: &ShiftSchedule,
    horizon: u64,
    seed: RngSeed,
) -> Result<Tape> {
    if horizon < 1 {
        return Err(Error::param("horizon must be at least 1"));
    }
    let n = model.n();
    let mut rng = CounterRng::new(seed);
    let plan = RegimePlan::generate(model, shifts, regime_count(horizon, shifts.period()), &mut rng);

    let mut data = Vec::with_capacity(horizon as usize * n);
    let mut z = vec![0.0; n];
    let mut shock = vec![0.0; n];
    for t in 0..horizon {
        let mean = plan.regime_mean((t / shifts.period()) as usize);
        rng.fill_standard_normal(&mut z);
        model.chol().lower_matvec(&z, &mut shock);
        data.extend(mean.iter().zip(&shock).map(|(m, s)| m + s));
    }
    Tape::new(n, data)
}
