//! The generic dual-averaging iteration over the simplex.
//!
//! One step: observe a loss vector for the current portfolio, push its
//! affine transform into the dual state, and project back with the next
//! beta. The [`RegretLedger`] accrues everything needed for the averaged
//! regret and for trajectory reporting.

use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::simplex::{dual_norm_inf, mirror_project, DualVector, Portfolio};
use crate::variants::LossBounds;

/// Per-product losses for one step. Finiteness and range are validated
/// against the configured bounds when the vector enters the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for LossVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Source of loss vectors. The oracle sees the current portfolio before
/// producing the loss, so adversarial constructions are expressible;
/// stochastic oracles simply ignore the argument.
pub trait LossOracle {
    /// Next loss vector, or `None` when the source is exhausted.
    fn next_loss(&mut self, x: &Portfolio) -> Option<LossVector>;
}

impl<F: FnMut(&Portfolio) -> Option<LossVector>> LossOracle for F {
    fn next_loss(&mut self, x: &Portfolio) -> Option<LossVector> {
        self(x)
    }
}

/// Trajectory sampling policy for the ledger. Off by default; `Every(k)`
/// records after steps k, 2k, ... (the driver also forces a final sample)
/// so that long runs stay cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryMode {
    Off,
    Every(u64),
}

/// One sampled point of the running trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistorySample {
    /// Number of completed steps at the sample (1-based).
    pub step: u64,
    /// Instantaneous loss `<loss_t, x_t>` of the step that completed here.
    pub inst_loss: f64,
    /// Unweighted running average `sum_{k<step} <loss_k, x_k> / step`.
    pub avg_loss: f64,
}

/// Dual state of the iteration: accumulated negated weighted scores, the
/// step counter, and the portfolio they induce.
#[derive(Debug, Clone)]
pub struct DualState {
    s: DualVector,
    t: u64,
    x: Portfolio,
}

impl DualState {
    /// Initial state: zero dual vector, uniform portfolio.
    pub fn new(n: usize) -> Self {
        Self {
            s: DualVector::zeros(n),
            t: 0,
            x: Portfolio::uniform(n),
        }
    }

    pub fn step(&self) -> u64 {
        self.t
    }

    pub fn dual(&self) -> &DualVector {
        &self.s
    }

    pub fn portfolio(&self) -> &Portfolio {
        &self.x
    }
}

/// Running account of a single run: weighted quantities for regret and
/// certification, unweighted quantities for reporting, and an optional
/// sampled trajectory.
#[derive(Debug, Clone)]
pub struct RegretLedger {
    weighted_alg_loss: f64,
    weighted_product_loss: Vec<f64>,
    weight_sum: f64,
    raw_alg_loss: f64,
    raw_product_loss: Vec<f64>,
    steps: u64,
    g_norms: Vec<f64>,
    history_mode: HistoryMode,
    history: Vec<HistorySample>,
}

impl RegretLedger {
    pub fn new(n: usize, history: HistoryMode) -> Result<Self> {
        if let HistoryMode::Every(0) = history {
            return Err(Error::param("history stride must be at least 1"));
        }
        Ok(Self {
            weighted_alg_loss: 0.0,
            weighted_product_loss: vec![0.0; n],
            weight_sum: 0.0,
            raw_alg_loss: 0.0,
            raw_product_loss: vec![0.0; n],
            steps: 0,
            g_norms: Vec::new(),
            history_mode: history,
            history: Vec::new(),
        })
    }

    /// Accrues one observed step: `lambda`-weighted and raw algorithm loss
    /// against the pre-update portfolio, plus per-product cumulative losses.
    pub(crate) fn accrue(&mut self, lambda: f64, loss: &[f64], x: &Portfolio, g_norm: f64) {
        let inst: f64 = loss.iter().zip(x.weights()).map(|(l, w)| l * w).sum();
        self.weighted_alg_loss += lambda * inst;
        self.raw_alg_loss += inst;
        for (i, &l) in loss.iter().enumerate() {
            self.weighted_product_loss[i] += lambda * l;
            self.raw_product_loss[i] += l;
        }
        self.weight_sum += lambda;
        self.g_norms.push(g_norm);
        self.steps += 1;
        if let HistoryMode::Every(k) = self.history_mode {
            if self.steps % k == 0 {
                self.record_sample(inst);
            }
        }
    }

    fn record_sample(&mut self, inst: f64) {
        self.history.push(HistorySample {
            step: self.steps,
            inst_loss: inst,
            avg_loss: self.raw_alg_loss / self.steps as f64,
        });
    }

    /// Forces a trailing sample at the current step (used at end of run).
    pub(crate) fn finalize_history(&mut self) {
        if matches!(self.history_mode, HistoryMode::Every(_))
            && self.history.last().map(|s| s.step) != Some(self.steps)
            && self.steps > 0
        {
            // inst_loss of the forced sample is not meaningful; reuse the
            // running average so consumers see a consistent record.
            self.history.push(HistorySample {
                step: self.steps,
                inst_loss: f64::NAN,
                avg_loss: self.raw_alg_loss / self.steps as f64,
            });
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.weighted_product_loss.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn weighted_alg_loss(&self) -> f64 {
        self.weighted_alg_loss
    }

    pub fn weighted_product_loss(&self) -> &[f64] {
        &self.weighted_product_loss
    }

    /// Unweighted cumulative algorithm loss `sum_t <loss_t, x_t>`.
    pub fn raw_alg_loss(&self) -> f64 {
        self.raw_alg_loss
    }

    /// Unweighted cumulative per-product losses.
    pub fn raw_product_loss(&self) -> &[f64] {
        &self.raw_product_loss
    }

    /// Per-step dual norms of the transformed losses, `||a*loss_t + b||_inf`.
    pub fn g_norms(&self) -> &[f64] {
        &self.g_norms
    }

    pub fn history(&self) -> &[HistorySample] {
        &self.history
    }

    /// Unweighted running average at the end of the run.
    pub fn final_average_loss(&self) -> Result<f64> {
        if self.steps == 0 {
            return Err(Error::state("ledger has no steps"));
        }
        Ok(self.raw_alg_loss / self.steps as f64)
    }
}

/// Weighted averaged regret in raw loss units: the algorithm's weighted
/// average loss minus the best single product's. The comparator minimum over
/// the simplex of a linear function is attained at a vertex, so tracking
/// per-product weighted losses realizes it exactly.
pub fn averaged_regret(ledger: &RegretLedger) -> Result<f64> {
    if ledger.steps == 0 {
        return Err(Error::state("averaged regret is undefined before any step"));
    }
    let best = ledger
        .weighted_product_loss
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    Ok((ledger.weighted_alg_loss - best) / ledger.weight_sum)
}

/// Weighted average loss of the algorithm, `L_T`.
pub fn weighted_average_loss(ledger: &RegretLedger) -> Result<f64> {
    if ledger.steps == 0 {
        return Err(Error::state("average loss is undefined before any step"));
    }
    Ok(ledger.weighted_alg_loss / ledger.weight_sum)
}

fn validate_loss(loss: &LossVector, n: usize, bounds: &LossBounds) -> Result<()> {
    if loss.dim() != n {
        return Err(Error::input(format!(
            "loss vector has {} entries, expected {n}",
            loss.dim()
        )));
    }
    for (i, &l) in loss.values().iter().enumerate() {
        if l.is_nan() {
            return Err(Error::domain(format!("loss for product {} is NaN", i + 1)));
        }
        if l < -bounds.mu() || l > bounds.rho() {
            return Err(Error::domain(format!(
                "loss {l} for product {} is outside [-{}, {}]",
                i + 1,
                bounds.mu(),
                bounds.rho()
            )));
        }
    }
    Ok(())
}

fn advance(
    state: &mut DualState,
    ledger: &mut RegretLedger,
    schedule: &Schedule,
    loss: &LossVector,
    bounds: &LossBounds,
    beta_next: f64,
) -> Result<()> {
    let n = state.x.dim();
    validate_loss(loss, n, bounds)?;
    let t = state.t;
    let lambda = schedule.lambda_at(t);
    let (a, b) = (schedule.affine_a(), schedule.affine_b());

    let g: Vec<f64> = loss.values().iter().map(|&l| a * l + b).collect();
    ledger.accrue(lambda, loss.values(), &state.x, dual_norm_inf(&g));

    state.s.add_scaled(-lambda, &g);
    state.x = mirror_project(&state.s, beta_next)?;
    state.t = t + 1;
    Ok(())
}

/// One iteration step: accrue the loss against the pre-update portfolio,
/// advance the dual state by `-lambda_t * (a*loss + b)`, and project with
/// `beta_{t+1}`.
///
/// `state` and `ledger` must be at the same step; losses are validated
/// against `bounds`.
pub fn da_step(
    state: &mut DualState,
    ledger: &mut RegretLedger,
    schedule: &Schedule,
    loss: &LossVector,
    bounds: &LossBounds,
) -> Result<()> {
    if state.t != ledger.steps {
        return Err(Error::state(format!(
            "state at step {} but ledger at step {}",
            state.t, ledger.steps
        )));
    }
    let beta_next = schedule.beta_at(state.t + 1);
    advance(state, ledger, schedule, loss, bounds, beta_next)
}

/// Runs the iteration for `horizon` steps against `oracle`.
///
/// Deterministic given a deterministic oracle. The beta sequence is advanced
/// incrementally, so recurrence-defined schedules cost O(1) per step.
pub fn run(
    schedule: &Schedule,
    oracle: &mut dyn LossOracle,
    n: usize,
    horizon: u64,
    bounds: &LossBounds,
    history: HistoryMode,
) -> Result<(RegretLedger, DualState)> {
    if horizon == 0 {
        return Err(Error::param("horizon must be at least 1"));
    }
    let mut state = DualState::new(n);
    let mut ledger = RegretLedger::new(n, history)?;
    let mut betas = schedule.beta_iter();
    betas.next(); // discard beta_0: the first projection uses beta_1

    for t in 0..horizon {
        let loss = oracle
            .next_loss(&state.x)
            .ok_or_else(|| Error::input(format!("oracle exhausted at step {t} of {horizon}")))?;
        let beta_next = betas.next().expect("beta sequences are unbounded");
        advance(&mut state, &mut ledger, schedule, &loss, bounds, beta_next)?;
    }
    ledger.finalize_history();
    Ok((ledger, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{BetaRule, WeightRule};
    use proptest::prelude::*;

    fn unit_schedule() -> Schedule {
        Schedule::new(WeightRule::Constant(1.0), BetaRule::One, 1.0, 0.0).unwrap()
    }

    fn wide_bounds() -> LossBounds {
        LossBounds::new(10.0, 10.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_step_closed_form() {
        let schedule = unit_schedule();
        let mut state = DualState::new(2);
        let mut ledger = RegretLedger::new(2, HistoryMode::Off).unwrap();
        da_step(
            &mut state,
            &mut ledger,
            &schedule,
            &LossVector::new(vec![1.0, 0.0]),
            &wide_bounds(),
        )
        .unwrap();
        assert_eq!(state.dual().coords(), &[-1.0, 0.0]);
        let e = std::f64::consts::E;
        assert!(close(state.portfolio().weights()[0], 1.0 / (1.0 + e), 1e-15));
        assert!(close(state.portfolio().weights()[1], e / (1.0 + e), 1e-15));
    }

    #[test]
    fn identical_losses_keep_uniform() {
        let schedule =
            Schedule::new(WeightRule::QuadraticRamp(0.7), BetaRule::Recurrence, 2.0, 0.3).unwrap();
        let mut state = DualState::new(4);
        let mut ledger = RegretLedger::new(4, HistoryMode::Off).unwrap();
        for _ in 0..3 {
            da_step(
                &mut state,
                &mut ledger,
                &schedule,
                &LossVector::new(vec![0.25; 4]),
                &wide_bounds(),
            )
            .unwrap();
        }
        for &w in state.portfolio().weights() {
            assert!(close(w, 0.25, 1e-12));
        }
    }

    #[test]
    fn symmetric_losses_cancel() {
        let schedule = unit_schedule();
        let mut state = DualState::new(2);
        let mut ledger = RegretLedger::new(2, HistoryMode::Off).unwrap();
        for loss in [vec![1.0, 0.0], vec![0.0, 1.0]] {
            da_step(&mut state, &mut ledger, &schedule, &LossVector::new(loss), &wide_bounds())
                .unwrap();
        }
        assert_eq!(state.dual().coords(), &[-1.0, -1.0]);
        for &w in state.portfolio().weights() {
            assert!(close(w, 0.5, 1e-15));
        }
    }

    #[test]
    fn rejects_out_of_range_loss_with_product_index() {
        let schedule = unit_schedule();
        let mut state = DualState::new(2);
        let mut ledger = RegretLedger::new(2, HistoryMode::Off).unwrap();
        let bounds = LossBounds::new(0.5, 0.5).unwrap();
        let err = da_step(
            &mut state,
            &mut ledger,
            &schedule,
            &LossVector::new(vec![0.2, 0.9]),
            &bounds,
        )
        .unwrap_err();
        assert!(err.to_string().contains("product 2"), "{err}");

        let err = da_step(
            &mut state,
            &mut ledger,
            &schedule,
            &LossVector::new(vec![f64::NAN, 0.0]),
            &bounds,
        )
        .unwrap_err();
        assert!(err.to_string().contains("NaN"), "{err}");
    }

    #[test]
    fn run_weight_sum_single_step() {
        let schedule =
            Schedule::new(WeightRule::Constant(0.37), BetaRule::One, 1.0, 0.0).unwrap();
        let mut oracle = |_: &Portfolio| Some(LossVector::new(vec![0.1, 0.2]));
        let (ledger, _) = run(&schedule, &mut oracle, 2, 1, &wide_bounds(), HistoryMode::Off)
            .unwrap();
        assert!(close(ledger.weight_sum(), 0.37, 1e-15));
    }

    #[test]
    fn constant_losses_have_zero_regret() {
        let schedule = unit_schedule();
        let mut oracle = |_: &Portfolio| Some(LossVector::new(vec![0.3, 0.3, 0.3]));
        let (ledger, _) = run(&schedule, &mut oracle, 3, 50, &wide_bounds(), HistoryMode::Off)
            .unwrap();
        assert!(close(averaged_regret(&ledger).unwrap(), 0.0, 1e-12));
    }

    #[test]
    fn two_step_hand_run_regret() {
        let schedule = unit_schedule();
        let mut oracle = |_: &Portfolio| Some(LossVector::new(vec![1.0, 0.0]));
        let (ledger, _) = run(&schedule, &mut oracle, 2, 2, &wide_bounds(), HistoryMode::Off)
            .unwrap();
        // (0.5 + 1/(1+e)) / 2, evaluated at 30 digits.
        assert!(close(averaged_regret(&ledger).unwrap(), 0.384470710684997560, 1e-15));
    }

    #[test]
    fn oracle_exhaustion_is_input_error() {
        let schedule = unit_schedule();
        let mut remaining = 3u32;
        let mut oracle = move |_: &Portfolio| {
            if remaining == 0 {
                None
            } else {
                remaining -= 1;
                Some(LossVector::new(vec![0.0, 0.0]))
            }
        };
        let err = run(&schedule, &mut oracle, 2, 5, &wide_bounds(), HistoryMode::Off).unwrap_err();
        assert!(matches!(err, Error::Input(_)), "{err}");
    }

    #[test]
    fn average_loss_examples() {
        // One step, identical losses 0.2 -> average 0.2 for any weight.
        let schedule =
            Schedule::new(WeightRule::Constant(5.0), BetaRule::One, 1.0, 0.0).unwrap();
        let mut oracle = |_: &Portfolio| Some(LossVector::new(vec![0.2, 0.2]));
        let (ledger, _) = run(&schedule, &mut oracle, 2, 1, &wide_bounds(), HistoryMode::Off)
            .unwrap();
        assert!(close(weighted_average_loss(&ledger).unwrap(), 0.2, 1e-15));

        // Ledger arithmetic with explicit weights 1 and 2.
        let mut ledger = RegretLedger::new(2, HistoryMode::Off).unwrap();
        let x = Portfolio::uniform(2);
        ledger.accrue(1.0, &[0.3, 0.3], &x, 0.3);
        ledger.accrue(2.0, &[0.6, 0.6], &x, 0.6);
        assert!(close(weighted_average_loss(&ledger).unwrap(), 0.5, 1e-15));

        // Quadratic weights, constant unit losses -> average exactly 1.
        let schedule =
            Schedule::new(WeightRule::QuadraticRamp(1.0), BetaRule::One, 1.0, 0.0).unwrap();
        let mut oracle = |_: &Portfolio| Some(LossVector::new(vec![1.0, 1.0]));
        let (ledger, _) = run(&schedule, &mut oracle, 2, 3, &wide_bounds(), HistoryMode::Off)
            .unwrap();
        assert!(close(weighted_average_loss(&ledger).unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn frozen_uniform_ledger_arithmetic() {
        let mut ledger = RegretLedger::new(2, HistoryMode::Off).unwrap();
        let x = Portfolio::uniform(2);
        // Algorithm frozen at uniform, losses (1,0) twice: regret (1-0)/2.
        ledger.accrue(1.0, &[1.0, 0.0], &x, 1.0);
        ledger.accrue(1.0, &[1.0, 0.0], &x, 1.0);
        assert!(close(averaged_regret(&ledger).unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn empty_ledger_errors() {
        let ledger = RegretLedger::new(2, HistoryMode::Off).unwrap();
        assert!(matches!(averaged_regret(&ledger), Err(Error::State(_))));
        assert!(matches!(weighted_average_loss(&ledger), Err(Error::State(_))));
    }

    #[test]
    fn comparator_matches_simplex_grid() {
        // Weighted linear losses are minimized at a vertex: compare the
        // ledger's per-product tracking with a fine grid search for n=3.
        let mut ledger = RegretLedger::new(3, HistoryMode::Off).unwrap();
        let x = Portfolio::uniform(3);
        let losses = [
            (1.0, [0.4, -0.2, 0.3]),
            (2.0, [-0.1, 0.5, 0.2]),
            (0.5, [0.3, 0.3, -0.4]),
        ];
        for (lambda, l) in &losses {
            ledger.accrue(*lambda, l, &x, 1.0);
        }
        let vertex_min = ledger
            .weighted_product_loss()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));

        let steps = 300;
        let mut grid_min = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let k = steps - i - j;
                let w = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    k as f64 / steps as f64,
                ];
                let total: f64 = losses
                    .iter()
                    .map(|(lambda, l)| {
                        lambda * (l[0] * w[0] + l[1] * w[1] + l[2] * w[2])
                    })
                    .sum();
                grid_min = grid_min.min(total);
            }
        }
        assert!(vertex_min <= grid_min + 1e-12);
        assert!(close(vertex_min, grid_min, 2e-2));
    }

    #[test]
    fn history_sampling_and_final_record() {
        let schedule = unit_schedule();
        let mut oracle = |_: &Portfolio| Some(LossVector::new(vec![0.2, 0.2]));
        let (ledger, _) = run(&schedule, &mut oracle, 2, 25, &wide_bounds(), HistoryMode::Every(10))
            .unwrap();
        let steps: Vec<u64> = ledger.history().iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![10, 20, 25]);
        for s in ledger.history() {
            assert!(close(s.avg_loss, 0.2, 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn regret_nonnegative_on_random_streams(
            seed in 0u64..1000,
            n in 2usize..6,
            horizon in 1u64..80,
        ) {
            let schedule = unit_schedule();
            let mut rng = crate::rng::CounterRng::new(crate::rng::RngSeed::new(seed, 0));
            let mut oracle = move |_: &Portfolio| {
                Some(LossVector::new((0..n).map(|_| rng.range(-1.0, 1.0)).collect()))
            };
            let bounds = LossBounds::new(1.0, 1.0).unwrap();
            let (ledger, _) =
                run(&schedule, &mut oracle, n, horizon, &bounds, HistoryMode::Off).unwrap();
            prop_assert!(averaged_regret(&ledger).unwrap() >= -1e-12);
        }

        #[test]
        fn weight_scale_equivariance(seed in 0u64..1000, factor in 1.0f64..8.0) {
            // Scaling every lambda by c while dividing a by c leaves the
            // portfolio trajectory unchanged: lambda and a only enter the
            // dual state through their product (the b term shifts all
            // coordinates equally and cancels in the projection).
            let n = 3;
            let horizon = 40;
            let bounds = LossBounds::new(1.0, 1.0).unwrap();
            let base =
                Schedule::new(WeightRule::Constant(0.8), BetaRule::Recurrence, 2.0, 0.4).unwrap();
            let scaled = Schedule::new(
                WeightRule::Constant(0.8 * factor),
                BetaRule::Recurrence,
                2.0 / factor,
                0.4,
            )
            .unwrap();

            let make_oracle = || {
                let mut rng = crate::rng::CounterRng::new(crate::rng::RngSeed::new(seed, 7));
                move |_: &Portfolio| {
                    Some(LossVector::new((0..n).map(|_| rng.range(-1.0, 1.0)).collect()))
                }
            };
            let mut oa = make_oracle();
            let mut ob = make_oracle();
            let (_, sa) = run(&base, &mut oa, n, horizon, &bounds, HistoryMode::Off).unwrap();
            let (_, sb) = run(&scaled, &mut ob, n, horizon, &bounds, HistoryMode::Off).unwrap();
            for (a, b) in sa.portfolio().weights().iter().zip(sb.portfolio().weights()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn identical_runs_are_identical(seed in 0u64..1000) {
            let n = 4;
            let schedule = unit_schedule();
            let bounds = LossBounds::new(1.0, 1.0).unwrap();
            let make_oracle = || {
                let mut rng = crate::rng::CounterRng::new(crate::rng::RngSeed::new(seed, 1));
                move |_: &Portfolio| {
                    Some(LossVector::new((0..n).map(|_| rng.range(-1.0, 1.0)).collect()))
                }
            };
            let mut oa = make_oracle();
            let mut ob = make_oracle();
            let (la, sa) = run(&schedule, &mut oa, n, 60, &bounds, HistoryMode::Off).unwrap();
            let (lb, sb) = run(&schedule, &mut ob, n, 60, &bounds, HistoryMode::Off).unwrap();
            prop_assert_eq!(la.weighted_alg_loss(), lb.weighted_alg_loss());
            prop_assert_eq!(la.weighted_product_loss(), lb.weighted_product_loss());
            prop_assert_eq!(sa.portfolio().weights(), sb.portfolio().weights());
        }
    }
}
