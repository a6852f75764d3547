//! Head-to-head experiment orchestration: generate regime-shift tapes, run
//! every variant on each of them, certify the runs, and aggregate the
//! averaged-loss trajectories across replications.

use crate::bounds::{certify, BoundReport};
use crate::engine::{run, HistoryMode};
use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::sim::{regime_count, sample_losses, MarketModel, ShiftSchedule};
use crate::tape::Tape;
use crate::variants::Variant;

/// Series name of the best-single-product trajectory in every output.
pub const BEST_PRODUCT_SERIES: &str = "best-product";

/// Everything that defines one experiment. Defaults reproduce the
/// desk-scale regime-shift study: 30 products, 3120 steps in four regimes
/// of 780, ten replications, sign-flip probabilities 0.5 / 0.75 / 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Number of steps T.
    pub horizon: u64,
    /// Steps per regime.
    pub period: u64,
    /// Replications to average over.
    pub runs: u32,
    pub seed: u64,
    /// Scale parameter of the score transform; trajectories do not depend
    /// on it.
    pub a_star: f64,
    /// Trajectory sampling stride; must divide `period` so that regime
    /// boundaries are sampled.
    pub stride: u64,
    pub variants: Vec<Variant>,
    /// Per-transition sign-flip probabilities (clamped to the last entry
    /// when a tape has more transitions).
    pub flip_probs: Vec<f64>,
    /// Perturbation magnitude for transition k is drawn from
    /// `[perturb_base + perturb_step*k, perturb_base + perturb_width + perturb_step*k]`
    /// (k counted from 1).
    pub perturb_base: f64,
    pub perturb_width: f64,
    pub perturb_step: f64,
    /// Magnitude of the additive per-regime mean drift.
    pub drift: f64,
    /// Base means are drawn uniformly from `[-mean_scale, mean_scale]`.
    pub mean_scale: f64,
    /// Covariance is `cov_scale * (B B^T / n + cov_ridge * I)`.
    pub cov_scale: f64,
    pub cov_ridge: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 30,
            horizon: 3120,
            period: 780,
            runs: 10,
            seed: 42,
            a_star: 1.0,
            stride: 10,
            variants: Variant::ALL.to_vec(),
            flip_probs: vec![0.5, 0.75, 1.0],
            perturb_base: 1.0,
            perturb_width: 0.5,
            perturb_step: 0.25,
            drift: 1e-3,
            mean_scale: 0.01,
            cov_scale: 0.25,
            cov_ridge: 0.1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param(format!("need at least 2 products, got {}", self.n)));
        }
        if self.horizon < 1 {
            return Err(Error::param("horizon must be at least 1"));
        }
        if self.period < 1 {
            return Err(Error::param("period must be at least 1"));
        }
        if self.runs < 1 {
            return Err(Error::param("need at least one replication"));
        }
        if self.variants.is_empty() {
            return Err(Error::param("variant list must not be empty"));
        }
        if self.stride < 1 {
            return Err(Error::param("stride must be at least 1"));
        }
        if self.period % self.stride != 0 {
            return Err(Error::param(format!(
                "stride {} must divide the regime period {} so snapshots align",
                self.stride, self.period
            )));
        }
        if !(self.a_star > 0.0) {
            return Err(Error::param("a* must be positive"));
        }
        Ok(())
    }

    /// The regime mutation ladder implied by this config, sized for the
    /// configured horizon.
    pub fn shift_schedule(&self) -> Result<ShiftSchedule> {
        let transitions = regime_count(self.horizon, self.period).saturating_sub(1).max(1);
        let flip_probs = (0..transitions)
            .map(|k| self.flip_probs[k.min(self.flip_probs.len() - 1)])
            .collect();
        let perturb_scale = (1..=transitions)
            .map(|k| {
                (
                    self.perturb_base + self.perturb_step * k as f64,
                    self.perturb_base + self.perturb_width + self.perturb_step * k as f64,
                )
            })
            .collect();
        ShiftSchedule::new(self.period, flip_probs, perturb_scale, vec![self.drift; transitions])
    }

    /// The base market shared by all replications of this experiment.
    pub fn model(&self) -> Result<MarketModel> {
        MarketModel::synthetic(self.n, self.seed, self.mean_scale, self.cov_scale, self.cov_ridge)
    }

    /// Deterministic tape of replication `rep` (streams are 1-based; stream
    /// 0 is reserved for the model itself).
    pub fn tape_for_replication(&self, model: &MarketModel, rep: u32) -> Result<Tape> {
        let shifts = self.shift_schedule()?;
        sample_losses(model, &shifts, self.horizon, RngSeed::new(self.seed, rep as u64 + 1))
    }
}

/// Steps at which trajectories are sampled: every multiple of `stride` up
/// to the horizon, plus the horizon itself.
pub fn sample_steps(horizon: u64, stride: u64) -> Vec<u64> {
    let mut steps: Vec<u64> = (1..=horizon / stride).map(|k| k * stride).collect();
    if steps.last() != Some(&horizon) {
        steps.push(horizon);
    }
    steps
}

/// Result of running every requested variant over one tape.
#[derive(Debug, Clone)]
pub struct TapeEvaluation {
    pub sample_steps: Vec<u64>,
    /// Per variant (config order): running averaged loss at each sample.
    pub curves: Vec<Vec<f64>>,
    /// Per variant: final unweighted averaged loss.
    pub finals: Vec<f64>,
    /// Running best single product: `min_i (cumulative loss_i) / t`.
    pub best_curve: Vec<f64>,
    pub best_final: f64,
    /// One certificate per variant.
    pub certificates: Vec<BoundReport>,
    /// Realized `(mu, rho)` of the tape.
    pub realized: (f64, f64),
}

/// Runs every configured variant on `tape`, tuning each with the tape's
/// realized bounds and the tape's own length as the horizon.
pub fn evaluate_tape(config: &ExperimentConfig, tape: &Tape) -> Result<TapeEvaluation> {
    config.validate()?;
    let bounds = tape.bounds()?;
    let n = tape.n();
    let horizon = tape.steps();
    let samples = sample_steps(horizon, config.stride);

    let mut curves = Vec::with_capacity(config.variants.len());
    let mut finals = Vec::with_capacity(config.variants.len());
    let mut certificates = Vec::with_capacity(config.variants.len());
    for &variant in &config.variants {
        let schedule = variant.schedule(n, Some(horizon), &bounds, config.a_star)?;
        let mut oracle = tape.oracle();
        let (ledger, _) = run(
            &schedule,
            &mut oracle,
            n,
            horizon,
            &bounds,
            HistoryMode::Every(config.stride),
        )?;
        let curve: Vec<f64> = ledger.history().iter().map(|s| s.avg_loss).collect();
        debug_assert_eq!(
            ledger.history().iter().map(|s| s.step).collect::<Vec<_>>(),
            samples
        );
        finals.push(ledger.final_average_loss()?);
        certificates.push(certify(&ledger, &schedule, variant, horizon, n, &bounds)?);
        curves.push(curve);
    }

    let (best_curve, best_final) = best_product_curve(tape, &samples);
    Ok(TapeEvaluation {
        sample_steps: samples,
        curves,
        finals,
        best_curve,
        best_final,
        certificates,
        realized: (tape.realized_mu(), tape.realized_rho()),
    })
}

/// Running best-product trajectory of a tape at the given sample steps,
/// plus its final value: at each step the minimum over products of the
/// averaged cumulative loss.
pub fn best_product_curve(tape: &Tape, samples: &[u64]) -> (Vec<f64>, f64) {
    let n = tape.n();
    let mut cumulative = vec![0.0; n];
    let mut curve = Vec::with_capacity(samples.len());
    let mut next = 0usize;
    for t in 0..tape.steps() {
        for (c, &l) in cumulative.iter_mut().zip(tape.row(t as usize)) {
            *c += l;
        }
        if next < samples.len() && samples[next] == t + 1 {
            let best = cumulative.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            curve.push(best / (t + 1) as f64);
            next += 1;
        }
    }
    let best_total = cumulative.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    (curve, best_total / tape.steps() as f64)
}

/// One replication's evaluation, tagged with its index.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub rep: u32,
    pub eval: TapeEvaluation,
}

/// Generates and evaluates the tape of replication `rep`.
pub fn run_replication(
    config: &ExperimentConfig,
    model: &MarketModel,
    rep: u32,
) -> Result<ReplicationOutcome> {
    let tape = config.tape_for_replication(model, rep)?;
    Ok(ReplicationOutcome {
        rep,
        eval: evaluate_tape(config, &tape)?,
    })
}

/// One certificate within an aggregated report.
#[derive(Debug, Clone, Copy)]
pub struct CertificateRecord {
    pub rep: u32,
    pub variant: Variant,
    pub report: BoundReport,
}

/// Cross-replication aggregate: trajectories averaged in replication-index
/// order, snapshot columns at regime boundaries, and the final
/// percentage-of-best comparison.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub n: usize,
    pub horizon: u64,
    pub period: u64,
    pub runs: u32,
    pub variants: Vec<Variant>,
    pub sample_steps: Vec<u64>,
    /// Per variant: replication-averaged running averaged loss.
    pub curves: Vec<Vec<f64>>,
    pub best_curve: Vec<f64>,
    /// Per variant: replication-averaged final averaged loss.
    pub finals: Vec<f64>,
    pub best_final: f64,
    /// Regime boundaries (multiples of `period`, plus the horizon).
    pub boundaries: Vec<u64>,
    /// Per variant: averaged loss at each boundary.
    pub snapshots: Vec<Vec<f64>>,
    pub best_snapshots: Vec<f64>,
    /// Per variant: final averaged loss as a percentage of the best
    /// product's.
    pub pct_of_best: Vec<f64>,
    /// Replication-averaged realized bounds.
    pub mean_mu: f64,
    pub mean_rho: f64,
    pub certificates: Vec<CertificateRecord>,
    pub all_satisfied: bool,
}

/// Folds replication outcomes into a [`ComparisonReport`]. The fold sorts
/// by replication index first, so the result is byte-identical no matter
/// what order the replications arrive in.
pub fn aggregate(config: &ExperimentConfig, outcomes: &[ReplicationOutcome]) -> Result<ComparisonReport> {
    if outcomes.is_empty() {
        return Err(Error::input("no replication outcomes to aggregate"));
    }
    let mut ordered: Vec<&ReplicationOutcome> = outcomes.iter().collect();
    ordered.sort_by_key(|o| o.rep);

    let first = &ordered[0].eval;
    let samples = first.sample_steps.clone();
    let n_variants = config.variants.len();
    for o in &ordered {
        if o.eval.sample_steps != samples || o.eval.curves.len() != n_variants {
            return Err(Error::input(
                "replication outcomes have mismatched shapes; were they run with one config?",
            ));
        }
    }

    let reps = ordered.len() as f64;
    let mut curves = vec![vec![0.0; samples.len()]; n_variants];
    let mut best_curve = vec![0.0; samples.len()];
    let mut finals = vec![0.0; n_variants];
    let mut best_final = 0.0;
    let mut mean_mu = 0.0;
    let mut mean_rho = 0.0;
    let mut certificates = Vec::new();
    for o in &ordered {
        for (acc, curve) in curves.iter_mut().zip(&o.eval.curves) {
            for (a, v) in acc.iter_mut().zip(curve) {
                *a += v / reps;
            }
        }
        for (a, v) in best_curve.iter_mut().zip(&o.eval.best_curve) {
            *a += v / reps;
        }
        for (a, v) in finals.iter_mut().zip(&o.eval.finals) {
            *a += v / reps;
        }
        best_final += o.eval.best_final / reps;
        mean_mu += o.eval.realized.0 / reps;
        mean_rho += o.eval.realized.1 / reps;
        for (variant, report) in config.variants.iter().zip(&o.eval.certificates) {
            certificates.push(CertificateRecord {
                rep: o.rep,
                variant: *variant,
                report: *report,
            });
        }
    }

    let horizon = *samples.last().expect("sample steps are never empty");
    let mut boundaries: Vec<u64> = (1..=horizon / config.period)
        .map(|k| k * config.period)
        .collect();
    if boundaries.last() != Some(&horizon) {
        boundaries.push(horizon);
    }
    let index_of = |step: u64| -> usize {
        samples
            .binary_search(&step)
            .expect("boundaries are sampled because stride divides period")
    };
    let snapshots: Vec<Vec<f64>> = curves
        .iter()
        .map(|c| boundaries.iter().map(|&b| c[index_of(b)]).collect())
        .collect();
    let best_snapshots: Vec<f64> = boundaries.iter().map(|&b| best_curve[index_of(b)]).collect();
    let pct_of_best = finals.iter().map(|f| 100.0 * f / best_final).collect();
    let all_satisfied = certificates.iter().all(|c| c.report.satisfied);

    Ok(ComparisonReport {
        n: config.n,
        horizon,
        period: config.period,
        runs: ordered.len() as u32,
        variants: config.variants.clone(),
        sample_steps: samples,
        curves,
        best_curve,
        finals,
        best_final,
        boundaries,
        snapshots,
        best_snapshots,
        pct_of_best,
        mean_mu,
        mean_rho,
        certificates,
        all_satisfied,
    })
}

/// Generates all replication tapes, evaluates them sequentially, and
/// aggregates. A pure function of the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport> {
    config.validate()?;
    let model = config.model()?;
    let outcomes: Vec<ReplicationOutcome> = (0..config.runs)
        .map(|rep| run_replication(config, &model, rep))
        .collect::<Result<_>>()?;
    aggregate(config, &outcomes)
}

/// Wide-format trajectory CSV: `t`, one column per variant, then the best
/// product.
pub fn trajectory_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("t");
    for v in &report.variants {
        out.push(',');
        out.push_str(v.tag());
    }
    out.push(',');
    out.push_str(BEST_PRODUCT_SERIES);
    out.push('\n');
    for (i, step) in report.sample_steps.iter().enumerate() {
        out.push_str(&step.to_string());
        for curve in &report.curves {
            out.push(',');
            out.push_str(&curve[i].to_string());
        }
        out.push(',');
        out.push_str(&report.best_curve[i].to_string());
        out.push('\n');
    }
    out
}

/// Long-format plot data: `t,series,value`, one block per series (variants
/// in config order, then the best product).
pub fn plot_data_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("t,series,value\n");
    for (v, curve) in report.variants.iter().zip(&report.curves) {
        for (step, value) in report.sample_steps.iter().zip(curve) {
            out.push_str(&format!("{step},{},{value}\n", v.tag()));
        }
    }
    for (step, value) in report.sample_steps.iter().zip(&report.best_curve) {
        out.push_str(&format!("{step},{BEST_PRODUCT_SERIES},{value}\n"));
    }
    out
}

/// Companion script that renders the long-format plot data with matplotlib.
pub fn plot_script(data_file: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Renders averaged-loss trajectories from {data_file}."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(lambda: ([], []))
with open("{data_file}", newline="") as fh:
    for row in csv.DictReader(fh):
        xs, ys = series[row["series"]]
        xs.append(int(row["t"]))
        ys.append(float(row["value"]))

fig, ax = plt.subplots(figsize=(9, 5))
for name, (xs, ys) in series.items():
    style = "k-" if name == "{best}" else None
    if style:
        ax.plot(xs, ys, style, linewidth=2.0, label=name)
    else:
        ax.plot(xs, ys, label=name)
ax.set_xlabel("step")
ax.set_ylabel("averaged loss")
ax.legend()
fig.tight_layout()
fig.savefig("trajectories.png", dpi=150)
print("wrote trajectories.png")
"#,
        data_file = data_file,
        best = BEST_PRODUCT_SERIES,
    )
}

/// Markdown summary table mirroring the monthly-snapshot layout: averaged
/// losses at each regime boundary and the final percentage of the best
/// product.
pub fn summary_markdown(report: &ComparisonReport) -> String {
    let mut out = format!(
        "# Averaged losses ({} products, {} runs, realized mu = {:.4}, rho = {:.4})\n\n",
        report.n, report.runs, report.mean_mu, report.mean_rho
    );
    out.push_str("| series |");
    for b in &report.boundaries {
        out.push_str(&format!(" t={b} |"));
    }
    out.push_str(" % of best |\n");
    out.push_str("|---|");
    for _ in &report.boundaries {
        out.push_str("---|");
    }
    out.push_str("---|\n");

    out.push_str(&format!("| {BEST_PRODUCT_SERIES} |"));
    for v in &report.best_snapshots {
        out.push_str(&format!(" {v:.4} |"));
    }
    out.push_str(" - |\n");

    for (i, v) in report.variants.iter().enumerate() {
        out.push_str(&format!("| {} |", v.tag()));
        for s in &report.snapshots[i] {
            out.push_str(&format!(" {s:.4} |"));
        }
        out.push_str(&format!(" {:.1}% |\n", report.pct_of_best[i]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            n: 5,
            horizon: 120,
            period: 40,
            runs: 3,
            seed: 7,
            stride: 10,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn sample_steps_cover_horizon() {
        assert_eq!(sample_steps(100, 30), vec![30, 60, 90, 100]);
        assert_eq!(sample_steps(90, 30), vec![30, 60, 90]);
        assert_eq!(sample_steps(5, 10), vec![5]);
    }

    #[test]
    fn constant_tape_curves_equal_best_product() {
        let config = ExperimentConfig {
            variants: Variant::ALL.to_vec(),
            ..small_config()
        };
        // Identical losses across products: every portfolio suffers the
        // same loss, so every curve coincides with the best product.
        let rows: Vec<f64> = (0..120).flat_map(|t| vec![0.1 + 0.001 * t as f64; 5]).collect();
        let tape = Tape::new(5, rows).unwrap();
        let eval = evaluate_tape(&config, &tape).unwrap();
        for curve in &eval.curves {
            for (a, b) in curve.iter().zip(&eval.best_curve) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        for cert in &eval.certificates {
            assert!(cert.satisfied);
            assert!(cert.empirical_regret.abs() <= 1e-12);
        }
    }

    #[test]
    fn best_curve_matches_independent_recomputation() {
        let config = small_config();
        let model = config.model().unwrap();
        let tape = config.tape_for_replication(&model, 0).unwrap();
        let eval = evaluate_tape(&config, &tape).unwrap();

        // Recompute the envelope from the raw tape.
        for (idx, &step) in eval.sample_steps.iter().enumerate() {
            let mut totals = vec![0.0; tape.n()];
            for t in 0..step as usize {
                for (acc, &l) in totals.iter_mut().zip(tape.row(t)) {
                    *acc += l;
                }
            }
            let want = totals.iter().fold(f64::INFINITY, |a, &b| a.min(b)) / step as f64;
            assert!((eval.best_curve[idx] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregation_is_order_independent() {
        let config = small_config();
        let model = config.model().unwrap();
        let outcomes: Vec<ReplicationOutcome> = (0..config.runs)
            .map(|rep| run_replication(&config, &model, rep).unwrap())
            .collect();
        let forward = aggregate(&config, &outcomes).unwrap();
        let mut reversed = outcomes;
        reversed.reverse();
        let backward = aggregate(&config, &reversed).unwrap();
        assert_eq!(trajectory_csv(&forward), trajectory_csv(&backward));
        assert_eq!(summary_markdown(&forward), summary_markdown(&backward));
    }

    #[test]
    fn experiment_is_deterministic() {
        let config = small_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(trajectory_csv(&a), trajectory_csv(&b));
        assert_eq!(plot_data_csv(&a), plot_data_csv(&b));
    }

    #[test]
    fn plot_data_row_count() {
        let config = small_config();
        let report = run_experiment(&config).unwrap();
        let rows = plot_data_csv(&report);
        let expected = (config.variants.len() + 1) * report.sample_steps.len() + 1;
        assert_eq!(rows.lines().count(), expected);
        for v in &report.variants {
            assert!(rows.contains(&format!(",{},", v.tag())));
        }
    }

    #[test]
    fn snapshots_sit_on_boundaries() {
        let config = small_config();
        let report = run_experiment(&config).unwrap();
        assert_eq!(report.boundaries, vec![40, 80, 120]);
        assert_eq!(report.snapshots.len(), report.variants.len());
        assert_eq!(report.snapshots[0].len(), 3);
    }

    #[test]
    fn config_validation_catches_misalignment() {
        let config = ExperimentConfig {
            stride: 7,
            period: 40,
            ..small_config()
        };
        assert!(config.validate().is_err());
        let config = ExperimentConfig {
            variants: Vec::new(),
            ..small_config()
        };
        assert!(config.validate().is_err());
    }
}
