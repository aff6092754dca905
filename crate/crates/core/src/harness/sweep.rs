//! Staged learning-rate sweep, clipping-floor ablation and the
//! multi-optimizer comparison built on top of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{make_problem, ProblemOracle};

use super::config::{RunConfig, SelectionMetric, SweepSpec};
use super::run::{run_replicates, RunRecord};

/// Clip floor of the unclamped control run; still positive so the inverse
/// curvature stays defined.
pub const CONTROL_MU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub optimizer: String,
    pub lr: f64,
    /// 1 for the coarse grid, 2 for refinement candidates.
    pub stage: u8,
    pub n_seeds: usize,
    pub n_diverged: usize,
    /// Medians over non-diverged seeds; `None` when every seed diverged.
    pub final_val: Option<f64>,
    pub min_val: Option<f64>,
    pub min_val_step: Option<usize>,
    pub metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub optimizer: String,
    pub rows: Vec<SweepRow>,
    pub selected_lr: f64,
    pub selected_metric: f64,
    /// Records of every run, grouped per row (same order as `rows`).
    #[serde(skip)]
    pub records: Vec<Vec<RunRecord>>,
}

impl SweepResult {
    pub fn selected_records(&self) -> &[RunRecord] {
        let idx = self
            .rows
            .iter()
            .position(|r| r.lr == self.selected_lr)
            .expect("selected lr comes from the rows");
        &self.records[idx]
    }
}

/// Lower median; `values` must be non-empty.
fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

fn summarize(optimizer: &str, lr: f64, stage: u8, records: &[RunRecord], metric: SelectionMetric) -> SweepRow {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| !r.summary.diverged).collect();
    let n_diverged = records.len() - ok.len();
    let (final_val, min_val, min_val_step) = if ok.is_empty() {
        (None, None, None)
    } else {
        let mut finals: Vec<f64> = ok.iter().map(|r| r.summary.final_val).collect();
        let mut by_min: Vec<(f64, usize)> = ok
            .iter()
            .map(|r| (r.summary.min_val, r.summary.min_val_step))
            .collect();
        by_min.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (m, s) = by_min[(by_min.len() - 1) / 2];
        (Some(lower_median(&mut finals)), Some(m), Some(s))
    };
    let metric_value = match metric {
        SelectionMetric::FinalValLoss => final_val,
        SelectionMetric::MinValLoss => min_val,
    };
    SweepRow {
        optimizer: optimizer.to_string(),
        lr,
        stage,
        n_seeds: records.len(),
        n_diverged,
        final_val,
        min_val,
        min_val_step,
        metric: metric_value,
    }
}

/// Orders rows by (fewest diverged seeds, lowest metric, largest lr).
fn best_row(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().filter(|r| r.metric.is_some()).min_by(|a, b| {
        a.n_diverged
            .cmp(&b.n_diverged)
            .then(a.metric.unwrap().total_cmp(&b.metric.unwrap()))
            .then(b.lr.total_cmp(&a.lr))
    })
}

/// Rounds to 12 significant digits so that products like `0.01 × 0.1`
/// print as `0.001`.
fn tidy(lr: f64) -> f64 {
    format!("{lr:.11e}").parse().unwrap_or(lr)
}

/// Refinement candidates around a winning coarse learning rate.
pub fn refine_candidates(best: f64, multipliers: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for m in multipliers {
        let lr = tidy(best * m);
        if !out.contains(&lr) {
            out.push(lr);
        }
    }
    out
}

/// Two-stage search: every coarse learning rate, then the refinement
/// pattern around the best one. Learning rates already run are reused.
pub fn lr_sweep(spec: &SweepSpec, base: &RunConfig) -> Result<SweepResult> {
    let problem = make_problem(&base.problem)?;
    lr_sweep_on(&problem, spec, base)
}

pub fn lr_sweep_on(problem: &ProblemOracle, spec: &SweepSpec, base: &RunConfig) -> Result<SweepResult> {
    spec.validate()?;
    base.validate()?;
    let optimizer = base.optimizer.kind.clone();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut run_lr = |lr: f64, stage: u8, rows: &mut Vec<SweepRow>| -> Result<()> {
        let cfg = RunConfig {
            optimizer: base.optimizer.with_lr(lr),
            ..base.clone()
        };
        let recs = run_replicates(problem, &cfg)?;
        rows.push(summarize(&optimizer, lr, stage, &recs, spec.metric));
        records.push(recs);
        Ok(())
    };

    for &lr in &spec.coarse_grid {
        run_lr(lr, 1, &mut rows)?;
    }
    let coarse_best = best_row(&rows)
        .map(|r| r.lr)
        .ok_or_else(|| Error::AllDiverged(spec.coarse_grid.clone()))?;
    for lr in refine_candidates(coarse_best, &spec.refine_multipliers) {
        if !rows.iter().any(|r| r.lr == lr) {
            run_lr(lr, 2, &mut rows)?;
        }
    }
    let best = best_row(&rows).expect("coarse stage produced a valid row");
    Ok(SweepResult {
        optimizer,
        selected_lr: best.lr,
        selected_metric: best.metric.unwrap(),
        rows,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mu: f64,
    pub control: bool,
    pub seed: u64,
    pub final_train: f64,
    pub final_val: f64,
    pub min_val: f64,
    pub min_val_step: usize,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
    pub records: Vec<RunRecord>,
}

/// One run set per clip floor plus an effectively unclamped control, all at
/// the base learning rate.
pub fn ablate_mu(values: &[f64], base: &RunConfig) -> Result<AblationResult> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("ablation needs at least one mu".into()));
    }
    if let Some(bad) = values.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidConfig(format!("mu must be > 0; got {bad}")));
    }
    let problem = make_problem(&base.problem)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let sets = values
        .iter()
        .map(|&v| (v, false))
        .chain(std::iter::once((CONTROL_MU, true)));
    for (mu, control) in sets {
        let cfg = RunConfig {
            optimizer: super::config::OptimizerSpec {
                mu,
                ..base.optimizer.clone()
            },
            ..base.clone()
        };
        for rec in run_replicates(&problem, &cfg)? {
            rows.push(AblationRow {
                mu,
                control,
                seed: rec.seed,
                final_train: rec.summary.final_train,
                final_val: rec.summary.final_val,
                min_val: rec.summary.min_val,
                min_val_step: rec.summary.min_val_step,
                diverged: rec.summary.diverged,
            });
            records.push(rec);
        }
    }
    Ok(AblationResult { rows, records })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareResult {
    pub sweeps: Vec<SweepResult>,
}

impl CompareResult {
    /// Records at each optimizer's selected learning rate, in optimizer
    /// order then seed order.
    pub fn selected_records(&self) -> Vec<RunRecord> {
        self.sweeps
            .iter()
            .flat_map(|s| s.selected_records().iter().cloned())
            .collect()
    }

    pub fn sweep_for(&self, optimizer: &str) -> Option<&SweepResult> {
        self.sweeps.iter().find(|s| s.optimizer == optimizer)
    }
}

/// Tunes each optimizer with [`lr_sweep`] at a matched budget on the same
/// problem and keeps the per-seed records at the selected learning rates.
pub fn compare(optimizers: &[String], spec: &SweepSpec, base: &RunConfig) -> Result<CompareResult> {
    if optimizers.is_empty() {
        return Err(Error::InvalidConfig("compare needs at least one optimizer".into()));
    }
    let problem = make_problem(&base.problem)?;
    let sweeps = optimizers
        .iter()
        .map(|key| {
            let cfg = RunConfig {
                optimizer: base.optimizer.with_kind(key),
                ..base.clone()
            };
            lr_sweep_on(&problem, spec, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CompareResult { sweeps })
}
