use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Baseline;
use crate::diag_ocp::{DiagOcp, StepDiagnostics};
use crate::error::{check_dim, Error, Result};
use crate::hessian_probe::{clip_diag, hutchinson_diag, DiagEstimate, ProbeConfig};
use crate::problems::{make_problem, BatchSeed, Channel, ProblemOracle};
use crate::vector::{distance, ParamVector};

use super::config::{OptimizerSpec, ResolvedOptimizer, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Squared norm of the stochastic gradient evaluated at this iterate.
    pub grad_norm_sq: f64,
    /// Distance moved by the update that produced this iterate.
    pub step_norm: f64,
    /// Post-safeguard stability margin; Diag-OCP only.
    pub rho: Option<f64>,
    /// Cumulative number of steps on which the safeguard engaged.
    pub safeguard_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_train: f64,
    pub final_val: f64,
    pub min_val: f64,
    pub min_val_step: usize,
    pub diverged: bool,
    /// First step whose iterate was non-finite, when diverged.
    pub diverged_at: Option<usize>,
    pub wall_clock_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub optimizer: String,
    pub lr: f64,
    pub mu: Option<f64>,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub summary: RunSummary,
}

/// A live optimizer of either family.
#[derive(Debug, Clone)]
pub enum Stepper {
    DiagOcp(DiagOcp),
    Baseline(Baseline),
}

/// What a single update produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x: ParamVector,
    pub diagnostics: Option<StepDiagnostics>,
}

impl Stepper {
    pub fn new(dim: usize, spec: &OptimizerSpec) -> Result<Self> {
        Ok(match spec.resolve()? {
            ResolvedOptimizer::DiagOcp(cfg) => Stepper::DiagOcp(DiagOcp::new(dim, cfg)?),
            ResolvedOptimizer::Baseline(cfg) => Stepper::Baseline(Baseline::new(dim, cfg)?),
        })
    }

    pub fn needs_curvature(&self) -> bool {
        match self {
            Stepper::DiagOcp(_) => true,
            Stepper::Baseline(b) => b.config().kind.needs_curvature(),
        }
    }

    pub fn step(&mut self, x: &[f64], g: &[f64], h: Option<&DiagEstimate>) -> Result<StepOutcome> {
        match self {
            Stepper::DiagOcp(opt) => {
                let h = h.ok_or_else(|| {
                    Error::InvalidConfig("diag_ocp requires a curvature estimate".into())
                })?;
                let (x, diag, _) = opt.step(x, g, h)?;
                Ok(StepOutcome {
                    x,
                    diagnostics: Some(diag),
                })
            }
            Stepper::Baseline(opt) => Ok(StepOutcome {
                x: opt.step(x, g, h)?,
                diagnostics: None,
            }),
        }
    }
}

/// Probe → clip at `x`, using the step's gradient seed for the HVPs so that
/// mini-batch noise cancels inside central differences.
pub fn estimate_curvature(
    problem: &ProblemOracle,
    x: &ParamVector,
    probe: &ProbeConfig,
    grad_seed: BatchSeed,
) -> Result<DiagEstimate> {
    let probe_seed = grad_seed.with_channel(Channel::Probe);
    let raw = hutchinson_diag(
        |v| problem.hvp(x, v, grad_seed).map(ParamVector::into_inner),
        problem.dim(),
        probe,
        probe_seed,
    )?;
    clip_diag(&raw, probe)
}

pub fn run_id(optimizer: &str, lr: f64, mu: Option<f64>, seed: u64) -> String {
    match mu {
        Some(mu) => format!("{optimizer}-lr{lr}-mu{mu}-s{seed}"),
        None => format!("{optimizer}-lr{lr}-s{seed}"),
    }
}

/// Runs one replicate to completion, or until an iterate stops being
/// finite, in which case the run is marked diverged and halted.
pub fn run_single(
    problem: &ProblemOracle,
    spec: &OptimizerSpec,
    max_steps: usize,
    record_every: usize,
    seed: u64,
) -> Result<RunRecord> {
    let started = Instant::now();
    let mut stepper = Stepper::new(problem.dim(), spec)?;
    let probe = spec.probe_config();
    let mut x = problem.initial_point(seed);
    check_dim(problem.dim(), x.dim())?;

    let mut steps = Vec::new();
    let mut last_step_norm = 0.0;
    let mut last_rho = None;
    let mut safeguard_count = 0u64;
    let mut diverged_at = None;
    let mut last_finite: Option<StepRecord> = None;

    for k in 0..=max_steps {
        let train_loss = problem.train_loss(&x)?;
        let val_loss = problem.val_loss(&x)?;
        if !x.is_finite() || !train_loss.is_finite() || !val_loss.is_finite() {
            diverged_at = Some(k);
            break;
        }
        let grad_seed = BatchSeed::new(seed, k as u64, Channel::Gradient);
        let g = problem.eval_grad(&x, grad_seed)?;
        let grad_norm_sq = g.norm_sq();
        if !grad_norm_sq.is_finite() {
            diverged_at = Some(k);
            break;
        }
        let rec = StepRecord {
            step: k,
            train_loss,
            val_loss,
            grad_norm_sq,
            step_norm: last_step_norm,
            rho: last_rho,
            safeguard_count,
        };
        if k % record_every == 0 || k == max_steps {
            steps.push(rec.clone());
        }
        last_finite = Some(rec);
        if k == max_steps {
            break;
        }

        let h = if stepper.needs_curvature() {
            match estimate_curvature(problem, &x, &probe, grad_seed) {
                Ok(h) => Some(h),
                Err(Error::NonFinite(_)) => {
                    diverged_at = Some(k + 1);
                    break;
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let out = stepper.step(&x, &g, h.as_ref())?;
        last_step_norm = distance(&out.x, &x);
        if let Some(d) = out.diagnostics {
            last_rho = Some(d.rho);
            safeguard_count += d.safeguard_triggered as u64;
        }
        x = out.x;
    }

    // a record at the divergence point itself is never written, so the
    // final values are those of the last finite iterate
    if let (Some(last), Some(recorded)) = (&last_finite, steps.last()) {
        if recorded.step != last.step {
            steps.push(last.clone());
        }
    }
    let (final_train, final_val) = steps
        .last()
        .map(|r| (r.train_loss, r.val_loss))
        .unwrap_or((f64::NAN, f64::NAN));
    let (min_val_step, min_val) = steps
        .iter()
        .map(|r| (r.step, r.val_loss))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });

    let mu = spec.reported_mu();
    Ok(RunRecord {
        run_id: run_id(&spec.kind, spec.lr, mu, seed),
        optimizer: spec.kind.clone(),
        lr: spec.lr,
        mu,
        seed,
        steps,
        summary: RunSummary {
            final_train,
            final_val,
            min_val,
            min_val_step,
            diverged: diverged_at.is_some(),
            diverged_at,
            wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// Replicate seeds derived from the base seed.
pub fn replicate_seeds(base_seed: u64, n_seeds: usize) -> Vec<u64> {
    (0..n_seeds as u64).map(|r| base_seed.wrapping_add(r)).collect()
}

/// Runs every replicate of `cfg` (in parallel) against an already built
/// problem. Records come back in seed order.
pub fn run_replicates(problem: &ProblemOracle, cfg: &RunConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    cfg.optimizer.resolve()?;
    replicate_seeds(cfg.base_seed, cfg.n_seeds)
        .into_par_iter()
        .map(|seed| run_single(problem, &cfg.optimizer, cfg.max_steps, cfg.record_every, seed))
        .collect()
}

/// Builds the problem and runs all replicates; one record per seed.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<RunRecord>> {
    let problem = make_problem(&cfg.problem)?;
    run_replicates(&problem, cfg)
}
