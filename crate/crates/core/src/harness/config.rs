//! Experiment configuration as read from a JSON config file.
//!
//! Every key has a default, so `{}` is a valid config. Unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::diag_ocp::OptimizerConfig;
use crate::error::{Error, Result};
use crate::hessian_probe::{ProbeConfig, ProbeDistribution};
use crate::problems::ProblemSpec;

pub const DIAG_OCP_KEY: &str = "diag_ocp";
pub const OPTIMIZER_KEYS: [&str; 5] = ["sgd", "adam", "radam", "adahessian", DIAG_OCP_KEY];

/// Optimizer selection plus every hyperparameter any optimizer reads.
/// Fields irrelevant to the selected optimizer are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    /// `sgd` | `adam` | `radam` | `adahessian` | `diag_ocp`
    pub kind: String,
    /// Learning rate; α for `diag_ocp`.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay (λ for `diag_ocp`).
    pub weight_decay: f64,
    pub momentum: f64,
    /// Curvature clip floor μ.
    pub mu: f64,
    /// Curvature clip ceiling G_d.
    pub g_d: f64,
    pub n_probes: usize,
    pub probe_distribution: ProbeDistribution,
    pub safeguard_rho_max: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            kind: DIAG_OCP_KEY.into(),
            lr: d.alpha,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: 1e-8,
            weight_decay: d.lambda,
            momentum: 0.0,
            mu: d.mu,
            g_d: d.g_d,
            n_probes: d.n_probes,
            probe_distribution: d.probe_distribution,
            safeguard_rho_max: d.safeguard_rho_max,
        }
    }
}

/// A concrete optimizer configuration resolved from its key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedOptimizer {
    DiagOcp(OptimizerConfig),
    Baseline(BaselineConfig),
}

impl OptimizerSpec {
    pub fn with_kind(&self, kind: &str) -> Self {
        Self {
            kind: kind.into(),
            ..self.clone()
        }
    }

    pub fn with_lr(&self, lr: f64) -> Self {
        Self { lr, ..self.clone() }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            n_probes: self.n_probes,
            distribution: self.probe_distribution,
            clip_lo: self.mu,
            clip_hi: self.g_d,
        }
    }

    pub fn resolve(&self) -> Result<ResolvedOptimizer> {
        if self.kind == DIAG_OCP_KEY {
            let cfg = OptimizerConfig {
                alpha: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                mu: self.mu,
                g_d: self.g_d,
                lambda: self.weight_decay,
                n_probes: self.n_probes,
                probe_distribution: self.probe_distribution,
                safeguard_rho_max: self.safeguard_rho_max,
            };
            cfg.validate()?;
            return Ok(ResolvedOptimizer::DiagOcp(cfg));
        }
        let kind = BaselineKind::from_key(&self.kind)
            .ok_or_else(|| Error::UnknownOptimizer(self.kind.clone()))?;
        let cfg = BaselineConfig {
            kind,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            momentum: self.momentum,
        };
        cfg.validate()?;
        if kind.needs_curvature() {
            self.probe_config().validate()?;
        }
        Ok(ResolvedOptimizer::Baseline(cfg))
    }

    /// Clip floor reported alongside results for curvature-based optimizers.
    pub fn reported_mu(&self) -> Option<f64> {
        match self.kind.as_str() {
            DIAG_OCP_KEY | "adahessian" => Some(self.mu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub max_steps: usize,
    pub base_seed: u64,
    pub n_seeds: usize,
    pub record_every: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        if self.n_seeds == 0 {
            return Err(Error::InvalidConfig("n_seeds must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    FinalValLoss,
    #[default]
    MinValLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub coarse_grid: Vec<f64>,
    /// Multipliers applied to the winning coarse learning rate.
    pub refine_multipliers: Vec<f64>,
    pub metric: SelectionMetric,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            coarse_grid: vec![1e-1, 1e-2, 1e-3, 1e-4],
            refine_multipliers: vec![1.0, 0.5, 0.1],
            metric: SelectionMetric::MinValLoss,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_grid.is_empty() {
            return Err(Error::InvalidConfig("sweep coarse_grid is empty".into()));
        }
        if self.coarse_grid.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::InvalidConfig("sweep learning rates must be > 0".into()));
        }
        if self.coarse_grid.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig(
                "sweep coarse_grid must be sorted strictly descending".into(),
            ));
        }
        if self.refine_multipliers.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidConfig("refine multipliers must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    pub optimizers: Vec<String>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            optimizers: OPTIMIZER_KEYS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    pub mu_values: Vec<f64>,
    /// Fixed learning rate; falls back to the optimizer's `lr`.
    pub lr: Option<f64>,
}

impl Default for AblationSpec {
    fn default() -> Self {
        Self {
            mu_values: vec![1e-3, 1e-4, 1e-5],
            lr: Some(0.01),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma1Spec {
    pub trials: usize,
    /// Fraction of trials drawn with a coordinate outside the stable range,
    /// which exercises the safeguard exclusion path.
    pub boundary_fraction: f64,
}

impl Default for Lemma1Spec {
    fn default() -> Self {
        Self {
            trials: 200,
            boundary_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSpec {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub t_list: Vec<usize>,
    pub n_seeds: usize,
    /// Upper bound on `min_k avg‖∇f‖²` at the last horizon relative to the
    /// first.
    pub max_decay_ratio: f64,
}

/// Curvatures of the default rate-check quadratic: 20 values log-spaced
/// over `[0.5, 5]`.
pub fn rate_quadratic_curvatures(dim: usize) -> Vec<f64> {
    let (lo, hi): (f64, f64) = (0.5, 5.0);
    (0..dim)
        .map(|i| {
            let frac = if dim == 1 { 0.0 } else { i as f64 / (dim - 1) as f64 };
            (lo.ln() + frac * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

impl Default for RateSpec {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::quadratic(rate_quadratic_curvatures(20)).with_grad_noise(0.05),
            optimizer: OptimizerSpec {
                lr: 0.001,
                weight_decay: 0.0,
                ..OptimizerSpec::default()
            },
            t_list: vec![100, 200, 400],
            n_seeds: 20,
            max_decay_ratio: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HutchinsonSpec {
    pub n_probes: usize,
    pub matrix_dim: usize,
    pub matrix_seed: u64,
    /// Per-coordinate relative error bound for the dense matrix.
    pub tolerance: f64,
}

impl Default for HutchinsonSpec {
    fn default() -> Self {
        Self {
            n_probes: 100_000,
            matrix_dim: 8,
            matrix_seed: 2024,
            tolerance: 0.05,
        }
    }
}

/// Top-level config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub max_steps: usize,
    pub base_seed: u64,
    pub n_seeds: usize,
    pub record_every: usize,
    pub sweep: SweepSpec,
    pub compare: CompareSpec,
    pub ablation: AblationSpec,
    pub lemma1: Lemma1Spec,
    pub rate: RateSpec,
    pub hutchinson: HutchinsonSpec,
}

/// Synthetic teacher-student regression used by the benchmark defaults.
pub fn default_mlp_problem() -> ProblemSpec {
    ProblemSpec::mlp(vec![8, 16, 2], 7, 256, 0.05).with_grad_noise(0.01)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: default_mlp_problem(),
            optimizer: OptimizerSpec::default(),
            max_steps: 150,
            base_seed: 0,
            n_seeds: 5,
            record_every: 1,
            sweep: SweepSpec::default(),
            compare: CompareSpec::default(),
            ablation: AblationSpec::default(),
            lemma1: Lemma1Spec::default(),
            rate: RateSpec::default(),
            hutchinson: HutchinsonSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            problem: self.problem.clone(),
            optimizer: self.optimizer.clone(),
            max_steps: self.max_steps,
            base_seed: self.base_seed,
            n_seeds: self.n_seeds,
            record_every: self.record_every,
        }
    }
}
