//! Numerical checks of the optimizer's theoretical properties: equivalence
//! of the closed-form step with the inner recursion, the empirical decay of
//! the best squared gradient norm, and Hutchinson unbiasedness.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag_ocp::{step_closed_form, step_recursive_reference, Moments, OptimizerConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::hessian_probe::{hutchinson_diag, ProbeConfig, ProbeDistribution};
use crate::problems::seed::seeded_rng;
use crate::problems::{make_problem, BatchSeed, Channel, ProblemSpec};

use super::config::{HutchinsonSpec, OptimizerSpec};
use super::run::{estimate_curvature, replicate_seeds, Stepper};

pub const LEMMA1_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub trials: usize,
    pub compared: usize,
    /// Trials where the safeguard engaged; outside the equivalence
    /// hypothesis, so not compared.
    pub excluded_safeguard: usize,
    pub max_deviation: f64,
    /// Largest deviation among single-step (`t = 1`) trials.
    pub max_deviation_first_step: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Random comparisons of the closed-form step against the literal
/// recursion (dim ≤ 32, t ≤ 64, α·d̂ ∈ (0.01, 1.99)). Every tenth trial uses
/// `t = 1`; a `boundary_fraction` of trials puts one coordinate at
/// α·d̂ ∈ (2, 3) where the safeguard engages.
pub fn verify_lemma1(trials: usize, seed: u64, boundary_fraction: f64) -> Result<Lemma1Report> {
    if trials == 0 {
        return Err(Error::InvalidConfig("lemma1 needs at least one trial".into()));
    }
    let mut compared = 0;
    let mut excluded = 0;
    let mut max_dev: f64 = 0.0;
    let mut max_dev_first: f64 = 0.0;
    for trial in 0..trials {
        let mut rng = seeded_rng(seed, trial as u64);
        let dim = rng.random_range(1..=32usize);
        let t = if trial % 10 == 0 { 1 } else { rng.random_range(1..=64u64) };
        let alpha = 10f64.powf(rng.random_range(-3.0..0.0));
        let cfg = OptimizerConfig {
            alpha,
            lambda: rng.random_range(0.0..0.01),
            mu: 1e-12,
            g_d: 1e12,
            ..OptimizerConfig::default()
        };
        let mut d_hat: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(0.01..1.99) / alpha)
            .collect();
        if rng.random::<f64>() < boundary_fraction {
            let i = rng.random_range(0..dim);
            d_hat[i] = rng.random_range(2.0..3.0) / alpha;
        }
        let m_hat: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let state = OptimizerState {
            t,
            m: vec![0.0; dim],
            d: vec![0.0; dim],
        };
        let moments = Moments { m_hat, d_hat };
        let (closed, diag) = step_closed_form(&state, &x, &moments, &cfg)?;
        if diag.safeguard_triggered {
            excluded += 1;
            continue;
        }
        let reference = step_recursive_reference(&state, &x, &moments, &cfg)?;
        let dev = closed
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        compared += 1;
        max_dev = max_dev.max(dev);
        if t == 1 {
            max_dev_first = max_dev_first.max(dev);
        }
    }
    Ok(Lemma1Report {
        trials,
        compared,
        excluded_safeguard: excluded,
        max_deviation: max_dev,
        max_deviation_first_step: max_dev_first,
        tolerance: LEMMA1_TOLERANCE,
        pass: compared > 0 && max_dev <= LEMMA1_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub t_list: Vec<usize>,
    pub n_seeds: usize,
    pub n_diverged: usize,
    /// `min_{1 ≤ k ≤ T} mean_seeds ‖∇f(x_k)‖²` for each horizon.
    pub min_avg_grad_sq: Vec<f64>,
    /// `T · min_avg_grad_sq`, bounded if the decay is at least `1/T`.
    pub scaled: Vec<f64>,
    /// Least-squares slope of `ln min_avg_grad_sq` against `ln T`.
    pub log_log_slope: f64,
    /// Last horizon's value over the first horizon's.
    pub decay_ratio: f64,
    pub max_decay_ratio: f64,
    pub pass: bool,
}

/// Squared true-gradient norms at `x_1 ..= x_T` for one replicate, or
/// `None` if the run stopped being finite.
fn grad_norm_trace(
    problem: &crate::problems::ProblemOracle,
    spec: &OptimizerSpec,
    horizon: usize,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    let mut stepper = Stepper::new(problem.dim(), spec)?;
    let probe = spec.probe_config();
    let mut x = problem.initial_point(seed);
    let mut trace = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let grad_seed = BatchSeed::new(seed, k as u64, Channel::Gradient);
        let g = problem.eval_grad(&x, grad_seed)?;
        let h = if stepper.needs_curvature() {
            Some(estimate_curvature(problem, &x, &probe, grad_seed)?)
        } else {
            None
        };
        x = stepper.step(&x, &g, h.as_ref())?.x;
        if !x.is_finite() {
            return Ok(None);
        }
        let n = problem.true_grad(&x)?.norm_sq();
        if !n.is_finite() {
            return Ok(None);
        }
        trace.push(n);
    }
    Ok(Some(trace))
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Seed-averaged best squared gradient norm at several horizons.
pub fn verify_rate(
    problem: &ProblemSpec,
    optimizer: &OptimizerSpec,
    t_list: &[usize],
    n_seeds: usize,
    base_seed: u64,
    max_decay_ratio: f64,
) -> Result<RateReport> {
    if t_list.len() < 2 {
        return Err(Error::InvalidConfig("rate check needs at least two horizons".into()));
    }
    if t_list[0] == 0 || t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("horizons must be positive and strictly ascending".into()));
    }
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("n_seeds must be >= 1".into()));
    }
    let oracle = make_problem(problem)?;
    let horizon = *t_list.last().unwrap();
    let traces = replicate_seeds(base_seed, n_seeds)
        .into_par_iter()
        .map(|seed| grad_norm_trace(&oracle, optimizer, horizon, seed))
        .collect::<Result<Vec<_>>>()?;
    let finite: Vec<Vec<f64>> = traces.iter().flatten().cloned().collect();
    let n_diverged = n_seeds - finite.len();
    if finite.is_empty() {
        return Err(Error::InvalidConfig("every replicate diverged; no valid horizons".into()));
    }
    let avg: Vec<f64> = (0..horizon)
        .map(|k| finite.iter().map(|t| t[k]).sum::<f64>() / finite.len() as f64)
        .collect();
    let min_avg: Vec<f64> = t_list
        .iter()
        .map(|&t| avg[..t].iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let scaled = t_list.iter().zip(&min_avg).map(|(&t, m)| t as f64 * m).collect();
    let log_t: Vec<f64> = t_list.iter().map(|&t| (t as f64).ln()).collect();
    let log_m: Vec<f64> = min_avg.iter().map(|m| m.ln()).collect();
    let decay_ratio = min_avg.last().unwrap() / min_avg[0];
    Ok(RateReport {
        t_list: t_list.to_vec(),
        n_seeds,
        n_diverged,
        log_log_slope: ls_slope(&log_t, &log_m),
        min_avg_grad_sq: min_avg,
        scaled,
        decay_ratio,
        max_decay_ratio,
        pass: n_diverged == 0 && decay_ratio <= max_decay_ratio,
    })
}

/// Symmetric test matrix: off-diagonal entries uniform in (−1, 1), diagonal
/// uniform in (1, 4). Row-major.
pub fn fixed_symmetric_matrix(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, 0x6d6174);
    let mut a = vec![0.0; dim * dim];
    for i in 0..dim {
        a[i * dim + i] = rng.random_range(1.0..4.0);
        for j in i + 1..dim {
            let v = rng.random_range(-1.0..1.0);
            a[i * dim + j] = v;
            a[j * dim + i] = v;
        }
    }
    a
}

pub fn mat_vec(a: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HutchinsonReport {
    pub matrix_dim: usize,
    pub n_probes: usize,
    pub diagonal: Vec<f64>,
    pub estimate: Vec<f64>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Max abs error of a single Rademacher probe on `diag(A)`.
    pub diagonal_matrix_error: f64,
    pub pass: bool,
}

pub fn verify_hutchinson(spec: &HutchinsonSpec, seed: u64) -> Result<HutchinsonReport> {
    let n = spec.matrix_dim;
    if n == 0 {
        return Err(Error::InvalidConfig("matrix_dim must be >= 1".into()));
    }
    let a = fixed_symmetric_matrix(n, spec.matrix_seed);
    let diagonal: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let cfg = ProbeConfig {
        n_probes: spec.n_probes,
        distribution: ProbeDistribution::Rademacher,
        ..ProbeConfig::default()
    };
    let est = hutchinson_diag(
        |v| Ok(mat_vec(&a, v)),
        n,
        &cfg,
        BatchSeed::new(seed, 0, Channel::Probe),
    )?;
    let max_rel_error = est
        .as_slice()
        .iter()
        .zip(&diagonal)
        .map(|(e, d)| ((e - d) / d).abs())
        .fold(0.0, f64::max);

    let single = ProbeConfig { n_probes: 1, ..cfg };
    let diag_est = hutchinson_diag(
        |v| Ok(v.iter().zip(&diagonal).map(|(x, d)| x * d).collect()),
        n,
        &single,
        BatchSeed::new(seed, 1, Channel::Probe),
    )?;
    let diagonal_matrix_error = diag_est
        .as_slice()
        .iter()
        .zip(&diagonal)
        .map(|(e, d)| (e - d).abs())
        .fold(0.0, f64::max);

    Ok(HutchinsonReport {
        matrix_dim: n,
        n_probes: spec.n_probes,
        estimate: est.0,
        diagonal,
        max_rel_error,
        tolerance: spec.tolerance,
        diagonal_matrix_error,
        pass: max_rel_error <= spec.tolerance && diagonal_matrix_error == 0.0,
    })
}
