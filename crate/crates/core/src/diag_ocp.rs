//! Diagonal optimal-control optimizer.
//!
//! Each step folds the stochastic gradient `g` and a clipped Hutchinson
//! curvature estimate `H` into bias-corrected moving averages `m̂`, `D̂`, then
//! moves by
//!
//! ```text
//! x' = x (1 − αλ) − (1 − (1 − α D̂)^t) D̂⁻¹ m̂
//! ```
//!
//! elementwise, where `t` is the number of completed moment updates. This is
//! the closed form of the inner recursion
//! `φ_l = α m̂ + (1 − α D̂) φ_{l−1}`, `φ_0 = α m̂`, run for `t − 1`
//! applications; [`step_recursive_reference`] keeps the literal loop for
//! testing. Early on the effective per-coordinate step is ≈ `α t`, and as
//! `t` grows it approaches the diagonal Newton step `D̂⁻¹ m̂`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hessian_probe::{DiagEstimate, ProbeConfig, ProbeDistribution, DEFAULT_CLIP_HI, DEFAULT_CLIP_LO};
use crate::vector::{check_finite, distance, norm, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Scalar step size; the preconditioner is `αI`.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Curvature clip floor μ.
    pub mu: f64,
    /// Curvature clip ceiling G_d.
    pub g_d: f64,
    /// Decoupled weight-decay coefficient.
    pub lambda: f64,
    pub n_probes: usize,
    pub probe_distribution: ProbeDistribution,
    /// Bases `1 − α d̂_i` below `−safeguard_rho_max` are clamped to it.
    pub safeguard_rho_max: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            mu: DEFAULT_CLIP_LO,
            g_d: DEFAULT_CLIP_HI,
            lambda: 0.008,
            n_probes: 1,
            probe_distribution: ProbeDistribution::StandardNormal,
            safeguard_rho_max: 0.999,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and > 0; got {}", self.alpha));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1); got {b}"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and >= 0; got {}", self.lambda));
        }
        if !(self.safeguard_rho_max > 0.0 && self.safeguard_rho_max < 1.0) {
            return bad(format!(
                "safeguard_rho_max must lie in (0, 1); got {}",
                self.safeguard_rho_max
            ));
        }
        self.probe_config().validate()
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            n_probes: self.n_probes,
            distribution: self.probe_distribution,
            clip_lo: self.mu,
            clip_hi: self.g_d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    /// Completed moment updates.
    pub t: u64,
    pub m: Vec<f64>,
    /// Diagonal second moment, stored as a vector.
    pub d: Vec<f64>,
}

impl OptimizerState {
    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Bias-corrected moments `m̂`, `D̂` for the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m_hat: Vec<f64>,
    pub d_hat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// `max_i |s_i|` after the safeguard, with `s_i = 1 − α d̂_i`.
    pub rho: f64,
    /// Same quantity before the safeguard.
    pub rho_raw: f64,
    pub safeguard_triggered: bool,
    pub safeguarded_coords: usize,
    pub step_norm: f64,
    pub corrected_m_norm: f64,
    /// `min_i (1 − s_i^t) / d̂_i`, the smallest diagonal entry of the step
    /// matrix; positive whenever every `|s_i| < 1`.
    pub descent_coefficient: f64,
}

pub fn init_state(dim: usize, cfg: &OptimizerConfig) -> Result<OptimizerState> {
    if dim == 0 {
        return Err(Error::InvalidConfig("optimizer dimension must be >= 1".into()));
    }
    cfg.validate()?;
    Ok(OptimizerState {
        t: 0,
        m: vec![0.0; dim],
        d: vec![0.0; dim],
    })
}

fn pow_t(base: f64, t: u64) -> f64 {
    base.powf(t as f64)
}

/// Advances the moving averages by one step and returns their bias-corrected
/// views. `h` must already be clipped to `[mu, g_d]`.
pub fn update_moments(
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    g: &[f64],
    h: &DiagEstimate,
) -> Result<Moments> {
    let dim = state.dim();
    check_dim(dim, g.len())?;
    check_dim(dim, h.dim())?;
    check_finite(g, "gradient")?;
    for (index, &value) in h.as_slice().iter().enumerate() {
        if !(value >= cfg.mu && value <= cfg.g_d) {
            return Err(Error::UnclippedDiagonal {
                index,
                value,
                lo: cfg.mu,
                hi: cfg.g_d,
            });
        }
    }

    let t = state.t + 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for ((m, d), (gi, hi)) in state
        .m
        .iter_mut()
        .zip(state.d.iter_mut())
        .zip(g.iter().zip(h.as_slice()))
    {
        *m = b1 * *m + (1.0 - b1) * gi;
        *d = b2 * *d + (1.0 - b2) * hi;
    }
    state.t = t;

    let c1 = 1.0 - pow_t(b1, t);
    let c2 = 1.0 - pow_t(b2, t);
    let m_hat = state.m.iter().map(|m| m / c1).collect();
    // exact bounds hold in real arithmetic; the clamp only absorbs rounding
    let d_hat = state
        .d
        .iter()
        .map(|d| (d / c2).clamp(cfg.mu, cfg.g_d))
        .collect();
    Ok(Moments { m_hat, d_hat })
}

/// Per-coordinate step coefficient `(1 − s^t) / d̂` with the safeguarded base.
/// Returns `(coefficient, base, clamped)`.
fn step_coefficient(alpha: f64, d_hat: f64, t: u64, rho_max: f64) -> (f64, f64, bool) {
    let a = alpha * d_hat;
    if 1.0 - a < -rho_max {
        let s = -rho_max;
        ((1.0 - pow_t(s, t)) / d_hat, s, true)
    } else if a <= 1.0 {
        // 1 − (1 − a)^t without cancellation for small a
        let one_minus = -((t as f64) * (-a).ln_1p()).exp_m1();
        (one_minus / d_hat, 1.0 - a, false)
    } else {
        let s = 1.0 - a;
        ((1.0 - pow_t(s, t)) / d_hat, s, false)
    }
}

fn check_step_inputs(state: &OptimizerState, x: &[f64], moments: &Moments) -> Result<()> {
    if state.t == 0 {
        return Err(Error::NoMoments);
    }
    let dim = state.dim();
    check_dim(dim, x.len())?;
    check_dim(dim, moments.m_hat.len())?;
    check_dim(dim, moments.d_hat.len())?;
    check_finite(x, "x")?;
    check_finite(&moments.m_hat, "m_hat")?;
    check_finite(&moments.d_hat, "d_hat")?;
    if let Some(i) = moments.d_hat.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::InvalidConfig(format!(
            "d_hat[{i}] = {} is not positive",
            moments.d_hat[i]
        )));
    }
    Ok(())
}

/// Production update: closed-form step plus decoupled weight decay.
pub fn step_closed_form(
    state: &OptimizerState,
    x: &[f64],
    moments: &Moments,
    cfg: &OptimizerConfig,
) -> Result<(ParamVector, StepDiagnostics)> {
    check_step_inputs(state, x, moments)?;
    let t = state.t;
    let decay = 1.0 - cfg.alpha * cfg.lambda;

    let mut rho: f64 = 0.0;
    let mut clamped = 0usize;
    let mut descent = f64::INFINITY;
    let mut next = Vec::with_capacity(x.len());
    for ((xi, mi), di) in x.iter().zip(&moments.m_hat).zip(&moments.d_hat) {
        let (c, s, hit) = step_coefficient(cfg.alpha, *di, t, cfg.safeguard_rho_max);
        rho = rho.max(s.abs());
        descent = descent.min(c);
        clamped += hit as usize;
        next.push(xi * decay - c * mi);
    }

    let diag = StepDiagnostics {
        rho,
        rho_raw: stability_margin(&moments.d_hat, cfg),
        safeguard_triggered: clamped > 0,
        safeguarded_coords: clamped,
        step_norm: distance(&next, x),
        corrected_m_norm: norm(&moments.m_hat),
        descent_coefficient: descent,
    };
    Ok((ParamVector::from_vec_unchecked(next), diag))
}

/// Literal inner recursion, `t − 1` applications starting from `φ_0 = α m̂`,
/// followed by the same weight decay. Costs `O(t·d)`; test use only.
pub fn step_recursive_reference(
    state: &OptimizerState,
    x: &[f64],
    moments: &Moments,
    cfg: &OptimizerConfig,
) -> Result<ParamVector> {
    check_step_inputs(state, x, moments)?;
    let alpha = cfg.alpha;
    let base: Vec<f64> = moments.m_hat.iter().map(|m| alpha * m).collect();
    let mut phi = base.clone();
    let mut l = 0;
    while l + 1 < state.t {
        l += 1;
        for ((p, b), d) in phi.iter_mut().zip(&base).zip(&moments.d_hat) {
            *p = b + (1.0 - alpha * d) * *p;
        }
    }
    let decay = 1.0 - alpha * cfg.lambda;
    Ok(ParamVector::from_vec_unchecked(
        x.iter().zip(&phi).map(|(xi, p)| xi * decay - p).collect(),
    ))
}

/// `max_i |1 − α d̂_i|` before any safeguard.
pub fn stability_margin(d_hat: &[f64], cfg: &OptimizerConfig) -> f64 {
    d_hat
        .iter()
        .map(|d| (1.0 - cfg.alpha * d).abs())
        .fold(0.0, f64::max)
}

/// Optimizer state bundled with its configuration.
#[derive(Debug, Clone)]
pub struct DiagOcp {
    cfg: OptimizerConfig,
    state: OptimizerState,
}

impl DiagOcp {
    pub fn new(dim: usize, cfg: OptimizerConfig) -> Result<Self> {
        let state = init_state(dim, &cfg)?;
        Ok(Self { cfg, state })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    /// One full update given a gradient and an already clipped curvature
    /// estimate at `x`.
    pub fn step(
        &mut self,
        x: &[f64],
        g: &[f64],
        h: &DiagEstimate,
    ) -> Result<(ParamVector, StepDiagnostics, Moments)> {
        let moments = update_moments(&mut self.state, &self.cfg, g, h)?;
        let (next, diag) = step_closed_form(&self.state, x, &moments, &self.cfg)?;
        Ok((next, diag, moments))
    }
}
