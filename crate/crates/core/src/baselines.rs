//! Reference optimizers: SGD (with optional heavy-ball momentum), Adam,
//! RAdam and a diagonal AdaHessian. All use decoupled weight decay
//! `x ← x (1 − lr·wd)` and 1-based bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hessian_probe::DiagEstimate;
use crate::vector::{check_finite, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Sgd,
    Adam,
    #[serde(rename = "radam")]
    RAdam,
    #[serde(rename = "adahessian")]
    AdaHessianDiag,
}

impl BaselineKind {
    pub fn key(self) -> &'static str {
        match self {
            BaselineKind::Sgd => "sgd",
            BaselineKind::Adam => "adam",
            BaselineKind::RAdam => "radam",
            BaselineKind::AdaHessianDiag => "adahessian",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        match key {
            "sgd" => Some(BaselineKind::Sgd),
            "adam" => Some(BaselineKind::Adam),
            "radam" => Some(BaselineKind::RAdam),
            "adahessian" => Some(BaselineKind::AdaHessianDiag),
            _ => None,
        }
    }

    pub fn needs_curvature(self) -> bool {
        self == BaselineKind::AdaHessianDiag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Heavy-ball momentum, SGD only.
    pub momentum: f64,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            momentum: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and > 0; got {}", self.lr));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be > 0; got {}", self.eps));
        }
        for (name, b) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("momentum", self.momentum),
        ] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1); got {b}"));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0; got {}", self.weight_decay));
        }
        Ok(())
    }
}

/// Per-run moment buffers. For SGD `m` is the momentum buffer and `v` is
/// unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl BaselineState {
    pub fn new(dim: usize) -> Self {
        Self {
            t: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }
}

/// RAdam's variance rectification factor at step `t`, or `None` while the
/// approximated SMA length is too short (≤ 5) for the adaptive step.
pub fn radam_rectification(beta2: f64, t: u64) -> Option<f64> {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powf(t as f64);
    let rho_t = rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t);
    if rho_t > 5.0 {
        Some(
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                .sqrt(),
        )
    } else {
        None
    }
}

/// One update of the configured baseline. `h` is the clipped curvature
/// estimate, required only by the AdaHessian variant.
pub fn baseline_step(
    state: &mut BaselineState,
    x: &[f64],
    g: &[f64],
    h: Option<&DiagEstimate>,
    cfg: &BaselineConfig,
) -> Result<ParamVector> {
    let dim = state.m.len();
    check_dim(dim, x.len())?;
    check_dim(dim, g.len())?;
    check_finite(g, "gradient")?;
    let curvature = match (cfg.kind, h) {
        (BaselineKind::AdaHessianDiag, None) => {
            return Err(Error::InvalidConfig(
                "adahessian requires a curvature estimate".into(),
            ))
        }
        (BaselineKind::AdaHessianDiag, Some(h)) => {
            check_dim(dim, h.dim())?;
            Some(h.as_slice())
        }
        _ => None,
    };

    state.t += 1;
    let t = state.t;
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    let mut next: Vec<f64> = x.iter().map(|xi| xi * decay).collect();

    if cfg.kind == BaselineKind::Sgd {
        for ((xn, buf), gi) in next.iter_mut().zip(state.m.iter_mut()).zip(g) {
            *buf = cfg.momentum * *buf + gi;
            *xn -= cfg.lr * *buf;
        }
        return Ok(ParamVector::from_vec_unchecked(next));
    }

    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    for i in 0..dim {
        let second = match curvature {
            Some(hd) => hd[i] * hd[i],
            None => g[i] * g[i],
        };
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * second;
    }

    let rect = match cfg.kind {
        BaselineKind::RAdam => radam_rectification(b2, t),
        _ => Some(1.0),
    };
    for (i, xi) in next.iter_mut().enumerate() {
        let m_hat = state.m[i] / c1;
        let update = match rect {
            Some(r) => {
                let v_hat = state.v[i] / c2;
                r * m_hat / (v_hat.sqrt() + cfg.eps)
            }
            None => m_hat,
        };
        *xi -= cfg.lr * update;
    }
    Ok(ParamVector::from_vec_unchecked(next))
}

#[derive(Debug, Clone)]
pub struct Baseline {
    cfg: BaselineConfig,
    state: BaselineState,
}

impl Baseline {
    pub fn new(dim: usize, cfg: BaselineConfig) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("optimizer dimension must be >= 1".into()));
        }
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: BaselineState::new(dim),
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.cfg
    }

    pub fn state(&self) -> &BaselineState {
        &self.state
    }

    pub fn step(&mut self, x: &[f64], g: &[f64], h: Option<&DiagEstimate>) -> Result<ParamVector> {
        baseline_step(&mut self.state, x, g, h, &self.cfg)
    }
}
