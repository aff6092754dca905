//! Objective functions exposed as oracles: loss, stochastic gradient and
//! Hessian-vector product.
//!
//! Every source of randomness is addressed by a caller-supplied
//! [`BatchSeed`]; oracles are immutable once built and can be shared across
//! threads freely.

pub mod mlp;
pub mod seed;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::{check_finite, dot, norm, ParamVector};

pub use mlp::Mlp;
pub use seed::{BatchSeed, Channel};

use seed::seeded_rng;

const SUBSTREAM_BATCH: u64 = 1;
const SUBSTREAM_NOISE: u64 = 2;
const STREAM_DESIGN: u64 = 11;
const STREAM_SPLIT: u64 = 12;
const STREAM_TEACHER: u64 = 13;
const STREAM_INIT: u64 = 14;

pub const DEFAULT_HVP_STEP_SCALE: f64 = 1e-5;
pub const DEFAULT_VAL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvpMode {
    Exact,
    CentralDifference { step_scale: f64 },
}

/// Fixed regression dataset with a seed-fixed train/validation split.
#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    n_in: usize,
    train: Vec<usize>,
    val: Vec<usize>,
    batch_size: Option<usize>,
}

impl Dataset {
    fn new(
        inputs: Vec<f64>,
        targets: Vec<f64>,
        n_in: usize,
        n_out: usize,
        val_fraction: f64,
        batch_size: Option<usize>,
        split_seed: u64,
    ) -> Result<Self> {
        let n = inputs.len() / n_in;
        check_dim(n * n_out, targets.len())?;
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::InvalidConfig(format!(
                "val_fraction must lie in [0, 1); got {val_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeded_rng(split_seed, STREAM_SPLIT));
        let n_val = (n as f64 * val_fraction).round() as usize;
        let (val, train) = order.split_at(n_val);
        if train.is_empty() {
            return Err(Error::InvalidConfig("training split is empty".into()));
        }
        if batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let mut train = train.to_vec();
        let mut val = val.to_vec();
        train.sort_unstable();
        val.sort_unstable();
        Ok(Self {
            inputs,
            targets,
            n_in,
            train,
            val,
            batch_size,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn n_val(&self) -> usize {
        self.val.len()
    }

    fn batch(&self, seed: &BatchSeed) -> Vec<usize> {
        match self.batch_size {
            Some(b) if b < self.train.len() => {
                let mut rng = seed.rng(SUBSTREAM_BATCH);
                let mut picked: Vec<usize> = index::sample(&mut rng, self.train.len(), b)
                    .into_iter()
                    .map(|i| self.train[i])
                    .collect();
                picked.sort_unstable();
                picked
            }
            _ => self.train.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ProblemKind {
    /// `f(x) = ½ Σ h_i x_i²`
    Quadratic { h: Vec<f64> },
    /// `(1 − x)² + 100 (y − x²)²`
    Rosenbrock2D,
    /// Mean squared residual of a linear model on a synthetic design.
    NoisyLeastSquares { data: Dataset },
    /// Mean (over samples) of the summed squared output error of a ReLU MLP
    /// fit to a fixed teacher network.
    MlpRegression { net: Mlp, data: Dataset },
}

/// Construction parameters, as they appear under `"problem"` in a harness
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// `quadratic` | `rosenbrock2d` | `noisy_least_squares` | `mlp_regression`
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Quadratic curvatures (all > 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Observation noise of the least-squares targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_noise_std: Option<f64>,
    /// Std of the additive gradient noise ζ.
    #[serde(default)]
    pub noise_std_grad: f64,
    /// `exact` | `central_difference`; defaults per kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hvp_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hvp_step_scale: Option<f64>,
    /// Mini-batch size for sample-based problems; full batch when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_fraction: Option<f64>,
    /// Explicit starting point; otherwise a per-kind default is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl ProblemSpec {
    fn empty(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            dim: None,
            h: None,
            design_seed: None,
            n_samples: None,
            noise_std: None,
            layer_sizes: None,
            teacher_seed: None,
            label_noise_std: None,
            noise_std_grad: 0.0,
            hvp_mode: None,
            hvp_step_scale: None,
            batch_size: None,
            val_fraction: None,
            x0: None,
        }
    }

    pub fn quadratic(h: Vec<f64>) -> Self {
        Self {
            h: Some(h),
            ..Self::empty("quadratic")
        }
    }

    pub fn rosenbrock() -> Self {
        Self::empty("rosenbrock2d")
    }

    pub fn least_squares(dim: usize, design_seed: u64, n_samples: usize, noise_std: f64) -> Self {
        Self {
            dim: Some(dim),
            design_seed: Some(design_seed),
            n_samples: Some(n_samples),
            noise_std: Some(noise_std),
            ..Self::empty("noisy_least_squares")
        }
    }

    pub fn mlp(
        layer_sizes: Vec<usize>,
        teacher_seed: u64,
        n_samples: usize,
        label_noise_std: f64,
    ) -> Self {
        Self {
            layer_sizes: Some(layer_sizes),
            teacher_seed: Some(teacher_seed),
            n_samples: Some(n_samples),
            label_noise_std: Some(label_noise_std),
            ..Self::empty("mlp_regression")
        }
    }

    pub fn with_grad_noise(mut self, std: f64) -> Self {
        self.noise_std_grad = std;
        self
    }

    pub fn with_hvp_mode(mut self, mode: HvpMode) -> Self {
        match mode {
            HvpMode::Exact => {
                self.hvp_mode = Some("exact".into());
                self.hvp_step_scale = None;
            }
            HvpMode::CentralDifference { step_scale } => {
                self.hvp_mode = Some("central_difference".into());
                self.hvp_step_scale = Some(step_scale);
            }
        }
        self
    }
}

fn require<T: Clone>(field: &Option<T>, name: &str, kind: &str) -> Result<T> {
    field
        .clone()
        .ok_or_else(|| Error::InvalidConfig(format!("problem kind `{kind}` requires `{name}`")))
}

/// Builds an oracle from its construction parameters, validating every
/// kind-specific invariant.
pub fn make_problem(spec: &ProblemSpec) -> Result<ProblemOracle> {
    let kind_name = spec.kind.as_str();
    if spec.noise_std_grad < 0.0 || !spec.noise_std_grad.is_finite() {
        return Err(Error::InvalidConfig("noise_std_grad must be finite and >= 0".into()));
    }
    let val_fraction = spec.val_fraction.unwrap_or(DEFAULT_VAL_FRACTION);
    let kind = match kind_name {
        "quadratic" => {
            let h = require(&spec.h, "h", kind_name)?;
            if h.is_empty() {
                return Err(Error::InvalidConfig("quadratic needs dim >= 1".into()));
            }
            if h.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidConfig("quadratic curvatures must be finite and > 0".into()));
            }
            ProblemKind::Quadratic { h }
        }
        "rosenbrock2d" | "rosenbrock" => {
            if let Some(d) = spec.dim {
                if d != 2 {
                    return Err(Error::InvalidConfig(format!("rosenbrock2d requires dim = 2; got {d}")));
                }
            }
            ProblemKind::Rosenbrock2D
        }
        "noisy_least_squares" => {
            let dim = require(&spec.dim, "dim", kind_name)?;
            let n = require(&spec.n_samples, "n_samples", kind_name)?;
            let seed = require(&spec.design_seed, "design_seed", kind_name)?;
            let noise = spec.noise_std.unwrap_or(0.0);
            if dim == 0 || n == 0 {
                return Err(Error::InvalidConfig("least squares needs dim >= 1 and n_samples >= 1".into()));
            }
            let mut rng = seeded_rng(seed, STREAM_DESIGN);
            let inputs: Vec<f64> = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
            let truth: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let targets: Vec<f64> = inputs
                .chunks(dim)
                .map(|row| dot(row, &truth) + noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let data = Dataset::new(inputs, targets, dim, 1, val_fraction, spec.batch_size, seed)?;
            ProblemKind::NoisyLeastSquares { data }
        }
        "mlp_regression" => {
            let sizes = require(&spec.layer_sizes, "layer_sizes", kind_name)?;
            let n = require(&spec.n_samples, "n_samples", kind_name)?;
            let seed = require(&spec.teacher_seed, "teacher_seed", kind_name)?;
            let label_noise = spec.label_noise_std.unwrap_or(0.0);
            if n == 0 {
                return Err(Error::InvalidConfig("mlp_regression needs n_samples >= 1".into()));
            }
            let net = Mlp::new(&sizes)?;
            let (n_in, n_out) = (net.input_dim(), net.output_dim());
            let mut rng = seeded_rng(seed, STREAM_TEACHER);
            let teacher = net.init_params(&mut rng, 0.5);
            let inputs: Vec<f64> = (0..n * n_in).map(|_| rng.sample(StandardNormal)).collect();
            let mut targets = Vec::with_capacity(n * n_out);
            let mut out = Vec::new();
            for row in inputs.chunks(n_in) {
                net.forward(&teacher, row, &mut out);
                targets.extend(
                    out.iter()
                        .map(|y| y + label_noise * rng.sample::<f64, _>(StandardNormal)),
                );
            }
            let data = Dataset::new(inputs, targets, n_in, n_out, val_fraction, spec.batch_size, seed)?;
            ProblemKind::MlpRegression { net, data }
        }
        other => {
            return Err(Error::InvalidConfig(format!("unknown problem kind `{other}`")));
        }
    };

    let dim = match &kind {
        ProblemKind::Quadratic { h } => h.len(),
        ProblemKind::Rosenbrock2D => 2,
        ProblemKind::NoisyLeastSquares { data } => data.n_in,
        ProblemKind::MlpRegression { net, .. } => net.param_count(),
    };
    if let Some(d) = spec.dim {
        check_dim(dim, d).map_err(|_| {
            Error::InvalidConfig(format!("declared dim {d} does not match problem dim {dim}"))
        })?;
    }

    let hvp_mode = match spec.hvp_mode.as_deref() {
        Some("exact") => HvpMode::Exact,
        Some("central_difference") => HvpMode::CentralDifference {
            step_scale: spec.hvp_step_scale.unwrap_or(DEFAULT_HVP_STEP_SCALE),
        },
        Some(other) => {
            return Err(Error::InvalidConfig(format!("unknown hvp_mode `{other}`")));
        }
        None => match kind {
            ProblemKind::MlpRegression { .. } => HvpMode::CentralDifference {
                step_scale: spec.hvp_step_scale.unwrap_or(DEFAULT_HVP_STEP_SCALE),
            },
            _ => HvpMode::Exact,
        },
    };
    if let HvpMode::CentralDifference { step_scale } = hvp_mode {
        if !(step_scale > 0.0 && step_scale.is_finite()) {
            return Err(Error::InvalidConfig("hvp_step_scale must be > 0".into()));
        }
    }
    if matches!(kind, ProblemKind::MlpRegression { .. }) && hvp_mode == HvpMode::Exact {
        return Err(Error::Unsupported(
            "exact Hessian-vector products are not available for mlp_regression".into(),
        ));
    }

    let x0 = match &spec.x0 {
        Some(x0) => {
            check_dim(dim, x0.len())?;
            Some(ParamVector::new(x0.clone())?)
        }
        None => None,
    };

    Ok(ProblemOracle {
        kind,
        dim,
        noise_std_grad: spec.noise_std_grad,
        hvp_mode,
        x0,
    })
}

#[derive(Debug, Clone)]
pub struct ProblemOracle {
    kind: ProblemKind,
    dim: usize,
    noise_std_grad: f64,
    hvp_mode: HvpMode,
    x0: Option<ParamVector>,
}

impl ProblemOracle {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ProblemKind {
        &self.kind
    }

    pub fn hvp_mode(&self) -> HvpMode {
        self.hvp_mode
    }

    pub fn noise_std_grad(&self) -> f64 {
        self.noise_std_grad
    }

    /// Sample-based problems have a held-out validation split; the others
    /// report training loss as validation loss.
    pub fn is_sample_based(&self) -> bool {
        matches!(
            self.kind,
            ProblemKind::NoisyLeastSquares { .. } | ProblemKind::MlpRegression { .. }
        )
    }

    /// Starting point for a replicate. Only the MLP initialization depends
    /// on `seed`.
    pub fn initial_point(&self, seed: u64) -> ParamVector {
        if let Some(x0) = &self.x0 {
            return x0.clone();
        }
        match &self.kind {
            ProblemKind::Quadratic { h } => ParamVector::from_vec_unchecked(vec![1.0; h.len()]),
            ProblemKind::Rosenbrock2D => ParamVector::from_vec_unchecked(vec![-1.2, 1.0]),
            ProblemKind::NoisyLeastSquares { data } => ParamVector::zeros(data.n_in),
            ProblemKind::MlpRegression { net, .. } => {
                ParamVector::from_vec_unchecked(net.init_params(&mut seeded_rng(seed, STREAM_INIT), 0.0))
            }
        }
    }

    fn loss_on(&self, x: &[f64], indices: Option<&[usize]>, grad: Option<&mut [f64]>) -> f64 {
        match &self.kind {
            ProblemKind::Quadratic { h } => {
                if let Some(g) = grad {
                    for ((gi, hi), xi) in g.iter_mut().zip(h).zip(x) {
                        *gi = hi * xi;
                    }
                }
                0.5 * h.iter().zip(x).map(|(hi, xi)| hi * xi * xi).sum::<f64>()
            }
            ProblemKind::Rosenbrock2D => {
                let (a, b) = (x[0], x[1]);
                let r = b - a * a;
                if let Some(g) = grad {
                    g[0] = -2.0 * (1.0 - a) - 400.0 * a * r;
                    g[1] = 200.0 * r;
                }
                (1.0 - a).powi(2) + 100.0 * r * r
            }
            ProblemKind::NoisyLeastSquares { data } => {
                let idx = indices.unwrap_or(&data.train);
                let scale = 1.0 / idx.len() as f64;
                let mut grad = grad;
                if let Some(g) = grad.as_deref_mut() {
                    g.fill(0.0);
                }
                let mut loss = 0.0;
                for &s in idx {
                    let row = &data.inputs[s * data.n_in..(s + 1) * data.n_in];
                    let r = dot(row, x) - data.targets[s];
                    loss += r * r;
                    if let Some(g) = grad.as_deref_mut() {
                        for (gi, a) in g.iter_mut().zip(row) {
                            *gi += 2.0 * scale * r * a;
                        }
                    }
                }
                loss * scale
            }
            ProblemKind::MlpRegression { net, data } => {
                let idx = indices.unwrap_or(&data.train);
                net.loss_and_grad(x, &data.inputs, &data.targets, idx, grad)
            }
        }
    }

    fn batch_for(&self, seed: &BatchSeed) -> Option<Vec<usize>> {
        match &self.kind {
            ProblemKind::NoisyLeastSquares { data } | ProblemKind::MlpRegression { data, .. } => {
                Some(data.batch(seed))
            }
            _ => None,
        }
    }

    /// Objective on the mini-batch selected by `seed` (full training set when
    /// no batch size is configured).
    pub fn eval_loss(&self, x: &ParamVector, seed: BatchSeed) -> Result<f64> {
        check_dim(self.dim, x.dim())?;
        let batch = self.batch_for(&seed);
        Ok(self.loss_on(x, batch.as_deref(), None))
    }

    /// Stochastic gradient `∇f(x) + ζ`; mini-batch selection and the additive
    /// noise are both drawn from `seed`.
    pub fn eval_grad(&self, x: &ParamVector, seed: BatchSeed) -> Result<ParamVector> {
        check_dim(self.dim, x.dim())?;
        check_finite(x, "x")?;
        let batch = self.batch_for(&seed);
        let mut g = vec![0.0; self.dim];
        self.loss_on(x, batch.as_deref(), Some(&mut g));
        if self.noise_std_grad > 0.0 {
            let mut rng = seed.rng(SUBSTREAM_NOISE);
            for gi in &mut g {
                *gi += self.noise_std_grad * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(ParamVector::from_vec_unchecked(g))
    }

    /// Noise-free full-training-set gradient.
    pub fn true_grad(&self, x: &ParamVector) -> Result<ParamVector> {
        check_dim(self.dim, x.dim())?;
        check_finite(x, "x")?;
        let mut g = vec![0.0; self.dim];
        self.loss_on(x, None, Some(&mut g));
        Ok(ParamVector::from_vec_unchecked(g))
    }

    /// Noise-free full-training-set loss. Non-finite `x` yields a non-finite
    /// loss rather than an error so callers can detect divergence.
    pub fn train_loss(&self, x: &ParamVector) -> Result<f64> {
        check_dim(self.dim, x.dim())?;
        Ok(self.loss_on(x, None, None))
    }

    pub fn val_loss(&self, x: &ParamVector) -> Result<f64> {
        check_dim(self.dim, x.dim())?;
        match &self.kind {
            ProblemKind::NoisyLeastSquares { data } | ProblemKind::MlpRegression { data, .. }
                if !data.val.is_empty() =>
            {
                Ok(self.loss_on(x, Some(&data.val), None))
            }
            _ => Ok(self.loss_on(x, None, None)),
        }
    }

    /// Hessian-vector product `∇²f(x)·v`.
    ///
    /// In central-difference mode both gradient evaluations share `seed`, so
    /// the mini-batch and additive noise cancel.
    pub fn hvp(&self, x: &ParamVector, v: &[f64], seed: BatchSeed) -> Result<ParamVector> {
        check_dim(self.dim, x.dim())?;
        check_dim(self.dim, v.len())?;
        check_finite(x, "x")?;
        check_finite(v, "v")?;
        match self.hvp_mode {
            HvpMode::Exact => self.exact_hvp(x, v, &seed),
            HvpMode::CentralDifference { step_scale } => {
                let v_norm = norm(v);
                if v_norm == 0.0 {
                    return Ok(ParamVector::zeros(self.dim));
                }
                let h = step_scale * (1.0 + x.norm()) / (v_norm + f64::MIN_POSITIVE);
                let plus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
                let minus: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
                let gp = self.eval_grad(&ParamVector::from_vec_unchecked(plus), seed)?;
                let gm = self.eval_grad(&ParamVector::from_vec_unchecked(minus), seed)?;
                let inv = 1.0 / (2.0 * h);
                Ok(ParamVector::from_vec_unchecked(
                    gp.iter().zip(gm.iter()).map(|(a, b)| (a - b) * inv).collect(),
                ))
            }
        }
    }

    fn exact_hvp(&self, x: &[f64], v: &[f64], seed: &BatchSeed) -> Result<ParamVector> {
        let out = match &self.kind {
            ProblemKind::Quadratic { h } => h.iter().zip(v).map(|(a, b)| a * b).collect(),
            ProblemKind::Rosenbrock2D => {
                let (a, b) = (x[0], x[1]);
                let h11 = 2.0 - 400.0 * b + 1200.0 * a * a;
                let h12 = -400.0 * a;
                vec![h11 * v[0] + h12 * v[1], h12 * v[0] + 200.0 * v[1]]
            }
            ProblemKind::NoisyLeastSquares { data } => {
                let idx = data.batch(seed);
                let scale = 2.0 / idx.len() as f64;
                let mut out = vec![0.0; data.n_in];
                for &s in &idx {
                    let row = &data.inputs[s * data.n_in..(s + 1) * data.n_in];
                    let av = dot(row, v);
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += scale * av * a;
                    }
                }
                out
            }
            ProblemKind::MlpRegression { .. } => {
                return Err(Error::Unsupported(
                    "exact Hessian-vector products are not available for mlp_regression".into(),
                ));
            }
        };
        Ok(ParamVector::from_vec_unchecked(out))
    }
}
