//! Hutchinson estimation of the Hessian diagonal and the two-sided clamp
//! applied to it before it enters the second-moment average.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problems::BatchSeed;
use crate::vector::ParamVector;

pub const DEFAULT_CLIP_LO: f64 = 1e-4;
pub const DEFAULT_CLIP_HI: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeDistribution {
    Rademacher,
    #[default]
    StandardNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_probes: usize,
    pub distribution: ProbeDistribution,
    /// μ
    pub clip_lo: f64,
    /// G_d
    pub clip_hi: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_probes: 1,
            distribution: ProbeDistribution::StandardNormal,
            clip_lo: DEFAULT_CLIP_LO,
            clip_hi: DEFAULT_CLIP_HI,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_probes == 0 {
            return Err(Error::InvalidConfig("n_probes must be >= 1".into()));
        }
        if !(self.clip_lo > 0.0) || !self.clip_lo.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "clip floor mu must be finite and > 0; got {}",
                self.clip_lo
            )));
        }
        if !(self.clip_hi >= self.clip_lo) {
            return Err(Error::InvalidConfig(format!(
                "clip ceiling {} must be >= clip floor {}",
                self.clip_hi, self.clip_lo
            )));
        }
        Ok(())
    }
}

/// Estimated Hessian diagonal; once passed through [`clip_diag`] every entry
/// lies in `[clip_lo, clip_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiagEstimate(pub Vec<f64>);

impl DiagEstimate {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn sample_probe(distribution: ProbeDistribution, dim: usize, seed: BatchSeed) -> Result<ParamVector> {
    if dim == 0 {
        return Err(Error::InvalidConfig("probe dimension must be >= 1".into()));
    }
    let mut rng = seed.rng(0);
    Ok(ParamVector::from_vec_unchecked(draw(distribution, dim, &mut rng)))
}

fn draw<R: Rng>(distribution: ProbeDistribution, dim: usize, rng: &mut R) -> Vec<f64> {
    match distribution {
        ProbeDistribution::Rademacher => (0..dim)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect(),
        ProbeDistribution::StandardNormal => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

/// Average of `v ⊙ hvp(v)` over `cfg.n_probes` probes drawn from `seed`.
/// The result is not clipped.
pub fn hutchinson_diag<F>(mut hvp: F, dim: usize, cfg: &ProbeConfig, seed: BatchSeed) -> Result<DiagEstimate>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if dim == 0 {
        return Err(Error::InvalidConfig("probe dimension must be >= 1".into()));
    }
    if cfg.n_probes == 0 {
        return Err(Error::InvalidConfig("n_probes must be >= 1".into()));
    }
    let mut rng = seed.rng(0);
    let mut acc = vec![0.0; dim];
    for _ in 0..cfg.n_probes {
        let v = draw(cfg.distribution, dim, &mut rng);
        let hv = hvp(&v)?;
        check_dim(dim, hv.len())?;
        for ((a, vi), hvi) in acc.iter_mut().zip(&v).zip(&hv) {
            *a += vi * hvi;
        }
    }
    let inv = 1.0 / cfg.n_probes as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(DiagEstimate(acc))
}

/// Clamps every entry into `[clip_lo, clip_hi]`. NaN entries are rejected,
/// they indicate a broken oracle.
pub fn clip_diag(h: &DiagEstimate, cfg: &ProbeConfig) -> Result<DiagEstimate> {
    if let Some(i) = h.0.iter().position(|v| v.is_nan()) {
        return Err(Error::NonFinite(format!("hessian diagonal estimate[{i}]")));
    }
    Ok(DiagEstimate(
        h.0.iter().map(|&v| v.max(cfg.clip_lo).min(cfg.clip_hi)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Channel;

    fn seed(step: u64) -> BatchSeed {
        BatchSeed::new(5, step, Channel::Probe)
    }

    fn cfg(n: usize, distribution: ProbeDistribution) -> ProbeConfig {
        ProbeConfig {
            n_probes: n,
            distribution,
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let v = sample_probe(ProbeDistribution::Rademacher, 4, seed(0)).unwrap();
        assert!(v.iter().all(|&x| x == 1.0 || x == -1.0));
        let w = sample_probe(ProbeDistribution::Rademacher, 4, seed(0)).unwrap();
        assert_eq!(v, w);
        assert!(sample_probe(ProbeDistribution::Rademacher, 0, seed(0)).is_err());
    }

    #[test]
    fn standard_normal_moments() {
        let v = sample_probe(ProbeDistribution::StandardNormal, 100_000, seed(1)).unwrap();
        let n = v.dim() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((0.97..=1.03).contains(&var), "var {var}");
    }

    #[test]
    fn diagonal_matrix_is_recovered_exactly_with_rademacher() {
        let diag = [3.0, 5.0];
        for n in [1, 2, 7] {
            let est = hutchinson_diag(
                |v| Ok(v.iter().zip(&diag).map(|(a, b)| a * b).collect()),
                2,
                &cfg(n, ProbeDistribution::Rademacher),
                seed(n as u64),
            )
            .unwrap();
            assert_eq!(est.as_slice(), &diag);
        }
    }

    #[test]
    fn single_normal_probe_on_identity_returns_squares() {
        let c = cfg(1, ProbeDistribution::StandardNormal);
        let est = hutchinson_diag(|v| Ok(v.to_vec()), 3, &c, seed(2)).unwrap();
        let v = sample_probe(ProbeDistribution::StandardNormal, 3, seed(2)).unwrap();
        let squares: Vec<f64> = v.iter().map(|x| x * x).collect();
        assert_eq!(est.as_slice(), squares.as_slice());
    }

    #[test]
    fn dense_two_by_two_estimate_is_close() {
        let est = hutchinson_diag(
            |v| Ok(vec![2.0 * v[0] + v[1], v[0] + 3.0 * v[1]]),
            2,
            &cfg(100_000, ProbeDistribution::Rademacher),
            seed(3),
        )
        .unwrap();
        assert!((est.0[0] - 2.0).abs() / 2.0 < 0.05);
        assert!((est.0[1] - 3.0).abs() / 3.0 < 0.05);
    }

    #[test]
    fn wrong_hvp_dimension_is_rejected() {
        let r = hutchinson_diag(|_| Ok(vec![1.0]), 2, &ProbeConfig::default(), seed(0));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn clip_examples() {
        let c = ProbeConfig::default();
        let out = clip_diag(&DiagEstimate(vec![-0.5, 0.00005, 2.0]), &c).unwrap();
        assert_eq!(out.as_slice(), &[1e-4, 1e-4, 2.0]);
        let inside = DiagEstimate(vec![1e-4, 0.3, 1e4]);
        assert_eq!(clip_diag(&inside, &c).unwrap(), inside);
        assert_eq!(clip_diag(&DiagEstimate(vec![1e9]), &c).unwrap().as_slice(), &[1e4]);
        assert!(clip_diag(&DiagEstimate(vec![f64::NAN]), &c).is_err());
        assert_eq!(
            clip_diag(&DiagEstimate(vec![f64::NEG_INFINITY]), &c).unwrap().as_slice(),
            &[1e-4]
        );
    }

    #[test]
    fn config_validation() {
        assert!(ProbeConfig::default().validate().is_ok());
        assert!(cfg(0, ProbeDistribution::Rademacher).validate().is_err());
        let mut c = ProbeConfig {
            clip_lo: 0.0,
            ..ProbeConfig::default()
        };
        assert!(c.validate().is_err());
        c.clip_lo = 2.0;
        c.clip_hi = 1.0;
        assert!(c.validate().is_err());
    }
}
