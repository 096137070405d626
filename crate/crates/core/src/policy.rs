//! Gaussian policy with a mean linear in state features.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::Policy;
use crate::error::{Error, Result};
use crate::features::RbfFeatureMap;

/// Default action variance `c` in `Sigma = c I`.
pub const DEFAULT_ACTION_VARIANCE: f64 = 0.5;

/// `theta` (features x action_dim) and the scalar action variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub theta: DMatrix<f64>,
    variance: f64,
}

impl PolicyParams {
    pub fn zeros(n_features: usize, action_dim: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::zeros(n_features, action_dim), variance)
    }

    pub fn new(theta: DMatrix<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::config(format!("action variance must be positive, got {variance}")));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("policy parameters must be finite"));
        }
        Ok(Self { theta, variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn n_features(&self) -> usize {
        self.theta.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.theta.ncols()
    }

    /// `theta^T phi(s)`.
    pub fn mean(&self, phi: &DVector<f64>) -> DVector<f64> {
        self.theta.tr_mul(phi)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, phi: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let sd = self.variance.sqrt();
        let mut a = self.mean(phi);
        for v in a.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sd * z;
        }
        a
    }

    /// `phi(s) (a - theta^T phi(s))^T / c`, the gradient of the log-density.
    pub fn score(&self, phi: &DVector<f64>, action: &DVector<f64>) -> DMatrix<f64> {
        let diff = (action - self.mean(phi)) / self.variance;
        phi * diff.transpose()
    }

    pub fn log_density(&self, phi: &DVector<f64>, action: &DVector<f64>) -> f64 {
        let d = self.action_dim() as f64;
        let sq = (action - self.mean(phi)).norm_squared();
        -0.5 * d * (2.0 * std::f64::consts::PI * self.variance).ln() - sq / (2.0 * self.variance)
    }

    /// Upper bound on `||score||` for unit-norm features and actions within
    /// distance `max_action` of the origin: `(A_max + ||theta||) / c`.
    pub fn score_bound(&self, max_action: f64) -> f64 {
        (max_action + self.theta.norm()) / self.variance
    }
}

/// What the traced gradient-norm proxy measures for a sampled action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyKind {
    /// `||a - mean|| / c`: the score norm under unit-norm features.
    ScoreNorm,
    /// `||a/||a|| - mean/||mean|| || / c`: disagreement in heading only. A zero
    /// mean has no heading and contributes the zero vector.
    Direction,
}

pub fn score_proxy(kind: ProxyKind, mean: &DVector<f64>, action: &DVector<f64>, variance: f64) -> f64 {
    let dist = match kind {
        ProxyKind::ScoreNorm => (action - mean).norm(),
        ProxyKind::Direction => {
            let heading = |v: &DVector<f64>| {
                let n = v.norm();
                if n > 0.0 {
                    v / n
                } else {
                    DVector::zeros(v.len())
                }
            };
            (heading(action) - heading(mean)).norm()
        }
    };
    dist / variance
}

/// A linear-Gaussian policy over RBF features of a continuous state.
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    pub params: PolicyParams,
    pub features: RbfFeatureMap,
    pub proxy: ProxyKind,
}

impl GaussianPolicy {
    pub fn new(features: RbfFeatureMap, action_dim: usize, variance: f64, proxy: ProxyKind) -> Result<Self> {
        Ok(Self {
            params: PolicyParams::zeros(features.len(), action_dim, variance)?,
            features,
            proxy,
        })
    }

    pub fn theta_norm(&self) -> f64 {
        self.params.theta.norm()
    }
}

impl Policy<DVector<f64>, DVector<f64>> for GaussianPolicy {
    type Obs = DVector<f64>;

    fn observe(&self, state: &DVector<f64>) -> DVector<f64> {
        self.features.features(state.as_slice())
    }

    fn sample_action<R: Rng + ?Sized>(&self, obs: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        self.params.sample_action(obs, rng)
    }

    fn score(&self, obs: &DVector<f64>, action: &DVector<f64>) -> DVector<f64> {
        let m = self.params.score(obs, action);
        DVector::from_column_slice(m.as_slice())
    }

    fn score_proxy(&self, obs: &DVector<f64>, action: &DVector<f64>) -> f64 {
        score_proxy(self.proxy, &self.params.mean(obs), action, self.params.variance())
    }

    fn params(&self) -> &[f64] {
        self.params.theta.as_slice()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.params.theta.as_mut_slice()
    }
}
