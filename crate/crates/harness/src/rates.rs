//! Log-log rate fits and critic-error curves on the finite MDP.

use ac_core::critic::{CriticConfig, CriticSample};
use ac_core::env::{seeded_rng, TupleSampler};
use ac_core::features::{CriticFeatures, TabularFeatureMap};
use ac_core::oracle::{td_fixed_point, FiniteMdp, SoftmaxPolicy, StationarySampler};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::{EnvKind, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::experiment::{actor_config, load_finite};

pub const MIN_FIT_POINTS: usize = 10;

/// Least-squares fit of `log(value) = intercept + slope * log(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub points: usize,
}

/// Fits the points of `series` whose `t` lies in the closed `window`.
pub fn fit_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        return Err(HarnessError::config(format!("bad fit window [{lo}, {hi}]")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, v) in series.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        if !(v > 0.0) || !v.is_finite() {
            return Err(HarnessError::config(format!("nonpositive value {v} at t = {t}")));
        }
        xs.push(t.ln());
        ys.push(v.ln());
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(HarnessError::config(format!(
            "{} points in window, need at least {MIN_FIT_POINTS}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(RateFit {
        slope,
        intercept,
        window,
        residual: (sse / n).sqrt(),
        points: xs.len(),
    })
}

/// Distinct integers `round(10^(j / per_decade))` from 1 up to `max_t`.
pub fn log_checkpoints(max_t: u64, per_decade: usize) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    let mut j = 0;
    loop {
        let t = 10f64.powf(j as f64 / per_decade as f64).round() as u64;
        if t > max_t {
            break;
        }
        if out.last() != Some(&t) {
            out.push(t);
        }
        j += 1;
    }
    out
}

/// `||xi_t - xi*||` at each checkpoint for one critic run on i.i.d.
/// stationary tuples under `policy`.
pub fn critic_error_curve(
    mdp: &FiniteMdp,
    features: &TabularFeatureMap,
    policy: &SoftmaxPolicy,
    config: &CriticConfig,
    target: &DVector<f64>,
    checkpoints: &[u64],
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = StationarySampler::new(mdp, policy)?;
    let mut rng = seeded_rng(seed);
    let mut state = config.initial_state(features.dim());
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    let last = checkpoints.last().copied().unwrap_or(0);
    for t in 1..=last {
        let tuple = sampler.sample(mdp, policy, &mut rng)?;
        let phi = features.features(&tuple.current.obs, &tuple.current.action);
        let phi_next = features.features(&tuple.next.obs, &tuple.next.action);
        let sample = CriticSample {
            phi: &phi,
            phi_next: &phi_next,
            reward: tuple.reward,
        };
        state = config.update(&state, &sample, mdp.gamma())?;
        if next.peek() == Some(&&t) {
            next.next();
            out.push((&state.xi - target).norm());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RateCurves {
    pub checkpoints: Vec<u64>,
    /// One error curve per seed, in seed order.
    pub per_seed: Vec<(u64, Vec<f64>)>,
}

impl RateCurves {
    pub fn mean(&self) -> Vec<f64> {
        let n = self.per_seed.len() as f64;
        (0..self.checkpoints.len())
            .map(|i| self.per_seed.iter().map(|(_, c)| c[i]).sum::<f64>() / n)
            .collect()
    }

    pub fn mean_series(&self) -> Vec<(f64, f64)> {
        self.checkpoints.iter().map(|&t| t as f64).zip(self.mean()).collect()
    }

    pub fn seed_series(&self, i: usize) -> Vec<(f64, f64)> {
        self.checkpoints
            .iter()
            .map(|&t| t as f64)
            .zip(self.per_seed[i].1.iter().copied())
            .collect()
    }
}

/// Critic error curves at the uniform policy for every configured seed.
/// Different methods see identical tuple streams for the same seed.
pub fn critic_rate_experiment(cfg: &ExperimentConfig, max_t: u64) -> Result<RateCurves> {
    if cfg.env != EnvKind::Finite {
        return Err(HarnessError::config("critic rate curves need env = finite"));
    }
    cfg.validate()?;
    let critic = actor_config(cfg)?.critic;
    let (mdp, features) = load_finite(cfg)?;
    let policy = SoftmaxPolicy::zeros(mdp.n_states(), mdp.n_actions());
    let target = td_fixed_point(&mdp, &policy.table(), &features)?;
    let checkpoints = log_checkpoints(max_t, 20);
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            critic_error_curve(&mdp, &features, &policy, &critic, &target, &checkpoints, seed).map(|c| (seed, c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateCurves { checkpoints, per_seed })
}
