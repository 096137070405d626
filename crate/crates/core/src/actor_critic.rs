//! Actor-critic drivers.
//!
//! [`run_generic`] alternates `T_C(k)` critic updates on fresh tuples with a
//! single geometric-horizon gradient estimate per actor step.
//! [`run_practical`] is the batched variant used for navigation: the critic
//! learns from whole rollouts and the actor is updated at every step of an
//! on-policy rollout.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;

use crate::critic::{CriticConfig, CriticSample, CriticState};
use crate::env::{
    checked_transition, rollout, sample_geometric_horizon, Environment, Policy, TupleSampler, Visit,
};
use crate::error::{Error, Result};
use crate::features::CriticFeatures;

/// Norm of `theta` above which the actor stops moving.
pub const DEFAULT_FREEZE_THRESHOLD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSchedule {
    /// `eta_k = k^-exponent`.
    Power { exponent: f64 },
    Constant(f64),
}

impl EtaSchedule {
    pub fn eta(&self, k: usize) -> f64 {
        match *self {
            EtaSchedule::Power { exponent } => (k.max(1) as f64).powf(-exponent),
            EtaSchedule::Constant(eta) => eta,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            EtaSchedule::Power { exponent } if exponent > 0.0 && exponent < 1.0 => Ok(()),
            EtaSchedule::Constant(eta) if eta >= 0.0 && eta.is_finite() => Ok(()),
            other => Err(Error::config(format!("invalid actor step schedule {other:?}"))),
        }
    }
}

/// Number of critic updates before the `k`-th actor update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticEffort {
    Linear,
    LinearPlusOne,
    Constant(usize),
}

impl std::str::FromStr for CriticEffort {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(CriticEffort::Linear),
            "linear_plus_one" => Ok(CriticEffort::LinearPlusOne),
            other => other
                .strip_prefix("constant:")
                .and_then(|n| n.parse().ok())
                .map(CriticEffort::Constant)
                .ok_or_else(|| Error::config(format!("unknown critic effort {other:?}"))),
        }
    }
}

pub fn critic_effort(schedule: CriticEffort, k: usize) -> usize {
    match schedule {
        CriticEffort::Linear => k,
        CriticEffort::LinearPlusOne => k + 1,
        CriticEffort::Constant(n) => n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    /// Evaluate after every `every`-th actor update. Zero disables evaluation.
    pub every: usize,
    pub trajectories: usize,
    pub length: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every: 10,
            trajectories: 10,
            length: 200,
        }
    }
}

/// Rollout sizes for [`run_practical`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PracticalConfig {
    pub critic_rollouts: usize,
    pub critic_length: usize,
    pub actor_length: usize,
}

impl Default for PracticalConfig {
    fn default() -> Self {
        Self {
            critic_rollouts: 10,
            critic_length: 200,
            actor_length: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorConfig {
    pub eta: EtaSchedule,
    pub critic: CriticConfig,
    /// Only used by [`run_generic`].
    pub effort: CriticEffort,
    /// Only used by [`run_practical`].
    pub practical: PracticalConfig,
    /// Number of actor updates `K`.
    pub iterations: usize,
    pub freeze_threshold: f64,
    /// Restart the critic from zero at every actor iteration.
    pub reset_critic: bool,
    /// Keep `xi` across actor iterations but restart the step-size index.
    pub restart_step_counter: bool,
    pub eval: EvalConfig,
    /// Keep a copy of `theta` after every `n`-th actor update.
    pub snapshot_every: Option<usize>,
}

impl ActorConfig {
    pub fn new(critic: CriticConfig, iterations: usize) -> Self {
        Self {
            eta: EtaSchedule::Power { exponent: 0.5 },
            critic,
            effort: CriticEffort::LinearPlusOne,
            practical: PracticalConfig::default(),
            iterations,
            freeze_threshold: DEFAULT_FREEZE_THRESHOLD,
            reset_critic: false,
            restart_step_counter: false,
            eval: EvalConfig::default(),
            snapshot_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eta.validate()?;
        self.critic.validate()?;
        if self.iterations == 0 {
            return Err(Error::config("need at least one actor iteration"));
        }
        if !(self.freeze_threshold > 0.0) {
            return Err(Error::config("freeze threshold must be positive"));
        }
        if self.eval.every > 0 && (self.eval.trajectories == 0 || self.eval.length == 0) {
            return Err(Error::config("evaluation needs trajectories of positive length"));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::config("snapshot interval must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Gradient-norm proxy over the evaluation transitions, when evaluated.
    pub grad_proxy: Option<f64>,
    /// Mean undiscounted evaluation return, when evaluated.
    pub eval_reward: Option<f64>,
    pub theta_norm: f64,
    pub xi_norm: f64,
    /// Critic updates performed so far.
    pub critic_steps: u64,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    /// `(k, theta)` pairs, see [`ActorConfig::snapshot_every`].
    pub snapshots: Vec<(usize, Vec<f64>)>,
    pub final_xi: Vec<f64>,
    /// Set when the run stopped on a non-finite parameter.
    pub aborted: Option<Error>,
}

impl RunTrace {
    pub fn evaluations(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(|r| r.eval_reward.is_some())
    }

    pub fn critic_steps(&self) -> u64 {
        self.records.last().map_or(0, |r| r.critic_steps)
    }
}

/// `(1 / (1 - gamma)) xi^T phi(s, a) grad log pi(a | s)`, laid out like the
/// policy parameters.
pub fn gradient_estimate<S, A, P>(
    policy: &P,
    xi: &DVector<f64>,
    phi: &DVector<f64>,
    obs: &P::Obs,
    action: &A,
    gamma: f64,
) -> DVector<f64>
where
    P: Policy<S, A>,
{
    let q = xi.dot(phi);
    if q == 0.0 {
        return DVector::zeros(policy.params().len());
    }
    policy.score(obs, action) * (q / (1.0 - gamma))
}

/// Rolls out a `Geom(1 - gamma)` horizon from the start state and returns
/// the estimate at its endpoint.
pub fn sample_gradient_estimate<E, P, F, R>(
    env: &E,
    policy: &P,
    features: &F,
    xi: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>>
where
    E: Environment,
    P: Policy<E::State, E::Action>,
    F: CriticFeatures<P::Obs, E::Action>,
    R: Rng + ?Sized,
{
    let gamma = env.discount();
    let horizon = sample_geometric_horizon(gamma, rng)?;
    let traj = rollout(env, policy, env.start_state(), horizon, rng)?;
    let Visit { obs, action, .. } = &traj.end;
    let phi = features.features(obs, action);
    Ok(gradient_estimate(policy, xi, &phi, obs, action, gamma))
}

/// `theta + eta * estimate`, unless `||theta||` has reached the freeze threshold.
pub fn actor_step(theta: &mut [f64], estimate: &DVector<f64>, eta: f64, freeze_threshold: f64) -> bool {
    let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm >= freeze_threshold {
        return false;
    }
    for (t, g) in theta.iter_mut().zip(estimate.iter()) {
        *t += eta * g;
    }
    true
}

/// Mean score proxy over every transition of the given trajectories.
pub fn grad_norm_proxy<S, A, O, P>(policy: &P, trajectories: &[crate::env::Trajectory<S, A, O>]) -> f64
where
    P: Policy<S, A, Obs = O>,
{
    let mut per_traj = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        if traj.is_empty() {
            continue;
        }
        let sum: f64 = traj
            .steps
            .iter()
            .map(|s| policy.score_proxy(&s.visit.obs, &s.visit.action))
            .sum();
        per_traj.push(sum / traj.len() as f64);
    }
    if per_traj.is_empty() {
        0.0
    } else {
        per_traj.iter().sum::<f64>() / per_traj.len() as f64
    }
}

/// `(mean undiscounted return, gradient-norm proxy)` over fresh rollouts.
pub fn evaluate<E, P, R>(env: &E, policy: &P, eval: &EvalConfig, rng: &mut R) -> Result<(f64, f64)>
where
    E: Environment,
    P: Policy<E::State, E::Action>,
    R: Rng + ?Sized,
{
    let trajectories = (0..eval.trajectories)
        .map(|_| rollout(env, policy, env.start_state(), eval.length, rng))
        .collect::<Result<Vec<_>>>()?;
    let reward = trajectories.iter().map(|t| t.total_reward()).sum::<f64>() / trajectories.len().max(1) as f64;
    Ok((reward, grad_norm_proxy(policy, &trajectories)))
}

/// Smallest `k` (1-based) with `min_{m <= k} sq_grad_norms[m] < epsilon`.
pub fn k_epsilon(sq_grad_norms: &[f64], epsilon: f64) -> Option<usize> {
    sq_grad_norms.iter().position(|&v| v < epsilon).map(|i| i + 1)
}

struct Driver<'a> {
    config: &'a ActorConfig,
    gamma: f64,
    critic: CriticState,
    critic_steps: u64,
    trace: RunTrace,
    clock: Instant,
}

impl<'a> Driver<'a> {
    fn new(config: &'a ActorConfig, gamma: f64, n_features: usize) -> Result<Self> {
        config.validate()?;
        crate::env::check_discount(gamma)?;
        Ok(Self {
            config,
            gamma,
            critic: config.critic.initial_state(n_features),
            critic_steps: 0,
            trace: RunTrace::default(),
            clock: Instant::now(),
        })
    }

    fn begin_iteration(&mut self) {
        if self.config.reset_critic {
            self.critic = self.config.critic.initial_state(self.critic.xi.len());
        } else {
            self.critic.reset_trackers();
            if self.config.restart_step_counter {
                self.critic.t = 0;
            }
        }
    }

    fn critic_update(&mut self, phi: &DVector<f64>, phi_next: &DVector<f64>, reward: f64) -> Result<()> {
        let sample = CriticSample {
            phi,
            phi_next,
            reward,
        };
        self.critic = self.config.critic.update(&self.critic, &sample, self.gamma)?;
        self.critic_steps += 1;
        Ok(())
    }

    /// Records iteration `k` and reports whether the run must stop.
    fn finish_iteration<E, P, R>(&mut self, k: usize, env: &E, policy: &P, rng: &mut R) -> Result<bool>
    where
        E: Environment,
        P: Policy<E::State, E::Action>,
        R: Rng + ?Sized,
    {
        let theta = policy.params();
        let what = if !theta.iter().all(|v| v.is_finite()) {
            Some("actor parameter")
        } else if !self.critic.is_finite() {
            Some("critic parameter")
        } else {
            None
        };
        if let Some(what) = what {
            self.trace.aborted = Some(Error::NonFinite { what, iteration: k });
            return Ok(true);
        }

        let eval = &self.config.eval;
        let (eval_reward, grad_proxy) = if eval.every > 0 && k % eval.every == 0 {
            let (r, g) = evaluate(env, policy, eval, rng)?;
            (Some(r), Some(g))
        } else {
            (None, None)
        };
        if self.config.snapshot_every.is_some_and(|n| k % n == 0) {
            self.trace.snapshots.push((k, theta.to_vec()));
        }
        self.trace.records.push(TraceRecord {
            k,
            grad_proxy,
            eval_reward,
            theta_norm: theta.iter().map(|x| x * x).sum::<f64>().sqrt(),
            xi_norm: self.critic.xi.norm(),
            critic_steps: self.critic_steps,
            wall_time: self.clock.elapsed().as_secs_f64(),
        });
        Ok(false)
    }

    fn finish(mut self) -> RunTrace {
        self.trace.final_xi = self.critic.xi.iter().copied().collect();
        self.trace
    }
}

/// The generic loop: `T_C(k)` critic updates on sampled tuples, then one
/// geometric-horizon gradient estimate and an actor step.
pub fn run_generic<E, P, F, S, R>(
    env: &E,
    policy: &mut P,
    features: &F,
    sampler: &mut S,
    config: &ActorConfig,
    rng: &mut R,
) -> Result<RunTrace>
where
    E: Environment,
    P: Policy<E::State, E::Action>,
    F: CriticFeatures<P::Obs, E::Action>,
    S: TupleSampler<E, P>,
    R: Rng + ?Sized,
{
    let mut driver = Driver::new(config, env.discount(), features.dim())?;
    for k in 1..=config.iterations {
        driver.begin_iteration();
        sampler.refresh(env, policy)?;
        for _ in 0..critic_effort(config.effort, k) {
            let tuple = sampler.sample(env, policy, rng)?;
            let phi = features.features(&tuple.current.obs, &tuple.current.action);
            let phi_next = features.features(&tuple.next.obs, &tuple.next.action);
            driver.critic_update(&phi, &phi_next, tuple.reward)?;
        }
        let estimate = sample_gradient_estimate(env, policy, features, &driver.critic.xi, rng)?;
        actor_step(policy.params_mut(), &estimate, config.eta.eta(k), config.freeze_threshold);
        if driver.finish_iteration(k, env, policy, rng)? {
            break;
        }
    }
    Ok(driver.finish())
}

/// Batched variant: the critic learns from every transition of
/// `critic_rollouts` rollouts, then the actor takes one step per transition
/// of a single on-policy rollout.
pub fn run_practical<E, P, F, R>(
    env: &E,
    policy: &mut P,
    features: &F,
    config: &ActorConfig,
    rng: &mut R,
) -> Result<RunTrace>
where
    E: Environment,
    P: Policy<E::State, E::Action>,
    F: CriticFeatures<P::Obs, E::Action>,
    R: Rng + ?Sized,
{
    let gamma = env.discount();
    let sizes = config.practical;
    let mut driver = Driver::new(config, gamma, features.dim())?;
    for k in 1..=config.iterations {
        driver.begin_iteration();
        for _ in 0..sizes.critic_rollouts {
            let traj = rollout(env, policy, env.start_state(), sizes.critic_length, rng)?;
            for tuple in traj.tuples() {
                let phi = features.features(&tuple.current.obs, &tuple.current.action);
                let phi_next = features.features(&tuple.next.obs, &tuple.next.action);
                driver.critic_update(&phi, &phi_next, tuple.reward)?;
            }
        }

        let eta = config.eta.eta(k);
        let mut state = env.start_state();
        for _ in 0..sizes.actor_length {
            let obs = policy.observe(&state);
            let action = policy.sample_action(&obs, rng);
            let phi = features.features(&obs, &action);
            let estimate = gradient_estimate(policy, &driver.critic.xi, &phi, &obs, &action, gamma);
            actor_step(policy.params_mut(), &estimate, eta, config.freeze_threshold);
            state = checked_transition(env, &state, &action, rng)?.0;
        }

        if driver.finish_iteration(k, env, policy, rng)? {
            break;
        }
    }
    Ok(driver.finish())
}
