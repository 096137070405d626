//! Environment abstraction, rollouts and critic-tuple sampling.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};

/// The generator every run owns. One stream per run, no global state.
pub type RunRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A discounted MDP with a sampled transition function.
///
/// Implementations must be immutable after construction so that runs on
/// different threads can share them.
pub trait Environment {
    type State: Clone;
    type Action: Clone;

    /// Discount factor, strictly inside (0, 1).
    fn discount(&self) -> f64;

    /// Declared bound `U_R` on the absolute value of every reward.
    fn reward_bound(&self) -> f64;

    fn start_state(&self) -> Self::State;

    /// Samples `(s', r)` given `(s, a)`.
    fn transition<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: &Self::Action,
        rng: &mut R,
    ) -> (Self::State, f64);
}

/// A stochastic policy with a differentiable log-density.
///
/// `Obs` is whatever the policy derives from a state before acting (a
/// feature vector, a table index). Rollouts compute it once per visited
/// state and keep it around for the critic.
pub trait Policy<S, A> {
    type Obs: Clone;

    fn observe(&self, state: &S) -> Self::Obs;

    fn sample_action<R: Rng + ?Sized>(&self, obs: &Self::Obs, rng: &mut R) -> A;

    /// `grad_theta log pi(a | s)`, laid out like [`Policy::params`].
    fn score(&self, obs: &Self::Obs, action: &A) -> DVector<f64>;

    /// Scalar stand-in for the score norm used when tracing a run.
    fn score_proxy(&self, obs: &Self::Obs, action: &A) -> f64 {
        self.score(obs, action).norm()
    }

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];
}

/// A visited state together with the policy's view of it and the action taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit<S, A, O> {
    pub state: S,
    pub obs: O,
    pub action: A,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<S, A, O> {
    pub visit: Visit<S, A, O>,
    pub reward: f64,
}

/// `length` transitions plus the final state and the action sampled there.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, A, O> {
    pub steps: Vec<Step<S, A, O>>,
    pub end: Visit<S, A, O>,
}

impl<S, A, O> Trajectory<S, A, O> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start(&self) -> &S {
        self.steps
            .first()
            .map(|s| &s.visit.state)
            .unwrap_or(&self.end.state)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        let mut weight = 1.0;
        for step in &self.steps {
            acc += weight * step.reward;
            weight *= gamma;
        }
        acc
    }

    /// Consecutive on-policy tuples `(s, a, r, s', a')`, one per transition.
    pub fn tuples(&self) -> impl Iterator<Item = TupleRef<'_, S, A, O>> {
        self.steps.iter().enumerate().map(move |(i, step)| {
            let next = self
                .steps
                .get(i + 1)
                .map(|n| &n.visit)
                .unwrap_or(&self.end);
            TupleRef {
                current: &step.visit,
                reward: step.reward,
                next,
            }
        })
    }
}

/// One critic sample `(s, a, r, s', a')` with `a'` drawn from the same policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTuple<S, A, O> {
    pub current: Visit<S, A, O>,
    pub reward: f64,
    pub next: Visit<S, A, O>,
}

/// Borrowed form of [`TransitionTuple`], produced when walking a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TupleRef<'a, S, A, O> {
    pub current: &'a Visit<S, A, O>,
    pub reward: f64,
    pub next: &'a Visit<S, A, O>,
}

impl<S, A, O> TransitionTuple<S, A, O> {
    pub fn as_ref(&self) -> TupleRef<'_, S, A, O> {
        TupleRef {
            current: &self.current,
            reward: self.reward,
            next: &self.next,
        }
    }
}

pub fn check_discount(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("discount {gamma} outside (0, 1)")))
    }
}

/// Draws `T ~ Geom(1 - gamma)` on `{0, 1, 2, ...}`: `P(T = t) = (1 - gamma) gamma^t`.
pub fn sample_geometric_horizon<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> Result<usize> {
    check_discount(gamma)?;
    let dist = Geometric::new(1.0 - gamma).map_err(|e| Error::config(e.to_string()))?;
    Ok(dist.sample(rng) as usize)
}

/// Environment step with the reward-bound contract enforced.
pub fn checked_transition<E, R>(
    env: &E,
    state: &E::State,
    action: &E::Action,
    rng: &mut R,
) -> Result<(E::State, f64)>
where
    E: Environment,
    R: Rng + ?Sized,
{
    let (next, reward) = env.transition(state, action, rng);
    let bound = env.reward_bound();
    if !(reward.abs() <= bound) {
        return Err(Error::RewardBound { reward, bound });
    }
    Ok((next, reward))
}

fn visit<E, P, R>(policy: &P, state: E::State, rng: &mut R) -> Visit<E::State, E::Action, P::Obs>
where
    E: Environment,
    P: Policy<E::State, E::Action>,
    R: Rng + ?Sized,
{
    let obs = policy.observe(&state);
    let action = policy.sample_action(&obs, rng);
    Visit { state, obs, action }
}

/// Runs `policy` for exactly `length` transitions from `start`.
///
/// The returned trajectory always carries the action sampled at the final
/// state, so a zero-length rollout still yields `(s0, a0)`.
pub fn rollout<E, P, R>(
    env: &E,
    policy: &P,
    start: E::State,
    length: usize,
    rng: &mut R,
) -> Result<Trajectory<E::State, E::Action, P::Obs>>
where
    E: Environment,
    P: Policy<E::State, E::Action>,
    R: Rng + ?Sized,
{
    let mut steps = Vec::with_capacity(length);
    let mut current = visit::<E, P, R>(policy, start, rng);
    for _ in 0..length {
        let (next_state, reward) = checked_transition(env, &current.state, &current.action, rng)?;
        let next = visit::<E, P, R>(policy, next_state, rng);
        steps.push(Step {
            visit: std::mem::replace(&mut current, next),
            reward,
        });
    }
    Ok(Trajectory { steps, end: current })
}

/// Approximates a draw from the stationary distribution by the endpoint of
/// a `burn_in`-step rollout from the start state, then takes one more step.
pub fn sample_critic_tuple<E, P, R>(
    env: &E,
    policy: &P,
    burn_in: usize,
    rng: &mut R,
) -> Result<TransitionTuple<E::State, E::Action, P::Obs>>
where
    E: Environment,
    P: Policy<E::State, E::Action>,
    R: Rng + ?Sized,
{
    let mut traj = rollout(env, policy, env.start_state(), burn_in + 1, rng)?;
    let last = traj.steps.pop().expect("rollout of positive length");
    Ok(TransitionTuple {
        current: last.visit,
        reward: last.reward,
        next: traj.end,
    })
}

/// Source of critic samples for the generic actor-critic loop.
pub trait TupleSampler<E, P>
where
    E: Environment,
    P: Policy<E::State, E::Action>,
{
    /// Called whenever the policy has changed.
    fn refresh(&mut self, _env: &E, _policy: &P) -> Result<()> {
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        env: &E,
        policy: &P,
        rng: &mut R,
    ) -> Result<TransitionTuple<E::State, E::Action, P::Obs>>;
}

/// [`sample_critic_tuple`] with a fixed burn-in length.
#[derive(Debug, Clone, Copy)]
pub struct BurnInSampler {
    pub burn_in: usize,
}

impl Default for BurnInSampler {
    fn default() -> Self {
        Self { burn_in: 200 }
    }
}

impl<E, P> TupleSampler<E, P> for BurnInSampler
where
    E: Environment,
    P: Policy<E::State, E::Action>,
{
    fn sample<R: Rng + ?Sized>(
        &self,
        env: &E,
        policy: &P,
        rng: &mut R,
    ) -> Result<TransitionTuple<E::State, E::Action, P::Obs>> {
        sample_critic_tuple(env, policy, self.burn_in, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Walk on the integers: state += action, reward = -|s'| clipped to 5.
    struct Line;

    impl Environment for Line {
        type State = i64;
        type Action = i64;
        fn discount(&self) -> f64 {
            0.5
        }
        fn reward_bound(&self) -> f64 {
            5.0
        }
        fn start_state(&self) -> i64 {
            0
        }
        fn transition<R: Rng + ?Sized>(&self, s: &i64, a: &i64, _: &mut R) -> (i64, f64) {
            let next = s + a;
            (next, -(next.abs().min(5) as f64))
        }
    }

    struct AlwaysUp;

    impl Policy<i64, i64> for AlwaysUp {
        type Obs = ();
        fn observe(&self, _: &i64) {}
        fn sample_action<R: Rng + ?Sized>(&self, _: &(), _: &mut R) -> i64 {
            1
        }
        fn score(&self, _: &(), _: &i64) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn params(&self) -> &[f64] {
            &[]
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut []
        }
    }

    #[test]
    fn zero_length_rollout_keeps_start_and_action() {
        let mut rng = seeded_rng(0);
        let traj = rollout(&Line, &AlwaysUp, 3, 0, &mut rng).unwrap();
        assert!(traj.is_empty());
        assert_eq!(traj.end.state, 3);
        assert_eq!(traj.end.action, 1);
        assert_eq!(*traj.start(), 3);
    }

    #[test]
    fn deterministic_rollout_composes_steps() {
        let mut rng = seeded_rng(0);
        let traj = rollout(&Line, &AlwaysUp, 0, 3, &mut rng).unwrap();
        let states: Vec<i64> = traj.steps.iter().map(|s| s.visit.state).collect();
        assert_eq!(states, vec![0, 1, 2]);
        assert_eq!(traj.end.state, 3);
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        assert_eq!(rewards, vec![-1.0, -2.0, -3.0]);
        assert_eq!(traj.discounted_return(0.5), -1.0 - 1.0 - 0.75);
    }

    #[test]
    fn tuples_chain_consecutive_visits() {
        let mut rng = seeded_rng(0);
        let traj = rollout(&Line, &AlwaysUp, 0, 3, &mut rng).unwrap();
        let pairs: Vec<(i64, i64)> = traj
            .tuples()
            .map(|t| (t.current.state, t.next.state))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn burn_in_zero_starts_at_start_state() {
        let mut rng = seeded_rng(0);
        let tup = sample_critic_tuple(&Line, &AlwaysUp, 0, &mut rng).unwrap();
        assert_eq!(tup.current.state, 0);
        assert_eq!(tup.next.state, 1);
        let tup = sample_critic_tuple(&Line, &AlwaysUp, 4, &mut rng).unwrap();
        assert_eq!(tup.current.state, 4);
    }

    #[test]
    fn reward_bound_violation_is_reported() {
        let mut rng = seeded_rng(0);
        let err = rollout(&Line, &AlwaysUp, 0, 10, &mut rng);
        // rewards are clipped to 5 so the bound holds
        assert!(err.is_ok());

        struct Loud;
        impl Environment for Loud {
            type State = i64;
            type Action = i64;
            fn discount(&self) -> f64 {
                0.5
            }
            fn reward_bound(&self) -> f64 {
                1.0
            }
            fn start_state(&self) -> i64 {
                0
            }
            fn transition<R: Rng + ?Sized>(&self, s: &i64, _: &i64, _: &mut R) -> (i64, f64) {
                (*s, 2.0)
            }
        }
        let err = rollout(&Loud, &AlwaysUp, 0, 1, &mut rng).unwrap_err();
        assert_eq!(
            err,
            Error::RewardBound {
                reward: 2.0,
                bound: 1.0
            }
        );
    }

    #[test]
    fn geometric_rejects_bad_discount() {
        let mut rng = seeded_rng(0);
        for g in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(sample_geometric_horizon(g, &mut rng).is_err());
        }
    }

    #[test]
    fn geometric_near_zero_discount_is_zero() {
        let mut rng = seeded_rng(1);
        for _ in 0..1000 {
            assert_eq!(sample_geometric_horizon(1e-12, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn geometric_mean_and_mass_at_zero() {
        let mut rng = seeded_rng(2);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_geometric_horizon(0.9, &mut rng).unwrap() as f64)
            .sum::<f64>()
            / n as f64;
        // gamma / (1 - gamma) = 9
        assert!((mean - 9.0).abs() < 0.02 * 9.0, "mean {mean}");

        let zeros = (0..n)
            .filter(|_| sample_geometric_horizon(0.5, &mut rng).unwrap() == 0)
            .count() as f64
            / n as f64;
        assert!((zeros - 0.5).abs() < 0.01, "P(T=0) {zeros}");
    }

    #[test]
    fn identical_seeds_give_identical_draws() {
        let a: Vec<usize> = {
            let mut rng = seeded_rng(42);
            (0..100)
                .map(|_| sample_geometric_horizon(0.9, &mut rng).unwrap())
                .collect()
        };
        let b: Vec<usize> = {
            let mut rng = seeded_rng(42);
            (0..100)
                .map(|_| sample_geometric_horizon(0.9, &mut rng).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }
}
