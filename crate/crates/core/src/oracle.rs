//! Exact computations on small finite MDPs.
//!
//! Everything here is brute-force linear algebra over the full state-action
//! table; it is the ground truth the stochastic algorithms are checked
//! against. Two sampling measures appear:
//!
//! * the discounted occupancy `rho` from a start state, used by the policy
//!   gradient ([`occupancy`], [`exact_gradient`]);
//! * the stationary distribution of the state chain under the policy, used
//!   for everything critic-related ([`stationary_distribution`],
//!   [`td_fixed_point`], [`min_eig_omega`], [`StationarySampler`]).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::env::{check_discount, Environment, Policy, TransitionTuple, TupleSampler, Visit};
use crate::error::{Error, Result};
use crate::features::TabularFeatureMap;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Seed of the default 4-state, 2-action instance.
pub const DEFAULT_INSTANCE_SEED: u64 = 20_190_719;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    /// `P[s][a][s']`, flattened s-major.
    transitions: Vec<f64>,
    /// `R[s][a]`.
    rewards: DMatrix<f64>,
    start: usize,
    gamma: f64,
    reward_bound: f64,
}

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: DMatrix<f64>,
        start: usize,
        gamma: f64,
    ) -> Result<Self> {
        check_discount(gamma)?;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::config("MDP needs at least one state and one action"));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(Error::config(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if rewards.shape() != (n_states, n_actions) {
            return Err(Error::config("reward table shape does not match S x A"));
        }
        if start >= n_states {
            return Err(Error::config(format!("start state {start} out of range")));
        }
        for (row_idx, row) in transitions.chunks_exact(n_states).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::config(format!(
                    "transition row (s={}, a={}) is not a distribution (sum {sum})",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::config("rewards must be finite"));
        }
        let reward_bound = rewards.amax();
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            start,
            gamma,
            reward_bound,
        })
    }

    /// Dirichlet(1) transition rows and uniform rewards in `[-1, 1]`.
    pub fn random(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(&mut rng, n_states, n_actions, gamma)
    }

    fn random_with<R: Rng + ?Sized>(
        rng: &mut R,
        n_states: usize,
        n_actions: usize,
        gamma: f64,
    ) -> Result<Self> {
        let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            // normalized exponentials are Dirichlet(1, ..., 1)
            let raw: Vec<f64> = (0..n_states)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
            // pin the row sum exactly
            let head: f64 = row[..n_states - 1].iter().sum();
            row[n_states - 1] = (1.0 - head).max(0.0);
            transitions.extend(row);
        }
        let rewards = DMatrix::from_fn(n_states, n_actions, |_, _| rng.random_range(-1.0..=1.0));
        Self::new(n_states, n_actions, transitions, rewards, 0, gamma)
    }

    /// The desk-scale instance: 4 states, 2 actions, `gamma = 0.9`, with a
    /// full-rank 3-dimensional feature map drawn from the same generator.
    pub fn default_instance() -> (Self, TabularFeatureMap) {
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_INSTANCE_SEED);
        let mdp = Self::random_with(&mut rng, 4, 2, 0.9).expect("valid default instance");
        let phi = DMatrix::from_fn(8, 3, |_, _| rng.random_range(-1.0..=1.0));
        let features = TabularFeatureMap::new(4, 2, phi).expect("full-rank default features");
        (mdp, features)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn rewards(&self) -> &DMatrix<f64> {
        &self.rewards
    }

    /// Rewards as a vector over pairs, s-major.
    pub fn reward_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.n_pairs(), |i, _| {
            self.rewards[(i / self.n_actions, i % self.n_actions)]
        })
    }

    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        let off = (s * self.n_actions + a) * self.n_states;
        &self.transitions[off..off + self.n_states]
    }

    pub fn with_rewards(&self, rewards: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            rewards,
            self.start,
            self.gamma,
        )
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            self.rewards.clone(),
            self.start,
            gamma,
        )
    }

    /// Plain-text form: a header `S A gamma start`, then `S*A` rows of `S`
    /// transition probabilities ordered by `(s, a)` s-major, then `S` rows of
    /// `A` rewards. Lines starting with `#` are comments.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.starts_with('#'))
            .flat_map(str::split_whitespace);
        let mut next = |what: &str| -> Result<f64> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("unexpected end of input reading {what}")))?;
            tok.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {tok:?} for {what}")))
        };
        let as_count = |v: f64, what: &str| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Parse(format!("{what} must be a non-negative integer, got {v}")))
            }
        };
        let s = as_count(next("state count")?, "state count")?;
        let a = as_count(next("action count")?, "action count")?;
        let gamma = next("gamma")?;
        let start = as_count(next("start state")?, "start state")?;
        let mut transitions = Vec::with_capacity(s * a * s);
        for _ in 0..s * a * s {
            transitions.push(next("transition probability")?);
        }
        let mut rewards = DMatrix::zeros(s, a);
        for i in 0..s {
            for j in 0..a {
                rewards[(i, j)] = next("reward")?;
            }
        }
        if tokens.next().is_some() {
            return Err(Error::Parse("trailing tokens after reward table".into()));
        }
        Self::new(s, a, transitions, rewards, start, gamma)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# S A gamma start\n");
        out.push_str(&format!(
            "{} {} {} {}\n",
            self.n_states, self.n_actions, self.gamma, self.start
        ));
        out.push_str("# transitions: one row per (s, a), s-major\n");
        for row in self.transitions.chunks_exact(self.n_states) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out.push_str("# rewards: one row per state\n");
        for s in 0..self.n_states {
            let line: Vec<String> = (0..self.n_actions)
                .map(|a| self.rewards[(s, a)].to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn sample_index<R: Rng + ?Sized>(probs: impl IntoIterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.into_iter().enumerate() {
        acc += p;
        if p > 0.0 {
            last = i;
        }
        if u < acc {
            return i;
        }
    }
    last
}

impl Environment for FiniteMdp {
    type State = usize;
    type Action = usize;

    fn discount(&self) -> f64 {
        self.gamma
    }

    fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    fn start_state(&self) -> usize {
        self.start
    }

    fn transition<R: Rng + ?Sized>(&self, s: &usize, a: &usize, rng: &mut R) -> (usize, f64) {
        let next = sample_index(self.next_distribution(*s, *a).iter().copied(), rng);
        (next, self.rewards[(*s, *a)])
    }
}

/// Action probabilities `pi[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    probs: DMatrix<f64>,
}

impl TabularPolicy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        for (s, row) in probs.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::config(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(n_states, n_actions, 1.0 / n_actions as f64),
        }
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }
}

/// Softmax policy over a table of scores `theta[s * A + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    theta: DVector<f64>,
}

impl SoftmaxPolicy {
    pub fn new(n_states: usize, n_actions: usize, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != n_states * n_actions {
            return Err(Error::config("softmax parameters must have S*A entries"));
        }
        Ok(Self {
            n_states,
            n_actions,
            theta,
        })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            theta: DVector::zeros(n_states * n_actions),
        }
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        let scores = &self.theta.as_slice()[s * self.n_actions..(s + 1) * self.n_actions];
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    pub fn table(&self) -> TabularPolicy {
        let mut probs = DMatrix::zeros(self.n_states, self.n_actions);
        for s in 0..self.n_states {
            for (a, p) in self.row(s).into_iter().enumerate() {
                probs[(s, a)] = p;
            }
        }
        TabularPolicy { probs }
    }

    /// `grad log pi(a | s) = e_(s,a) - pi(. | s)` on the block of state `s`.
    pub fn score_at(&self, s: usize, a: usize) -> DVector<f64> {
        let mut g = DVector::zeros(self.theta.len());
        for (b, p) in self.row(s).into_iter().enumerate() {
            g[s * self.n_actions + b] = -p;
        }
        g[s * self.n_actions + a] += 1.0;
        g
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        self.row(s)[a].ln()
    }
}

impl Policy<usize, usize> for SoftmaxPolicy {
    type Obs = usize;

    fn observe(&self, state: &usize) -> usize {
        *state
    }

    fn sample_action<R: Rng + ?Sized>(&self, s: &usize, rng: &mut R) -> usize {
        sample_index(self.row(*s), rng)
    }

    fn score(&self, s: &usize, a: &usize) -> DVector<f64> {
        self.score_at(*s, *a)
    }

    fn params(&self) -> &[f64] {
        self.theta.as_slice()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.theta.as_mut_slice()
    }
}

fn check_shapes(m: &FiniteMdp, pi: &TabularPolicy) -> Result<()> {
    if pi.probs.shape() != (m.n_states, m.n_actions) {
        return Err(Error::config("policy table does not match the MDP"));
    }
    Ok(())
}

/// State chain `P_pi[s][s'] = sum_a pi(a|s) P(s'|s,a)`.
pub fn state_chain(m: &FiniteMdp, pi: &TabularPolicy) -> DMatrix<f64> {
    DMatrix::from_fn(m.n_states, m.n_states, |s, t| {
        (0..m.n_actions)
            .map(|a| pi.prob(s, a) * m.next_distribution(s, a)[t])
            .sum()
    })
}

/// Pair chain `[(s,a), (s',a')] = P(s'|s,a) pi(a'|s')`, s-major indexing.
pub fn pair_chain(m: &FiniteMdp, pi: &TabularPolicy) -> DMatrix<f64> {
    let na = m.n_actions;
    DMatrix::from_fn(m.n_pairs(), m.n_pairs(), |i, j| {
        let (s, a) = (i / na, i % na);
        let (t, b) = (j / na, j % na);
        m.next_distribution(s, a)[t] * pi.prob(t, b)
    })
}

/// Solves `Q = R + gamma P Pi Q` directly.
pub fn exact_q(m: &FiniteMdp, pi: &TabularPolicy) -> Result<DMatrix<f64>> {
    check_shapes(m, pi)?;
    let n = m.n_pairs();
    let lhs = DMatrix::identity(n, n) - pair_chain(m, pi) * m.gamma;
    let q = lhs
        .lu()
        .solve(&m.reward_vector())
        .ok_or_else(|| Error::config("Bellman system is singular"))?;
    Ok(DMatrix::from_fn(m.n_states, m.n_actions, |s, a| q[s * m.n_actions + a]))
}

/// `J = V(s0) = sum_a pi(a|s0) Q(s0, a)`.
pub fn start_value(m: &FiniteMdp, pi: &TabularPolicy) -> Result<f64> {
    let q = exact_q(m, pi)?;
    Ok((0..m.n_actions)
        .map(|a| pi.prob(m.start, a) * q[(m.start, a)])
        .sum())
}

/// Discounted occupancy `rho = (1 - gamma) (I - gamma P_pi^T)^-1 e_s0`.
pub fn occupancy(m: &FiniteMdp, pi: &TabularPolicy, start: usize) -> Result<DVector<f64>> {
    check_shapes(m, pi)?;
    if start >= m.n_states {
        return Err(Error::config(format!("start state {start} out of range")));
    }
    let n = m.n_states;
    let lhs = DMatrix::identity(n, n) - state_chain(m, pi).transpose() * m.gamma;
    let mut e = DVector::zeros(n);
    e[start] = 1.0;
    let rho = lhs
        .lu()
        .solve(&e)
        .ok_or_else(|| Error::config("occupancy system is singular"))?;
    Ok(rho * (1.0 - m.gamma))
}

/// Stationary distribution `d^T P_pi = d^T` of the state chain.
pub fn stationary_distribution(m: &FiniteMdp, pi: &TabularPolicy) -> Result<DVector<f64>> {
    check_shapes(m, pi)?;
    let n = m.n_states;
    let mut lhs = state_chain(m, pi).transpose() - DMatrix::identity(n, n);
    // replace one balance equation with the normalization
    for j in 0..n {
        lhs[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let d = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::config("policy chain has no unique stationary distribution"))?;
    Ok(d)
}

/// `mu(s, a) = d(s) pi(a|s)` over pairs, s-major.
pub fn state_action_weights(m: &FiniteMdp, pi: &TabularPolicy) -> Result<DVector<f64>> {
    let d = stationary_distribution(m, pi)?;
    Ok(DVector::from_fn(m.n_pairs(), |i, _| {
        d[i / m.n_actions] * pi.prob(i / m.n_actions, i % m.n_actions)
    }))
}

/// Policy gradient by enumeration:
/// `(1 / (1 - gamma)) sum_{s,a} rho(s) pi(a|s) grad log pi(a|s) Q(s, a)`.
pub fn exact_gradient(m: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<DVector<f64>> {
    let pi = policy.table();
    let q = exact_q(m, &pi)?;
    let rho = occupancy(m, &pi, m.start)?;
    let mut grad = DVector::zeros(m.n_pairs());
    for s in 0..m.n_states {
        for a in 0..m.n_actions {
            let w = rho[s] * pi.prob(s, a) * q[(s, a)];
            grad.axpy(w, &policy.score_at(s, a), 1.0);
        }
    }
    Ok(grad / (1.0 - m.gamma))
}

fn check_features(m: &FiniteMdp, features: &TabularFeatureMap) -> Result<()> {
    if features.n_states() != m.n_states || features.n_actions() != m.n_actions {
        return Err(Error::config("feature map does not match the MDP"));
    }
    Ok(())
}

/// `A = E[phi (phi - gamma phi')^T]`, `b = E[r phi]` under the stationary
/// state-action weights.
pub fn td_matrices(
    m: &FiniteMdp,
    pi: &TabularPolicy,
    features: &TabularFeatureMap,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_features(m, features)?;
    let mu = state_action_weights(m, pi)?;
    let phi = features.matrix();
    let d_phi = DMatrix::from_diagonal(&mu) * phi;
    let next = pair_chain(m, pi) * phi;
    let a = d_phi.transpose() * (phi - next * m.gamma);
    let b = d_phi.transpose() * m.reward_vector();
    Ok((a, b))
}

/// TD(0) fixed point `xi* = A^-1 b`.
pub fn td_fixed_point(
    m: &FiniteMdp,
    pi: &TabularPolicy,
    features: &TabularFeatureMap,
) -> Result<DVector<f64>> {
    let (a, b) = td_matrices(m, pi, features)?;
    let lu = a.lu();
    if !lu.is_invertible() || lu.determinant().abs() < 1e-14 {
        return Err(Error::FeatureRank("TD matrix A is singular".into()));
    }
    lu.solve(&b)
        .ok_or_else(|| Error::FeatureRank("TD matrix A is singular".into()))
}

/// Smallest eigenvalue of `sum_i w_i phi_i phi_i^T`, rows of `phi` being the
/// feature vectors.
pub fn min_eig_weighted(phi: &DMatrix<f64>, weights: &DVector<f64>) -> f64 {
    let cov = phi.transpose() * DMatrix::from_diagonal(weights) * phi;
    cov.symmetric_eigenvalues().min()
}

/// `omega`: minimal eigenvalue of the policy-weighted feature covariance.
pub fn min_eig_omega(m: &FiniteMdp, pi: &TabularPolicy, features: &TabularFeatureMap) -> Result<f64> {
    check_features(m, features)?;
    let mu = state_action_weights(m, pi)?;
    let omega = min_eig_weighted(features.matrix(), &mu);
    if omega <= 1e-12 {
        return Err(Error::FeatureRank(format!("omega = {omega:e} is not positive")));
    }
    Ok(omega)
}

/// Strong-convexity modulus of `||b - A xi||^2`, i.e. `lambda_min(A^T A)`.
pub fn neu_modulus(m: &FiniteMdp, pi: &TabularPolicy, features: &TabularFeatureMap) -> Result<f64> {
    let (a, _) = td_matrices(m, pi, features)?;
    Ok((a.transpose() * a).symmetric_eigenvalues().min())
}

/// Exact i.i.d. critic tuples: `(s, a) ~ mu`, `s' ~ P(. | s, a)`, `a' ~ pi(. | s')`.
#[derive(Debug, Clone, Default)]
pub struct StationarySampler {
    weights: Vec<f64>,
}

impl StationarySampler {
    pub fn new(m: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<Self> {
        let mut sampler = Self::default();
        sampler.refresh(m, policy)?;
        Ok(sampler)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl TupleSampler<FiniteMdp, SoftmaxPolicy> for StationarySampler {
    fn refresh(&mut self, env: &FiniteMdp, policy: &SoftmaxPolicy) -> Result<()> {
        self.weights = state_action_weights(env, &policy.table())?
            .iter()
            .copied()
            .collect();
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(
        &self,
        env: &FiniteMdp,
        policy: &SoftmaxPolicy,
        rng: &mut R,
    ) -> Result<TransitionTuple<usize, usize, usize>> {
        let pair = sample_index(self.weights.iter().copied(), rng);
        let (s, a) = (pair / env.n_actions, pair % env.n_actions);
        let (next, reward) = crate::env::checked_transition(env, &s, &a, rng)?;
        let next_action = policy.sample_action(&next, rng);
        Ok(TransitionTuple {
            current: Visit {
                state: s,
                obs: s,
                action: a,
            },
            reward,
            next: Visit {
                state: next,
                obs: next,
                action: next_action,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_state() -> FiniteMdp {
        // action-independent chain: 0 -> 1 w.p. 0.3, 1 -> 0 w.p. 0.6
        let p = vec![0.7, 0.3, 0.7, 0.3, 0.6, 0.4, 0.6, 0.4];
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.5]);
        FiniteMdp::new(2, 2, p, r, 0, 0.8).unwrap()
    }

    #[test]
    fn validation() {
        let r = DMatrix::zeros(1, 1);
        assert!(FiniteMdp::new(1, 1, vec![0.9], r.clone(), 0, 0.9).is_err());
        assert!(FiniteMdp::new(1, 1, vec![1.0], r.clone(), 1, 0.9).is_err());
        assert!(FiniteMdp::new(1, 1, vec![1.0], r.clone(), 0, 1.0).is_err());
        assert!(FiniteMdp::new(1, 1, vec![1.0], r, 0, 0.9).is_ok());
        assert!(TabularPolicy::new(DMatrix::from_row_slice(1, 2, &[0.5, 0.6])).is_err());
    }

    #[test]
    fn single_state_q_is_geometric_series() {
        let m = FiniteMdp::new(1, 1, vec![1.0], DMatrix::from_element(1, 1, 1.0), 0, 0.9).unwrap();
        let q = exact_q(&m, &TabularPolicy::uniform(1, 1)).unwrap();
        assert_relative_eq!(q[(0, 0)], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_rewards_give_zero_q_and_fixed_point() {
        let (m, f) = FiniteMdp::default_instance();
        let m = m.with_rewards(DMatrix::zeros(4, 2)).unwrap();
        let pi = TabularPolicy::uniform(4, 2);
        assert_eq!(exact_q(&m, &pi).unwrap().amax(), 0.0);
        assert_eq!(td_fixed_point(&m, &pi, &f).unwrap().amax(), 0.0);
    }

    #[test]
    fn q_satisfies_bellman_and_bound() {
        let (m, _) = FiniteMdp::default_instance();
        let pi = SoftmaxPolicy::new(4, 2, DVector::from_fn(8, |i, _| (i as f64 * 0.7).sin())).unwrap();
        let table = pi.table();
        let q = exact_q(&m, &table).unwrap();
        let qv = DVector::from_fn(8, |i, _| q[(i / 2, i % 2)]);
        let resid = &qv - (m.reward_vector() + pair_chain(&m, &table) * &qv * m.gamma());
        assert!(resid.amax() <= 1e-10);
        assert!(q.amax() <= m.reward_bound() / (1.0 - m.gamma()) + 1e-12);
    }

    #[test]
    fn occupancy_is_a_distribution() {
        let m = two_state();
        let pi = TabularPolicy::uniform(2, 2);
        let rho = occupancy(&m, &pi, 0).unwrap();
        assert_relative_eq!(rho.sum(), 1.0, epsilon = 1e-12);
        assert!(rho.iter().all(|x| *x >= 0.0));

        // closed form for the 2-state chain with x = P(0 -> 1), y = P(1 -> 0):
        // rho(1) = gamma x / (1 - gamma (1 - x - y))
        let (x, y, g) = (0.3, 0.6, 0.8);
        assert_relative_eq!(rho[1], g * x / (1.0 - g * (1.0 - x - y)), epsilon = 1e-12);

        let tiny = m.with_gamma(1e-12).unwrap();
        let rho = occupancy(&tiny, &pi, 1).unwrap();
        assert_relative_eq!(rho[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn stationary_distribution_two_state() {
        let m = two_state();
        let d = stationary_distribution(&m, &TabularPolicy::uniform(2, 2)).unwrap();
        // d(0) = y / (x + y)
        assert_relative_eq!(d[0], 0.6 / 0.9, epsilon = 1e-12);
        assert_relative_eq!(d[1], 0.3 / 0.9, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_mdp_has_zero_gradient_at_uniform_policy() {
        // both actions behave identically, so every softmax policy is stationary
        let p = vec![0.5, 0.5, 0.5, 0.5, 0.2, 0.8, 0.2, 0.8];
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -0.5, -0.5]);
        let m = FiniteMdp::new(2, 2, p, r, 0, 0.9).unwrap();
        let g = exact_gradient(&m, &SoftmaxPolicy::zeros(2, 2)).unwrap();
        assert!(g.amax() < 1e-12);
    }

    #[test]
    fn one_hot_fixed_point_is_exact_q() {
        let (m, _) = FiniteMdp::default_instance();
        let pi = TabularPolicy::uniform(4, 2);
        let xi = td_fixed_point(&m, &pi, &TabularFeatureMap::one_hot(4, 2)).unwrap();
        let q = exact_q(&m, &pi).unwrap();
        for i in 0..8 {
            assert!((xi[i] - q[(i / 2, i % 2)]).abs() <= 1e-10);
        }
    }

    #[test]
    fn fixed_point_zeroes_expected_td_update() {
        let (m, f) = FiniteMdp::default_instance();
        let pi = TabularPolicy::uniform(4, 2);
        let xi = td_fixed_point(&m, &pi, &f).unwrap();
        let mu = state_action_weights(&m, &pi).unwrap();
        let pp = pair_chain(&m, &pi);
        let phi = f.matrix();
        let r = m.reward_vector();
        // E[delta phi] by enumeration
        let mut expected = DVector::zeros(3);
        for i in 0..8 {
            let row = phi.row(i).transpose();
            for j in 0..8 {
                let next = phi.row(j).transpose();
                let delta = r[i] + m.gamma() * xi.dot(&next) - xi.dot(&row);
                expected.axpy(mu[i] * pp[(i, j)] * delta, &row, 1.0);
            }
        }
        assert!(expected.amax() < 1e-10);
    }

    #[test]
    fn omega_examples() {
        let pi = TabularPolicy::uniform(4, 2);
        let (m, _) = FiniteMdp::default_instance();
        let mu = state_action_weights(&m, &pi).unwrap();
        // one-hot features with uniform weights
        let w = DVector::from_element(8, 1.0 / 8.0);
        assert_relative_eq!(
            min_eig_weighted(&DMatrix::identity(8, 8), &w),
            0.125,
            epsilon = 1e-12
        );
        // one-hot on the instance itself: the smallest pair weight
        let omega = min_eig_omega(&m, &pi, &TabularFeatureMap::one_hot(4, 2)).unwrap();
        assert_relative_eq!(omega, mu.min(), epsilon = 1e-12);

        // duplicated column
        let dup = DMatrix::from_fn(8, 2, |i, _| (i as f64 + 1.0).sqrt());
        let f = TabularFeatureMap::unchecked(4, 2, dup).unwrap();
        assert!(matches!(min_eig_omega(&m, &pi, &f), Err(Error::FeatureRank(_))));

        // two pairs with features (1, 0) and (1, 1)/sqrt(2), equal weights:
        // covariance [[3/4, 1/4], [1/4, 1/4]], characteristic polynomial
        // x^2 - x + 1/8 with smaller root (1 - sqrt(1/2)) / 2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, s, s]);
        let w = DVector::from_vec(vec![0.5, 0.5]);
        let omega = min_eig_weighted(&phi, &w);
        assert_relative_eq!(omega, (1.0 - 0.5f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(omega * omega - omega + 0.125, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn text_format_round_trip() {
        let (m, _) = FiniteMdp::default_instance();
        let parsed = FiniteMdp::from_text(&m.to_text()).unwrap();
        assert_eq!(parsed, m);
        assert!(FiniteMdp::from_text("1 1 0.9").is_err());
        assert!(FiniteMdp::from_text("1 1 0.9 0 1.0 2.0 3.0").is_err());
        let ok = FiniteMdp::from_text("# tiny\n1 1 0.5 0\n1.0\n# r\n-1\n").unwrap();
        assert_eq!(ok.rewards()[(0, 0)], -1.0);
    }

    #[test]
    fn stationary_sampler_matches_weights() {
        let m = two_state();
        let pol = SoftmaxPolicy::zeros(2, 2);
        let sampler = StationarySampler::new(&m, &pol).unwrap();
        let mut rng = crate::env::seeded_rng(5);
        let n = 100_000;
        let mut count0 = 0;
        for _ in 0..n {
            let t = sampler.sample(&m, &pol, &mut rng).unwrap();
            if t.current.state == 0 {
                count0 += 1;
            }
        }
        assert!((count0 as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }
}
