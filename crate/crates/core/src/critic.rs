//! Linear critics: TD(0), GTD and accelerated GTD.
//!
//! GTD and A-GTD are stochastic compositional gradient methods: a fast
//! tracker averages samples of an inner expectation while the critic
//! parameter follows the chain rule through the tracked value. Two tracker
//! shapes are supported:
//!
//! * [`TrackerForm::Scalar`] tracks the temporal difference `delta` itself.
//!   Its expected objective is `(E[delta])^2`, which only pins down a
//!   hyperplane of parameters.
//! * [`TrackerForm::Feature`] tracks `delta * phi(s, a)`, making the
//!   objective `||E[delta phi]||^2 = ||b - A xi||^2`. It is strongly convex
//!   whenever `A` is invertible and its minimizer is the TD fixed point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::TabularFeatureMap;
use crate::oracle::{pair_chain, state_action_weights, FiniteMdp, TabularPolicy};

/// Critic-parameter radius used by the navigation experiment.
pub const DEFAULT_RADIUS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CriticMethod {
    Td0,
    Gtd,
    Agtd,
}

impl CriticMethod {
    pub const ALL: [CriticMethod; 3] = [CriticMethod::Td0, CriticMethod::Gtd, CriticMethod::Agtd];

    pub fn tag(self) -> &'static str {
        match self {
            CriticMethod::Td0 => "td0",
            CriticMethod::Gtd => "gtd",
            CriticMethod::Agtd => "agtd",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CriticMethod::Td0 => "TD(0)",
            CriticMethod::Gtd => "GTD",
            CriticMethod::Agtd => "A-GTD",
        }
    }
}

impl std::str::FromStr for CriticMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "td0" => Ok(CriticMethod::Td0),
            "gtd" => Ok(CriticMethod::Gtd),
            "agtd" => Ok(CriticMethod::Agtd),
            other => Err(Error::config(format!("unknown critic method {other:?}"))),
        }
    }
}

impl std::fmt::Display for CriticMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerForm {
    Scalar,
    Feature,
}

impl std::str::FromStr for TrackerForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(TrackerForm::Scalar),
            "feature" => Ok(TrackerForm::Feature),
            other => Err(Error::config(format!("unknown tracker form {other:?}"))),
        }
    }
}

/// Critic parameter, auxiliary trackers and update counter.
///
/// For GTD `z` tracks the inner expectation. For A-GTD `z` is the
/// extrapolated parameter and `y` the tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticState {
    pub xi: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub t: u64,
    form: TrackerForm,
}

impl CriticState {
    pub fn new(n_features: usize, method: CriticMethod, form: TrackerForm) -> Self {
        let tracker = match form {
            TrackerForm::Scalar => 1,
            TrackerForm::Feature => n_features,
        };
        let (z, y) = match method {
            CriticMethod::Td0 => (0, 0),
            CriticMethod::Gtd => (tracker, 0),
            CriticMethod::Agtd => (n_features, tracker),
        };
        Self {
            xi: DVector::zeros(n_features),
            z: DVector::zeros(z),
            y: DVector::zeros(y),
            t: 0,
            form,
        }
    }

    pub fn with_xi(mut self, xi: DVector<f64>) -> Self {
        assert_eq!(xi.len(), self.xi.len());
        // A-GTD's extrapolation starts at the current iterate
        if self.z.len() == xi.len() && self.y.len() > 0 {
            self.z = xi.clone();
        }
        self.xi = xi;
        self
    }

    pub fn form(&self) -> TrackerForm {
        self.form
    }

    /// Zeroes the trackers, as done at the start of every actor iteration.
    pub fn reset_trackers(&mut self) {
        self.y.fill(0.0);
        if self.y.is_empty() {
            self.z.fill(0.0);
        } else {
            self.z.copy_from(&self.xi);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.xi.iter().chain(self.z.iter()).chain(self.y.iter()).all(|v| v.is_finite())
    }
}

/// Features of `(s, a)` and `(s', a')` with the observed reward.
#[derive(Debug, Clone, Copy)]
pub struct CriticSample<'a> {
    pub phi: &'a DVector<f64>,
    pub phi_next: &'a DVector<f64>,
    pub reward: f64,
}

impl CriticSample<'_> {
    /// `gamma phi(s', a') - phi(s, a)`, the sampled gradient of the inner
    /// function of the Bellman error.
    pub fn inner_gradient(&self, gamma: f64) -> DVector<f64> {
        self.phi_next * gamma - self.phi
    }

    pub fn td_error(&self, xi: &DVector<f64>, gamma: f64) -> f64 {
        self.reward + gamma * xi.dot(self.phi_next) - xi.dot(self.phi)
    }
}

pub fn q_value(xi: &DVector<f64>, phi: &DVector<f64>) -> f64 {
    xi.dot(phi)
}

/// Radial projection onto the ball of radius `radius`.
pub fn project_critic(xi: DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = xi.norm();
    if norm > radius {
        xi * (radius / norm)
    } else {
        xi
    }
}

/// `xi <- xi + alpha delta phi(s, a)`, then projection.
pub fn td0_step(
    state: &CriticState,
    sample: &CriticSample<'_>,
    gamma: f64,
    alpha: f64,
    radius: f64,
) -> CriticState {
    let delta = sample.td_error(&state.xi, gamma);
    let xi = &state.xi + sample.phi * (alpha * delta);
    CriticState {
        xi: project_critic(xi, radius),
        t: state.t + 1,
        ..state.clone()
    }
}

/// GTD: `z <- (1 - beta) z + beta h`, `xi <- (1 - lambda alpha) xi - 2 alpha grad`,
/// where `h = delta` and `grad = z (gamma phi' - phi)` for the scalar form,
/// `h = delta phi` and `grad = (phi^T z) (gamma phi' - phi)` for the feature form.
pub fn gtd_step(
    state: &CriticState,
    sample: &CriticSample<'_>,
    gamma: f64,
    alpha: f64,
    beta: f64,
    regularization: f64,
    radius: f64,
) -> CriticState {
    debug_assert!(beta > 0.0 && beta <= 1.0);
    let delta = sample.td_error(&state.xi, gamma);
    let g = sample.inner_gradient(gamma);
    let (z, weight) = match state.form {
        TrackerForm::Scalar => {
            let z = &state.z * (1.0 - beta) + DVector::from_element(1, beta * delta);
            let w = z[0];
            (z, w)
        }
        TrackerForm::Feature => {
            let z = &state.z * (1.0 - beta) + sample.phi * (beta * delta);
            let w = sample.phi.dot(&z);
            (z, w)
        }
    };
    let xi = &state.xi * (1.0 - regularization * alpha) - g * (2.0 * alpha * weight);
    CriticState {
        xi: project_critic(xi, radius),
        z,
        y: state.y.clone(),
        t: state.t + 1,
        form: state.form,
    }
}

/// Accelerated GTD with extrapolation:
/// `xi+ = P(xi - 2 alpha (gamma phi' - phi) w(y))`,
/// `z+ = -(1/beta - 1) xi + xi+/beta`,
/// `y+ = (1 - beta) y + beta h(z+)`, with `w`, `h` per tracker form.
pub fn agtd_step(
    state: &CriticState,
    sample: &CriticSample<'_>,
    gamma: f64,
    alpha: f64,
    beta: f64,
    radius: f64,
) -> CriticState {
    debug_assert!(beta > 0.0 && beta <= 1.0);
    let g = sample.inner_gradient(gamma);
    let weight = match state.form {
        TrackerForm::Scalar => state.y[0],
        TrackerForm::Feature => sample.phi.dot(&state.y),
    };
    let xi_next = project_critic(&state.xi - &g * (2.0 * alpha * weight), radius);
    let z = &state.xi * (1.0 - 1.0 / beta) + &xi_next * (1.0 / beta);
    let inner = sample.reward + z.dot(&g);
    let y = match state.form {
        TrackerForm::Scalar => &state.y * (1.0 - beta) + DVector::from_element(1, beta * inner),
        TrackerForm::Feature => &state.y * (1.0 - beta) + sample.phi * (beta * inner),
    };
    CriticState {
        xi: xi_next,
        z,
        y,
        t: state.t + 1,
        form: state.form,
    }
}

/// Critic step sizes `(alpha_t, beta_t)` as a function of the update index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant { alpha: f64, beta: Option<f64> },
    /// `alpha_t = (t + 1)^-exponent`.
    TdContinuous { exponent: f64 },
    /// `alpha_t = beta / (lambda + t)`.
    TdFinite { beta: f64, lambda: f64 },
    /// `alpha_t = scale / t`, `beta_t = t^(-2/3)`.
    Gtd { scale: f64 },
    /// `alpha_t = scale / t`, `beta_t = t^(-4/5)`.
    Agtd { scale: f64 },
}

impl StepSchedule {
    /// `beta = 2 / (omega (1 - gamma))`, `lambda = 16 / (omega (1 - gamma)^2)`.
    pub fn td_finite(omega: Option<f64>, gamma: f64) -> Result<Self> {
        let omega = omega.ok_or_else(|| Error::config("finite-space TD schedule needs omega"))?;
        if !(omega > 0.0) {
            return Err(Error::config(format!("omega must be positive, got {omega}")));
        }
        crate::env::check_discount(gamma)?;
        let gap = 1.0 - gamma;
        Ok(StepSchedule::TdFinite {
            beta: 2.0 / (omega * gap),
            lambda: 16.0 / (omega * gap * gap),
        })
    }

    pub fn default_for(method: CriticMethod) -> Self {
        match method {
            CriticMethod::Td0 => StepSchedule::Constant {
                alpha: 0.05,
                beta: None,
            },
            CriticMethod::Gtd => StepSchedule::Gtd { scale: 1.0 },
            CriticMethod::Agtd => StepSchedule::Agtd { scale: 1.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { alpha, beta } => {
                alpha > 0.0 && beta.is_none_or(|b| b > 0.0 && b <= 1.0)
            }
            StepSchedule::TdContinuous { exponent } => exponent > 0.0 && exponent.is_finite(),
            StepSchedule::TdFinite { beta, lambda } => beta > 0.0 && lambda >= 0.0,
            StepSchedule::Gtd { scale } | StepSchedule::Agtd { scale } => scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid step schedule {self:?}")))
        }
    }

    pub fn step_size(&self, t: u64) -> Result<(f64, Option<f64>)> {
        if t == 0 {
            return Err(Error::config("step sizes are indexed from t = 1"));
        }
        let tf = t as f64;
        Ok(match *self {
            StepSchedule::Constant { alpha, beta } => (alpha, beta),
            StepSchedule::TdContinuous { exponent } => ((tf + 1.0).powf(-exponent), None),
            StepSchedule::TdFinite { beta, lambda } => (beta / (lambda + tf), None),
            StepSchedule::Gtd { scale } => (scale / tf, Some(tf.powf(-2.0 / 3.0))),
            StepSchedule::Agtd { scale } => (scale / tf, Some(tf.powf(-0.8))),
        })
    }
}

pub fn step_size(schedule: &StepSchedule, t: u64) -> Result<(f64, Option<f64>)> {
    schedule.step_size(t)
}

/// Everything needed to advance a [`CriticState`] by one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticConfig {
    pub method: CriticMethod,
    pub form: TrackerForm,
    pub schedule: StepSchedule,
    pub radius: f64,
    /// `lambda` in the GTD parameter decay.
    pub regularization: f64,
}

impl CriticConfig {
    pub fn new(method: CriticMethod) -> Self {
        Self {
            method,
            form: TrackerForm::Scalar,
            schedule: StepSchedule::default_for(method),
            radius: DEFAULT_RADIUS,
            regularization: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.radius > 0.0) {
            return Err(Error::config("critic radius must be positive"));
        }
        if self.method != CriticMethod::Td0 {
            // GTD-style methods need a tracker step size
            self.schedule.step_size(1)?.1.ok_or_else(|| {
                Error::config(format!("{} needs a schedule with a tracker step size", self.method))
            })?;
        }
        Ok(())
    }

    pub fn initial_state(&self, n_features: usize) -> CriticState {
        CriticState::new(n_features, self.method, self.form)
    }

    pub fn update(&self, state: &CriticState, sample: &CriticSample<'_>, gamma: f64) -> Result<CriticState> {
        let (alpha, beta) = self.schedule.step_size(state.t + 1)?;
        let beta = || beta.ok_or_else(|| Error::config("missing tracker step size"));
        Ok(match self.method {
            CriticMethod::Td0 => td0_step(state, sample, gamma, alpha, self.radius),
            CriticMethod::Gtd => gtd_step(state, sample, gamma, alpha, beta()?, self.regularization, self.radius),
            CriticMethod::Agtd => agtd_step(state, sample, gamma, alpha, beta()?, self.radius),
        })
    }
}

/// Per-pair pieces of the Bellman error `F(xi) = E_mu[f(E[g | s, a])]` with
/// `f(y) = y^2` and `g = r + xi^T (gamma phi' - phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionalTerms {
    /// Stationary state-action weights `mu`.
    pub weights: DVector<f64>,
    /// `E[g | s, a]` per pair.
    pub inner: DVector<f64>,
    /// `E[grad g | s, a] = gamma E[phi' | s, a] - phi(s, a)`, one row per pair.
    pub inner_gradient: DMatrix<f64>,
}

impl CompositionalTerms {
    pub fn value(&self) -> f64 {
        self.weights
            .iter()
            .zip(self.inner.iter())
            .map(|(w, g)| w * g * g)
            .sum()
    }

    /// `sum mu(s,a) 2 E[grad g | s,a] E[g | s,a]`.
    pub fn gradient(&self) -> DVector<f64> {
        let scaled = self.inner.component_mul(&self.weights) * 2.0;
        self.inner_gradient.tr_mul(&scaled)
    }
}

pub fn compositional_terms(
    m: &FiniteMdp,
    pi: &TabularPolicy,
    features: &TabularFeatureMap,
    xi: &DVector<f64>,
) -> Result<CompositionalTerms> {
    if xi.len() != features.matrix().ncols() {
        return Err(Error::config("critic parameter does not match the feature dimension"));
    }
    let weights = state_action_weights(m, pi)?;
    let phi = features.matrix();
    let inner_gradient = pair_chain(m, pi) * phi * m.gamma() - phi;
    let inner = m.reward_vector() + &inner_gradient * xi;
    Ok(CompositionalTerms {
        weights,
        inner,
        inner_gradient,
    })
}

/// `F(xi) = sum mu(s,a) (E[r + xi^T (gamma phi' - phi) | s, a])^2`, by enumeration.
pub fn bellman_error(
    m: &FiniteMdp,
    pi: &TabularPolicy,
    features: &TabularFeatureMap,
    xi: &DVector<f64>,
) -> Result<f64> {
    Ok(compositional_terms(m, pi, features, xi)?.value())
}

/// Compositional gradient `sum mu 2 E[grad g | s,a] E[g | s,a]` of [`bellman_error`].
pub fn bellman_error_gradient(
    m: &FiniteMdp,
    pi: &TabularPolicy,
    features: &TabularFeatureMap,
    xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(compositional_terms(m, pi, features, xi)?.gradient())
}
