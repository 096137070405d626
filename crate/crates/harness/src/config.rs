//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Defaults depend on `env`, which is therefore resolved first no matter
//! where it appears. Unknown keys are errors. See the README for the full
//! key list.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ac_core::actor_critic::{ActorConfig, CriticEffort, EtaSchedule};
use ac_core::critic::{CriticConfig, CriticMethod, StepSchedule, TrackerForm};
use ac_core::features::ActionEncoding;
use ac_core::nav::NavConfig;
use ac_core::policy::{ProxyKind, DEFAULT_ACTION_VARIANCE};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Nav,
    Finite,
}

impl FromStr for EnvKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nav" => Ok(EnvKind::Nav),
            "finite" => Ok(EnvKind::Finite),
            other => Err(HarnessError::config(format!("unknown env {other:?}"))),
        }
    }
}

impl EnvKind {
    pub fn tag(self) -> &'static str {
        match self {
            EnvKind::Nav => "nav",
            EnvKind::Finite => "finite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverKind {
    /// Batched rollouts with per-step actor updates.
    Practical,
    /// `T_C(k)` sampled critic updates and one geometric-horizon estimate per step.
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Stationary,
    BurnIn(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiniteFeatures {
    /// The random 3-dimensional map shipped with the default instance.
    Default,
    OneHot,
}

/// Critic step sizes, possibly derived from the finite-MDP oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    /// Method-dependent default, see [`crate::experiment::resolve_schedule`].
    Auto,
    Fixed(StepSchedule),
    /// TD step sizes from `omega` (finite only).
    TdFinite,
    /// `alpha_t = 1 / (t sigma)` with the tracker exponent of the method (finite only).
    NeuScaled,
}

impl FromStr for ScheduleSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HarnessError::config(format!("bad critic_schedule {s:?}"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let (head, arg) = s.split_once(':').unwrap_or((s, ""));
        Ok(match head {
            "auto" => ScheduleSpec::Auto,
            "td_finite" => ScheduleSpec::TdFinite,
            "neu" => ScheduleSpec::NeuScaled,
            "constant" => {
                let (alpha, beta) = match arg.split_once(',') {
                    Some((a, b)) => (num(a)?, Some(num(b)?)),
                    None => (num(arg)?, None),
                };
                ScheduleSpec::Fixed(StepSchedule::Constant { alpha, beta })
            }
            "td_continuous" => ScheduleSpec::Fixed(StepSchedule::TdContinuous { exponent: num(arg)? }),
            "gtd" => ScheduleSpec::Fixed(StepSchedule::Gtd { scale: num(arg)? }),
            "agtd" => ScheduleSpec::Fixed(StepSchedule::Agtd { scale: num(arg)? }),
            _ => return Err(bad()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavSettings {
    pub env: NavConfig,
    pub rbf_per_axis: usize,
    pub rbf_bandwidth: f64,
    pub encoding: ActionEncoding,
    pub proxy: ProxyKind,
    pub variance: f64,
}

impl Default for NavSettings {
    fn default() -> Self {
        Self {
            env: NavConfig::default(),
            rbf_per_axis: 10,
            rbf_bandwidth: 1.0,
            encoding: ActionEncoding::StateDirection,
            proxy: ProxyKind::Direction,
            variance: DEFAULT_ACTION_VARIANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSettings {
    /// MDP in the text format of `FiniteMdp::from_text`; the default instance otherwise.
    pub mdp_file: Option<PathBuf>,
    pub features: FiniteFeatures,
    pub sampler: SamplerKind,
}

impl Default for FiniteSettings {
    fn default() -> Self {
        Self {
            mdp_file: None,
            features: FiniteFeatures::Default,
            sampler: SamplerKind::Stationary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub method: CriticMethod,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub driver: DriverKind,
    /// Actor settings. `actor.critic.schedule` is overwritten by `schedule`.
    pub actor: ActorConfig,
    pub schedule: ScheduleSpec,
    pub nav: NavSettings,
    pub finite: FiniteSettings,
}

impl ExperimentConfig {
    pub fn defaults(env: EnvKind, method: CriticMethod) -> Self {
        let mut critic = CriticConfig::new(method);
        let mut actor = ActorConfig::new(critic, 1);
        let driver = match env {
            EnvKind::Nav => {
                actor.iterations = 2000;
                actor.eta = EtaSchedule::Constant(1e-4);
                // each actor iteration restarts the inner critic index
                actor.restart_step_counter = true;
                DriverKind::Practical
            }
            EnvKind::Finite => {
                critic.form = TrackerForm::Feature;
                actor.critic = critic;
                actor.iterations = 1000;
                actor.eta = EtaSchedule::Power { exponent: 0.5 };
                actor.effort = CriticEffort::LinearPlusOne;
                DriverKind::Generic
            }
        };
        Self {
            env,
            method,
            seeds: match env {
                EnvKind::Nav => (1..=10).collect(),
                EnvKind::Finite => (1..=30).collect(),
            },
            out_dir: PathBuf::from("out"),
            driver,
            actor,
            schedule: ScheduleSpec::Auto,
            nav: NavSettings::default(),
            finite: FiniteSettings::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_pairs(parse_pairs(&text)?)
    }

    /// Builds a config from `(key, value)` pairs. Later pairs override earlier ones.
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut order = Vec::new();
        for (k, v) in pairs {
            if map.insert(k.clone(), v).is_none() {
                order.push(k);
            }
        }
        let env = map.get("env").map(|v| v.parse()).transpose()?.unwrap_or(EnvKind::Nav);
        let method = map
            .get("method")
            .map(|v| v.parse::<CriticMethod>())
            .transpose()?
            .unwrap_or(CriticMethod::Td0);
        let mut cfg = Self::defaults(env, method);
        for key in order {
            let value = &map[&key];
            cfg.set(&key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || HarnessError::config(format!("bad value {value:?} for {key}"));
        let f = || value.parse::<f64>().map_err(|_| bad());
        let u = || value.parse::<usize>().map_err(|_| bad());
        let b = || value.parse::<bool>().map_err(|_| bad());
        let pair = || -> Result<[f64; 2]> {
            let (x, y) = value.split_once(',').ok_or_else(bad)?;
            Ok([x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?])
        };
        let actor = &mut self.actor;
        match key {
            "env" | "method" => {}
            "seeds" => self.seeds = parse_seeds(value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "driver" => {
                self.driver = match value {
                    "practical" => DriverKind::Practical,
                    "generic" => DriverKind::Generic,
                    _ => return Err(bad()),
                }
            }
            "iterations" => actor.iterations = u()?,
            "eta" => {
                let (head, arg) = value.split_once(':').ok_or_else(bad)?;
                let x = arg.parse::<f64>().map_err(|_| bad())?;
                actor.eta = match head {
                    "constant" => EtaSchedule::Constant(x),
                    "power" => EtaSchedule::Power { exponent: x },
                    _ => return Err(bad()),
                };
            }
            "effort" => actor.effort = value.parse().map_err(HarnessError::Core)?,
            "freeze_threshold" => actor.freeze_threshold = f()?,
            "reset_critic" => actor.reset_critic = b()?,
            "restart_step_counter" => actor.restart_step_counter = b()?,
            "eval_every" => actor.eval.every = u()?,
            "eval_trajectories" => actor.eval.trajectories = u()?,
            "eval_length" => actor.eval.length = u()?,
            "critic_rollouts" => actor.practical.critic_rollouts = u()?,
            "critic_length" => actor.practical.critic_length = u()?,
            "actor_length" => actor.practical.actor_length = u()?,
            "snapshot_every" => actor.snapshot_every = Some(u()?),
            "critic_schedule" => self.schedule = value.parse()?,
            "tracker" => actor.critic.form = value.parse().map_err(HarnessError::Core)?,
            "critic_radius" => actor.critic.radius = f()?,
            "gtd_reg" => actor.critic.regularization = f()?,
            "gamma" => self.nav.env.gamma = f()?,
            "nav.start" => self.nav.env.start = pair()?,
            "nav.target" => self.nav.env.target = pair()?,
            "nav.inner_radius" => self.nav.env.inner_radius = f()?,
            "nav.outer_radius" => self.nav.env.outer_radius = f()?,
            "nav.step_length" => self.nav.env.step_length = f()?,
            "nav.target_tolerance" => self.nav.env.target_tolerance = f()?,
            "rbf_per_axis" => self.nav.rbf_per_axis = u()?,
            "rbf_bandwidth" => self.nav.rbf_bandwidth = f()?,
            "action_encoding" => {
                self.nav.encoding = match value {
                    "state_only" => ActionEncoding::StateOnly,
                    "state_direction" => ActionEncoding::StateDirection,
                    _ => return Err(bad()),
                }
            }
            "proxy" => {
                self.nav.proxy = match value {
                    "direction" => ProxyKind::Direction,
                    "score_norm" => ProxyKind::ScoreNorm,
                    _ => return Err(bad()),
                }
            }
            "policy_variance" => self.nav.variance = f()?,
            "mdp_file" => self.finite.mdp_file = Some(PathBuf::from(value)),
            "features" => {
                self.finite.features = match value {
                    "default" => FiniteFeatures::Default,
                    "one_hot" => FiniteFeatures::OneHot,
                    _ => return Err(bad()),
                }
            }
            "sampler" => {
                self.finite.sampler = match value.split_once(':') {
                    None if value == "stationary" => SamplerKind::Stationary,
                    Some(("burn_in", n)) => SamplerKind::BurnIn(n.parse().map_err(|_| bad())?),
                    _ => return Err(bad()),
                }
            }
            other => return Err(HarnessError::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seed list is empty"));
        }
        if self.env == EnvKind::Nav {
            if matches!(self.schedule, ScheduleSpec::TdFinite | ScheduleSpec::NeuScaled) {
                return Err(HarnessError::config("oracle-derived schedules need env = finite"));
            }
            self.nav.env.validate()?;
            if self.nav.rbf_per_axis == 0 || !(self.nav.rbf_bandwidth > 0.0) || !(self.nav.variance > 0.0) {
                return Err(HarnessError::config("RBF grid, bandwidth and policy variance must be positive"));
            }
        }
        // schedule-dependent checks happen once the schedule is resolved
        let mut actor = self.actor.clone();
        actor.critic.schedule = StepSchedule::default_for(self.method);
        actor.validate()?;
        Ok(())
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.env.tag(), self.method.tag())
    }
}

/// Parses `key = value` lines.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::config(format!("line {}: expected key = value", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// `a..b` (inclusive) or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || HarnessError::config(format!("bad seed list {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}
