//! Multi-seed runs, per-seed trace CSVs and their aggregate.

use std::fs::File;
use std::path::{Path, PathBuf};

use ac_core::actor_critic::{run_generic, run_practical, ActorConfig, RunTrace};
use ac_core::critic::{CriticMethod, StepSchedule};
use ac_core::env::{seeded_rng, BurnInSampler, RunRng};
use ac_core::features::{grid_centers, RbfFeatureMap, StateActionFeatures, TabularFeatureMap};
use ac_core::nav::NavEnv;
use ac_core::oracle::{min_eig_omega, neu_modulus, FiniteMdp, SoftmaxPolicy, StationarySampler};
use ac_core::policy::GaussianPolicy;
use rayon::prelude::*;

use crate::config::{DriverKind, EnvKind, ExperimentConfig, FiniteFeatures, SamplerKind, ScheduleSpec};
use crate::error::{HarnessError, Result};

pub const TRACE_HEADER: [&str; 7] = [
    "k",
    "grad_proxy",
    "eval_reward",
    "theta_norm",
    "xi_norm",
    "critic_steps",
    "seed",
];

pub const AGGREGATE_HEADER: [&str; 7] = [
    "method",
    "k",
    "n",
    "grad_proxy_mean",
    "grad_proxy_stderr",
    "eval_reward_mean",
    "eval_reward_stderr",
];

/// The RBF grid covers `[-GRID_HALF_WIDTH, GRID_HALF_WIDTH]^2`.
const GRID_HALF_WIDTH: f64 = 5.0;

pub fn load_finite(cfg: &ExperimentConfig) -> Result<(FiniteMdp, TabularFeatureMap)> {
    let (mdp, default_features) = match &cfg.finite.mdp_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let mdp = FiniteMdp::from_text(&text)?;
            let one_hot = TabularFeatureMap::one_hot(mdp.n_states(), mdp.n_actions());
            (mdp, one_hot)
        }
        None => FiniteMdp::default_instance(),
    };
    let features = match cfg.finite.features {
        FiniteFeatures::Default => default_features,
        FiniteFeatures::OneHot => TabularFeatureMap::one_hot(mdp.n_states(), mdp.n_actions()),
    };
    Ok((mdp, features))
}

/// Turns the configured schedule into concrete step sizes, consulting the
/// oracle at the initial (uniform) policy when needed.
pub fn resolve_schedule(cfg: &ExperimentConfig) -> Result<StepSchedule> {
    let spec = match (cfg.schedule, cfg.env) {
        (ScheduleSpec::Auto, EnvKind::Nav) => return Ok(StepSchedule::default_for(cfg.method)),
        (ScheduleSpec::Auto, EnvKind::Finite) => match cfg.method {
            CriticMethod::Td0 => ScheduleSpec::TdFinite,
            _ => ScheduleSpec::NeuScaled,
        },
        (ScheduleSpec::Fixed(s), _) => return Ok(s),
        (other, _) => other,
    };
    if cfg.env != EnvKind::Finite {
        return Err(HarnessError::config("oracle-derived schedules need env = finite"));
    }
    let (mdp, features) = load_finite(cfg)?;
    let pi = SoftmaxPolicy::zeros(mdp.n_states(), mdp.n_actions()).table();
    match (spec, cfg.method) {
        (ScheduleSpec::TdFinite, _) => {
            let omega = min_eig_omega(&mdp, &pi, &features)?;
            Ok(StepSchedule::td_finite(Some(omega), mdp.gamma())?)
        }
        (ScheduleSpec::NeuScaled, CriticMethod::Gtd) => Ok(StepSchedule::Gtd {
            scale: 1.0 / neu_modulus(&mdp, &pi, &features)?,
        }),
        (ScheduleSpec::NeuScaled, CriticMethod::Agtd) => Ok(StepSchedule::Agtd {
            scale: 1.0 / neu_modulus(&mdp, &pi, &features)?,
        }),
        _ => Err(HarnessError::config("schedule neu needs method gtd or agtd")),
    }
}

pub fn actor_config(cfg: &ExperimentConfig) -> Result<ActorConfig> {
    let mut actor = cfg.actor.clone();
    actor.critic.method = cfg.method;
    actor.critic.schedule = resolve_schedule(cfg)?;
    actor.validate()?;
    Ok(actor)
}

pub fn nav_policy(cfg: &ExperimentConfig) -> Result<(GaussianPolicy, StateActionFeatures)> {
    let nav = &cfg.nav;
    let centers = grid_centers(-GRID_HALF_WIDTH, GRID_HALF_WIDTH, nav.rbf_per_axis)?;
    let rbf = RbfFeatureMap::new(centers, nav.rbf_bandwidth, true)?;
    let critic_features = StateActionFeatures::new(rbf.len(), 2, nav.encoding);
    let policy = GaussianPolicy::new(rbf, 2, nav.variance, nav.proxy)?;
    Ok((policy, critic_features))
}

/// One seed of the configured experiment.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunTrace> {
    let actor = actor_config(cfg)?;
    let mut rng: RunRng = seeded_rng(seed);
    let trace = match cfg.env {
        EnvKind::Nav => {
            let env = NavEnv::new(cfg.nav.env.clone())?;
            let (mut policy, features) = nav_policy(cfg)?;
            match cfg.driver {
                DriverKind::Practical => run_practical(&env, &mut policy, &features, &actor, &mut rng)?,
                DriverKind::Generic => run_generic(
                    &env,
                    &mut policy,
                    &features,
                    &mut BurnInSampler::default(),
                    &actor,
                    &mut rng,
                )?,
            }
        }
        EnvKind::Finite => {
            let (mdp, features) = load_finite(cfg)?;
            let mut policy = SoftmaxPolicy::zeros(mdp.n_states(), mdp.n_actions());
            match (cfg.driver, cfg.finite.sampler) {
                (DriverKind::Practical, _) => run_practical(&mdp, &mut policy, &features, &actor, &mut rng)?,
                (DriverKind::Generic, SamplerKind::Stationary) => {
                    let mut sampler = StationarySampler::new(&mdp, &policy)?;
                    run_generic(&mdp, &mut policy, &features, &mut sampler, &actor, &mut rng)?
                }
                (DriverKind::Generic, SamplerKind::BurnIn(burn_in)) => {
                    let mut sampler = BurnInSampler { burn_in };
                    run_generic(&mdp, &mut policy, &features, &mut sampler, &actor, &mut rng)?
                }
            }
        }
    };
    Ok(trace)
}

/// Runs every seed on the rayon pool. Output order follows `cfg.seeds`.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<(u64, RunTrace)>> {
    cfg.validate()?;
    cfg.seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed).map(|t| (seed, t)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub seed_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
    pub aggregate: Vec<AggregateRow>,
    /// Seeds whose run stopped on a non-finite parameter, with the diagnostic.
    pub aborted: Vec<(u64, String)>,
}

pub fn seed_file(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.out_dir.join(format!("{}_seed{seed}.csv", cfg.file_stem()))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let runs = run_seeds(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| HarnessError::io(&cfg.out_dir, e))?;
    let mut seed_files = Vec::with_capacity(runs.len());
    let mut aborted = Vec::new();
    for (seed, trace) in &runs {
        let path = seed_file(cfg, *seed);
        write_trace_csv(&path, *seed, trace)?;
        seed_files.push(path);
        if let Some(err) = &trace.aborted {
            aborted.push((*seed, err.to_string()));
        }
    }
    let aggregate_file = cfg.out_dir.join(format!("{}_aggregate.csv", cfg.file_stem()));
    let aggregate = aggregate_files(cfg.method.tag(), &seed_files)?;
    write_aggregate(&aggregate_file, &aggregate)?;
    Ok(ExperimentSummary {
        seed_files,
        aggregate_file,
        aggregate,
        aborted,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace_csv(path: &Path, seed: u64, trace: &RunTrace) -> Result<()> {
    let io = |e: csv::Error| HarnessError::data(path, e.to_string());
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(TRACE_HEADER).map_err(io)?;
    for r in &trace.records {
        w.write_record([
            r.k.to_string(),
            opt(r.grad_proxy),
            opt(r.eval_reward),
            r.theta_norm.to_string(),
            r.xi_norm.to_string(),
            r.critic_steps.to_string(),
            seed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Evaluation rows of one trace file: `(seed, k, grad_proxy, eval_reward)`.
fn read_evaluations(path: &Path) -> Result<Vec<(u64, usize, f64, f64)>> {
    let bad = |m: String| HarnessError::data(path, m);
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec[2].is_empty() {
            continue;
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[i])));
        let k = rec[0].parse().map_err(|_| bad(format!("bad k {:?}", &rec[0])))?;
        let seed = rec[6].parse().map_err(|_| bad(format!("bad seed {:?}", &rec[6])))?;
        rows.push((seed, k, num(1)?, num(2)?));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub k: usize,
    pub n: usize,
    pub grad_proxy_mean: f64,
    pub grad_proxy_stderr: f64,
    pub eval_reward_mean: f64,
    pub eval_reward_stderr: f64,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error per evaluation point over the given trace files.
///
/// Rows are folded in seed order, so the result does not depend on the
/// order of `paths`.
pub fn aggregate_files(method: &str, paths: &[PathBuf]) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    for path in paths {
        rows.extend(read_evaluations(path)?);
    }
    rows.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut out = Vec::new();
    for chunk in rows.chunk_by(|a, b| a.1 == b.1) {
        let proxies: Vec<f64> = chunk.iter().map(|r| r.2).collect();
        let rewards: Vec<f64> = chunk.iter().map(|r| r.3).collect();
        let (gm, gs) = mean_stderr(&proxies);
        let (rm, rs) = mean_stderr(&rewards);
        out.push(AggregateRow {
            method: method.to_string(),
            k: chunk[0].1,
            n: chunk.len(),
            grad_proxy_mean: gm,
            grad_proxy_stderr: gs,
            eval_reward_mean: rm,
            eval_reward_stderr: rs,
        });
    }
    Ok(out)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let io = |e: csv::Error| HarnessError::data(path, e.to_string());
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(AGGREGATE_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.k.to_string(),
            r.n.to_string(),
            r.grad_proxy_mean.to_string(),
            r.grad_proxy_stderr.to_string(),
            r.eval_reward_mean.to_string(),
            r.eval_reward_stderr.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let bad = |m: String| HarnessError::data(path, m);
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name}")))
    };
    let idx: Vec<usize> = AGGREGATE_HEADER.iter().map(|h| col(h)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| {
            rec[idx[i]]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number {:?}", &rec[idx[i]])))
        };
        rows.push(AggregateRow {
            method: rec[idx[0]].to_string(),
            k: num(1)? as usize,
            n: num(2)? as usize,
            grad_proxy_mean: num(3)?,
            grad_proxy_stderr: num(4)?,
            eval_reward_mean: num(5)?,
            eval_reward_stderr: num(6)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_pairs;

    #[test]
    fn mean_stderr_examples() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schedules_resolve_from_the_oracle() {
        let cfg = |text: &str| ExperimentConfig::from_pairs(parse_pairs(text).unwrap()).unwrap();
        match resolve_schedule(&cfg("env = finite\nmethod = td0")).unwrap() {
            StepSchedule::TdFinite { beta, lambda } => assert!(beta > 0.0 && lambda > beta),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            resolve_schedule(&cfg("env = finite\nmethod = agtd")).unwrap(),
            StepSchedule::Agtd { .. }
        ));
        assert_eq!(
            resolve_schedule(&cfg("method = td0")).unwrap(),
            StepSchedule::Constant { alpha: 0.05, beta: None }
        );
        assert!(resolve_schedule(&cfg("env = finite\nmethod = td0\ncritic_schedule = neu")).is_err());
    }
}
