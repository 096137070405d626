use ac_core::actor_critic::{run_generic, ActorConfig, CriticEffort, EtaSchedule};
use ac_core::critic::{CriticConfig, CriticMethod, CriticSample, StepSchedule, TrackerForm};
use ac_core::env::{seeded_rng, TupleSampler};
use ac_core::features::CriticFeatures;
use ac_core::oracle::{min_eig_omega, neu_modulus, td_fixed_point, FiniteMdp, SoftmaxPolicy, StationarySampler};

fn run_critic(config: &CriticConfig, steps: usize, seed: u64) -> nalgebra::DVector<f64> {
    let (m, features) = FiniteMdp::default_instance();
    let policy = SoftmaxPolicy::zeros(4, 2);
    let sampler = StationarySampler::new(&m, &policy).unwrap();
    let mut rng = seeded_rng(seed);
    let mut state = config.initial_state(features.dim());
    for _ in 0..steps {
        let t = sampler.sample(&m, &policy, &mut rng).unwrap();
        let phi = features.features(&t.current.obs, &t.current.action);
        let next = features.features(&t.next.obs, &t.next.action);
        let sample = CriticSample { phi: &phi, phi_next: &next, reward: t.reward };
        state = config.update(&state, &sample, m.gamma()).unwrap();
    }
    state.xi
}

#[test]
fn td0_reaches_the_fixed_point() {
    let (m, features) = FiniteMdp::default_instance();
    let pi = SoftmaxPolicy::zeros(4, 2).table();
    let target = td_fixed_point(&m, &pi, &features).unwrap();
    let omega = min_eig_omega(&m, &pi, &features).unwrap();
    let mut config = CriticConfig::new(CriticMethod::Td0);
    config.schedule = StepSchedule::td_finite(Some(omega), m.gamma()).unwrap();
    config.radius = f64::INFINITY;
    let xi = run_critic(&config, 200_000, 4);
    assert!((&xi - &target).norm() < 0.05, "distance {}", (&xi - &target).norm());
}

fn feature_config(method: CriticMethod, scale: f64) -> CriticConfig {
    let mut config = CriticConfig::new(method);
    config.form = TrackerForm::Feature;
    config.schedule = match method {
        CriticMethod::Agtd => StepSchedule::Agtd { scale },
        _ => StepSchedule::Gtd { scale },
    };
    config
}

#[test]
fn feature_tracker_gtd_approaches_the_fixed_point() {
    let (m, features) = FiniteMdp::default_instance();
    let pi = SoftmaxPolicy::zeros(4, 2).table();
    let target = td_fixed_point(&m, &pi, &features).unwrap();
    let sigma = neu_modulus(&m, &pi, &features).unwrap();
    let xi = run_critic(&feature_config(CriticMethod::Gtd, 1.0 / sigma), 200_000, 9);
    let dist = (&xi - &target).norm();
    assert!(dist < 0.1 * target.norm(), "distance {dist} from |xi*| = {}", target.norm());
}

#[test]
fn feature_tracker_agtd_makes_progress() {
    let (m, features) = FiniteMdp::default_instance();
    let pi = SoftmaxPolicy::zeros(4, 2).table();
    let target = td_fixed_point(&m, &pi, &features).unwrap();
    let sigma = neu_modulus(&m, &pi, &features).unwrap();
    let config = feature_config(CriticMethod::Agtd, 1.0 / sigma);
    let early = (run_critic(&config, 10_000, 9) - &target).norm();
    let late = (run_critic(&config, 200_000, 9) - &target).norm();
    assert!(late < early, "error grew from {early} to {late}");
}

#[test]
fn triangular_critic_budget() {
    let (m, features) = FiniteMdp::default_instance();
    let mut policy = SoftmaxPolicy::zeros(4, 2);
    let mut sampler = StationarySampler::new(&m, &policy).unwrap();
    let mut cfg = ActorConfig::new(CriticConfig::new(CriticMethod::Td0), 40);
    cfg.effort = CriticEffort::Linear;
    cfg.eta = EtaSchedule::Power { exponent: 0.5 };
    cfg.eval.every = 0;
    let trace = run_generic(&m, &mut policy, &features, &mut sampler, &cfg, &mut seeded_rng(1)).unwrap();
    for r in &trace.records {
        assert_eq!(r.critic_steps, (r.k * (r.k + 1) / 2) as u64);
    }
    assert_eq!(trace.critic_steps(), 40 * 41 / 2);
}

#[test]
fn identical_seeds_give_identical_traces() {
    let (m, features) = FiniteMdp::default_instance();
    let run = || {
        let mut policy = SoftmaxPolicy::zeros(4, 2);
        let mut sampler = StationarySampler::new(&m, &policy).unwrap();
        let mut cfg = ActorConfig::new(CriticConfig::new(CriticMethod::Td0), 30);
        cfg.eval.every = 5;
        let trace = run_generic(&m, &mut policy, &features, &mut sampler, &cfg, &mut seeded_rng(8)).unwrap();
        let rows: Vec<_> = trace
            .records
            .iter()
            .map(|r| (r.k, r.grad_proxy, r.eval_reward, r.theta_norm, r.xi_norm, r.critic_steps))
            .collect();
        (rows, policy.theta().clone())
    };
    assert_eq!(run(), run());
}
