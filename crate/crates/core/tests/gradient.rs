use ac_core::actor_critic::sample_gradient_estimate;
use ac_core::env::seeded_rng;
use ac_core::oracle::{exact_gradient, exact_q, occupancy, start_value, FiniteMdp, SoftmaxPolicy};
use nalgebra::DVector;
use rand::Rng;

#[test]
fn exact_gradient_matches_finite_differences_of_value() {
    let mut rng = seeded_rng(31);
    for seed in 0..5 {
        let m = FiniteMdp::random(seed, 5, 3, 0.8).unwrap();
        let theta = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let policy = SoftmaxPolicy::new(5, 3, theta.clone()).unwrap();
        let grad = exact_gradient(&m, &policy).unwrap();
        let h = 1e-6;
        let numeric = DVector::from_fn(15, |i, _| {
            let mut up = theta.clone();
            up[i] += h;
            let mut down = theta.clone();
            down[i] -= h;
            let j = |th: DVector<f64>| start_value(&m, &SoftmaxPolicy::new(5, 3, th).unwrap().table()).unwrap();
            (j(up) - j(down)) / (2.0 * h)
        });
        assert!((&numeric - &grad).norm() <= 1e-6 * grad.norm().max(1.0));
    }
}

/// Mean of the geometric-horizon estimate with an arbitrary critic equals the
/// true gradient plus the critic-error term, both computed by enumeration.
#[test]
fn estimator_bias_decomposes_into_critic_error() {
    let (m, features) = FiniteMdp::default_instance();
    let theta = DVector::from_vec(vec![0.3, -0.2, 0.0, 0.5, -0.4, 0.1, 0.2, 0.0]);
    let policy = SoftmaxPolicy::new(4, 2, theta).unwrap();
    let xi = DVector::from_vec(vec![1.5, -2.0, 0.7]);

    let pi = policy.table();
    let q = exact_q(&m, &pi).unwrap();
    let rho = occupancy(&m, &pi, m.start()).unwrap();
    let scale = 1.0 / (1.0 - m.gamma());
    let mut bias = DVector::zeros(8);
    for s in 0..4 {
        for a in 0..2 {
            let err = xi.dot(&features.pair(s, a)) - q[(s, a)];
            bias.axpy(scale * rho[s] * pi.prob(s, a) * err, &policy.score_at(s, a), 1.0);
        }
    }
    let expected = exact_gradient(&m, &policy).unwrap() + &bias;

    let n = 100_000;
    let mut rng = seeded_rng(77);
    let mut sum = DVector::zeros(8);
    let mut sq = DVector::zeros(8);
    for _ in 0..n {
        let g = sample_gradient_estimate(&m, &policy, &features, &xi, &mut rng).unwrap();
        sq += g.component_mul(&g);
        sum += g;
    }
    let mean = &sum / n as f64;
    for i in 0..8 {
        let var = sq[i] / n as f64 - mean[i] * mean[i];
        let se = (var / n as f64).sqrt();
        assert!(
            (mean[i] - expected[i]).abs() <= 4.5 * se + 1e-12,
            "coordinate {i}: {} vs {} (se {se})",
            mean[i],
            expected[i]
        );
    }
}
