use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::envs::{build_chain_with_trigger, shooter};
use crate::random::{random_mdp, random_q};
use crate::rng::seeded;
use crate::soft_bellman::{regularized_value_iteration, soft_value, standard_value_iteration, QFunction};

fn transition(state: usize, action: usize, reward: f64, next_state: usize, done: bool) -> Transition {
    Transition {
        state,
        requested: action,
        action,
        reward,
        next_state,
        done,
        step: 0,
    }
}

fn random_batch(rng: &mut impl Rng, ns: usize, na: usize, len: usize) -> Vec<Transition> {
    (0..len)
        .map(|_| {
            transition(
                rng.random_range(0..ns),
                rng.random_range(0..na),
                rng.random_range(-1.0..1.0),
                rng.random_range(0..ns),
                rng.random_bool(0.2),
            )
        })
        .collect()
}

#[test]
fn constant_q_returns_constraint_prior() {
    let prior = ConstraintPrior::new(2, 0, 1.0 / 16.0).unwrap();
    let pi = behavior_policy(&[3.0, 3.0], &prior, 1.0);
    assert!((pi[0] - 0.0625).abs() < 1e-15);
    assert!((pi[1] - 0.9375).abs() < 1e-15);

    let prior = ConstraintPrior::new(4, 2, 0.01).unwrap();
    let pi = behavior_policy(&[-1.0; 4], &prior, 1.0);
    for (p, d) in pi.iter().zip(prior.probs()) {
        assert!((p - d).abs() < 1e-15);
    }
}

#[test]
fn delta_near_uniform_gives_uniform() {
    let prior = ConstraintPrior::new(4, 1, 0.25 - 1e-12).unwrap();
    for p in behavior_policy(&[0.5; 4], &prior, 1.0) {
        assert!((p - 0.25).abs() < 1e-11);
    }
}

#[test]
fn constraint_prior_rejects_bad_delta() {
    assert!(ConstraintPrior::new(4, 0, 0.25).is_err());
    assert!(ConstraintPrior::new(4, 0, 0.0).is_err());
    assert!(ConstraintPrior::new(4, 4, 0.1).is_err());
    assert!(ConstraintPrior::new(1, 0, 0.1).is_err());
}

#[test]
fn default_delta_is_an_eighth_of_uniform() {
    assert_eq!(AgentConfig::default().delta_for(2), 1.0 / 16.0);
    assert_eq!(AgentConfig::default().delta_for(4), 1.0 / 32.0);
}

#[test]
fn sparsity_distribution_examples() {
    let p = sparsity_distribution(&[0.0, 0.0, 0.0]).unwrap();
    for v in p.probs() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let p = sparsity_distribution(&[2f64.ln(), 0.0]).unwrap();
    assert!((p.probs()[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((p.probs()[1] - 2.0 / 3.0).abs() < 1e-15);

    let shifted = sparsity_distribution(&[2f64.ln() + 40.0, 40.0]).unwrap();
    for (a, b) in p.probs().iter().zip(shifted.probs()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn sparsity_distribution_stays_positive_under_extreme_means() {
    let p = sparsity_distribution(&[5000.0, 0.0]).unwrap();
    assert!(p.probs()[0] > 0.0);
}

#[test]
fn sparsity_requires_every_arm_pulled() {
    assert!(sparsity_distribution(&[0.0, f64::NAN]).is_err());
    let bandit = DUcbState::with_defaults(3);
    assert!(sparsity_from_bandit(&bandit).is_err());
}

#[test]
fn td_target_examples() {
    let batch = [transition(0, 0, 0.0, 1, false)];
    let q = QModel::Tabular(QFunction::from_values(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap());
    let y = td_target(&batch, &q, &SparsityDistribution::uniform(2), 1.0, 0.9).unwrap();
    assert!((y[0] - 0.558_103_056_262_449_8).abs() < 1e-12, "{}", y[0]);

    let mut rng = seeded(1);
    let q = QModel::Tabular(random_q(&mut rng, 4, 3, 2.0));
    let batch = random_batch(&mut rng, 4, 3, 16);
    let prior = crate::random::random_prior(&mut rng, 3);
    let y = td_target(&batch, &q, &prior, 0.1, 0.0).unwrap();
    for (t, y) in batch.iter().zip(&y) {
        assert_eq!(*y, t.reward);
    }

    let zero = QModel::Tabular(QFunction::zeros(4, 3));
    let y = td_target(&batch, &zero, &prior, 0.1, 0.9).unwrap();
    for (t, y) in batch.iter().zip(&y) {
        assert!((y - t.reward).abs() < 1e-15);
    }
}

#[test]
fn td_target_matches_soft_value() {
    let mut rng = seeded(2);
    let q = random_q(&mut rng, 5, 3, 1.0);
    let prior = crate::random::random_prior(&mut rng, 3);
    let batch = random_batch(&mut rng, 5, 3, 40);
    let y = td_target(&batch, &QModel::Tabular(q.clone()), &prior, 0.05, 0.95).unwrap();
    for (t, y) in batch.iter().zip(&y) {
        let cont = if t.done { 0.0 } else { soft_value(q.row(t.next_state), &prior, 0.05).unwrap() };
        assert!((y - (t.reward + 0.95 * cont)).abs() < 1e-12);
    }
}

#[test]
fn td_target_rejects_empty_batch() {
    let q = QModel::Tabular(QFunction::zeros(1, 2));
    assert!(td_target(&[], &q, &SparsityDistribution::uniform(2), 0.1, 0.9).is_err());
}

#[test]
fn q_update_examples() {
    let mut q = QParams::new(QRepresentation::Tabular, 2, 2);
    let batch = [transition(1, 1, 0.0, 0, true)];
    q_update(&mut q, &batch, &[1.0], 1.0).unwrap();
    assert_eq!(q.online.value(1, 1), 1.0);
    let before = q.clone();
    q_update(&mut q, &batch, &[1.0], 0.5).unwrap();
    assert_eq!(q, before);
}

#[test]
fn tabular_update_averages_duplicates() {
    let mut q = QParams::new(QRepresentation::Tabular, 1, 2);
    let batch = [
        transition(0, 0, 0.0, 0, true),
        transition(0, 0, 0.0, 0, true),
        transition(0, 1, 0.0, 0, true),
    ];
    q_update(&mut q, &batch, &[1.0, 3.0, -4.0], 0.5).unwrap();
    assert_eq!(q.online.value(0, 0), 1.0);
    assert_eq!(q.online.value(0, 1), -2.0);
}

#[test]
fn q_update_checks_lengths() {
    let mut q = QParams::new(QRepresentation::Tabular, 1, 2);
    assert!(q_update(&mut q, &[transition(0, 0, 0.0, 0, true)], &[], 0.1).is_err());
}

#[test]
fn linear_gradient_matches_finite_differences() {
    let mut rng = seeded(3);
    for _ in 0..10 {
        let (ns, na, dim) = (6, 3, 4);
        let rows: Vec<f64> = (0..ns * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let features = std::sync::Arc::new(FeatureMap::from_rows(dim, rows).unwrap());
        let mut lin = LinearQ::zeros(features, na);
        lin.theta_mut().iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        let model = QModel::Linear(lin);
        let batch = random_batch(&mut rng, ns, na, 12);
        let targets: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let grad = model.risk_gradient(&batch, &targets);
        let h = 1e-6;
        for k in 0..grad.len() {
            let mut plus = model.clone();
            plus.params_mut()[k] += h;
            let mut minus = model.clone();
            minus.params_mut()[k] -= h;
            let fd = (plus.empirical_risk(&batch, &targets) - minus.empirical_risk(&batch, &targets)) / (2.0 * h);
            let scale = grad[k].abs().max(1e-3);
            assert!((fd - grad[k]).abs() / scale < 1e-6, "k={k}: {fd} vs {}", grad[k]);
        }
    }
}

#[test]
fn linear_update_descends_risk() {
    let mut rng = seeded(4);
    let mut q = QParams::new(QRepresentation::LinearFeatures, 5, 2);
    let batch = random_batch(&mut rng, 5, 2, 30);
    let targets: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
    let before = q.online.empirical_risk(&batch, &targets);
    q_update(&mut q, &batch, &targets, 0.1).unwrap();
    assert!(q.online.empirical_risk(&batch, &targets) < before);
}

#[test]
fn polyak_examples() {
    let mut q = QParams::from_table(QFunction::zeros(1, 1));
    q.online.params_mut()[0] = 2.0;
    polyak_update(&mut q, 0.5).unwrap();
    assert_eq!(q.target.params()[0], 1.0);
    polyak_update(&mut q, 1.0).unwrap();
    assert_eq!(q.target, q.online);
    assert!(polyak_update(&mut q, 0.0).is_err());
    assert!(polyak_update(&mut q, 1.5).is_err());
}

#[test]
fn polyak_converges_geometrically() {
    let mut q = QParams::from_table(QFunction::zeros(1, 1));
    q.online.params_mut()[0] = 3.0;
    q.target.params_mut()[0] = -1.0;
    let gap0 = 4.0;
    let rate: f64 = 0.05;
    for k in 1..=200 {
        polyak_update(&mut q, rate).unwrap();
        let gap = (q.target.params()[0] - 3.0).abs();
        assert!(gap <= (1.0 - rate).powi(k) * gap0 + 1e-12);
    }
}

proptest! {
    #[test]
    fn constraint_lowers_probability(
        q in prop::collection::vec(-5.0f64..5.0, 2..6),
        pick in 0usize..6,
        frac in 0.01f64..0.99,
    ) {
        let na = q.len();
        let a = pick % na;
        let delta = frac / na as f64;
        let prior = ConstraintPrior::new(na, a, delta).unwrap();
        let constrained = behavior_policy(&q, &prior, 1.0);
        let uniform = weighted_softmax(&q, &vec![1.0; na], 1.0);
        prop_assert!(constrained[a] < uniform[a]);
        prop_assert!((constrained.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn quick_config(total: u64) -> AgentConfig {
    AgentConfig {
        batch_size: 32,
        learn_rate: 0.1,
        polyak: 0.05,
        buffer_capacity: 20_000,
        sparsity_eval_episodes: 5,
        evaluation: EvaluationConfig {
            interval: (total / 10).max(1),
            episodes: 10,
            record_walltime: false,
        },
        ..Default::default()
    }
}

#[test]
fn short_run_keeps_initial_prior() {
    let mdp = build_chain_with_trigger(4, 1, 10).unwrap();
    let out = train(&mdp, &quick_config(25), 25, 0).unwrap();
    assert!(out.record.episodes.len() <= 2);
    for row in &out.record.episodes {
        assert_eq!(row.ptilde, vec![0.5, 0.5]);
    }
    assert_eq!(out.prior, SparsityDistribution::uniform(2));
}

#[test]
fn prior_refreshes_only_at_round_boundaries() {
    let mdp = crate::envs::build_budgeted_shooter(3, 2, 8).unwrap();
    let config = quick_config(4000);
    let out = train(&mdp, &config, 4000, 1).unwrap();
    let n = config.sparsity_eval_episodes;
    let rows = &out.record.episodes;
    assert!(rows.len() > 4 * n * 2);
    for (i, pair) in rows.windows(2).enumerate() {
        let boundary = (i + 1) % n == 0;
        if !boundary {
            assert_eq!(pair[0].ptilde, pair[1].ptilde, "episode {}", i + 1);
        }
    }
    // uniform until every arm has been tried once
    for row in &rows[..4 * n] {
        assert_eq!(row.ptilde, vec![0.25; 4]);
    }
    assert_ne!(rows.last().unwrap().ptilde, vec![0.25; 4]);
    for row in rows {
        assert!((row.ptilde.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn training_is_deterministic() {
    let mdp = crate::envs::build_budgeted_shooter(3, 2, 8).unwrap();
    let config = quick_config(3000);
    let a = train(&mdp, &config, 3000, 7).unwrap();
    let b = train(&mdp, &config, 3000, 7).unwrap();
    assert_eq!(a.record, b.record);
    assert_eq!(a.params, b.params);
    let c = train(&mdp, &config, 3000, 8).unwrap();
    assert_ne!(a.record, c.record);
}

#[test]
fn training_respects_budgets() {
    let mdp = crate::envs::build_budgeted_shooter(4, 2, 20).unwrap();
    let out = train(&mdp, &quick_config(5000), 5000, 2).unwrap();
    for row in &out.record.episodes {
        assert!(row.executed[shooter::FIRE] <= 2);
    }
}

#[test]
fn learns_chain_with_trigger() {
    let mdp = build_chain_with_trigger(4, 1, 10).unwrap();
    let v_star = standard_value_iteration(&mdp, 1e-12).unwrap().max_values()[0];
    for seed in 0..5 {
        let total = 20_000;
        let config = AgentConfig {
            greedy_eval: true,
            ..quick_config(total)
        };
        let out = train(&mdp, &config, total, seed).unwrap();
        let policy = out.policy(&config).unwrap();
        let v = mdp.exact_policy_evaluation(&policy).unwrap()[0];
        assert!((v - v_star).abs() <= 0.05 * v_star, "seed {seed}: {v} vs {v_star}");
    }
}

#[test]
fn fixed_prior_tabular_learner_converges() {
    let mdp = random_mdp(&mut seeded(12), 3, 2, 0.9).with_horizon(20);
    let prior = SparsityDistribution::uniform(2);
    let lambda = 0.01;
    let (q_star, _) = regularized_value_iteration(&mdp, &prior, lambda, 1e-12, 100_000).unwrap();
    let config = AgentConfig {
        fixed_prior: Some(prior.probs().to_vec()),
        lambda,
        greedy_eval: true,
        ..Default::default()
    };
    let out = train(&mdp, &config, 200_000, 3).unwrap();
    let err = out.params.online.to_table().sup_distance(&q_star);
    assert!(err < 0.05, "{err}");
}

#[test]
fn config_validation() {
    assert!(AgentConfig::default().validate(4).is_ok());
    assert!(AgentConfig::default().validate(1).is_err());
    let bad = AgentConfig {
        polyak: 1.5,
        ..Default::default()
    };
    assert!(bad.validate(4).is_err());
    let bad = AgentConfig {
        batch_size: 10,
        buffer_capacity: 5,
        ..Default::default()
    };
    assert!(bad.validate(4).is_err());
    let bad = AgentConfig {
        delta: Some(0.3),
        ..Default::default()
    };
    assert!(bad.validate(4).is_err());
    let bad = AgentConfig {
        fixed_prior: Some(vec![0.5, 0.5]),
        ..Default::default()
    };
    assert!(bad.validate(4).is_err());
}

#[test]
fn config_reads_from_toml() {
    let config: AgentConfig = toml::from_str(
        "lambda = 0.2\nbehavior_temperature = \"lambda\"\nq_representation = \"linear_features\"\n[evaluation]\ninterval = 100\n",
    )
    .unwrap();
    assert_eq!(config.lambda, 0.2);
    assert_eq!(config.behavior_temperature, BehaviorTemperature::Lambda);
    assert_eq!(config.q_representation, QRepresentation::LinearFeatures);
    assert_eq!(config.evaluation.interval, 100);
    assert_eq!(config.batch_size, 256);
    assert!(toml::from_str::<AgentConfig>("lamda = 0.2").is_err());
}

#[test]
fn ablation_uses_max_targets() {
    let mdp = build_chain_with_trigger(3, 1, 6).unwrap();
    let config = AgentConfig {
        sparsity_regularization: false,
        ..quick_config(2000)
    };
    let out = train(&mdp, &config, 2000, 4).unwrap();
    let policy = out.policy(&config).unwrap();
    for s in 0..policy.num_states() {
        assert!(policy.row(s).iter().any(|&p| p == 1.0));
    }
}
