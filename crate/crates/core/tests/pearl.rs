mod common;

use common::{fd_check, fd_check_network, random_trajectory};
use hfr_core::envs::{FourCornersConfig, Split, TaskFamily, Transition};
use hfr_core::nn::{Activation, Head, Mlp, Tensor};
use hfr_core::pearl::{encode_context, Agent, AgentConfig, CriticNoise, GaussianPosterior, TaskReplayBuffers};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn four_corners() -> TaskFamily {
    TaskFamily::from_name("four-corners").unwrap()
}

fn small_config(family: &TaskFamily, hidden: Vec<usize>) -> AgentConfig {
    AgentConfig {
        hidden,
        batch_size: 16,
        ..AgentConfig::for_family(family)
    }
}

fn random_transitions(family: &TaskFamily, n: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    let tasks = family.tasks(Split::Train);
    let mut out = Vec::new();
    while out.len() < n {
        let task = &tasks[rng.random_range(0..tasks.len())];
        out.extend(random_trajectory(family, task, rng).transitions);
    }
    out.truncate(n);
    out
}

/// Zero every layer and set the final bias, so the network outputs a constant.
fn set_constant_output(net: &mut Mlp, bias: &[f64]) {
    net.params_mut().iter_mut().for_each(|p| *p = 0.0);
    let last = net.num_layers() - 1;
    net.layer_mut(last).1.copy_from_slice(bias);
}

#[test]
fn every_agent_network_matches_finite_differences() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let agent = Agent::new(AgentConfig::for_family(&family), &mut rng).unwrap();
    for (name, net) in [
        ("actor", &agent.actor),
        ("critic1", &agent.critic1),
        ("critic2", &agent.critic2),
        ("encoder", &agent.encoder),
    ] {
        let report = fd_check_network(net, 4, 100, &mut rng);
        assert_eq!(report.checked, 100, "{name}: {report:?}");
        assert!(report.max_rel_err < 1e-4, "{name}: {report:?}");
    }
}

#[test]
fn actor_loss_matches_finite_differences_on_toy_actor() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let agent = Agent::new(small_config(&family, vec![2]), &mut rng).unwrap();
    let batch = random_transitions(&family, 8, &mut rng);
    let states: Vec<f64> = batch.iter().flat_map(|t| t.state.clone()).collect();
    let z: Vec<f64> = (0..agent.latent_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise: Vec<f64> = (0..batch.len() * 2).map(|_| rng.random_range(-1.5..1.5)).collect();
    let out = agent.actor_loss_with_noise(&states, &z, noise.clone()).unwrap();

    let mut probe = agent.clone();
    let report = fd_check(agent.actor.params(), &out.grads, 100, 1e-6, &mut rng, |p| {
        probe.actor.set_params(p).unwrap();
        probe.actor_loss_with_noise(&states, &z, noise.clone()).unwrap().loss
    });
    assert!(report.checked > 0);
    assert!(report.max_rel_err < 1e-3, "{report:?}");
}

#[test]
fn actor_gradient_vanishes_for_constant_critic_without_entropy() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cfg = small_config(&family, vec![16, 16]);
    cfg.alpha = 0.0;
    let mut agent = Agent::new(cfg, &mut rng).unwrap();
    set_constant_output(&mut agent.critic1, &[4.0]);
    set_constant_output(&mut agent.critic2, &[4.0]);
    let batch = random_transitions(&family, 10, &mut rng);
    let z = vec![0.3; agent.latent_dim()];
    let out = agent.actor_loss(&batch, &z, &mut rng).unwrap();
    assert_eq!(out.loss, -4.0);
    assert!(out.grads.iter().all(|g| *g == 0.0));
}

#[test]
fn actor_mean_moves_toward_higher_q_after_one_step() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut agent = Agent::new(small_config(&family, vec![]), &mut rng).unwrap();
    // Linear critics Q = 5 * a_x.
    for critic in [&mut agent.critic1, &mut agent.critic2] {
        critic.params_mut().iter_mut().for_each(|p| *p = 0.0);
        critic.layer_mut(0).0[family.obs_dim()] = 5.0;
    }
    let state = vec![0.2, -0.3];
    let z = vec![0.1; agent.latent_dim()];
    let rows = Tensor::matrix(1, 7, [state.clone(), z.clone()].concat()).unwrap();
    let before = agent.actor.forward(&rows).unwrap().data()[0];
    let batch = vec![Transition {
        state: state.clone(),
        action: vec![0.0, 0.0],
        reward: -1.0,
        next_state: state.clone(),
        done: false,
    }];
    let loss = agent.actor_loss(&batch, &z, &mut rng).unwrap();
    agent.apply_actor_grads(&loss.grads).unwrap();
    let after = agent.actor.forward(&rows).unwrap().data()[0];
    assert!(after > before, "{before} -> {after}");
}

fn generic_setup(seed: u64) -> (Agent, Vec<Transition>, Vec<Transition>, CriticNoise) {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = Agent::new(small_config(&family, vec![32, 32]), &mut rng).unwrap();
    let batch = random_transitions(&family, 12, &mut rng);
    let context = random_transitions(&family, 10, &mut rng);
    let noise = CriticNoise {
        latent: (0..agent.latent_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        next_action: (0..batch.len() * 2).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    (agent, batch, context, noise)
}

#[test]
fn critic_and_encoder_gradients_match_finite_differences_with_frozen_targets() {
    let (agent, batch, context, noise) = generic_setup(5);
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let full = agent.critic_and_encoder_loss_with_noise(&batch, &context, &noise).unwrap();
    let targets = full.targets.clone();

    let mut probe = agent.clone();
    let enc = fd_check(agent.encoder.params(), &full.encoder_grads, 100, 1e-6, &mut rng, |p| {
        probe.encoder.set_params(p).unwrap();
        probe.critic_loss_with_fixed_targets(&batch, &context, &noise, &targets).unwrap().loss
    });
    assert!(enc.max_rel_err < 1e-4, "encoder {enc:?}");

    let mut probe = agent.clone();
    let c1 = fd_check(agent.critic1.params(), &full.critic1_grads, 100, 1e-6, &mut rng, |p| {
        probe.critic1.set_params(p).unwrap();
        probe.critic_loss_with_fixed_targets(&batch, &context, &noise, &targets).unwrap().loss
    });
    assert!(c1.max_rel_err < 1e-4, "critic1 {c1:?}");

    assert!(full.encoder_grads.iter().any(|g| g.abs() > 1e-8));
}

#[test]
fn target_path_contributes_no_gradient() {
    let (agent, batch, context, noise) = generic_setup(6);
    let full = agent.critic_and_encoder_loss_with_noise(&batch, &context, &noise).unwrap();
    let frozen = agent.critic_loss_with_fixed_targets(&batch, &context, &noise, &full.targets).unwrap();
    assert_eq!(full.encoder_grads, frozen.encoder_grads);
    assert_eq!(full.critic1_grads, frozen.critic1_grads);
    assert_eq!(full.critic2_grads, frozen.critic2_grads);
    assert_eq!(full.loss, frozen.loss);

    // The full loss does depend on the encoder through the target latent, so
    // a finite difference of it disagrees with the returned gradient somewhere.
    let mut probe = agent.clone();
    let h = 1e-6;
    let mut max_gap: f64 = 0.0;
    for i in 0..agent.encoder.num_params() {
        let mut p = agent.encoder.params().to_vec();
        p[i] += h;
        probe.encoder.set_params(&p).unwrap();
        let up = probe.critic_and_encoder_loss_with_noise(&batch, &context, &noise).unwrap().loss;
        p[i] -= 2.0 * h;
        probe.encoder.set_params(&p).unwrap();
        let down = probe.critic_and_encoder_loss_with_noise(&batch, &context, &noise).unwrap().loss;
        max_gap = max_gap.max(((up - down) / (2.0 * h) - full.encoder_grads[i]).abs());
    }
    assert!(max_gap > 1e-6, "{max_gap}");
}

#[test]
fn td_term_vanishes_when_q_equals_target() {
    let (agent, batch, context, noise) = generic_setup(7);
    let full = agent.critic_and_encoder_loss_with_noise(&batch, &context, &noise).unwrap();
    let posterior = agent.posterior(&context).unwrap();
    let z = posterior.sample_with(&noise.latent);
    let states: Vec<f64> = batch.iter().flat_map(|t| t.state.clone()).collect();
    let actions: Vec<f64> = batch.iter().flat_map(|t| t.action.iter().map(|a| a / agent.config.action_bound)).collect();
    let q = agent.min_q(&states, &actions, &z).unwrap();
    let mut c1_only = agent.clone();
    c1_only.critic2 = c1_only.critic1.clone();
    let q1 = c1_only.min_q(&states, &actions, &z).unwrap();
    let out = c1_only.critic_loss_with_fixed_targets(&batch, &context, &noise, &q1).unwrap();
    assert!(out.td1 == 0.0 && out.td2 == 0.0);
    assert_eq!(out.loss, agent.config.kl_weight * out.kl);
    assert!(q.iter().zip(&q1).all(|(a, b)| a <= b));
    assert!(full.td1 > 0.0);
}

#[test]
fn kl_of_prior_is_zero() {
    assert_eq!(GaussianPosterior::prior(5).kl_to_prior(), 0.0);
}

#[test]
fn train_step_moves_targets_only_by_soft_update() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agent = Agent::new(small_config(&family, vec![16, 16]), &mut rng).unwrap();
    let mut buffers = TaskReplayBuffers::new(4, 1000);
    for task in family.tasks(Split::Train) {
        let traj = random_trajectory(&family, &task, &mut rng);
        buffers.extend(task.id, traj.transitions).unwrap();
    }
    let old_target = agent.target1.params().to_vec();
    let old_actor = agent.actor.params().to_vec();
    agent.train_step(&buffers, &[0, 1, 2, 3], &mut rng).unwrap();
    let c = agent.config.target_coef;
    for ((t, old), online) in agent.target1.params().iter().zip(&old_target).zip(agent.critic1.params()) {
        assert_eq!(*t, (1.0 - c) * old + c * online);
    }
    assert_ne!(agent.actor.params(), &old_actor[..]);
}

#[test]
fn soft_update_with_unit_coefficient_copies_critics() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut agent = Agent::new(small_config(&four_corners(), vec![8]), &mut rng).unwrap();
    agent.critic1.params_mut().iter_mut().for_each(|p| *p += 0.5);
    agent.soft_update_targets(1.0).unwrap();
    assert_eq!(agent.target1.params(), agent.critic1.params());
    assert_eq!(agent.target2.params(), agent.critic2.params());
    assert!(agent.soft_update_targets(0.0).is_err());
    assert!(agent.soft_update_targets(1.5).is_err());
}

#[test]
fn two_soft_updates_equal_the_analytic_blend() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut agent = Agent::new(small_config(&four_corners(), vec![8]), &mut rng).unwrap();
    agent.critic1.params_mut().iter_mut().for_each(|p| *p += 1.0);
    let t0 = agent.target1.params().to_vec();
    agent.soft_update_targets(0.005).unwrap();
    agent.soft_update_targets(0.005).unwrap();
    let keep = 0.995_f64 * 0.995;
    for ((t, old), online) in agent.target1.params().iter().zip(&t0).zip(agent.critic1.params()) {
        assert!((t - (keep * old + (1.0 - keep) * online)).abs() < 1e-12);
    }
}

#[test]
fn targets_converge_geometrically_to_frozen_critics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut agent = Agent::new(small_config(&four_corners(), vec![8]), &mut rng).unwrap();
    agent.critic1.params_mut().iter_mut().for_each(|p| *p += 1.0);
    let gap = |a: &Agent| {
        a.target1
            .params()
            .iter()
            .zip(a.critic1.params())
            .map(|(t, c)| (t - c).abs())
            .fold(0.0, f64::max)
    };
    let g0 = gap(&agent);
    for _ in 0..2000 {
        agent.soft_update_targets(0.005).unwrap();
    }
    let expected = g0 * 0.995_f64.powi(2000);
    assert!((gap(&agent) - expected).abs() < 1e-9);
    assert!(gap(&agent) < 1e-4 * g0.max(1.0));
}

#[test]
fn encoding_is_permutation_invariant_and_variance_shrinks() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let agent = Agent::new(small_config(&family, vec![32, 32]), &mut rng).unwrap();
    let bound = family.action_bound();
    let empty = encode_context(&agent.encoder, &[], bound).unwrap();
    assert_eq!(empty, GaussianPosterior::prior(agent.latent_dim()));
    for _ in 0..20 {
        let mut ctx = random_transitions(&family, 30, &mut rng);
        let post = encode_context(&agent.encoder, &ctx, bound).unwrap();
        for i in (1..ctx.len()).rev() {
            ctx.swap(i, rng.random_range(0..=i));
        }
        let shuffled = encode_context(&agent.encoder, &ctx, bound).unwrap();
        assert_eq!(post.mean, shuffled.mean);
        assert_eq!(post.var, shuffled.var);

        let mut prev = encode_context(&agent.encoder, &ctx[..1], bound).unwrap();
        for k in 2..=ctx.len() {
            let next = encode_context(&agent.encoder, &ctx[..k], bound).unwrap();
            assert!(next.var.iter().zip(&prev.var).all(|(n, p)| n <= p));
            prev = next;
        }
    }
}

fn transition_tagged(i: usize) -> Transition {
    Transition {
        state: vec![i as f64],
        action: vec![0.0],
        reward: 0.0,
        next_state: vec![i as f64 + 1.0],
        done: false,
    }
}

proptest! {
    #[test]
    fn buffer_eviction_is_fifo(capacity in 1usize..50, extra in 0usize..50) {
        let mut buffers = TaskReplayBuffers::new(2, capacity);
        for i in 0..capacity + extra {
            buffers.push(1, transition_tagged(i)).unwrap();
        }
        let kept: Vec<f64> = buffers.iter(1).unwrap().map(|t| t.state[0]).collect();
        let expected: Vec<f64> = (extra..capacity + extra).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
        prop_assert_eq!(buffers.len(0), 0);
    }
}

#[test]
fn zero_action_policy_stays_at_origin() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut agent = Agent::new(AgentConfig::for_family(&family), &mut rng).unwrap();
    set_constant_output(&mut agent.actor, &[0.0; 4]);
    let task = family.task(Split::Train, 1).unwrap();
    let traj = agent.collect_trajectory(&family, &task, &[], true, &mut rng).unwrap();
    assert_eq!(traj.len(), 20);
    assert_eq!(traj.origin_task, 1);
    for t in &traj.transitions {
        assert_eq!(t.next_state, vec![0.0, 0.0]);
        assert_eq!(t.reward, -1.0);
        assert!(!t.done);
    }
}

#[test]
fn stochastic_trajectories_never_exceed_horizon() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let agent = Agent::new(small_config(&family, vec![16]), &mut rng).unwrap();
    for task in family.tasks(Split::Train) {
        for _ in 0..10 {
            let traj = agent.collect_trajectory(&family, &task, &[], false, &mut rng).unwrap();
            assert!(!traj.is_empty() && traj.len() <= family.horizon());
            traj.validate().unwrap();
        }
    }
}

#[test]
fn first_step_toward_a_near_goal_terminates() {
    // Goal at distance 0.15 from the start.
    let offset = 0.15 / 2f64.sqrt();
    let family = TaskFamily::FourCorners(FourCornersConfig {
        goal_offset: offset,
        ..FourCornersConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut agent = Agent::new(small_config(&family, vec![8]), &mut rng).unwrap();
    set_constant_output(&mut agent.actor, &[10.0, 10.0, 0.0, 0.0]);
    let task = family.task(Split::Train, 1).unwrap();
    let traj = agent.collect_trajectory(&family, &task, &[], true, &mut rng).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj.transitions[0].reward, 0.0);
    assert!(traj.transitions[0].done);
}

#[test]
fn meta_test_budget_and_context_order() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut agent = Agent::new(small_config(&family, vec![8]), &mut rng).unwrap();
    set_constant_output(&mut agent.actor, &[0.0; 4]);
    let task = family.task(Split::Test, 0).unwrap();
    let k = family.exploration_trajectories();
    assert_eq!(k, 19);
    let out = agent.meta_test(&family, &task, k, true, &mut rng).unwrap();
    assert_eq!(out.exploration_budget, 380);
    assert_eq!(out.exploration.len(), k);
    assert_eq!(out.exploration.iter().map(|t| t.len()).sum::<usize>(), 380);
    assert!(!out.success);
    assert!((out.final_return + 8.784233454094307).abs() < 1e-12);
    assert!(agent.meta_test(&family, &task, 0, true, &mut rng).is_err());
}

#[test]
fn meta_test_reuses_the_collected_context() {
    // Replaying the same rng lineage by hand reproduces the outcome, which
    // pins the order: prior draw, then posteriors over the growing context.
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let agent = Agent::new(small_config(&family, vec![16]), &mut rng).unwrap();
    let task = family.task(Split::Test, 2).unwrap();
    let out = agent.meta_test(&family, &task, 3, false, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();

    let mut replay = ChaCha8Rng::seed_from_u64(99);
    let mut context = Vec::new();
    for expected in &out.exploration {
        let traj = agent.collect_trajectory(&family, &task, &context, false, &mut replay).unwrap();
        assert_eq!(&traj, expected);
        context.extend(traj.transitions);
    }
    let last = agent.collect_trajectory(&family, &task, &context, false, &mut replay).unwrap();
    assert_eq!(last, out.final_trajectory);
}

#[test]
fn adapt_with_origin_task_keeps_rewards_and_is_deterministic() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let agent = Agent::new(small_config(&family, vec![16]), &mut rng).unwrap();
    let tasks = family.tasks(Split::Train);
    let traj = random_trajectory(&family, &tasks[3], &mut rng);
    let a = agent.adapt(&family, &traj, &tasks[3], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = agent.adapt(&family, &traj, &tasks[3], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a.relabeled, traj);
    assert_eq!(a.z, b.z);
    let action = a.act(&agent, &[0.0, 0.0], true, &mut rng).unwrap();
    assert_eq!(action.len(), 2);
}

#[test]
fn checkpoint_round_trip_restores_every_network() {
    let family = four_corners();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let agent = Agent::new(small_config(&family, vec![8, 8]), &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    agent.save_checkpoint(dir.path()).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.lines().any(|l| l == "actor actor.bin 7,8,8,4"));

    let mut fresh = Agent::new(small_config(&family, vec![8, 8]), &mut rng).unwrap();
    fresh.load_checkpoint(dir.path()).unwrap();
    assert_eq!(fresh.actor, agent.actor);
    assert_eq!(fresh.encoder, agent.encoder);
    assert_eq!(fresh.target2, agent.target2);

    let mut wrong = Agent::new(small_config(&family, vec![4]), &mut rng).unwrap();
    assert!(wrong.load_checkpoint(dir.path()).is_err());
}

#[test]
fn single_layer_networks_are_supported() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let net = Mlp::new(&[3, 2], Activation::Relu, Head::Identity, &mut rng).unwrap();
    let report = fd_check_network(&net, 3, 8, &mut rng);
    assert!(report.max_rel_err < 1e-6);
}
