use std::fs;

use reinet::agents::{ActionMode, AgentConfig};
use reinet::engine::{init_system, rollout, Network};
use reinet::envs::{make_env, EnvParams, Environment};
use reinet::graph::Topology;
use reinet::runner::train::{load_checkpoint, seed_dir, Manifest};
use reinet::runner::{read_metrics, resume_training, run_training, RunConfig};

fn small(variant: &str, budget: u64) -> RunConfig {
    let mut cfg = RunConfig::new(variant, "spread");
    cfg.training.budget = budget;
    cfg
}

#[test]
fn resuming_a_checkpoint_matches_an_uninterrupted_run() {
    let mut cfg = small("3ppo", 8_000);
    cfg.output.checkpoint_every = Some(3_000);
    let full = tempfile::tempdir().unwrap();
    let straight = run_training(&cfg, Some(full.path())).unwrap();

    let mid = seed_dir(full.path(), 0).join("step-3000");
    assert!(mid.join("manifest.json").exists());
    let resumed_dir = tempfile::tempdir().unwrap();
    let resumed = resume_training(&mid, Some(resumed_dir.path())).unwrap();
    assert_eq!(resumed.rows, straight.rows);
    assert_eq!(resumed.snapshots[0].trainer, straight.snapshots[0].trainer);
    assert_eq!(
        fs::read(full.path().join("metrics.csv")).unwrap(),
        fs::read(resumed_dir.path().join("metrics.csv")).unwrap()
    );
}

#[test]
fn checkpoint_layout() {
    let mut cfg = small("bridged-3ppo", 2_000);
    cfg.training.seeds = vec![4];
    let out = tempfile::tempdir().unwrap();
    run_training(&cfg, Some(out.path())).unwrap();
    let fin = out.path().join("seed-4/final");
    let manifest: Manifest = serde_json::from_slice(&fs::read(fin.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.format_version, 1);
    assert_eq!(manifest.seed, 4);
    assert_eq!(manifest.step, 2_000);
    assert_eq!(manifest.config_hash.len(), 64);
    for v in 0..7 {
        assert!(fin.join(format!("agents/agent-{v}.json")).exists(), "agent {v}");
    }
    let snap = load_checkpoint(&fin).unwrap();
    assert_eq!(snap.trainer.state.clock, 2_000);
    assert_eq!(read_metrics(&out.path().join("metrics.csv")).unwrap().len(), 80);
    assert!(out.path().join("config.json").exists());
}

#[test]
fn learners_train_only_on_their_own_inputs() {
    // Motors of the tree see their env slice plus their controller's
    // directive; controllers see only what their subordinates emit.
    let cfg = small("3ppo", 1);
    let (_, net) = cfg.build_network(0).unwrap();
    let mut state = init_system(&net, cfg.make_env().unwrap(), 0).unwrap();
    let env_obs = state.env.observe();
    let tr = rollout(&net, &mut state, 2, &(0..7).collect(), ActionMode::Sample).unwrap();
    for m in 0..4 {
        let obs = &tr.agents[m][0].obs;
        assert_eq!(obs.len(), 18 + 5);
        assert_eq!(&obs[..18], &env_obs[m][..]);
        assert_eq!(obs[18..].iter().sum::<f64>(), 1.0);
    }
    for (v, subs) in [(4, [0, 1]), (5, [2, 3])] {
        let obs = &tr.agents[v][0].obs;
        let want: Vec<f64> = subs.iter().flat_map(|&s| env_obs[s].clone()).collect();
        assert_eq!(&obs[..36], &want[..]);
    }
    let top = &tr.agents[6][0].obs;
    let all: Vec<f64> = env_obs.concat();
    assert_eq!(top, &all);
}

#[test]
fn identical_configs_give_identical_metrics_and_different_seeds_differ() {
    let mut cfg = small("ippo", 3_000);
    cfg.training.seeds = vec![0, 1];
    let a = run_training(&cfg, None).unwrap();
    let b = run_training(&cfg, None).unwrap();
    assert_eq!(a.rows, b.rows);
    let r0: Vec<f64> = a.rows.iter().filter(|r| r.seed == 0).map(|r| r.mean_episode_reward).collect();
    let r1: Vec<f64> = a.rows.iter().filter(|r| r.seed == 1).map(|r| r.mean_episode_reward).collect();
    assert_ne!(r0, r1);
}

#[test]
fn comm_variant_warms_up_its_encoders() {
    let mut cfg = small("bridged-3ppo-comm", 500);
    cfg.comm = Some(reinet::runner::config::CommConfig {
        kind: reinet::agents::CommKind::Encoder,
        embed_dim: 12,
        warmup_steps: 400,
        autoencoder: Default::default(),
    });
    let out = run_training(&cfg, None).unwrap();
    let snap = &out.snapshots[0];
    assert!(!snap.warmup.is_empty());
    for (_, report) in &snap.warmup {
        assert_eq!(report.epoch_losses.len(), 50);
        assert!(report.epoch_losses.last().unwrap() < &report.initial_loss);
    }
}

#[test]
fn balance_trains_end_to_end() {
    let mut cfg = RunConfig::new("3ppo", "balance");
    cfg.training.budget = 1_000;
    let out = run_training(&cfg, None).unwrap();
    assert!(!out.rows.is_empty());
    assert!(out.rows.iter().all(|r| r.mean_episode_reward.is_finite()));
}

#[test]
fn random_dag_networks_run() {
    // A custom graph with a depth gap runs both with and without layering.
    let env = make_env("spread", &EnvParams::default()).unwrap();
    let g = Topology::new(6, [(4, 0), (4, 1), (5, 4), (5, 2), (5, 3)]).unwrap();
    let configs = vec![AgentConfig::default(); 6];
    let direct = Network::from_topology(&g, &configs, &env.spec(), 0).unwrap();
    let layered = Network::from_layered(&g.to_layered().unwrap(), &configs, &env.spec(), 0).unwrap();
    assert_eq!(layered.agent_count(), 8);
    for net in [direct, layered] {
        let mut state = init_system(&net, env.clone(), 0).unwrap();
        let tr = rollout(&net, &mut state, 30, &(0..net.agent_count()).collect(), ActionMode::Sample).unwrap();
        assert_eq!(tr.steps.len(), 30);
    }
}
