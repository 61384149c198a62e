//! Per-agent training loop over the engine.
//!
//! Every learnable agent owns its optimizer and trains on its own
//! transitions as soon as its buffer fills. Updates happen between the
//! downstream sweep and the environment step, when each agent's pending
//! transition carries the value estimate used to bootstrap the buffer.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autoencoder::{train_autoencoder, AutoencoderConfig, AutoencoderReport};
use super::gae::compute_gae;
use super::ppo::{ppo_update, Batch, PpoConfig, PpoStats};
use crate::agents::{ActionMode, CommComponent};
use crate::engine::{init_system, Network, SystemState, Transition};
use crate::envs::EnvInstance;
use crate::error::{Error, Result};
use crate::net::{Adam, LrSchedule};
use crate::rng::{derive_seed, stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub vertex: usize,
    pub config: PpoConfig,
    pub opt: Adam,
    pub updates: u64,
    pub total_updates: u64,
    pub rng: ChaCha8Rng,
    pub scaler: RewardScaler,
}

/// Divides rewards by a running standard deviation of the discounted return,
/// so that value targets stay near unit scale whatever the reward magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    pub ret: f64,
    pub count: f64,
    pub mean: f64,
    pub var: f64,
}

impl Default for RewardScaler {
    fn default() -> Self {
        Self {
            ret: 0.0,
            count: 1e-4,
            mean: 0.0,
            var: 1.0,
        }
    }
}

impl RewardScaler {
    /// Folds one buffer of transitions into the statistics, then rescales
    /// their rewards in place.
    pub fn apply(&mut self, transitions: &mut [Transition], gamma: f64) {
        if transitions.is_empty() {
            return;
        }
        let mut rets = Vec::with_capacity(transitions.len());
        for t in transitions.iter() {
            self.ret = self.ret * gamma + t.reward;
            rets.push(self.ret);
            if t.done {
                self.ret = 0.0;
            }
        }
        let n = rets.len() as f64;
        let m = rets.iter().sum::<f64>() / n;
        let v = rets.iter().map(|r| (r - m).powi(2)).sum::<f64>() / n;
        let total = self.count + n;
        let delta = m - self.mean;
        self.mean += delta * n / total;
        self.var = (self.var * self.count + v * n + delta * delta * self.count * n / total) / total;
        self.count = total;
        let scale = (self.var + 1e-8).sqrt();
        for t in transitions.iter_mut() {
            t.reward /= scale;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub global_step: u64,
    pub episode: u64,
    pub reward: f64,
    /// Mean statistics of the most recent round of updates.
    pub stats: Option<PpoStats>,
}

/// Complete training state; serializing it is enough to resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub net: Network,
    pub state: SystemState,
    pub learners: Vec<LearnerState>,
    /// Environment steps to run.
    pub budget: u64,
    pub last_stats: Option<PpoStats>,
}

impl Trainer {
    /// `configs[v]` is the PPO configuration of vertex `v`; entries of
    /// non-learning vertices are ignored.
    pub fn new(net: Network, env: EnvInstance, configs: &[PpoConfig], seed: u64, budget: u64) -> Result<Self> {
        if configs.len() != net.agent_count() {
            return Err(Error::shape("per-agent ppo configs", net.agent_count(), configs.len()));
        }
        let mut learners = Vec::new();
        for v in net.learners() {
            let config = configs[v].clone();
            config.validate()?;
            let ac = net.specs[v].actor_critic().expect("learner has an actor-critic");
            let per_update = net.specs[v].act_every as u64 * config.buffer_size as u64;
            learners.push(LearnerState {
                vertex: v,
                opt: Adam::new(
                    ac.actor.param_count() + ac.critic.param_count(),
                    LrSchedule {
                        initial: config.learning_rate,
                        anneal: config.anneal_lr,
                    },
                ),
                total_updates: (budget / per_update).max(1),
                config,
                updates: 0,
                scaler: RewardScaler::default(),
                rng: stream(seed, Purpose::Train, v as u64),
            });
        }
        let state = init_system(&net, env, seed)?;
        Ok(Self {
            net,
            state,
            learners,
            budget,
            last_stats: None,
        })
    }

    pub fn finished(&self) -> bool {
        self.state.clock >= self.budget
    }

    /// Advances until the clock reaches `until` (capped by the budget),
    /// reporting every finished episode.
    pub fn run(&mut self, until: u64, mut on_episode: impl FnMut(&EpisodeLog)) -> Result<()> {
        let stop = until.min(self.budget);
        while self.state.clock < stop {
            self.state.downstream_pass(&self.net, ActionMode::Sample)?;
            self.update_ready()?;
            let record = self.state.env_step(&self.net)?;
            self.state.upstream_pass(&self.net)?;
            if let Some(reward) = record.episode_return {
                on_episode(&EpisodeLog {
                    global_step: self.state.clock,
                    episode: record.episode,
                    reward,
                    stats: self.last_stats,
                });
            }
        }
        Ok(())
    }

    fn update_ready(&mut self) -> Result<()> {
        let mut round = Vec::new();
        for l in &mut self.learners {
            let v = l.vertex;
            let agent = &mut self.state.agents[v];
            if agent.closed.len() < l.config.buffer_size {
                continue;
            }
            let bootstrap = agent
                .pending
                .as_ref()
                .map(|p| p.value)
                .ok_or_else(|| Error::Protocol(format!("agent {v} has a full buffer but no pending step")))?;
            let mut transitions: Vec<Transition> = agent.closed.drain(..l.config.buffer_size).collect();
            if l.config.scale_rewards {
                l.scaler.apply(&mut transitions, l.config.gamma);
            }
            let batch = build_batch(&transitions, bootstrap, &l.config)?;
            let lr = l.opt.schedule.lr_at(l.updates as f64 / l.total_updates as f64);
            let spec = &mut self.net.specs[v];
            let heads = spec.spaces.action_heads.clone();
            let ac = spec.actor_critic_mut().expect("learner has an actor-critic");
            let stats = ppo_update(ac, &heads, &mut l.opt, &batch, &l.config, lr, &mut l.rng)?;
            l.updates += 1;
            round.push(stats);
        }
        if let Some(s) = PpoStats::mean(&round) {
            self.last_stats = Some(s);
        }
        Ok(())
    }
}

/// Flattens transitions and attaches advantages and returns.
pub fn build_batch(transitions: &[Transition], bootstrap: f64, cfg: &PpoConfig) -> Result<Batch> {
    let first = transitions
        .first()
        .ok_or_else(|| Error::NoData("no transitions".into()))?;
    let rewards: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
    let values: Vec<f64> = transitions.iter().map(|t| t.value).collect();
    let dones: Vec<bool> = transitions.iter().map(|t| t.done).collect();
    let (advantages, returns) = compute_gae(&rewards, &values, &dones, bootstrap, cfg.gamma, cfg.gae_lambda)?;
    Ok(Batch {
        input_dim: first.obs.len(),
        obs: transitions.iter().flat_map(|t| t.obs.iter().copied()).collect(),
        actions: transitions.iter().map(|t| t.action.clone()).collect(),
        logprobs: transitions.iter().map(|t| t.logprob).collect(),
        values,
        advantages,
        returns,
    })
}

/// Trains a network for `budget` environment steps and returns the episode
/// log.
pub fn train_variant(
    net: Network,
    env: EnvInstance,
    configs: &[PpoConfig],
    seed: u64,
    budget: u64,
) -> Result<(Trainer, Vec<EpisodeLog>)> {
    let mut trainer = Trainer::new(net, env, configs, seed, budget)?;
    let mut log = Vec::new();
    trainer.run(budget, |e| log.push(*e))?;
    Ok((trainer, log))
}

/// Fits the encoder of every encoder-comm agent, one layer at a time from
/// the bottom, on inputs gathered from uniform-random rollouts. Lower layers
/// are already trained when a layer's data is collected.
pub fn warmup_encoders(
    net: &mut Network,
    env: &EnvInstance,
    seed: u64,
    steps: usize,
    cfg: &AutoencoderConfig,
) -> Result<Vec<(usize, AutoencoderReport)>> {
    let mut reports = Vec::new();
    for l in 0..net.layers.len() {
        let targets: Vec<usize> = net.layers[l]
            .iter()
            .copied()
            .filter(|&v| matches!(net.specs[v].comm, CommComponent::Encoder(_)))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let mut state = init_system(net, env.clone(), derive_seed(seed, Purpose::Warmup, l as u64))?;
        let mut data: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(steps + 1); targets.len()];
        let collect = |state: &SystemState, data: &mut Vec<Vec<Vec<f64>>>| {
            for (k, &v) in targets.iter().enumerate() {
                data[k].push(state.agents[v].inbox_msgs.concat());
            }
        };
        collect(&state, &mut data);
        for _ in 0..steps {
            state.step(net, ActionMode::Uniform)?;
            collect(&state, &mut data);
        }
        for (k, &v) in targets.iter().enumerate() {
            let spec = &mut net.specs[v];
            let (obs_dim, embed) = (spec.spaces.obs_dim(), spec.spaces.message_dim);
            let (ae, report) = train_autoencoder(
                &data[k],
                obs_dim,
                embed,
                cfg,
                derive_seed(seed, Purpose::Warmup, v as u64),
            )?;
            spec.comm = CommComponent::Encoder(ae.encoder);
            reports.push((v, report));
        }
    }
    Ok(reports)
}
