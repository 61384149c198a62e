//! Two-phase execution of a network of agents.
//!
//! One bottom-layer step runs an upstream sweep (messages and proxy rewards
//! move from motors toward sources), a downstream sweep (directives move
//! from sources to motors) and one environment step. The global clock counts
//! environment steps; an agent with `act_every = k` acts on episode steps
//! divisible by `k` and holds its directive otherwise.
//!
//! An agent's policy observation is the mean of the subordinate messages seen
//! since its previous act; its training reward is `R` applied to the per-slot
//! sums of the subordinate rewards received over the same span. Transitions
//! close on the agent's next due sweep, so the value of the pending
//! transition is the bootstrap for everything closed before it.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    choose, log_prob, log_softmax_heads, ActionMode, AgentConfig, AgentRole,
    AgentSpec, Aggregator, CommComponent, CommKind, PolicyComponent, PolicyKind, ProxyComponent,
    Spaces,
};
use crate::envs::{EnvInstance, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::graph::{LayeredTopology, Topology};
use crate::learn::autoencoder::new_encoder;
use crate::net::ActorCritic;
use crate::rng::{derive_seed, stream, Purpose};

/// Agents plus the wiring between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub specs: Vec<AgentSpec>,
    pub layer_of: Vec<usize>,
    pub layers: Vec<Vec<usize>>,
    /// Subordinates of each vertex in port order.
    pub subs: Vec<Vec<usize>>,
    /// Superiors of each vertex in port order.
    pub sups: Vec<Vec<usize>>,
    /// `head_of[v][k]`: which head of superior `sups[v][k]` addresses `v`.
    pub head_of: Vec<Vec<usize>>,
    /// Motor vertex driving each environment agent slot.
    pub motors: Vec<usize>,
    pub env: EnvSpec,
}

struct Wiring {
    layer_of: Vec<usize>,
    subs: Vec<Vec<usize>>,
    sups: Vec<Vec<usize>>,
    identity: Vec<bool>,
}

impl Network {
    /// Builds agents directly on `topology`, ordering ports by vertex id.
    pub fn from_topology(
        topology: &Topology,
        configs: &[AgentConfig],
        env: &EnvSpec,
        seed: u64,
    ) -> Result<Self> {
        let report = topology.validate();
        if !report.is_valid() {
            return Err(Error::Topology(report.errors.join("; ")));
        }
        let n = topology.vertex_count();
        let wiring = Wiring {
            layer_of: topology.outgoing_depth()?.depth,
            subs: (0..n).map(|v| topology.outgoing(v).to_vec()).collect(),
            sups: (0..n).map(|v| topology.incoming(v).to_vec()).collect(),
            identity: vec![false; n],
        };
        Self::build(wiring, configs, env, seed)
    }

    /// Builds agents on a layered topology; inserted identity vertices become
    /// pass-through agents and `configs` covers the original vertices only.
    pub fn from_layered(
        layered: &LayeredTopology,
        configs: &[AgentConfig],
        env: &EnvSpec,
        seed: u64,
    ) -> Result<Self> {
        let n = layered.vertex_count();
        let wiring = Wiring {
            layer_of: layered.layer_of.clone(),
            subs: (0..n).map(|v| layered.subordinate_ports(v)).collect(),
            sups: (0..n).map(|v| layered.superior_ports(v)).collect(),
            identity: (0..n).map(|v| layered.is_identity(v)).collect(),
        };
        Self::build(wiring, configs, env, seed)
    }

    fn build(w: Wiring, configs: &[AgentConfig], env: &EnvSpec, seed: u64) -> Result<Self> {
        let n = w.layer_of.len();
        let originals = w.identity.iter().filter(|&&i| !i).count();
        if configs.len() != originals {
            return Err(Error::Config(format!(
                "{} agent configs for {originals} non-identity vertices",
                configs.len()
            )));
        }
        let cfg = |v: usize| &configs[v];

        let layer_count = w.layer_of.iter().max().map_or(0, |m| m + 1);
        let mut layers = vec![Vec::new(); layer_count];
        for v in 0..n {
            layers[w.layer_of[v]].push(v);
        }
        let order: Vec<usize> = layers.iter().flatten().copied().collect();

        let motors: Vec<usize> = (0..n).filter(|&v| w.subs[v].is_empty()).collect();
        if motors.len() != env.n_agents {
            return Err(Error::Config(format!(
                "{} motors but environment {} has {} agents",
                motors.len(),
                env.name,
                env.n_agents
            )));
        }
        for v in 0..n {
            if w.identity[v] && (w.subs[v].len() != 1 || w.sups[v].len() != 1) {
                return Err(Error::Topology(format!(
                    "identity vertex {v} needs exactly one superior and one subordinate"
                )));
            }
            if !w.identity[v] {
                let c = cfg(v);
                if c.act_every == 0 || c.directive_choices == 0 || c.embed_dim == 0 {
                    return Err(Error::Config(format!(
                        "vertex {v}: act_every, directive_choices and embed_dim must be positive"
                    )));
                }
                if c.policy == PolicyKind::Identity {
                    return Err(Error::Config(format!(
                        "vertex {v}: identity policies are only inserted by layering"
                    )));
                }
            }
        }

        let head_of: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                w.sups[v]
                    .iter()
                    .map(|&s| w.subs[s].iter().position(|&x| x == v).expect("edge is symmetric"))
                    .collect()
            })
            .collect();

        // Message sizes bottom-up.
        let mut obs_slots = vec![Vec::new(); n];
        let mut message_dim = vec![0usize; n];
        for &v in &order {
            obs_slots[v] = if w.subs[v].is_empty() {
                vec![env.obs_dim]
            } else {
                w.subs[v].iter().map(|&s| message_dim[s]).collect()
            };
            let obs_dim: usize = obs_slots[v].iter().sum();
            message_dim[v] = if w.identity[v] {
                obs_dim
            } else if w.sups[v].is_empty() {
                0
            } else {
                match cfg(v).comm {
                    CommKind::Identity => obs_dim,
                    CommKind::Encoder => cfg(v).embed_dim,
                }
            };
        }

        // Directive sizes top-down.
        let mut heads = vec![Vec::new(); n];
        for &v in order.iter().rev() {
            heads[v] = if w.subs[v].is_empty() {
                vec![env.n_actions]
            } else if w.identity[v] {
                let s = w.sups[v][0];
                vec![heads[s][head_of[v][0]]]
            } else {
                vec![cfg(v).directive_choices; w.subs[v].len()]
            };
        }

        let mut specs = Vec::with_capacity(n);
        for v in 0..n {
            let spaces = Spaces {
                obs_slots: obs_slots[v].clone(),
                directive_widths: w.sups[v]
                    .iter()
                    .zip(&head_of[v])
                    .map(|(&s, &h)| heads[s][h])
                    .collect(),
                action_heads: heads[v].clone(),
                message_dim: message_dim[v],
            };
            let spec = if w.identity[v] {
                AgentSpec {
                    role: AgentRole::Identity,
                    policy: PolicyComponent::Identity,
                    comm: CommComponent::Identity,
                    proxy: ProxyComponent::Mean,
                    aggregator: Aggregator::Mean,
                    spaces,
                    act_every: 1,
                }
            } else {
                let c = cfg(v);
                let mut rng = stream(seed, Purpose::Init, v as u64);
                let policy = PolicyComponent::Mlp(ActorCritic::new(
                    spaces.policy_input_dim(),
                    spaces.logits_dim(),
                    &mut rng,
                )?);
                let source = w.sups[v].is_empty();
                let comm = if source {
                    CommComponent::Null
                } else {
                    match c.comm {
                        CommKind::Identity => CommComponent::Identity,
                        CommKind::Encoder => {
                            let mut rng = stream(seed, Purpose::Init, (1 << 32) | v as u64);
                            CommComponent::Encoder(new_encoder(spaces.obs_dim(), c.embed_dim, &mut rng)?)
                        }
                    }
                };
                let proxy = if source { ProxyComponent::Null } else { ProxyComponent::Mean };
                if let Aggregator::Weighted(ws) = &c.aggregator {
                    if ws.len() != spaces.obs_slots.len() {
                        return Err(Error::Config(format!(
                            "vertex {v}: weighted aggregator has {} weights for {} subordinates",
                            ws.len(),
                            spaces.obs_slots.len()
                        )));
                    }
                }
                AgentSpec {
                    role: if w.subs[v].is_empty() {
                        AgentRole::Motor
                    } else {
                        AgentRole::Controller
                    },
                    policy,
                    comm,
                    proxy,
                    aggregator: c.aggregator.clone(),
                    spaces,
                    act_every: c.act_every,
                }
            };
            specs.push(spec);
        }

        Ok(Self {
            specs,
            layer_of: w.layer_of,
            layers,
            subs: w.subs,
            sups: w.sups,
            head_of,
            motors,
            env: env.clone(),
        })
    }

    pub fn agent_count(&self) -> usize {
        self.specs.len()
    }

    /// Ascending (layer, id).
    pub fn bottom_up(&self) -> Vec<usize> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn learners(&self) -> Vec<usize> {
        (0..self.agent_count()).filter(|&v| self.specs[v].is_learner()).collect()
    }

    pub fn is_motor(&self, v: usize) -> bool {
        self.subs[v].is_empty()
    }
}

/// One logged step of an agent at its own time scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Policy input: aggregated subordinate messages then directive one-hots.
    pub obs: Vec<f64>,
    pub action: Vec<usize>,
    pub logprob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    /// Aggregated subordinate messages at act time.
    pub comm_obs: Vec<f64>,
    /// Per-slot subordinate reward sums of the window closed at act time.
    pub comm_rewards: Vec<f64>,
    /// Message sent upward at act time.
    pub message: Vec<f64>,
    /// Proxy reward sent upward at act time.
    pub proxy_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Current subordinate messages, one entry per port.
    pub inbox_msgs: Vec<Vec<f64>>,
    pub inbox_rewards: Vec<f64>,
    /// Current directive from each superior; `None` before it first acts.
    pub directives: Vec<Option<usize>>,
    /// Concatenated subordinate messages of every sweep since the last act.
    pub msg_window: Vec<Vec<f64>>,
    /// Per-slot subordinate rewards of every sweep since the last close.
    pub reward_window: Vec<Vec<f64>>,
    pub last_reward_sums: Vec<f64>,
    pub message: Vec<f64>,
    pub proxy_reward: f64,
    /// Held action, one entry per head.
    pub action: Option<Vec<usize>>,
    pub pending: Option<Transition>,
    pub closed: Vec<Transition>,
    pub record: bool,
    pub acts: u64,
    pub rng: ChaCha8Rng,
}

impl AgentState {
    fn new(spec: &AgentSpec, seed: u64, v: usize) -> Self {
        let slots = spec.spaces.obs_slots.len();
        Self {
            inbox_msgs: Vec::new(),
            inbox_rewards: Vec::new(),
            directives: vec![None; spec.spaces.directive_widths.len()],
            msg_window: Vec::new(),
            reward_window: Vec::new(),
            last_reward_sums: vec![0.0; slots],
            message: Vec::new(),
            proxy_reward: 0.0,
            action: None,
            pending: None,
            closed: Vec::new(),
            record: spec.is_learner(),
            acts: 0,
            rng: stream(seed, Purpose::Policy, v as u64),
        }
    }

    fn due(spec: &AgentSpec, episode_step: u64) -> bool {
        episode_step % spec.act_every as u64 == 0
    }

    /// Upstream work of one agent once its inbox is filled: windows,
    /// message, proxy reward and closing of the pending transition.
    pub fn sweep(&mut self, spec: &AgentSpec, episode_step: u64, boundary: bool) -> Result<()> {
        if self.inbox_msgs.len() != spec.spaces.obs_slots.len() {
            return Err(Error::Protocol("upstream sweep with an unfilled inbox".into()));
        }
        self.message = spec.comm_apply(&self.inbox_msgs, &self.inbox_rewards)?;
        self.proxy_reward = spec.proxy_apply(&self.inbox_msgs, &self.inbox_rewards)?;
        if spec.role == AgentRole::Identity {
            return Ok(());
        }
        if boundary {
            self.msg_window.clear();
        }
        self.msg_window.push(self.inbox_msgs.concat());
        self.reward_window.push(self.inbox_rewards.clone());
        if Self::due(spec, episode_step) {
            self.last_reward_sums = reward_sums(&self.reward_window)?;
            if let Some(mut t) = self.pending.take() {
                t.reward = spec.aggregate(&self.last_reward_sums)?;
                t.done = boundary;
                if self.record {
                    self.closed.push(t);
                }
            }
            self.reward_window.clear();
        }
        Ok(())
    }

    /// Downstream work of one agent: act if due, otherwise keep the held
    /// action. Identity agents copy their single directive.
    pub fn decide(&mut self, spec: &AgentSpec, episode_step: u64, mode: ActionMode) -> Result<()> {
        match &spec.policy {
            PolicyComponent::Identity => {
                self.action = self.directives[0].map(|d| vec![d]);
            }
            PolicyComponent::Mlp(ac) => {
                if !Self::due(spec, episode_step) {
                    if self.action.is_none() {
                        return Err(Error::Protocol("agent holds no action off its clock".into()));
                    }
                    return Ok(());
                }
                let comm_obs = window_mean(&self.msg_window)?;
                let obs = spec.policy_input(&comm_obs, &self.directives)?;
                let heads = &spec.spaces.action_heads;
                let (action, logprob, value) = match mode {
                    ActionMode::Uniform => {
                        let a = choose(&vec![0.0; spec.spaces.logits_dim()], heads, mode, &mut self.rng);
                        let lp = -heads.iter().map(|&w| (w as f64).ln()).sum::<f64>();
                        (a, lp, 0.0)
                    }
                    _ => {
                        let logits = ac.actor.forward(&obs)?;
                        let lps = log_softmax_heads(&logits, heads);
                        let a = choose(&lps, heads, mode, &mut self.rng);
                        let lp = log_prob(&lps, heads, &a);
                        let value = ac.critic.forward(&obs)?[0];
                        (a, lp, value)
                    }
                };
                self.pending = Some(Transition {
                    obs,
                    action: action.clone(),
                    logprob,
                    value,
                    reward: 0.0,
                    done: false,
                    comm_obs,
                    comm_rewards: self.last_reward_sums.clone(),
                    message: self.message.clone(),
                    proxy_reward: self.proxy_reward,
                });
                self.action = Some(action);
                self.msg_window.clear();
                self.acts += 1;
            }
        }
        Ok(())
    }

    /// Directive for head `h`, if the agent has acted.
    pub fn directive(&self, h: usize) -> Option<usize> {
        self.action.as_ref().map(|a| a[h])
    }
}

/// Elementwise mean of a message window.
pub fn window_mean(messages: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = messages
        .first()
        .ok_or_else(|| Error::NoData("empty message window".into()))?;
    let mut sum = vec![0.0; first.len()];
    for m in messages {
        if m.len() != sum.len() {
            return Err(Error::shape("message window", sum.len(), m.len()));
        }
        for (s, x) in sum.iter_mut().zip(m) {
            *s += x;
        }
    }
    let t = messages.len() as f64;
    Ok(sum.into_iter().map(|s| s / t).collect())
}

/// Per-slot sums of a reward window.
pub fn reward_sums(rewards: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = rewards
        .first()
        .ok_or_else(|| Error::NoData("empty reward window".into()))?;
    let mut sum = vec![0.0; first.len()];
    for r in rewards {
        if r.len() != sum.len() {
            return Err(Error::shape("reward window", sum.len(), r.len()));
        }
        for (s, x) in sum.iter_mut().zip(r) {
            *s += x;
        }
    }
    Ok(sum)
}

/// Mean of `T` messages and sum of `T` rewards from one subordinate.
pub fn temporal_aggregate(messages: &[Vec<f64>], rewards: &[f64]) -> Result<(Vec<f64>, f64)> {
    if rewards.is_empty() || messages.len() != rewards.len() {
        return Err(Error::shape("temporal window", messages.len(), rewards.len()));
    }
    let m = window_mean(messages)?;
    let r: Vec<Vec<f64>> = rewards.iter().map(|&x| vec![x]).collect();
    Ok((m, reward_sums(&r)?[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Upstream,
    Downstream,
    EnvStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub agents: Vec<AgentState>,
    pub env: EnvInstance,
    pub seed: u64,
    /// Global bottom-layer step counter.
    pub clock: u64,
    pub episode: u64,
    pub episode_step: u64,
    pub episode_return: f64,
    /// True for the sweep right after an episode ended.
    pub boundary: bool,
    pub phase: Phase,
}

/// Summary of one environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub motor_actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub done: bool,
    /// Index of the episode this step belonged to.
    pub episode: u64,
    /// Sum over the episode of the agent-mean reward, on the final step.
    pub episode_return: Option<f64>,
}

/// Resets the environment and hands the first observation to the motors,
/// then runs the first upstream sweep.
pub fn init_system(net: &Network, mut env: EnvInstance, seed: u64) -> Result<SystemState> {
    let spec = env.spec();
    if spec.n_agents != net.motors.len() || spec.obs_dim != net.env.obs_dim || spec.n_actions != net.env.n_actions
    {
        return Err(Error::Config(format!(
            "network was built for {:?} but environment is {:?}",
            net.env, spec
        )));
    }
    let obs = env.reset(derive_seed(seed, Purpose::Episode, 0));
    let agents = net
        .specs
        .iter()
        .enumerate()
        .map(|(v, s)| AgentState::new(s, seed, v))
        .collect();
    let mut state = SystemState {
        agents,
        env,
        seed,
        clock: 0,
        episode: 0,
        episode_step: 0,
        episode_return: 0.0,
        boundary: false,
        phase: Phase::Upstream,
    };
    state.deliver_env(net, obs, &vec![0.0; net.motors.len()]);
    state.upstream_pass(net)?;
    Ok(state)
}

impl SystemState {
    fn expect_phase(&self, phase: Phase) -> Result<()> {
        if self.phase != phase {
            return Err(Error::Protocol(format!(
                "expected {phase:?} phase, state is in {:?}",
                self.phase
            )));
        }
        Ok(())
    }

    fn deliver_env(&mut self, net: &Network, obs: Vec<Vec<f64>>, rewards: &[f64]) {
        for (e, o) in obs.into_iter().enumerate() {
            let a = &mut self.agents[net.motors[e]];
            a.inbox_msgs = vec![o];
            a.inbox_rewards = vec![rewards[e]];
        }
    }

    /// Upstream sweep in ascending (layer, id) order.
    pub fn upstream_pass(&mut self, net: &Network) -> Result<()> {
        self.expect_phase(Phase::Upstream)?;
        for v in net.bottom_up() {
            if !net.is_motor(v) {
                let msgs: Vec<Vec<f64>> = net.subs[v].iter().map(|&s| self.agents[s].message.clone()).collect();
                let rewards: Vec<f64> = net.subs[v].iter().map(|&s| self.agents[s].proxy_reward).collect();
                let a = &mut self.agents[v];
                a.inbox_msgs = msgs;
                a.inbox_rewards = rewards;
            }
            self.agents[v].sweep(&net.specs[v], self.episode_step, self.boundary)?;
        }
        self.phase = Phase::Downstream;
        Ok(())
    }

    /// Downstream sweep in descending (layer, id) order.
    pub fn downstream_pass(&mut self, net: &Network, mode: ActionMode) -> Result<()> {
        self.expect_phase(Phase::Downstream)?;
        for v in net.bottom_up().into_iter().rev() {
            self.agents[v].decide(&net.specs[v], self.episode_step, mode)?;
            for (h, &s) in net.subs[v].iter().enumerate() {
                let d = self.agents[v].directive(h);
                let k = net.sups[s].iter().position(|&x| x == v).expect("edge is symmetric");
                self.agents[s].directives[k] = d;
            }
        }
        self.phase = Phase::EnvStep;
        Ok(())
    }

    /// Applies the joint motor action, resetting the environment when the
    /// episode ends.
    pub fn env_step(&mut self, net: &Network) -> Result<StepRecord> {
        self.expect_phase(Phase::EnvStep)?;
        let actions = net
            .motors
            .iter()
            .map(|&m| {
                self.agents[m]
                    .directive(0)
                    .ok_or_else(|| Error::Protocol(format!("motor {m} has no action")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let step = self.env.step(&actions)?;
        let t = self.clock;
        let episode = self.episode;
        self.episode_return += step.rewards.iter().sum::<f64>() / step.rewards.len() as f64;
        self.clock += 1;
        let mut episode_return = None;
        let obs = if step.done {
            episode_return = Some(self.episode_return);
            self.episode_return = 0.0;
            self.episode += 1;
            self.episode_step = 0;
            self.boundary = true;
            self.env.reset(derive_seed(self.seed, Purpose::Episode, self.episode))
        } else {
            self.episode_step += 1;
            self.boundary = false;
            step.obs
        };
        self.deliver_env(net, obs, &step.rewards);
        self.phase = Phase::Upstream;
        Ok(StepRecord {
            t,
            motor_actions: actions,
            rewards: step.rewards,
            done: step.done,
            episode,
            episode_return,
        })
    }

    /// Downstream sweep, environment step, then the next upstream sweep.
    pub fn step(&mut self, net: &Network, mode: ActionMode) -> Result<StepRecord> {
        self.downstream_pass(net, mode)?;
        let record = self.env_step(net)?;
        self.upstream_pass(net)?;
        Ok(record)
    }

    /// Chooses which agents keep closed transitions.
    pub fn set_recording(&mut self, agents: &BTreeSet<usize>) {
        for (v, a) in self.agents.iter_mut().enumerate() {
            a.record = agents.contains(&v);
        }
    }

    pub fn take_closed(&mut self, v: usize) -> Vec<Transition> {
        std::mem::take(&mut self.agents[v].closed)
    }
}

/// Everything collected by [`rollout`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    /// Closed transitions of every recorded agent, indexed by vertex.
    pub agents: Vec<Vec<Transition>>,
    pub steps: Vec<StepRecord>,
}

/// Runs `horizon` full steps and returns the transitions closed meanwhile.
pub fn rollout(
    net: &Network,
    state: &mut SystemState,
    horizon: usize,
    record_for: &BTreeSet<usize>,
    mode: ActionMode,
) -> Result<Trajectories> {
    state.set_recording(record_for);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        steps.push(state.step(net, mode)?);
    }
    let agents = (0..net.agent_count()).map(|v| state.take_closed(v)).collect();
    Ok(Trajectories { agents, steps })
}
