//! Layer-as-environment execution.
//!
//! Each layer of a layered network is the environment of the layer above.
//! Layers exchange only layer-wide vectors: messages and rewards travel up
//! as concatenations over the lower layer, directives travel down as a
//! concatenation of the upper layer's heads. Masks say which slice belongs
//! to whom. Per-agent work reuses [`AgentState::sweep`] and
//! [`AgentState::decide`], so this is a second scheduler over the same state.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::agents::ActionMode;
use crate::engine::{Network, Phase, SystemState};
use crate::error::{Error, Result};

/// Routing between layer `lower` and layer `lower + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask {
    pub lower: usize,
    /// Agents of the lower layer in ascending id.
    pub lower_agents: Vec<usize>,
    /// Slice of each lower agent's message in the joint message vector.
    pub slots: Vec<Range<usize>>,
    /// Agents of the upper layer in ascending id.
    pub upper_agents: Vec<usize>,
    /// For each upper agent and subordinate port: index into `lower_agents`.
    pub up_routes: Vec<Vec<usize>>,
    /// Offset of each upper agent's heads in the joint directive vector.
    pub head_offsets: Vec<usize>,
    /// For each lower agent and superior port: index into the joint
    /// directive vector.
    pub down_routes: Vec<Vec<usize>>,
}

impl LayerMask {
    pub fn message_len(&self) -> usize {
        self.slots.last().map_or(0, |r| r.end)
    }

    pub fn directive_len(&self) -> usize {
        *self.head_offsets.last().unwrap_or(&0)
    }
}

/// One mask per adjacent layer pair, bottom first.
pub fn build_masks(net: &Network) -> Result<Vec<LayerMask>> {
    let mut masks = Vec::new();
    for l in 0..net.layers.len().saturating_sub(1) {
        let lower_agents = net.layers[l].clone();
        let upper_agents = net.layers[l + 1].clone();
        let mut slots = Vec::with_capacity(lower_agents.len());
        let mut offset = 0;
        for &v in &lower_agents {
            let w = net.specs[v].spaces.message_dim;
            slots.push(offset..offset + w);
            offset += w;
        }
        let lower_index = |v: usize| lower_agents.iter().position(|&x| x == v);
        let mut up_routes = Vec::with_capacity(upper_agents.len());
        for &u in &upper_agents {
            let mut ports = Vec::new();
            for (k, &s) in net.subs[u].iter().enumerate() {
                let j = lower_index(s).ok_or_else(|| {
                    Error::Config(format!("edge ({u}, {s}) does not join adjacent layers"))
                })?;
                let width = net.specs[u].spaces.obs_slots[k];
                if width != slots[j].len() {
                    return Err(Error::shape("mask message slot", width, slots[j].len()));
                }
                ports.push(j);
            }
            up_routes.push(ports);
        }
        let mut head_offsets = vec![0];
        for &u in &upper_agents {
            let last = *head_offsets.last().expect("non-empty");
            head_offsets.push(last + net.specs[u].spaces.action_heads.len());
        }
        let mut down_routes = Vec::with_capacity(lower_agents.len());
        for &v in &lower_agents {
            let mut ports = Vec::new();
            for (k, &s) in net.sups[v].iter().enumerate() {
                let i = upper_agents.iter().position(|&x| x == s).ok_or_else(|| {
                    Error::Config(format!("edge ({s}, {v}) does not join adjacent layers"))
                })?;
                ports.push(head_offsets[i] + net.head_of[v][k]);
            }
            down_routes.push(ports);
        }
        masks.push(LayerMask {
            lower: l,
            lower_agents,
            slots,
            upper_agents,
            up_routes,
            head_offsets,
            down_routes,
        });
    }
    // Any vertex above layer 0 without a mask route would be unreachable.
    if let Some(v) = net.sups.iter().enumerate().find_map(|(v, s)| {
        s.iter().any(|&u| net.layer_of[u] != net.layer_of[v] + 1).then_some(v)
    }) {
        return Err(Error::Config(format!("vertex {v} has a superior outside the next layer")));
    }
    Ok(masks)
}

/// Concatenates the lower layer's messages and rewards.
pub fn layer_emit(mask: &LayerMask, messages: &[Vec<f64>], rewards: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if messages.len() != mask.lower_agents.len() {
        return Err(Error::shape("layer messages", mask.lower_agents.len(), messages.len()));
    }
    if rewards.len() != mask.lower_agents.len() {
        return Err(Error::shape("layer rewards", mask.lower_agents.len(), rewards.len()));
    }
    let mut joint = Vec::with_capacity(mask.message_len());
    for (m, slot) in messages.iter().zip(&mask.slots) {
        if m.len() != slot.len() {
            return Err(Error::shape("layer message slot", slot.len(), m.len()));
        }
        joint.extend_from_slice(m);
    }
    Ok((joint, rewards.to_vec()))
}

/// Exact inverse of [`layer_emit`]: per lower agent messages and rewards.
pub fn layer_split(mask: &LayerMask, joint: &[f64], rewards: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    check_joint(mask, joint, rewards)?;
    Ok((
        mask.slots.iter().map(|r| joint[r.clone()].to_vec()).collect(),
        rewards.to_vec(),
    ))
}

fn check_joint(mask: &LayerMask, joint: &[f64], rewards: &[f64]) -> Result<()> {
    if joint.len() != mask.message_len() {
        return Err(Error::shape("joint message vector", mask.message_len(), joint.len()));
    }
    if rewards.len() != mask.lower_agents.len() {
        return Err(Error::shape("joint reward vector", mask.lower_agents.len(), rewards.len()));
    }
    Ok(())
}

/// Per upper agent `(o-, r-)` picked out of the joint vectors.
pub fn layer_observe(
    mask: &LayerMask,
    joint: &[f64],
    rewards: &[f64],
) -> Result<Vec<(Vec<Vec<f64>>, Vec<f64>)>> {
    check_joint(mask, joint, rewards)?;
    Ok(mask
        .up_routes
        .iter()
        .map(|ports| {
            (
                ports.iter().map(|&j| joint[mask.slots[j].clone()].to_vec()).collect(),
                ports.iter().map(|&j| rewards[j]).collect(),
            )
        })
        .collect())
}

/// Concatenates the upper layer's directive heads; `None` where an agent has
/// not acted yet.
pub fn directive_emit(mask: &LayerMask, actions: &[Option<Vec<usize>>]) -> Result<Vec<Option<usize>>> {
    if actions.len() != mask.upper_agents.len() {
        return Err(Error::shape("layer actions", mask.upper_agents.len(), actions.len()));
    }
    let mut joint = Vec::with_capacity(mask.directive_len());
    for (i, a) in actions.iter().enumerate() {
        let heads = mask.head_offsets[i + 1] - mask.head_offsets[i];
        match a {
            Some(a) if a.len() == heads => joint.extend(a.iter().map(|&x| Some(x))),
            Some(a) => return Err(Error::shape("layer action heads", heads, a.len())),
            None => joint.extend(std::iter::repeat(None).take(heads)),
        }
    }
    Ok(joint)
}

/// Per lower agent directives, one per superior port.
pub fn directive_observe(mask: &LayerMask, joint: &[Option<usize>]) -> Result<Vec<Vec<Option<usize>>>> {
    if joint.len() != mask.directive_len() {
        return Err(Error::shape("joint directive vector", mask.directive_len(), joint.len()));
    }
    Ok(mask.down_routes.iter().map(|r| r.iter().map(|&i| joint[i]).collect()).collect())
}

/// Executes a network layer by layer through the masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelScheduler {
    pub masks: Vec<LayerMask>,
}

impl LevelScheduler {
    pub fn new(net: &Network) -> Result<Self> {
        Ok(Self {
            masks: build_masks(net)?,
        })
    }

    fn expect(state: &SystemState, phase: Phase) -> Result<()> {
        if state.phase != phase {
            return Err(Error::Protocol(format!(
                "expected {phase:?} phase, state is in {:?}",
                state.phase
            )));
        }
        Ok(())
    }

    pub fn upstream_pass(&self, net: &Network, state: &mut SystemState) -> Result<()> {
        Self::expect(state, Phase::Upstream)?;
        for (l, layer) in net.layers.iter().enumerate() {
            for &v in layer {
                state.agents[v].sweep(&net.specs[v], state.episode_step, state.boundary)?;
            }
            if let Some(mask) = self.masks.get(l) {
                let msgs: Vec<Vec<f64>> = layer.iter().map(|&v| state.agents[v].message.clone()).collect();
                let rewards: Vec<f64> = layer.iter().map(|&v| state.agents[v].proxy_reward).collect();
                let (joint, joint_r) = layer_emit(mask, &msgs, &rewards)?;
                for (i, (o, r)) in layer_observe(mask, &joint, &joint_r)?.into_iter().enumerate() {
                    let a = &mut state.agents[mask.upper_agents[i]];
                    a.inbox_msgs = o;
                    a.inbox_rewards = r;
                }
            }
        }
        state.phase = Phase::Downstream;
        Ok(())
    }

    pub fn downstream_pass(&self, net: &Network, state: &mut SystemState, mode: ActionMode) -> Result<()> {
        Self::expect(state, Phase::Downstream)?;
        for l in (0..net.layers.len()).rev() {
            for &v in net.layers[l].iter().rev() {
                state.agents[v].decide(&net.specs[v], state.episode_step, mode)?;
            }
            if l == 0 {
                break;
            }
            let mask = &self.masks[l - 1];
            let actions: Vec<Option<Vec<usize>>> =
                mask.upper_agents.iter().map(|&u| state.agents[u].action.clone()).collect();
            let joint = directive_emit(mask, &actions)?;
            for (j, d) in directive_observe(mask, &joint)?.into_iter().enumerate() {
                state.agents[mask.lower_agents[j]].directives = d;
            }
        }
        state.phase = Phase::EnvStep;
        Ok(())
    }

    pub fn step(&self, net: &Network, state: &mut SystemState, mode: ActionMode) -> Result<crate::engine::StepRecord> {
        self.downstream_pass(net, state, mode)?;
        let record = state.env_step(net)?;
        self.upstream_pass(net, state)?;
        Ok(record)
    }
}
