//! Per-agent components: policy, communication function, proxy reward and
//! reward aggregator, plus the space bookkeeping that ties them to a vertex.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ActorCritic, Mlp};

/// Reward aggregation over the list returned by subordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Sum,
    Max,
    Weighted(Vec<f64>),
}

impl Aggregator {
    pub fn apply(&self, rewards: &[f64]) -> Result<f64> {
        if rewards.is_empty() {
            return Err(Error::shape("aggregator input", 1, 0));
        }
        Ok(match self {
            Aggregator::Mean => rewards.iter().sum::<f64>() / rewards.len() as f64,
            Aggregator::Sum => rewards.iter().sum(),
            Aggregator::Max => rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregator::Weighted(w) => {
                if w.len() != rewards.len() {
                    return Err(Error::shape("weighted aggregator", w.len(), rewards.len()));
                }
                w.iter().zip(rewards).map(|(a, b)| a * b).sum()
            }
        })
    }
}

/// `aggregate(agg, rewards)` with an explicit arity check.
pub fn aggregate(agg: &Aggregator, rewards: &[f64], arity: usize) -> Result<f64> {
    if rewards.len() != arity {
        return Err(Error::shape("aggregator arity", arity, rewards.len()));
    }
    agg.apply(rewards)
}

/// Communication function: what an agent reports upward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommComponent {
    /// Forwards the concatenated subordinate messages; ignores rewards.
    Identity,
    /// Applies a frozen encoder to the concatenated subordinate messages.
    Encoder(Mlp),
    /// Sources have no superiors; they send nothing.
    Null,
}

/// Proxy-reward function: the scalar an agent reports upward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProxyComponent {
    Mean,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyComponent {
    /// Replicates the single incoming directive.
    Identity,
    Mlp(ActorCritic),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Motor,
    Controller,
    Identity,
}

/// Space sizes of one agent.
///
/// `obs_slots[k]` is the message width of the k-th subordinate (for motors,
/// the single environment observation). `directive_widths[k]` is the one-hot
/// width of the directive received from the k-th superior. `action_heads[k]`
/// is the number of choices of the directive sent to the k-th subordinate
/// (for motors, the single environment action).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spaces {
    pub obs_slots: Vec<usize>,
    pub directive_widths: Vec<usize>,
    pub action_heads: Vec<usize>,
    pub message_dim: usize,
}

impl Spaces {
    pub fn obs_dim(&self) -> usize {
        self.obs_slots.iter().sum()
    }

    pub fn directive_dim(&self) -> usize {
        self.directive_widths.iter().sum()
    }

    pub fn policy_input_dim(&self) -> usize {
        self.obs_dim() + self.directive_dim()
    }

    pub fn logits_dim(&self) -> usize {
        self.action_heads.iter().sum()
    }

    /// Width of the `(observation, rewards)` domain of the communication and
    /// proxy functions.
    pub fn comm_input_dim(&self) -> usize {
        self.obs_dim() + self.obs_slots.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub role: AgentRole,
    pub policy: PolicyComponent,
    pub comm: CommComponent,
    pub proxy: ProxyComponent,
    pub aggregator: Aggregator,
    pub spaces: Spaces,
    pub act_every: usize,
}

impl AgentSpec {
    pub fn is_learner(&self) -> bool {
        matches!(self.policy, PolicyComponent::Mlp(_))
    }

    pub fn actor_critic(&self) -> Option<&ActorCritic> {
        match &self.policy {
            PolicyComponent::Mlp(ac) => Some(ac),
            PolicyComponent::Identity => None,
        }
    }

    pub fn actor_critic_mut(&mut self) -> Option<&mut ActorCritic> {
        match &mut self.policy {
            PolicyComponent::Mlp(ac) => Some(ac),
            PolicyComponent::Identity => None,
        }
    }

    fn check_obs(&self, obs: &[Vec<f64>], rewards: &[f64]) -> Result<()> {
        let slots = &self.spaces.obs_slots;
        if obs.len() != slots.len() {
            return Err(Error::shape("subordinate message count", slots.len(), obs.len()));
        }
        if rewards.len() != slots.len() {
            return Err(Error::shape("subordinate reward count", slots.len(), rewards.len()));
        }
        for (o, &w) in obs.iter().zip(slots) {
            if o.len() != w {
                return Err(Error::shape("subordinate message width", w, o.len()));
            }
        }
        Ok(())
    }

    /// `m = phi(o-, r-)`.
    pub fn comm_apply(&self, obs: &[Vec<f64>], rewards: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs, rewards)?;
        comm_apply(&self.comm, obs, rewards)
    }

    /// `r = psi(o-, r-)`.
    pub fn proxy_apply(&self, obs: &[Vec<f64>], rewards: &[f64]) -> Result<f64> {
        self.check_obs(obs, rewards)?;
        proxy_apply(&self.proxy, obs, rewards)
    }

    /// `r_target = R(r-)`.
    pub fn aggregate(&self, rewards: &[f64]) -> Result<f64> {
        aggregate(&self.aggregator, rewards, self.spaces.obs_slots.len())
    }

    /// Policy input: observation followed by the one-hot directive block.
    pub fn policy_input(&self, obs: &[f64], directives: &[Option<usize>]) -> Result<Vec<f64>> {
        if obs.len() != self.spaces.obs_dim() {
            return Err(Error::shape("policy observation", self.spaces.obs_dim(), obs.len()));
        }
        let mut x = Vec::with_capacity(self.spaces.policy_input_dim());
        x.extend_from_slice(obs);
        x.extend(encode_directives(directives, &self.spaces.directive_widths)?);
        Ok(x)
    }
}

pub fn comm_apply(comm: &CommComponent, obs: &[Vec<f64>], _rewards: &[f64]) -> Result<Vec<f64>> {
    match comm {
        CommComponent::Identity => Ok(obs.concat()),
        CommComponent::Encoder(enc) => enc.forward(&obs.concat()),
        CommComponent::Null => Ok(Vec::new()),
    }
}

pub fn proxy_apply(proxy: &ProxyComponent, _obs: &[Vec<f64>], rewards: &[f64]) -> Result<f64> {
    match proxy {
        ProxyComponent::Mean => Aggregator::Mean.apply(rewards),
        ProxyComponent::Null => Ok(0.0),
    }
}

/// One-hot blocks in superior order; a missing directive is an all-zero block.
pub fn encode_directives(directives: &[Option<usize>], widths: &[usize]) -> Result<Vec<f64>> {
    if directives.len() != widths.len() {
        return Err(Error::shape("directive count", widths.len(), directives.len()));
    }
    let mut out = vec![0.0; widths.iter().sum()];
    let mut offset = 0;
    for (d, &w) in directives.iter().zip(widths) {
        if let Some(a) = *d {
            if a >= w {
                return Err(Error::shape("directive value", w, a));
            }
            out[offset + a] = 1.0;
        }
        offset += w;
    }
    Ok(out)
}

/// A transparent pass-through vertex: forwards its subordinate's message and
/// reward and replicates its superior's directive.
pub fn make_identity_agent(message_dim: usize, superior_choices: usize) -> AgentSpec {
    AgentSpec {
        role: AgentRole::Identity,
        policy: PolicyComponent::Identity,
        comm: CommComponent::Identity,
        proxy: ProxyComponent::Mean,
        aggregator: Aggregator::Mean,
        spaces: Spaces {
            obs_slots: vec![message_dim],
            directive_widths: vec![superior_choices],
            action_heads: vec![superior_choices],
            message_dim,
        },
        act_every: 1,
    }
}

/// How a learnable agent turns logits into actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Sample,
    Greedy,
    Uniform,
}

/// Per-head log-softmax of concatenated logits.
pub fn log_softmax_heads(logits: &[f64], heads: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    let mut offset = 0;
    for &w in heads {
        let head = &logits[offset..offset + w];
        let max = head.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + head.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        out.extend(head.iter().map(|z| z - lse));
        offset += w;
    }
    out
}

pub fn log_prob(log_probs: &[f64], heads: &[usize], action: &[usize]) -> f64 {
    let mut offset = 0;
    let mut lp = 0.0;
    for (&w, &a) in heads.iter().zip(action) {
        lp += log_probs[offset + a];
        offset += w;
    }
    lp
}

pub fn entropy(log_probs: &[f64], heads: &[usize]) -> f64 {
    let mut offset = 0;
    let mut h = 0.0;
    for &w in heads {
        h -= log_probs[offset..offset + w]
            .iter()
            .map(|lp| lp.exp() * lp)
            .sum::<f64>();
        offset += w;
    }
    h
}

/// Draws one choice per head.
pub fn choose<R: Rng + ?Sized>(
    log_probs: &[f64],
    heads: &[usize],
    mode: ActionMode,
    rng: &mut R,
) -> Vec<usize> {
    let mut offset = 0;
    heads
        .iter()
        .map(|&w| {
            let head = &log_probs[offset..offset + w];
            offset += w;
            match mode {
                ActionMode::Greedy => head
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0,
                ActionMode::Uniform => rng.gen_range(0..w),
                ActionMode::Sample => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    for (i, lp) in head.iter().enumerate() {
                        acc += lp.exp();
                        if u < acc {
                            return i;
                        }
                    }
                    w - 1
                }
            }
        })
        .collect()
}

/// Component kinds accepted in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "mlp-policy")]
    Mlp,
    #[serde(rename = "identity")]
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommKind {
    #[serde(rename = "identity")]
    Identity,
    #[serde(rename = "encoder-comm")]
    Encoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProxyKind {
    #[serde(rename = "mean-proxy")]
    Mean,
}

pub const DEFAULT_DIRECTIVE_CHOICES: usize = 5;
pub const DEFAULT_EMBED_DIM: usize = 12;

fn default_policy() -> PolicyKind {
    PolicyKind::Mlp
}
fn default_comm() -> CommKind {
    CommKind::Identity
}
fn default_proxy() -> ProxyKind {
    ProxyKind::Mean
}
fn default_aggregator() -> Aggregator {
    Aggregator::Mean
}
fn one() -> usize {
    1
}
fn default_choices() -> usize {
    DEFAULT_DIRECTIVE_CHOICES
}
fn default_embed() -> usize {
    DEFAULT_EMBED_DIM
}

/// Agent description for one vertex of a user-supplied graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default = "default_comm")]
    pub comm: CommKind,
    #[serde(default = "default_proxy")]
    pub proxy: ProxyKind,
    #[serde(default = "default_aggregator")]
    pub aggregator: Aggregator,
    #[serde(default = "one")]
    pub act_every: usize,
    /// Choices per directive head sent to each subordinate.
    #[serde(default = "default_choices")]
    pub directive_choices: usize,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            policy: default_policy(),
            comm: default_comm(),
            proxy: default_proxy(),
            aggregator: default_aggregator(),
            act_every: 1,
            directive_choices: default_choices(),
            embed_dim: default_embed(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn aggregate_examples() {
        assert_eq!(Aggregator::Mean.apply(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert!((Aggregator::Mean.apply(&[0.4, 0.4]).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(Aggregator::Max.apply(&[-1.0, 3.0, 2.0]).unwrap(), 3.0);
        assert_eq!(Aggregator::Sum.apply(&[1.0, 2.0]).unwrap(), 3.0);
        assert!(aggregate(&Aggregator::Mean, &[1.0, 2.0], 3).is_err());
        assert!(Aggregator::Weighted(vec![0.5]).apply(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_equals_uniform_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 1..10 {
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let w = Aggregator::Weighted(vec![1.0 / n as f64; n]).apply(&r).unwrap();
            assert!((Aggregator::Mean.apply(&r).unwrap() - w).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_comm_forwards_and_ignores_rewards() {
        let obs = vec![vec![0.1, -0.2]];
        assert_eq!(comm_apply(&CommComponent::Identity, &obs, &[0.0]).unwrap(), vec![0.1, -0.2]);
        assert_eq!(
            comm_apply(&CommComponent::Identity, &obs, &[0.0]).unwrap(),
            comm_apply(&CommComponent::Identity, &obs, &[5.0]).unwrap()
        );
    }

    #[test]
    fn encoder_comm_emits_embedding() {
        let enc = crate::learn::autoencoder::Autoencoder::new(18, 12, 0).unwrap().encoder;
        let m = comm_apply(&CommComponent::Encoder(enc), &[vec![0.3; 18]], &[1.0]).unwrap();
        assert_eq!(m.len(), 12);
    }

    #[test]
    fn mean_proxy_examples() {
        let obs = vec![vec![0.0], vec![0.0]];
        assert_eq!(proxy_apply(&ProxyComponent::Mean, &obs, &[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(proxy_apply(&ProxyComponent::Mean, &obs[..1], &[0.0]).unwrap(), 0.0);
        assert_eq!(proxy_apply(&ProxyComponent::Mean, &obs[..1], &[-0.37]).unwrap(), -0.37);
    }

    #[test]
    fn shape_mismatch_errors() {
        let spec = make_identity_agent(2, 5);
        assert!(spec.comm_apply(&[vec![1.0]], &[0.0]).is_err());
        assert!(spec.proxy_apply(&[vec![1.0, 2.0]], &[]).is_err());
        assert!(spec.comm_apply(&[vec![1.0, 2.0]], &[0.0]).is_ok());
    }

    #[test]
    fn identity_agent_forwards_everything() {
        let spec = make_identity_agent(1, 5);
        assert_eq!(spec.comm_apply(&[vec![0.25]], &[0.7]).unwrap(), vec![0.25]);
        assert_eq!(spec.proxy_apply(&[vec![0.25]], &[0.7]).unwrap(), 0.7);
        assert_eq!(spec.spaces.message_dim, spec.spaces.obs_dim());
        assert_eq!(spec.spaces.action_heads, spec.spaces.directive_widths);
    }

    #[test]
    fn directive_encoding() {
        let x = encode_directives(&[Some(1), None, Some(0)], &[3, 2, 2]).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(encode_directives(&[], &[]).unwrap().is_empty());
        assert!(encode_directives(&[Some(3)], &[3]).is_err());
    }

    #[test]
    fn factored_categorical() {
        let heads = [2, 3];
        let lp = log_softmax_heads(&[0.0, 0.0, 1.0, 1.0, 1.0], &heads);
        assert!((log_prob(&lp, &heads, &[1, 2]) - ((0.5f64).ln() + (1.0f64 / 3.0).ln())).abs() < 1e-12);
        assert!((entropy(&lp, &heads) - ((2.0f64).ln() + (3.0f64).ln())).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = choose(&lp, &heads, ActionMode::Sample, &mut rng);
        assert!(a[0] < 2 && a[1] < 3);
        let g = choose(&log_softmax_heads(&[0.0, 3.0, 1.0, 5.0, 0.0], &heads), &heads, ActionMode::Greedy, &mut rng);
        assert_eq!(g, vec![1, 1]);
    }

    #[test]
    fn config_kind_names() {
        let c: AgentConfig = serde_json::from_str(
            r#"{"policy": "mlp-policy", "comm": "encoder-comm", "proxy": "mean-proxy", "aggregator": {"weighted": [0.5, 0.5]}}"#,
        )
        .unwrap();
        assert_eq!(c.comm, CommKind::Encoder);
        assert_eq!(c.aggregator, Aggregator::Weighted(vec![0.5, 0.5]));
        assert!(serde_json::from_str::<AgentConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
