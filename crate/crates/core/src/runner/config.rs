//! Run configuration and variant construction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, CommKind, DEFAULT_EMBED_DIM};
use crate::engine::Network;
use crate::envs::{make_env, EnvInstance, EnvParams, Environment};
use crate::error::{Error, Result};
use crate::graph::{GraphFile, LayeredTopology, Topology};
use crate::learn::{AutoencoderConfig, PpoConfig};

pub const VARIANTS: [&str; 4] = ["ippo", "3ppo", "bridged-3ppo", "bridged-3ppo-comm"];
pub const DEFAULT_BUDGET: u64 = 200_000;
pub const DEFAULT_WARMUP_STEPS: usize = 5_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    #[serde(default)]
    pub params: EnvParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomVariant {
    #[serde(default = "custom_name")]
    pub name: String,
    pub graph: GraphFile,
    /// One entry per vertex; defaults apply when empty.
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
}

fn custom_name() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VariantChoice {
    Preset(String),
    Custom(CustomVariant),
}

impl VariantChoice {
    pub fn name(&self) -> &str {
        match self {
            VariantChoice::Preset(n) => n,
            VariantChoice::Custom(c) => &c.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PpoChoice {
    Preset(String),
    Custom(PpoConfig),
}

impl PpoChoice {
    pub fn resolve(&self) -> Result<PpoConfig> {
        match self {
            PpoChoice::Preset(n) => PpoConfig::preset(n),
            PpoChoice::Custom(c) => Ok(c.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// PPO settings per layer of the layered graph, bottom first. A single
    /// entry applies to every layer; empty picks the variant's preset.
    #[serde(default)]
    pub ppo: Vec<PpoChoice>,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            ppo: Vec::new(),
            budget: DEFAULT_BUDGET,
            seeds: default_seeds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timescales {
    /// Clock divisor per layer of the original graph, bottom first.
    pub act_every: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommConfig {
    pub kind: CommKind,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default)]
    pub autoencoder: AutoencoderConfig,
}

fn default_embed() -> usize {
    DEFAULT_EMBED_DIM
}
fn default_warmup() -> usize {
    DEFAULT_WARMUP_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Write a checkpoint every this many environment steps.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out(),
            checkpoint_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub variant: VariantChoice,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub timescales: Option<Timescales>,
    #[serde(default)]
    pub comm: Option<CommConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Run seeds on parallel workers.
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(variant: &str, env: &str) -> Self {
        Self {
            env: EnvConfig {
                name: env.into(),
                params: EnvParams::default(),
            },
            variant: VariantChoice::Preset(variant.into()),
            training: TrainingConfig::default(),
            timescales: None,
            comm: None,
            output: OutputConfig::default(),
            parallel: true,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: Some(path.to_path_buf()),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        make_env(&self.env.name, &self.env.params)?;
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.training.seeds {
            if !seen.insert(s) {
                return Err(Error::Config(format!("seed {s} listed twice")));
            }
        }
        for p in &self.training.ppo {
            p.resolve()?.validate()?;
        }
        if let Some(t) = &self.timescales {
            if t.act_every.iter().any(|&k| k == 0) {
                return Err(Error::Config("act_every entries must be positive".into()));
            }
        }
        self.variant_parts()?;
        Ok(())
    }

    pub fn make_env(&self) -> Result<EnvInstance> {
        make_env(&self.env.name, &self.env.params)
    }

    /// Graph and per-vertex agent configs with timescale and communication
    /// settings applied.
    pub fn variant_parts(&self) -> Result<(Topology, Vec<AgentConfig>)> {
        let (topology, mut agents) = match &self.variant {
            VariantChoice::Preset(name) => variant_topology(name)?,
            VariantChoice::Custom(c) => {
                let topo = Topology::try_from(c.graph.clone())?;
                let agents = if c.agents.is_empty() {
                    vec![AgentConfig::default(); topo.vertex_count()]
                } else {
                    c.agents.clone()
                };
                if agents.len() != topo.vertex_count() {
                    return Err(Error::Config(format!(
                        "{} agent entries for {} vertices",
                        agents.len(),
                        topo.vertex_count()
                    )));
                }
                (topo, agents)
            }
        };
        let depth = topology.outgoing_depth()?;
        if let Some(t) = &self.timescales {
            for (v, a) in agents.iter_mut().enumerate() {
                let d = depth.depth[v];
                a.act_every = *t.act_every.get(d).ok_or_else(|| {
                    Error::Config(format!("timescales cover {} layers, graph has {}", t.act_every.len(), depth.max_depth() + 1))
                })?;
            }
        }
        if let Some(c) = &self.comm {
            for a in &mut agents {
                a.comm = c.kind;
                a.embed_dim = c.embed_dim;
            }
        }
        Ok((topology, agents))
    }

    /// Builds the layered network for `seed`.
    pub fn build_network(&self, seed: u64) -> Result<(LayeredTopology, Network)> {
        let (topology, agents) = self.variant_parts()?;
        let layered = topology.to_layered()?;
        let net = Network::from_layered(&layered, &agents, &self.make_env()?.spec(), seed)?;
        Ok((layered, net))
    }

    /// PPO configuration of every vertex of `net`.
    pub fn ppo_per_vertex(&self, net: &Network) -> Result<Vec<PpoConfig>> {
        let per_layer: Vec<PpoConfig> = if self.training.ppo.is_empty() {
            let preset = match self.variant.name() {
                "ippo" => PpoConfig::ippo(),
                _ => PpoConfig::three_ppo(),
            };
            vec![preset]
        } else {
            self.training.ppo.iter().map(PpoChoice::resolve).collect::<Result<_>>()?
        };
        (0..net.agent_count())
            .map(|v| {
                let l = net.layer_of[v];
                if per_layer.len() == 1 {
                    Ok(per_layer[0].clone())
                } else {
                    per_layer.get(l).cloned().ok_or_else(|| {
                        Error::Config(format!("ppo settings cover {} layers, network has {}", per_layer.len(), net.layers.len()))
                    })
                }
            })
            .collect()
    }

    /// Encoder warm-up settings if any agent communicates through one.
    pub fn warmup(&self) -> Option<(usize, AutoencoderConfig)> {
        match &self.comm {
            Some(c) if c.kind == CommKind::Encoder => Some((c.warmup_steps, c.autoencoder)),
            _ => match self.variant.name() {
                "bridged-3ppo-comm" => Some((DEFAULT_WARMUP_STEPS, AutoencoderConfig::default())),
                _ => None,
            },
        }
    }
}

/// Topology and default agent configs of a named variant.
///
/// Motors are 0-3; mid-level controllers 4 (over 0, 1) and 5 (over 2, 3);
/// the top controller is 6. Controllers act every second step.
pub fn variant_topology(name: &str) -> Result<(Topology, Vec<AgentConfig>)> {
    let tree = [(4, 0), (4, 1), (5, 2), (5, 3), (6, 4), (6, 5)];
    let bridges = [(6, 0), (6, 1), (6, 2), (6, 3)];
    let hierarchy = |edges: Vec<(usize, usize)>, comm: CommKind| -> Result<(Topology, Vec<AgentConfig>)> {
        let topo = Topology::new(7, edges)?;
        let agents = (0..7)
            .map(|v| AgentConfig {
                act_every: if v < 4 { 1 } else { 2 },
                comm,
                ..AgentConfig::default()
            })
            .collect();
        Ok((topo, agents))
    };
    match name {
        "ippo" => Ok((Topology::new(4, [])?, vec![AgentConfig::default(); 4])),
        "3ppo" => hierarchy(tree.to_vec(), CommKind::Identity),
        "bridged-3ppo" => hierarchy(tree.iter().chain(&bridges).copied().collect(), CommKind::Identity),
        "bridged-3ppo-comm" => hierarchy(tree.iter().chain(&bridges).copied().collect(), CommKind::Encoder),
        other => Err(Error::Config(format!("unknown variant {other:?} (expected one of {VARIANTS:?})"))),
    }
}
