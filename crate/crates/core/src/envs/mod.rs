//! Cooperative four-agent environments with discrete actions.

pub mod balance;
pub mod spread;

pub use balance::{BalanceEnv, BalanceState};
pub use spread::{SpreadEnv, SpreadState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation and action sizes of every motor-facing agent slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub n_agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>>;
    fn step(&mut self, actions: &[usize]) -> Result<EnvStep>;
    fn observe(&self) -> Vec<Vec<f64>>;
    fn is_done(&self) -> bool;
}

/// Optional per-environment overrides from the run config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvInstance {
    Spread(SpreadEnv),
    Balance(BalanceEnv),
}

pub const ENV_NAMES: [&str; 2] = ["spread", "balance"];

pub fn make_env(name: &str, params: &EnvParams) -> Result<EnvInstance> {
    match name {
        "spread" => {
            if params.reward_scale.is_some() {
                return Err(Error::Config("spread has no reward_scale parameter".into()));
            }
            Ok(EnvInstance::Spread(SpreadEnv::new(
                params.horizon.unwrap_or(spread::HORIZON),
            )))
        }
        "balance" => Ok(EnvInstance::Balance(BalanceEnv::new(
            params.horizon.unwrap_or(balance::HORIZON),
            params.reward_scale.unwrap_or(balance::REWARD_SCALE),
        ))),
        other => Err(Error::Config(format!(
            "unknown environment {other:?} (expected one of {ENV_NAMES:?})"
        ))),
    }
}

/// Sizes used to build motor agents for the named environment.
pub fn env_spec(name: &str) -> Result<EnvSpec> {
    Ok(make_env(name, &EnvParams::default())?.spec())
}

impl Environment for EnvInstance {
    fn spec(&self) -> EnvSpec {
        match self {
            EnvInstance::Spread(e) => e.spec(),
            EnvInstance::Balance(e) => e.spec(),
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        match self {
            EnvInstance::Spread(e) => e.reset(seed),
            EnvInstance::Balance(e) => e.reset(seed),
        }
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        match self {
            EnvInstance::Spread(e) => e.step(actions),
            EnvInstance::Balance(e) => e.step(actions),
        }
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        match self {
            EnvInstance::Spread(e) => e.observe(),
            EnvInstance::Balance(e) => e.observe(),
        }
    }

    fn is_done(&self) -> bool {
        match self {
            EnvInstance::Spread(e) => e.is_done(),
            EnvInstance::Balance(e) => e.is_done(),
        }
    }
}

fn check_actions(actions: &[usize], n_agents: usize, n_actions: usize) -> Result<()> {
    if actions.len() != n_agents {
        return Err(Error::shape("joint action", n_agents, actions.len()));
    }
    if let Some((i, a)) = actions.iter().enumerate().find(|(_, &a)| a >= n_actions) {
        return Err(Error::Env(format!(
            "agent {i} action {a} outside 0..{n_actions}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_specs() {
        let s = env_spec("spread").unwrap();
        assert_eq!((s.obs_dim, s.n_actions, s.n_agents), (18, 5, 4));
        let b = env_spec("balance").unwrap();
        assert_eq!((b.obs_dim, b.n_actions, b.n_agents), (11, 5, 4));
        assert!(matches!(env_spec("cartpole"), Err(Error::Config(_))));
    }

    #[test]
    fn env_instance_serde_round_trip() {
        let mut env = make_env("balance", &EnvParams::default()).unwrap();
        env.reset(3);
        env.step(&[2, 3, 1, 4]).unwrap();
        let text = serde_json::to_string(&env).unwrap();
        let back: EnvInstance = serde_json::from_str(&text).unwrap();
        assert_eq!(back, env);
    }
}
