//! Policy evaluation without learning.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::load_checkpoint;
use crate::agents::ActionMode;
use crate::engine::{init_system, Network};
use crate::envs::EnvInstance;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

/// Runs `episodes` full episodes; `ActionMode::Uniform` gives the random
/// baseline.
pub fn evaluate_network(
    net: &Network,
    env: EnvInstance,
    episodes: usize,
    seed: u64,
    mode: ActionMode,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be positive".into()));
    }
    let mut state = init_system(net, env, derive_seed(seed, Purpose::Eval, 0))?;
    state.set_recording(&Default::default());
    let mut returns = Vec::with_capacity(episodes);
    while returns.len() < episodes {
        if let Some(r) = state.step(net, mode)?.episode_return {
            returns.push(r);
        }
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EvalResult { mean, std, returns })
}

/// Evaluates the network stored in a checkpoint on its own environment.
pub fn evaluate(checkpoint: &Path, episodes: usize, seed: u64, mode: ActionMode) -> Result<EvalResult> {
    let snap = load_checkpoint(checkpoint)?;
    let env = snap.config.make_env()?;
    evaluate_network(&snap.trainer.net, env, episodes, seed, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::config::RunConfig;

    #[test]
    fn random_policy_on_spread_is_negative_and_deterministic() {
        let cfg = RunConfig::new("ippo", "spread");
        let (_, net) = cfg.build_network(0).unwrap();
        let a = evaluate_network(&net, cfg.make_env().unwrap(), 5, 1, ActionMode::Uniform).unwrap();
        assert!(a.mean < 0.0);
        let b = evaluate_network(&net, cfg.make_env().unwrap(), 5, 1, ActionMode::Uniform).unwrap();
        assert_eq!(a, b);
        let g = evaluate_network(&net, cfg.make_env().unwrap(), 2, 1, ActionMode::Greedy).unwrap();
        assert_eq!(g.returns.len(), 2);
    }
}
