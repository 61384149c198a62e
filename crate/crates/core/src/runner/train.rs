//! Seed sweeps, metrics files and checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::agents::{AgentRole, CommComponent};
use crate::error::{Error, Result};
use crate::learn::{warmup_encoders, AutoencoderReport, EpisodeLog, Trainer};
use crate::net::Mlp;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub env: String,
    pub seed: u64,
    pub global_step: u64,
    pub episode: u64,
    pub mean_episode_reward: f64,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub entropy: Option<f64>,
    pub approx_kl: Option<f64>,
}

impl MetricsRow {
    fn from_log(config: &RunConfig, seed: u64, e: &EpisodeLog) -> Self {
        Self {
            variant: config.variant.name().to_string(),
            env: config.env.name.clone(),
            seed,
            global_step: e.global_step,
            episode: e.episode,
            mean_episode_reward: e.reward,
            policy_loss: e.stats.map(|s| s.policy_loss),
            value_loss: e.stats.map(|s| s.value_loss),
            entropy: e.stats.map(|s| s.entropy),
            approx_kl: e.stats.map(|s| s.approx_kl),
        }
    }
}

pub const METRICS_HEADER: [&str; 10] = [
    "variant",
    "env",
    "seed",
    "global_step",
    "episode",
    "mean_episode_reward",
    "policy_loss",
    "value_loss",
    "entropy",
    "approx_kl",
];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Writes rows with a header line, even when there are none.
pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(METRICS_HEADER).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Config(format!("{}: unexpected metrics header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub variant: String,
    pub env: String,
    pub seed: u64,
    pub step: u64,
    pub agents: Vec<usize>,
}

/// Everything needed to resume one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub config: RunConfig,
    pub seed: u64,
    pub trainer: Trainer,
    pub rows: Vec<MetricsRow>,
    pub warmup: Vec<(usize, AutoencoderReport)>,
}

#[derive(Serialize)]
struct AgentFile<'a> {
    vertex: usize,
    role: AgentRole,
    act_every: usize,
    actor: &'a Mlp,
    critic: &'a Mlp,
    encoder: Option<&'a Mlp>,
}

pub fn config_hash(config: &RunConfig) -> String {
    let digest = Sha256::digest(serde_json::to_vec(config).expect("config serializes"));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: Some(path.to_path_buf()),
        source: e,
    })
}

/// Directory layout: `manifest.json`, `state.json` and one
/// `agents/agent-<v>.json` per learning agent.
pub fn write_checkpoint(dir: &Path, snapshot: &Snapshot) -> Result<()> {
    let agents_dir = dir.join("agents");
    fs::create_dir_all(&agents_dir).map_err(|e| Error::io(&agents_dir, e))?;
    let net = &snapshot.trainer.net;
    let learners = net.learners();
    for &v in &learners {
        let spec = &net.specs[v];
        let ac = spec.actor_critic().expect("learner has an actor-critic");
        let file = AgentFile {
            vertex: v,
            role: spec.role,
            act_every: spec.act_every,
            actor: &ac.actor,
            critic: &ac.critic,
            encoder: match &spec.comm {
                CommComponent::Encoder(e) => Some(e),
                _ => None,
            },
        };
        write_json(&agents_dir.join(format!("agent-{v}.json")), &file)?;
    }
    write_json(&dir.join("state.json"), snapshot)?;
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT,
        config_hash: config_hash(&snapshot.config),
        variant: snapshot.config.variant.name().to_string(),
        env: snapshot.config.env.name.clone(),
        seed: snapshot.seed,
        step: snapshot.trainer.state.clock,
        agents: learners,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<Snapshot> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format_version != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!(
            "{}: checkpoint format {} is not supported (expected {CHECKPOINT_FORMAT})",
            dir.display(),
            manifest.format_version
        )));
    }
    let snapshot: Snapshot = read_json(&dir.join("state.json"))?;
    if config_hash(&snapshot.config) != manifest.config_hash {
        return Err(Error::Config(format!("{}: config hash does not match manifest", dir.display())));
    }
    if snapshot.trainer.state.clock != manifest.step || snapshot.seed != manifest.seed {
        return Err(Error::Config(format!("{}: state does not match manifest", dir.display())));
    }
    Ok(snapshot)
}

/// Where the per-seed checkpoints of a run go.
pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Builds, warms up and trains one seed from scratch.
pub fn run_seed(config: &RunConfig, seed: u64, out: Option<&Path>) -> Result<Snapshot> {
    let (_, mut net) = config.build_network(seed)?;
    let env = config.make_env()?;
    let warmup = match config.warmup() {
        Some((steps, ae)) => warmup_encoders(&mut net, &env, seed, steps, &ae)?,
        None => Vec::new(),
    };
    let ppo = config.ppo_per_vertex(&net)?;
    let trainer = Trainer::new(net, env, &ppo, seed, config.training.budget)?;
    continue_seed(
        Snapshot {
            config: config.clone(),
            seed,
            trainer,
            rows: Vec::new(),
            warmup,
        },
        out,
    )
}

/// Trains a snapshot to the end of its budget, writing periodic and final
/// checkpoints below `out` when given.
pub fn continue_seed(mut snap: Snapshot, out: Option<&Path>) -> Result<Snapshot> {
    let every = snap.config.output.checkpoint_every.filter(|&k| k > 0);
    let dir = out.map(|o| seed_dir(o, snap.seed));
    while !snap.trainer.finished() {
        let clock = snap.trainer.state.clock;
        let next = match every {
            Some(k) => (clock / k + 1) * k,
            None => snap.trainer.budget,
        };
        let (config, seed) = (&snap.config, snap.seed);
        let rows = &mut snap.rows;
        snap.trainer.run(next, |e| rows.push(MetricsRow::from_log(config, seed, e)))?;
        if let (Some(d), Some(_)) = (&dir, every) {
            if !snap.trainer.finished() {
                write_checkpoint(&d.join(format!("step-{}", snap.trainer.state.clock)), &snap)?;
            }
        }
    }
    if let Some(d) = &dir {
        write_checkpoint(&d.join("final"), &snap)?;
    }
    Ok(snap)
}

/// Output of [`run_training`].
#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub rows: Vec<MetricsRow>,
    pub snapshots: Vec<Snapshot>,
    pub metrics_path: Option<PathBuf>,
}

/// Trains every configured seed and writes `metrics.csv`, ordered by seed
/// then step. Without `out`, nothing touches the filesystem.
pub fn run_training(config: &RunConfig, out: Option<&Path>) -> Result<TrainingOutput> {
    config.validate()?;
    let seeds = &config.training.seeds;
    let snapshots: Vec<Snapshot> = if config.parallel {
        seeds.par_iter().map(|&s| run_seed(config, s, out)).collect::<Result<_>>()?
    } else {
        seeds.iter().map(|&s| run_seed(config, s, out)).collect::<Result<_>>()?
    };
    finish(config, snapshots, out)
}

/// Continues from a checkpoint directory to the end of its budget.
pub fn resume_training(checkpoint: &Path, out: Option<&Path>) -> Result<TrainingOutput> {
    let snap = load_checkpoint(checkpoint)?;
    let config = snap.config.clone();
    let snap = continue_seed(snap, out)?;
    finish(&config, vec![snap], out)
}

fn finish(config: &RunConfig, snapshots: Vec<Snapshot>, out: Option<&Path>) -> Result<TrainingOutput> {
    let rows: Vec<MetricsRow> = snapshots.iter().flat_map(|s| s.rows.iter().cloned()).collect();
    let metrics_path = match out {
        Some(o) => {
            fs::create_dir_all(o).map_err(|e| Error::io(o, e))?;
            fs::write(o.join("config.json"), config.to_json_string()).map_err(|e| Error::io(o, e))?;
            let p = o.join("metrics.csv");
            write_metrics(&p, &rows)?;
            Some(p)
        }
        None => None,
    };
    Ok(TrainingOutput {
        rows,
        snapshots,
        metrics_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::PpoConfig;
    use crate::runner::config::PpoChoice;

    fn small(variant: &str) -> RunConfig {
        let mut c = RunConfig::new(variant, "spread");
        c.training.budget = 300;
        c.training.seeds = vec![0, 1];
        c.training.ppo = vec![PpoChoice::Custom(PpoConfig {
            buffer_size: 64,
            num_minibatches: 4,
            ..PpoConfig::three_ppo()
        })];
        c.parallel = false;
        c
    }

    #[test]
    fn zero_budget_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small("ippo");
        c.training.budget = 0;
        let out = run_training(&c, Some(dir.path())).unwrap();
        assert!(out.rows.is_empty());
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text.trim_end(), METRICS_HEADER.join(","));
    }

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_training(&small("3ppo"), Some(dir.path())).unwrap();
        assert_eq!(out.rows.len(), 2 * 12);
        let back = read_metrics(&dir.path().join("metrics.csv")).unwrap();
        assert_eq!(back, out.rows);
        assert!(out.rows.windows(2).all(|w| w[0].seed < w[1].seed || w[0].global_step < w[1].global_step));
        assert!(dir.path().join("seed-1/final/manifest.json").exists());
        assert!(dir.path().join("seed-0/final/agents/agent-6.json").exists());
    }

    #[test]
    fn checkpoint_tamper_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small("ippo");
        c.training.seeds = vec![3];
        run_training(&c, Some(dir.path())).unwrap();
        let ck = dir.path().join("seed-3/final");
        assert!(load_checkpoint(&ck).is_ok());
        let m = ck.join("manifest.json");
        let text = fs::read_to_string(&m).unwrap().replace("\"format_version\":1", "\"format_version\":9");
        fs::write(&m, text).unwrap();
        assert!(load_checkpoint(&ck).is_err());
    }
}
