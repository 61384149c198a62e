//! Landmark coverage: four point-mass agents should sit on four landmarks
//! without bumping into each other.
//!
//! | constant        | value |
//! |-----------------|-------|
//! | time step       | 0.1   |
//! | velocity damping| 0.25 per step |
//! | thrust accel    | 10.0  |
//! | agent radius    | 0.15  |
//! | world box       | [-1, 1]^2 at reset |
//! | horizon         | 25    |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_actions, EnvSpec, EnvStep, Environment};
use crate::error::{Error, Result};

pub const N_AGENTS: usize = 4;
pub const N_LANDMARKS: usize = 4;
pub const N_ACTIONS: usize = 5;
pub const OBS_DIM: usize = 4 + 2 * N_LANDMARKS + 2 * (N_AGENTS - 1);
pub const DT: f64 = 0.1;
pub const DAMPING: f64 = 0.25;
pub const ACCEL: f64 = 10.0;
pub const AGENT_RADIUS: f64 = 0.15;
pub const WORLD_HALF_EXTENT: f64 = 1.0;
pub const HORIZON: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadState {
    pub pos: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
    pub landmarks: Vec<[f64; 2]>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadEnv {
    pub horizon: usize,
    pub state: SpreadState,
}

/// Unit thrust direction of each discrete action: no-op, -x, +x, -y, +y.
pub fn action_direction(a: usize) -> [f64; 2] {
    match a {
        1 => [-1.0, 0.0],
        2 => [1.0, 0.0],
        3 => [0.0, -1.0],
        4 => [0.0, 1.0],
        _ => [0.0, 0.0],
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Shared reward: minus the summed distance from each landmark to its nearest
/// agent, minus one per colliding agent pair.
pub fn shared_reward(pos: &[[f64; 2]], landmarks: &[[f64; 2]]) -> f64 {
    let coverage: f64 = landmarks
        .iter()
        .map(|&l| pos.iter().map(|&p| dist(p, l)).fold(f64::INFINITY, f64::min))
        .sum();
    let mut collisions = 0;
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            if dist(pos[i], pos[j]) < 2.0 * AGENT_RADIUS {
                collisions += 1;
            }
        }
    }
    -coverage - collisions as f64
}

impl SpreadEnv {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            state: SpreadState {
                pos: vec![[0.0; 2]; N_AGENTS],
                vel: vec![[0.0; 2]; N_AGENTS],
                landmarks: vec![[0.0; 2]; N_LANDMARKS],
                t: horizon,
            },
        }
    }

    pub fn from_state(horizon: usize, state: SpreadState) -> Self {
        Self { horizon, state }
    }

    fn agent_obs(&self, i: usize) -> Vec<f64> {
        let s = &self.state;
        let p = s.pos[i];
        let mut o = Vec::with_capacity(OBS_DIM);
        o.extend_from_slice(&s.vel[i]);
        o.extend_from_slice(&p);
        for l in &s.landmarks {
            o.push(l[0] - p[0]);
            o.push(l[1] - p[1]);
        }
        for (j, q) in s.pos.iter().enumerate() {
            if j != i {
                o.push(q[0] - p[0]);
                o.push(q[1] - p[1]);
            }
        }
        o
    }
}

impl Environment for SpreadEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "spread".into(),
            n_agents: N_AGENTS,
            obs_dim: OBS_DIM,
            n_actions: N_ACTIONS,
            horizon: self.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point = || {
            [
                rng.gen_range(-WORLD_HALF_EXTENT..WORLD_HALF_EXTENT),
                rng.gen_range(-WORLD_HALF_EXTENT..WORLD_HALF_EXTENT),
            ]
        };
        let pos = (0..N_AGENTS).map(|_| point()).collect();
        let landmarks = (0..N_LANDMARKS).map(|_| point()).collect();
        self.state = SpreadState {
            pos,
            vel: vec![[0.0; 2]; N_AGENTS],
            landmarks,
            t: 0,
        };
        self.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        if self.is_done() {
            return Err(Error::Env("step called on a finished episode; reset first".into()));
        }
        check_actions(actions, N_AGENTS, N_ACTIONS)?;
        let s = &mut self.state;
        for (i, &a) in actions.iter().enumerate() {
            let d = action_direction(a);
            for k in 0..2 {
                s.vel[i][k] = s.vel[i][k] * (1.0 - DAMPING) + d[k] * ACCEL * DT;
                s.pos[i][k] += s.vel[i][k] * DT;
            }
        }
        s.t += 1;
        let r = shared_reward(&s.pos, &s.landmarks);
        Ok(EnvStep {
            obs: self.observe(),
            rewards: vec![r; N_AGENTS],
            done: self.is_done(),
        })
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        (0..N_AGENTS).map(|i| self.agent_obs(i)).collect()
    }

    fn is_done(&self) -> bool {
        self.state.t >= self.horizon
    }
}
