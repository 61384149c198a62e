//! Package balance: four agents attached along a rigid line push it upward
//! with discrete thrust levels. A ball-shaped package rolls on the line and
//! should be carried to a goal point above. Everyone gets the same reward.
//!
//! The line only translates vertically and rotates about its center.
//!
//! | constant          | value |
//! |-------------------|-------|
//! | time step         | 0.05  |
//! | gravity           | 2.0   |
//! | line length       | 1.6   |
//! | line mass         | 1.0   |
//! | package mass      | 0.5   |
//! | package radius    | 0.1   |
//! | agent offsets     | -0.6, -0.2, 0.2, 0.6 |
//! | thrust levels     | {0, 0.5, 1, 1.5, 2} x hover share |
//! | angular damping   | 0.05 per step |
//! | floor penalty     | -10   |
//! | horizon           | 100   |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_actions, EnvSpec, EnvStep, Environment};
use crate::error::{Error, Result};

pub const N_AGENTS: usize = 4;
pub const N_ACTIONS: usize = 5;
pub const OBS_DIM: usize = 11;
pub const DT: f64 = 0.05;
pub const GRAVITY: f64 = 2.0;
pub const LINE_LENGTH: f64 = 1.6;
pub const LINE_MASS: f64 = 1.0;
pub const PACKAGE_MASS: f64 = 0.5;
pub const PACKAGE_RADIUS: f64 = 0.1;
pub const AGENT_OFFSETS: [f64; N_AGENTS] = [-0.6, -0.2, 0.2, 0.6];
pub const ANGULAR_DAMPING: f64 = 0.05;
pub const FLOOR_PENALTY: f64 = -10.0;
pub const HORIZON: usize = 100;
pub const REWARD_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceState {
    /// Height of the line center.
    pub height: f64,
    pub vertical_vel: f64,
    pub angle: f64,
    pub angular_vel: f64,
    /// Package position along the line, measured from the center.
    pub package_offset: f64,
    pub package_vel: f64,
    pub goal: [f64; 2],
    pub t: usize,
    pub touched_floor: bool,
}

impl BalanceState {
    pub fn package_position(&self) -> [f64; 2] {
        [
            self.package_offset * self.angle.cos(),
            self.height + self.package_offset * self.angle.sin(),
        ]
    }

    pub fn goal_distance(&self) -> f64 {
        let p = self.package_position();
        ((self.goal[0] - p[0]).powi(2) + (self.goal[1] - p[1]).powi(2)).sqrt()
    }

    fn on_floor(&self) -> bool {
        let half = 0.5 * LINE_LENGTH;
        let (s, c) = self.angle.sin_cos();
        let ends_low = self.height - half * s.abs() <= 0.0;
        let package_low = self.package_position()[1] - PACKAGE_RADIUS <= 0.0;
        let fell_off = self.package_offset.abs() > half;
        ends_low || package_low || fell_off || c <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceEnv {
    pub horizon: usize,
    pub reward_scale: f64,
    pub state: BalanceState,
}

/// Upward force of one agent for a discrete thrust level.
pub fn thrust(level: usize) -> f64 {
    let hover_share = (LINE_MASS + PACKAGE_MASS) * GRAVITY / N_AGENTS as f64;
    0.5 * level as f64 * hover_share
}

impl BalanceEnv {
    pub fn new(horizon: usize, reward_scale: f64) -> Self {
        Self {
            horizon,
            reward_scale,
            state: BalanceState {
                height: 0.5,
                vertical_vel: 0.0,
                angle: 0.0,
                angular_vel: 0.0,
                package_offset: 0.0,
                package_vel: 0.0,
                goal: [0.0, 1.2],
                t: horizon,
                touched_floor: false,
            },
        }
    }

    pub fn from_state(horizon: usize, reward_scale: f64, state: BalanceState) -> Self {
        Self {
            horizon,
            reward_scale,
            state,
        }
    }

    fn agent_obs(&self, i: usize) -> Vec<f64> {
        let s = &self.state;
        let p = s.package_position();
        let (sin, cos) = s.angle.sin_cos();
        vec![
            s.height,
            s.vertical_vel,
            sin,
            cos,
            s.angular_vel,
            s.package_offset,
            s.package_vel,
            s.goal[0] - p[0],
            s.goal[1] - p[1],
            AGENT_OFFSETS[i],
            s.height + AGENT_OFFSETS[i] * sin,
        ]
    }

    /// Advances the rigid-body state by one time step (semi-implicit Euler).
    fn integrate(&mut self, actions: &[usize]) {
        let s = &mut self.state;
        let forces: Vec<f64> = actions.iter().map(|&a| thrust(a)).collect();
        let total_mass = LINE_MASS + PACKAGE_MASS;
        let lift: f64 = forces.iter().sum();
        let (sin, cos) = s.angle.sin_cos();

        let torque = forces
            .iter()
            .zip(AGENT_OFFSETS)
            .map(|(f, x)| f * x * cos)
            .sum::<f64>()
            - PACKAGE_MASS * GRAVITY * s.package_offset * cos;
        let inertia = LINE_MASS * LINE_LENGTH * LINE_LENGTH / 12.0
            + PACKAGE_MASS * s.package_offset * s.package_offset;

        s.vertical_vel += (lift / total_mass - GRAVITY) * DT;
        s.height += s.vertical_vel * DT;

        s.angular_vel = s.angular_vel * (1.0 - ANGULAR_DAMPING) + torque / inertia * DT;
        s.angle += s.angular_vel * DT;

        // Rolling ball on an incline.
        s.package_vel += -(5.0 / 7.0) * GRAVITY * sin * DT;
        s.package_offset += s.package_vel * DT;
    }
}

impl Environment for BalanceEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            name: "balance".into(),
            n_agents: N_AGENTS,
            obs_dim: OBS_DIM,
            n_actions: N_ACTIONS,
            horizon: self.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = BalanceState {
            height: rng.gen_range(0.4..0.6),
            vertical_vel: 0.0,
            angle: 0.0,
            angular_vel: 0.0,
            package_offset: 0.0,
            package_vel: 0.0,
            goal: [rng.gen_range(-0.5..0.5), rng.gen_range(1.0..1.4)],
            t: 0,
            touched_floor: false,
        };
        self.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<EnvStep> {
        if self.is_done() {
            return Err(Error::Env("step called on a finished episode; reset first".into()));
        }
        check_actions(actions, N_AGENTS, N_ACTIONS)?;
        let before = self.state.goal_distance();
        self.integrate(actions);
        self.state.t += 1;
        let reward = if self.state.on_floor() {
            self.state.touched_floor = true;
            FLOOR_PENALTY
        } else {
            (before - self.state.goal_distance()) * self.reward_scale
        };
        Ok(EnvStep {
            obs: self.observe(),
            rewards: vec![reward; N_AGENTS],
            done: self.is_done(),
        })
    }

    fn observe(&self) -> Vec<Vec<f64>> {
        (0..N_AGENTS).map(|i| self.agent_obs(i)).collect()
    }

    fn is_done(&self) -> bool {
        self.state.touched_floor || self.state.t >= self.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOVER: usize = 2;

    fn fresh(seed: u64) -> BalanceEnv {
        let mut e = BalanceEnv::new(HORIZON, 1.0);
        e.reset(seed);
        e
    }

    #[test]
    fn hover_keeps_package_stationary() {
        let mut e = fresh(1);
        let r = e.step(&[HOVER; 4]).unwrap();
        assert!(r.rewards.iter().all(|&x| x.abs() < 1e-15));
        assert!(r.rewards.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn reward_is_scaled_distance_change() {
        let mut e = fresh(2);
        e.state.goal = [0.0, e.state.height + 1.0];
        // Lift the line 0.1 closer by hand, then hover for one step.
        e.state.height -= 0.1;
        let d0 = e.state.goal_distance();
        let mut moved = e.clone();
        moved.state.height += 0.1;
        let d1 = moved.state.goal_distance();
        assert!((d0 - d1 - 0.1).abs() < 1e-12);

        let mut e = fresh(2);
        e.reward_scale = 1.0;
        let before = e.state.goal_distance();
        let r = e.step(&[4; 4]).unwrap();
        let after = e.state.goal_distance();
        assert!((r.rewards[0] - (before - after)).abs() < 1e-15);
        assert!(r.rewards[0] > 0.0, "full thrust moves toward a goal above");
    }

    #[test]
    fn floor_touch_is_terminal_with_penalty() {
        let mut e = fresh(3);
        let mut last = None;
        for _ in 0..HORIZON {
            let r = e.step(&[0; 4]).unwrap();
            if r.done {
                last = Some(r);
                break;
            }
        }
        let last = last.expect("free fall reaches the floor");
        assert!(e.state.touched_floor);
        assert!(last.rewards.iter().all(|&r| r == FLOOR_PENALTY));
        assert!(e.step(&[0; 4]).is_err());
    }

    #[test]
    fn zero_thrust_never_lifts() {
        let mut e = fresh(4);
        let mut d = e.state.goal_distance();
        while !e.is_done() {
            e.step(&[0; 4]).unwrap();
            let nd = e.state.goal_distance();
            assert!(nd >= d - 1e-12);
            d = nd;
        }
    }

    #[test]
    fn rewards_telescope() {
        for seed in 0..5 {
            let mut e = fresh(seed);
            let d0 = e.state.goal_distance();
            let mut shaped = 0.0;
            let mut prev = d0;
            let mut t = 0usize;
            while !e.is_done() {
                let a = [2 + (t % 3 == 0) as usize, 2, 3 - (t % 2), 2];
                let r = e.step(&a).unwrap();
                if e.state.touched_floor {
                    assert_eq!(r.rewards[0], FLOOR_PENALTY);
                    break;
                }
                shaped += r.rewards[0];
                prev = e.state.goal_distance();
                t += 1;
            }
            assert!((shaped - (d0 - prev)).abs() < 1e-9);
        }
    }

    #[test]
    fn thrust_levels() {
        assert_eq!(thrust(0), 0.0);
        let total: f64 = (0..4).map(|_| thrust(HOVER)).sum();
        assert!((total - (LINE_MASS + PACKAGE_MASS) * GRAVITY).abs() < 1e-12);
    }
}
