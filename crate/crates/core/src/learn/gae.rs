//! Generalized advantage estimation.

use crate::error::{Error, Result};

/// Advantages and returns for one trajectory segment.
///
/// `dones[t]` marks that transition `t` ended its episode, so the value after
/// it is not bootstrapped. `bootstrap_value` is the value of the state after
/// the last transition.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n {
        return Err(Error::shape("gae values", n, values.len()));
    }
    if dones.len() != n {
        return Err(Error::shape("gae dones", n, dones.len()));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lam * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[1.0], &[0.5], &[true], 7.0, 0.99, 0.95).unwrap();
        assert_eq!(a, vec![0.5]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn zero_gamma_is_one_step_error() {
        let rewards = [1.0, -2.0, 0.5];
        let values = [0.3, 0.1, -0.4];
        let (a, _) = compute_gae(&rewards, &values, &[false, true, false], 3.0, 0.0, 0.95).unwrap();
        for t in 0..3 {
            assert!((a[t] - (rewards[t] - values[t])).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[1.0], &[], &[false], 0.0, 0.9, 0.9).is_err());
        assert!(compute_gae(&[1.0], &[0.0], &[], 0.0, 0.9, 0.9).is_err());
    }
}
