//! Clipped-surrogate policy optimization for one agent's actor and critic.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::log_softmax_heads;
use crate::error::{Error, Result};
use crate::net::{ActorCritic, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub anneal_lr: bool,
    pub max_grad_norm: f64,
    pub buffer_size: usize,
    pub num_minibatches: usize,
    pub update_epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub normalize_advantage: bool,
    pub clip_coef: f64,
    pub clip_value_loss: bool,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub target_kl: Option<f64>,
    /// Divide rewards by a running return deviation before computing
    /// advantages.
    #[serde(default = "yes")]
    pub scale_rewards: bool,
}

fn yes() -> bool {
    true
}

impl PpoConfig {
    /// Independent learners on a flat graph.
    pub fn ippo() -> Self {
        Self {
            learning_rate: 2.5e-4,
            anneal_lr: true,
            max_grad_norm: 0.5,
            buffer_size: 2048,
            num_minibatches: 4,
            update_epochs: 4,
            gamma: 0.99,
            gae_lambda: 0.95,
            normalize_advantage: true,
            clip_coef: 0.2,
            clip_value_loss: true,
            entropy_coef: 0.0,
            value_coef: 0.5,
            target_kl: None,
            scale_rewards: true,
        }
    }

    /// Hierarchical variants.
    pub fn three_ppo() -> Self {
        Self {
            learning_rate: 1e-3,
            num_minibatches: 8,
            clip_coef: 0.1,
            entropy_coef: 0.01,
            target_kl: Some(0.015),
            ..Self::ippo()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ippo" => Ok(Self::ippo()),
            "3ppo" => Ok(Self::three_ppo()),
            other => Err(Error::Config(format!("unknown ppo preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("max_grad_norm", self.max_grad_norm),
            ("clip_coef", self.clip_coef),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.buffer_size == 0 || self.num_minibatches == 0 || self.update_epochs == 0 {
            return Err(Error::Config("buffer_size, num_minibatches and update_epochs must be positive".into()));
        }
        if self.buffer_size % self.num_minibatches != 0 {
            return Err(Error::Config(format!(
                "buffer_size {} is not divisible by num_minibatches {}",
                self.buffer_size, self.num_minibatches
            )));
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [("entropy_coef", self.entropy_coef), ("value_coef", self.value_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if let Some(kl) = self.target_kl {
            if !(kl > 0.0) {
                return Err(Error::Config(format!("target_kl must be positive, got {kl}")));
            }
        }
        Ok(())
    }
}

/// Flattened rollout buffer of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub input_dim: usize,
    /// Row-major policy inputs.
    pub obs: Vec<f64>,
    pub actions: Vec<Vec<usize>>,
    pub logprobs: Vec<f64>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        let d = self.input_dim;
        Batch {
            input_dim: d,
            obs: idx.iter().flat_map(|&i| self.obs[i * d..(i + 1) * d].iter().copied()).collect(),
            actions: idx.iter().map(|&i| self.actions[i].clone()).collect(),
            logprobs: idx.iter().map(|&i| self.logprobs[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub minibatch_steps: usize,
    pub early_stopped: bool,
}

impl PpoStats {
    pub fn mean(stats: &[PpoStats]) -> Option<PpoStats> {
        if stats.is_empty() {
            return None;
        }
        let n = stats.len() as f64;
        let avg = |f: fn(&PpoStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
        Some(PpoStats {
            policy_loss: avg(|s| s.policy_loss),
            value_loss: avg(|s| s.value_loss),
            entropy: avg(|s| s.entropy),
            approx_kl: avg(|s| s.approx_kl),
            clip_frac: avg(|s| s.clip_frac),
            minibatch_steps: stats.iter().map(|s| s.minibatch_steps).sum(),
            early_stopped: stats.iter().any(|s| s.early_stopped),
        })
    }
}

/// Loss terms of one minibatch and their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    /// Advantages after optional normalization.
    pub advantages: Vec<f64>,
    pub actor_grad: Vec<f64>,
    pub critic_grad: Vec<f64>,
}

/// Normalizes to zero mean and unit sample deviation; left unchanged for
/// fewer than two samples.
pub fn normalize(adv: &[f64]) -> Vec<f64> {
    let n = adv.len();
    if n < 2 {
        return adv.to_vec();
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let denom = var.sqrt() + 1e-8;
    adv.iter().map(|a| (a - mean) / denom).collect()
}

/// Evaluates the combined loss on `mb` and its exact gradients.
pub fn ppo_loss(ac: &ActorCritic, heads: &[usize], mb: &Batch, cfg: &PpoConfig) -> Result<LossEval> {
    let n = mb.len();
    if n == 0 {
        return Err(Error::NoData("empty minibatch".into()));
    }
    let logits_dim: usize = heads.iter().sum();
    let actor = ac.actor.forward_cached(&mb.obs, n)?;
    let critic = ac.critic.forward_cached(&mb.obs, n)?;
    let logits = actor.output();
    if logits.len() != n * logits_dim {
        return Err(Error::shape("policy logits", n * logits_dim, logits.len()));
    }
    let adv = if cfg.normalize_advantage {
        normalize(&mb.advantages)
    } else {
        mb.advantages.clone()
    };
    let inv_n = 1.0 / n as f64;
    let eps = cfg.clip_coef;

    let mut g_logits = vec![0.0; n * logits_dim];
    let mut pg_loss = 0.0;
    let mut ent_sum = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    for i in 0..n {
        let row = &logits[i * logits_dim..(i + 1) * logits_dim];
        let lps = log_softmax_heads(row, heads);
        let action = &mb.actions[i];
        if action.len() != heads.len() {
            return Err(Error::shape("action heads", heads.len(), action.len()));
        }
        let mut new_lp = 0.0;
        let mut offset = 0;
        for (&w, &a) in heads.iter().zip(action) {
            new_lp += lps[offset + a];
            offset += w;
        }
        let log_ratio = new_lp - mb.logprobs[i];
        let ratio = log_ratio.exp();
        kl += -log_ratio;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        let a = adv[i];
        let unclipped = -a * ratio;
        let clipped_term = -a * ratio.clamp(1.0 - eps, 1.0 + eps);
        pg_loss += unclipped.max(clipped_term);
        // d(term)/d(new_lp): only the unclipped branch carries gradient.
        let g_lp = if unclipped >= clipped_term { -a * ratio * inv_n } else { 0.0 };

        let grow = &mut g_logits[i * logits_dim..(i + 1) * logits_dim];
        let mut offset = 0;
        for (&w, &act) in heads.iter().zip(action) {
            let head = &lps[offset..offset + w];
            let h: f64 = -head.iter().map(|lp| lp.exp() * lp).sum::<f64>();
            ent_sum += h;
            for j in 0..w {
                let p = head[j].exp();
                let onehot = if j == act { 1.0 } else { 0.0 };
                // Policy term.
                grow[offset + j] += g_lp * (onehot - p);
                // Entropy bonus: loss -= c * H, dH/dz_j = -p_j (log p_j + H).
                grow[offset + j] += cfg.entropy_coef * inv_n * p * (head[j] + h);
            }
            offset += w;
        }
    }

    let values = critic.output();
    let mut g_values = vec![0.0; n];
    let mut v_loss = 0.0;
    for i in 0..n {
        let v = values[i];
        let ret = mb.returns[i];
        let err = v - ret;
        if cfg.clip_value_loss {
            let delta = v - mb.values[i];
            let v_clip = mb.values[i] + delta.clamp(-eps, eps);
            let err_clip = v_clip - ret;
            if err * err >= err_clip * err_clip {
                v_loss += err * err;
                g_values[i] = err;
            } else {
                v_loss += err_clip * err_clip;
                g_values[i] = if delta.abs() < eps { err_clip } else { 0.0 };
            }
        } else {
            v_loss += err * err;
            g_values[i] = err;
        }
    }
    v_loss *= 0.5 * inv_n;
    for g in &mut g_values {
        *g *= cfg.value_coef * inv_n;
    }

    let pg_loss = pg_loss * inv_n;
    let entropy = ent_sum * inv_n;
    let total = pg_loss - cfg.entropy_coef * entropy + cfg.value_coef * v_loss;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "ppo loss {total} (policy {pg_loss}, value {v_loss}, entropy {entropy})"
        )));
    }
    let actor_grad = ac.actor.backward(&actor, &g_logits)?.params;
    let critic_grad = ac.critic.backward(&critic, &g_values)?.params;
    Ok(LossEval {
        policy_loss: pg_loss,
        value_loss: v_loss,
        entropy,
        total,
        approx_kl: kl * inv_n,
        clip_frac: clipped as f64 * inv_n,
        advantages: adv,
        actor_grad,
        critic_grad,
    })
}

/// Runs the configured epochs of shuffled minibatch steps over `batch`.
pub fn ppo_update<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    heads: &[usize],
    opt: &mut Adam,
    batch: &Batch,
    cfg: &PpoConfig,
    lr: f64,
    rng: &mut R,
) -> Result<PpoStats> {
    if batch.is_empty() {
        return Err(Error::NoData("empty rollout buffer".into()));
    }
    let n = batch.len();
    let mb_size = (n / cfg.num_minibatches).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats::default();
    'epochs: for _ in 0..cfg.update_epochs {
        order.shuffle(rng);
        for idx in order.chunks(mb_size) {
            let mb = batch.select(idx);
            let eval = ppo_loss(ac, heads, &mb, cfg)?;
            stats.policy_loss = eval.policy_loss;
            stats.value_loss = eval.value_loss;
            stats.entropy = eval.entropy;
            stats.approx_kl = eval.approx_kl;
            stats.clip_frac = eval.clip_frac;
            if let Some(target) = cfg.target_kl {
                if eval.approx_kl > target {
                    stats.early_stopped = true;
                    break 'epochs;
                }
            }
            let LossEval {
                mut actor_grad,
                mut critic_grad,
                ..
            } = eval;
            let ActorCritic { actor, critic } = ac;
            opt.step(
                &mut [
                    (actor.params_mut(), &mut actor_grad[..]),
                    (critic.params_mut(), &mut critic_grad[..]),
                ],
                lr,
                Some(cfg.max_grad_norm),
            )?;
            stats.minibatch_steps += 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::rng::Purpose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets() {
        let i = PpoConfig::ippo();
        assert_eq!((i.learning_rate, i.clip_coef, i.entropy_coef, i.target_kl), (2.5e-4, 0.2, 0.0, None));
        assert_eq!(i.num_minibatches, 4);
        let t = PpoConfig::three_ppo();
        assert_eq!((t.learning_rate, t.clip_coef, t.entropy_coef, t.target_kl), (1e-3, 0.1, 0.01, Some(0.015)));
        assert_eq!(t.num_minibatches, 8);
        assert!(i.validate().is_ok() && t.validate().is_ok());
        let bad = PpoConfig {
            buffer_size: 10,
            num_minibatches: 3,
            ..PpoConfig::ippo()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn normalization_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let adv: Vec<f64> = (0..64).map(|_| rng.gen_range(-3.0..7.0)).collect();
        let z = normalize(&adv);
        let mean = z.iter().sum::<f64>() / 64.0;
        let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 63.0).sqrt();
        assert!(mean.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6);
        assert_eq!(normalize(&[2.5]), vec![2.5]);
    }

    fn batch_for(ac: &ActorCritic, heads: &[usize], n: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = ac.input_dim();
        let obs: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut logprobs = Vec::new();
        let mut actions = Vec::new();
        for i in 0..n {
            let logits = ac.actor.forward(&obs[i * d..(i + 1) * d]).unwrap();
            let lps = log_softmax_heads(&logits, heads);
            let a: Vec<usize> = heads.iter().map(|&w| rng.gen_range(0..w)).collect();
            logprobs.push(crate::agents::log_prob(&lps, heads, &a));
            actions.push(a);
        }
        Batch {
            input_dim: d,
            obs,
            actions,
            logprobs,
            values: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            advantages: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            returns: (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        }
    }

    #[test]
    fn unit_ratio_surrogate_is_mean_advantage() {
        let heads = [3, 2];
        let ac = ActorCritic::new(4, 5, &mut stream(0, Purpose::Init, 0)).unwrap();
        let b = batch_for(&ac, &heads, 16, 1);
        let cfg = PpoConfig {
            normalize_advantage: false,
            ..PpoConfig::three_ppo()
        };
        let e = ppo_loss(&ac, &heads, &b, &cfg).unwrap();
        let mean_adv = b.advantages.iter().sum::<f64>() / 16.0;
        assert!((e.policy_loss + mean_adv).abs() < 1e-12);
        assert_eq!(e.clip_frac, 0.0);
        assert!(e.approx_kl.abs() < 1e-12);
    }

    #[test]
    fn clipped_contribution() {
        // ratio 1.5, clip 0.1, positive advantage: term is -1.1 A.
        let heads = [2];
        let ac = ActorCritic::new(1, 2, &mut stream(0, Purpose::Init, 0)).unwrap();
        let mut b = batch_for(&ac, &heads, 1, 2);
        let lps = log_softmax_heads(&ac.actor.forward(&b.obs).unwrap(), &heads);
        b.logprobs[0] = lps[b.actions[0][0]] - 1.5f64.ln();
        b.advantages[0] = 2.0;
        let cfg = PpoConfig {
            normalize_advantage: false,
            entropy_coef: 0.0,
            ..PpoConfig::three_ppo()
        };
        let e = ppo_loss(&ac, &heads, &b, &cfg).unwrap();
        assert!((e.policy_loss + 1.1 * 2.0).abs() < 1e-12);
        assert!(e.actor_grad.iter().all(|&g| g == 0.0));
        assert_eq!(e.clip_frac, 1.0);
    }

    /// Central differences of the total loss against the analytic gradient.
    #[test]
    fn loss_gradient_matches_finite_differences() {
        let heads = [3, 2];
        let mut ac = ActorCritic::new(4, 5, &mut stream(5, Purpose::Init, 0)).unwrap();
        let mut b = batch_for(&ac, &heads, 12, 3);
        // Move away from ratio 1 so clipping branches are exercised.
        for (i, lp) in b.logprobs.iter_mut().enumerate() {
            *lp += 0.03 * (i as f64 - 6.0);
        }
        let cfg = PpoConfig::three_ppo();
        let e = ppo_loss(&ac, &heads, &b, &cfg).unwrap();
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let actor = rng.gen_bool(0.5);
            let net = if actor { &mut ac.actor } else { &mut ac.critic };
            let k = rng.gen_range(0..net.param_count());
            let orig = net.params()[k];
            net.params_mut()[k] = orig + h;
            let up = ppo_loss(&ac, &heads, &b, &cfg).unwrap().total;
            let net = if actor { &mut ac.actor } else { &mut ac.critic };
            net.params_mut()[k] = orig - h;
            let down = ppo_loss(&ac, &heads, &b, &cfg).unwrap().total;
            let net = if actor { &mut ac.actor } else { &mut ac.critic };
            net.params_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = if actor { e.actor_grad[k] } else { e.critic_grad[k] };
            assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "{actor} {k}: {fd} vs {an}");
        }
    }

    #[test]
    fn zero_advantage_has_no_policy_gradient() {
        let heads = [5];
        let ac = ActorCritic::new(6, 5, &mut stream(1, Purpose::Init, 0)).unwrap();
        let mut b = batch_for(&ac, &heads, 32, 4);
        b.advantages = vec![0.0; 32];
        let cfg = PpoConfig {
            entropy_coef: 0.0,
            ..PpoConfig::ippo()
        };
        let e = ppo_loss(&ac, &heads, &b, &cfg).unwrap();
        assert!(e.actor_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn repeated_updates_decrease_loss() {
        let heads = [3];
        let mut ac = ActorCritic::new(4, 3, &mut stream(2, Purpose::Init, 0)).unwrap();
        let b = batch_for(&ac, &heads, 64, 5);
        let cfg = PpoConfig {
            num_minibatches: 1,
            update_epochs: 1,
            buffer_size: 64,
            target_kl: None,
            ..PpoConfig::three_ppo()
        };
        let mut opt = Adam::new(ac.actor.param_count() + ac.critic.param_count(), crate::net::LrSchedule {
            initial: 1e-3,
            anneal: false,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut prev = ppo_loss(&ac, &heads, &b, &cfg).unwrap().total;
        for _ in 0..3 {
            ppo_update(&mut ac, &heads, &mut opt, &b, &cfg, 1e-3, &mut rng).unwrap();
            let now = ppo_loss(&ac, &heads, &b, &cfg).unwrap().total;
            assert!(now < prev, "{now} !< {prev}");
            prev = now;
        }
    }

    #[test]
    fn early_stop_on_kl() {
        let heads = [4];
        let mut ac = ActorCritic::new(3, 4, &mut stream(3, Purpose::Init, 0)).unwrap();
        let mut b = batch_for(&ac, &heads, 64, 6);
        // Stale log-probabilities far from the current policy.
        for lp in &mut b.logprobs {
            *lp += 0.5;
        }
        let cfg = PpoConfig {
            buffer_size: 64,
            target_kl: Some(0.015),
            ..PpoConfig::three_ppo()
        };
        let mut opt = Adam::new(ac.actor.param_count() + ac.critic.param_count(), crate::net::LrSchedule {
            initial: 1e-3,
            anneal: false,
        });
        let before = ac.clone();
        let s = ppo_update(&mut ac, &heads, &mut opt, &b, &cfg, 1e-3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(s.early_stopped);
        assert_eq!(s.minibatch_steps, 0);
        assert_eq!(ac, before);
    }
}
