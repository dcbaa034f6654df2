use serde::{Deserialize, Serialize};

use super::agent::{NeuralAgent, Stepper};
use super::dist::{entropy, entropy_grad, joint_log_prob, log_prob_grad, softmax};
use super::gae::gae;
use super::optim::{clip_grad_norm, Adam};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::memory::{JointAction, MemoryMode};
use crate::metrics::MetricsLog;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Environment steps per rollout.
    pub n_steps: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    pub k: usize,
    pub memory_mode: MemoryMode,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub log_every: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            n_steps: 128,
            minibatch: 128,
            epochs: 10,
            lr: 3e-4,
            clip: 0.2,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            total_steps: 1_000_000,
            k: 2,
            memory_mode: MemoryMode::AdaptiveStack,
            hidden: vec![128; 3],
            seed: 0,
            log_every: 100,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("gamma must be in (0, 1] and gae_lambda in [0, 1]"));
        }
        if self.n_steps == 0 || self.minibatch == 0 || self.epochs == 0 || self.k == 0 {
            return Err(Error::config("n_steps, minibatch, epochs and k must be positive"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::config(format!("clip must be in (0, 1), got {}", self.clip)));
        }
        if !(self.lr > 0.0) || self.entropy_coef < 0.0 || self.value_coef < 0.0 || !(self.max_grad_norm > 0.0) {
            return Err(Error::config("lr and max_grad_norm must be positive, coefficients non-negative"));
        }
        Ok(())
    }
}

/// Transitions collected under one parameter setting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollout {
    pub inputs: Vec<Vec<f64>>,
    pub joints: Vec<JointAction>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after the last transition.
    pub last_value: f64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let aligned = [self.inputs.len(), self.joints.len(), self.log_probs.len(), self.values.len(), self.dones.len()]
            .iter()
            .all(|&l| l == n);
        if !aligned {
            return Err(Error::contract("rollout fields have different lengths"));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("rollout reward".into()));
        }
        Ok(())
    }
}

/// Loss terms averaged over a minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

impl LossParts {
    pub fn total(&self, cfg: &PpoConfig) -> f64 {
        self.policy + cfg.value_coef * self.value - cfg.entropy_coef * self.entropy
    }
}

/// Loss and its gradient on the rollout entries `idx`:
/// `-min(r A, clip(r) A) + c_v (V - R)^2 - c_e H`, with `r` the joint
/// probability ratio against the stored log-probabilities.
pub fn ppo_loss_grad(agent: &NeuralAgent, rollout: &Rollout, adv: &[f64], returns: &[f64], idx: &[usize], cfg: &PpoConfig) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; agent.net.num_params()];
    let mut parts = LossParts::default();
    if idx.is_empty() {
        return Ok((parts, grad));
    }
    let scale = 1.0 / idx.len() as f64;
    for &t in idx {
        let f = agent.net.forward(&rollout.inputs[t])?;
        let j = rollout.joints[t];
        let pe = softmax(&f.env_logits);
        let pm = softmax(&f.mem_logits);
        let ratio = (joint_log_prob(&f.env_logits, &f.mem_logits, j) - rollout.log_probs[t]).exp();
        let a = adv[t];
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a;
        // d(-surrogate)/d(log pi); zero when the clipped branch is active
        let w = if unclipped <= clipped {
            -a * ratio
        } else {
            parts.clip_fraction += scale;
            0.0
        };
        parts.policy -= unclipped.min(clipped) * scale;
        let h = entropy(&pe) + entropy(&pm);
        parts.entropy += h * scale;
        let err = f.value - returns[t];
        parts.value += err * err * scale;

        let he = entropy_grad(&pe);
        let hm = entropy_grad(&pm);
        let ge: Vec<f64> = log_prob_grad(&pe, j.env_action)
            .iter()
            .zip(&he)
            .map(|(lp, hg)| scale * (w * lp - cfg.entropy_coef * hg))
            .collect();
        let gm: Vec<f64> = log_prob_grad(&pm, j.mem_action - 1)
            .iter()
            .zip(&hm)
            .map(|(lp, hg)| scale * (w * lp - cfg.entropy_coef * hg))
            .collect();
        agent.net.backward(&f, &ge, &gm, scale * cfg.value_coef * 2.0 * err, &mut grad);
    }
    if !parts.total(cfg).is_finite() {
        return Err(Error::NonFinite(format!("ppo loss {parts:?}")));
    }
    Ok((parts, grad))
}

fn normalise(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (sd + 1e-8);
    }
}

/// Runs `epochs` shuffled minibatch passes over one rollout. Returns the
/// loss terms of the final minibatch.
pub fn ppo_update(agent: &mut NeuralAgent, opt: &mut Adam, rollout: &Rollout, cfg: &PpoConfig, rng: &mut RngStream) -> Result<LossParts> {
    rollout.validate()?;
    if rollout.is_empty() {
        return Ok(LossParts::default());
    }
    let (mut adv, returns) = gae(&rollout.rewards, &rollout.values, &rollout.dones, rollout.last_value, cfg.gamma, cfg.gae_lambda);
    normalise(&mut adv);
    let mut order: Vec<usize> = (0..rollout.len()).collect();
    let mut last = LossParts::default();
    for _ in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.below(i + 1));
        }
        for idx in order.chunks(cfg.minibatch) {
            let (parts, mut grad) = ppo_loss_grad(agent, rollout, &adv, &returns, idx, cfg)?;
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(agent.net.params_mut(), &grad);
            last = parts;
        }
    }
    if !agent.net.all_finite() {
        return Err(Error::NonFinite("parameters after ppo update".into()));
    }
    Ok(last)
}

pub fn train_ppo(env: &mut dyn Environment, cfg: &PpoConfig) -> Result<(NeuralAgent, MetricsLog)> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed);
    let mut agent_rng = root.fork(0);
    let mut init_rng = root.fork(4);
    let mut shuffle_rng = root.fork(5);
    let mut agent = NeuralAgent::for_env(env, cfg.k, cfg.memory_mode, &cfg.hidden, &mut init_rng)?;
    let mut opt = Adam::new(agent.net.num_params(), cfg.lr);
    let mut stepper = Stepper::new(env, cfg.k, cfg.memory_mode, cfg.gamma, cfg.seed, cfg.log_every, root.fork(1))?;
    while stepper.steps() < cfg.total_steps {
        let mut ro = Rollout::default();
        for _ in 0..cfg.n_steps {
            if stepper.steps() >= cfg.total_steps {
                break;
            }
            let d = agent.act(&stepper.mem, &mut agent_rng)?;
            let r = stepper.step(d.joint)?;
            ro.inputs.push(d.input);
            ro.joints.push(d.joint);
            ro.log_probs.push(d.log_prob);
            ro.values.push(d.value);
            ro.rewards.push(r.reward);
            ro.dones.push(r.done);
        }
        ro.last_value = agent.net.forward(&agent.encode(&stepper.mem)?)?.value;
        ppo_update(&mut agent, &mut opt, &ro, cfg, &mut shuffle_rng)?;
    }
    Ok((agent, stepper.finish()))
}
