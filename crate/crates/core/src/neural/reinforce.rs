use serde::{Deserialize, Serialize};

use super::agent::{NeuralAgent, Stepper};
use super::dist::{entropy, entropy_grad, log_prob_grad, softmax};
use super::optim::{clip_grad_norm, Adam};
use crate::env::{Environment, Mode};
use crate::error::{Error, Result};
use crate::memory::{JointAction, MemoryMode};
use crate::metrics::MetricsLog;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinforceConfig {
    pub gamma: f64,
    pub lr: f64,
    /// Entropy bonus weight.
    pub entropy_coef: f64,
    /// Decay the entropy weight linearly to zero over training.
    pub anneal_entropy: bool,
    /// Episodes per update.
    pub batch_episodes: usize,
    /// Subtract the batch mean episode return from every return.
    pub baseline: bool,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    pub k: usize,
    pub memory_mode: MemoryMode,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub log_every: u64,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-3,
            entropy_coef: 0.01,
            anneal_entropy: true,
            batch_episodes: 8,
            baseline: true,
            max_grad_norm: 0.5,
            total_steps: 200_000,
            k: 2,
            memory_mode: MemoryMode::AdaptiveStack,
            hidden: vec![128; 3],
            seed: 0,
            log_every: 100,
        }
    }
}

impl ReinforceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if !(self.lr > 0.0) || self.entropy_coef < 0.0 || self.batch_episodes == 0 || self.k == 0 {
            return Err(Error::config("reinforce needs lr > 0, entropy_coef >= 0, batch_episodes >= 1, k >= 1"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::config("max_grad_norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub input: Vec<f64>,
    pub joint: JointAction,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
}

impl Episode {
    /// Discounted return from every step onwards.
    pub fn returns(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len()];
        let mut g = 0.0;
        for (t, s) in self.steps.iter().enumerate().rev() {
            g = s.reward + gamma * g;
            out[t] = g;
        }
        out
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.returns(gamma).first().copied().unwrap_or(0.0)
    }
}

/// Gradient of the loss `-(1/N) sum_episodes sum_t [log pi(a_t|s_t) (G_t - b) + beta H(s_t)]`.
pub fn reinforce_gradient(agent: &NeuralAgent, episodes: &[Episode], gamma: f64, entropy_coef: f64, baseline: bool) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; agent.net.num_params()];
    if episodes.is_empty() {
        return Ok(grad);
    }
    let b = if baseline {
        episodes.iter().map(|e| e.discounted_return(gamma)).sum::<f64>() / episodes.len() as f64
    } else {
        0.0
    };
    let scale = 1.0 / episodes.len() as f64;
    for ep in episodes {
        for (s, g) in ep.steps.iter().zip(ep.returns(gamma)) {
            let f = agent.net.forward(&s.input)?;
            let pe = softmax(&f.env_logits);
            let pm = softmax(&f.mem_logits);
            let w = -(g - b) * scale;
            let he = entropy_grad(&pe);
            let hm = entropy_grad(&pm);
            let ge: Vec<f64> = log_prob_grad(&pe, s.joint.env_action)
                .iter()
                .zip(&he)
                .map(|(lp, h)| w * lp - entropy_coef * scale * h)
                .collect();
            let gm: Vec<f64> = log_prob_grad(&pm, s.joint.mem_action - 1)
                .iter()
                .zip(&hm)
                .map(|(lp, h)| w * lp - entropy_coef * scale * h)
                .collect();
            agent.net.backward(&f, &ge, &gm, 0.0, &mut grad);
        }
    }
    Ok(grad)
}

/// Mean entropy of both heads over the states visited in `episodes`.
pub fn mean_entropy(agent: &NeuralAgent, episodes: &[Episode]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in episodes.iter().flat_map(|e| &e.steps) {
        let f = agent.net.forward(&s.input)?;
        total += entropy(&softmax(&f.env_logits)) + entropy(&softmax(&f.mem_logits));
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// Applies one gradient step on a batch of episodes.
pub fn reinforce_update(agent: &mut NeuralAgent, opt: &mut Adam, episodes: &[Episode], cfg: &ReinforceConfig, entropy_coef: f64) -> Result<()> {
    let mut grad = reinforce_gradient(agent, episodes, cfg.gamma, entropy_coef, cfg.baseline)?;
    clip_grad_norm(&mut grad, cfg.max_grad_norm);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("reinforce gradient".into()));
    }
    opt.step(agent.net.params_mut(), &grad);
    Ok(())
}

/// Samples one full episode from the agent's policy.
pub fn sample_episode(agent: &NeuralAgent, env: &mut dyn Environment, agent_rng: &mut RngStream, env_rng: &mut RngStream) -> Result<Episode> {
    let mut mem = crate::memory::MemoryState::new(env.reset(env_rng), agent.k)?;
    let mut ep = Episode::default();
    loop {
        let d = agent.act(&mem, agent_rng)?;
        let r = env.step(d.joint.env_action, env_rng)?;
        ep.steps.push(EpisodeStep {
            input: d.input,
            joint: d.joint,
            reward: r.reward,
        });
        if r.done {
            return Ok(ep);
        }
        mem = mem.apply(agent.mode, d.joint.mem_action, r.next_obs)?.0;
    }
}

pub fn train_reinforce(env: &mut dyn Environment, cfg: &ReinforceConfig) -> Result<(NeuralAgent, MetricsLog)> {
    cfg.validate()?;
    if env.spec().mode != Mode::Episodic {
        return Err(Error::unsupported("Monte Carlo policy gradient needs an episodic environment"));
    }
    let root = RngStream::new(cfg.seed);
    let mut agent_rng = root.fork(0);
    let mut init_rng = root.fork(4);
    let mut agent = NeuralAgent::for_env(env, cfg.k, cfg.memory_mode, &cfg.hidden, &mut init_rng)?;
    let mut opt = Adam::new(agent.net.num_params(), cfg.lr);
    let mut stepper = Stepper::new(env, cfg.k, cfg.memory_mode, cfg.gamma, cfg.seed, cfg.log_every, root.fork(1))?;
    let mut batch = Vec::new();
    let mut current = Episode::default();
    while stepper.steps() < cfg.total_steps {
        let d = agent.act(&stepper.mem, &mut agent_rng)?;
        let r = stepper.step(d.joint)?;
        current.steps.push(EpisodeStep {
            input: d.input,
            joint: d.joint,
            reward: r.reward,
        });
        if r.done {
            batch.push(std::mem::take(&mut current));
            if batch.len() == cfg.batch_episodes {
                let progress = stepper.steps() as f64 / cfg.total_steps as f64;
                let beta = if cfg.anneal_entropy { cfg.entropy_coef * (1.0 - progress).max(0.0) } else { cfg.entropy_coef };
                reinforce_update(&mut agent, &mut opt, &batch, cfg, beta)?;
                batch.clear();
            }
        }
    }
    Ok((agent, stepper.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_passive_tmaze, TMazeConfig};
    use crate::neural::mlp::StackEncoder;

    fn small_agent(seed: u64) -> NeuralAgent {
        let mut rng = RngStream::new(seed);
        NeuralAgent::new(StackEncoder::OneHot { alphabet: 4 }, 2, MemoryMode::AdaptiveStack, 4, &[16, 16], &mut rng).unwrap()
    }

    fn episode(agent: &NeuralAgent, seed: u64) -> Episode {
        let mut env = make_passive_tmaze(TMazeConfig::passive(1, Mode::Episodic)).unwrap();
        let mut a = RngStream::new(seed);
        let mut e = RngStream::new(seed + 1);
        sample_episode(agent, &mut env, &mut a, &mut e).unwrap()
    }

    #[test]
    fn returns_are_discounted_suffix_sums() {
        let mut ep = Episode::default();
        for r in [0.0, 1.0, 2.0] {
            ep.steps.push(EpisodeStep {
                input: vec![],
                joint: JointAction {
                    env_action: 0,
                    mem_action: 1,
                },
                reward: r,
            });
        }
        assert_eq!(ep.returns(0.5), vec![1.0, 2.0, 2.0]);
        assert_eq!(ep.discounted_return(0.5), 1.0);
    }

    #[test]
    fn zero_rewards_give_zero_gradient() {
        let agent = small_agent(0);
        let mut ep = episode(&agent, 3);
        for s in &mut ep.steps {
            s.reward = 0.0;
        }
        let g = reinforce_gradient(&agent, &[ep], 0.99, 0.0, false).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn entropy_only_update_raises_entropy() {
        let mut agent = small_agent(1);
        // sharpen the policy so there is entropy to gain
        for p in agent.net.params_mut() {
            *p *= 4.0;
        }
        let mut eps: Vec<Episode> = (0..4).map(|i| episode(&agent, 10 + i)).collect();
        for s in eps.iter_mut().flat_map(|e| &mut e.steps) {
            s.reward = 0.0;
        }
        let before = mean_entropy(&agent, &eps).unwrap();
        let g = reinforce_gradient(&agent, &eps, 0.99, 1.0, false).unwrap();
        for (p, gi) in agent.net.params_mut().iter_mut().zip(&g) {
            *p -= 1e-2 * gi;
        }
        assert!(mean_entropy(&agent, &eps).unwrap() > before);
    }

    #[test]
    fn continual_environment_is_rejected() {
        let mut env = make_passive_tmaze(TMazeConfig::passive(1, Mode::Continual)).unwrap();
        let cfg = ReinforceConfig {
            total_steps: 10,
            ..Default::default()
        };
        assert_eq!(train_reinforce(&mut env, &cfg).unwrap_err().kind(), "unsupported");
    }

    #[test]
    fn learns_the_shortest_maze() {
        let mut env = make_passive_tmaze(TMazeConfig::passive(0, Mode::Episodic)).unwrap();
        let cfg = ReinforceConfig {
            total_steps: 6_000,
            hidden: vec![32, 32],
            lr: 3e-3,
            ..Default::default()
        };
        let (_, log) = train_reinforce(&mut env, &cfg).unwrap();
        let s = crate::metrics::final_success(&log, 0.1).unwrap();
        assert!(s > 0.9, "final success {s}");
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = ReinforceConfig {
            total_steps: 500,
            hidden: vec![8],
            ..Default::default()
        };
        let run = || {
            let mut env = make_passive_tmaze(TMazeConfig::passive(1, Mode::Episodic)).unwrap();
            train_reinforce(&mut env, &cfg).unwrap()
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }
}
