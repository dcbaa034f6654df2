//! Frozen-policy evaluation of a finished run on other environments.

use std::path::PathBuf;

use adastack::tabular::{evaluate_greedy, run_policy, select_joint_action, EvalSummary};
use adastack::RngStream;

use crate::config::{EnvConfig, EvalConfig, RunConfig};
use crate::error::{write, HarnessError, Result};
use crate::run::{Checkpoint, Manifest};

pub const EVAL_HEADER: [&str; 5] = ["run_id", "seed", "env", "metric", "value"];

/// Result of one (seed, environment) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCell {
    pub seed: u64,
    pub env: String,
    pub summary: EvalSummary,
}

impl EvalCell {
    /// `(metric, value)` pairs in a fixed order; undefined metrics are left out.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let s = &self.summary;
        let mut out = vec![("episodes", s.episodes as f64), ("steps", s.steps as f64), ("return", s.mean_return)];
        if let Some(v) = s.success() {
            out.push(("success", v));
        }
        if let Some(r) = s.regret {
            out.push(("memory_regret", r.memory));
            out.push(("memory_regret_steps", r.absent_steps as f64));
            out.push(("active_regret", r.active as f64));
            out.push(("passive_regret", r.passive as f64));
        }
        out
    }
}

/// Evaluates one checkpoint on one environment.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, run: &RunConfig, env: &EnvConfig, cfg: &EvalConfig) -> Result<EvalSummary> {
    let mut e = env.build()?;
    let gamma = run.gamma();
    Ok(match ckpt {
        Checkpoint::Q(q) if cfg.greedy => evaluate_greedy(q, e.as_mut(), gamma, cfg.episodes, cfg.max_steps, cfg.seed)?,
        Checkpoint::Q(q) => {
            // run the greedy check once for its dimension validation
            evaluate_greedy(q, e.as_mut(), gamma, 0, 0, cfg.seed)?;
            let eps = run.q.epsilon;
            run_policy(e.as_mut(), q.k, q.memory_mode, gamma, cfg.episodes, cfg.max_steps, cfg.seed, |m, rng: &mut RngStream| {
                Ok(select_joint_action(q, q.key(m)?, eps, rng))
            })?
        }
        Checkpoint::Neural(a) => {
            a.check_env(e.as_ref())?;
            let greedy = cfg.greedy;
            run_policy(e.as_mut(), a.k, a.mode, gamma, cfg.episodes, cfg.max_steps, cfg.seed, |m, rng| {
                if greedy {
                    a.greedy(m)
                } else {
                    Ok(a.act(m, rng)?.joint)
                }
            })?
        }
    })
}

/// Evaluates every seed of `cfg.run_dir` on every environment, writes the
/// CSV and returns its path together with the cells.
pub fn evaluate(cfg: &EvalConfig) -> Result<(PathBuf, Vec<EvalCell>)> {
    if cfg.envs.is_empty() {
        return Err(HarnessError::config("no evaluation environments"));
    }
    if cfg.episodes == 0 {
        return Err(HarnessError::config("episodes must be positive"));
    }
    let run = RunConfig::load(&cfg.run_dir.join("config.toml"))?;
    let manifest = Manifest::load(&cfg.run_dir)?;
    let mut cells = Vec::new();
    for rec in &manifest.seeds {
        let ckpt = Checkpoint::load(manifest.agent, &cfg.run_dir.join(&rec.checkpoint))?;
        for env in &cfg.envs {
            let summary = evaluate_checkpoint(&ckpt, &run, env, cfg)?;
            cells.push(EvalCell {
                seed: rec.seed,
                env: env.label(),
                summary,
            });
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(EVAL_HEADER)?;
    for c in &cells {
        for (metric, v) in c.metrics() {
            w.write_record([manifest.run_id.as_str(), &c.seed.to_string(), &c.env, metric, &v.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::data(e.to_string()))?;
    let out = cfg.output.clone().unwrap_or_else(|| cfg.run_dir.join("eval.csv"));
    write(&out, bytes)?;
    Ok((out, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AgentKind;
    use crate::run::run;
    use adastack::{MemoryMode, Mode};

    fn trained(dir: &std::path::Path) -> PathBuf {
        let mut c = RunConfig::new(
            EnvConfig::PassiveTmaze {
                length: 2,
                mode: Mode::Episodic,
                random_corridor: false,
            },
            AgentKind::Q,
            MemoryMode::AdaptiveStack,
            2,
            vec![3],
        );
        c.total_steps = 30_000;
        c.output = dir.to_path_buf();
        run(&c).unwrap()
    }

    fn eval_cfg(run_dir: PathBuf, envs: Vec<EnvConfig>) -> EvalConfig {
        EvalConfig {
            run_dir,
            envs,
            episodes: 100,
            max_steps: 1_000_000,
            greedy: true,
            seed: 0,
            output: None,
        }
    }

    #[test]
    fn training_length_reproduces_training_success() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = trained(tmp.path());
        let env = EnvConfig::PassiveTmaze {
            length: 2,
            mode: Mode::Episodic,
            random_corridor: false,
        };
        let (path, cells) = evaluate(&eval_cfg(dir, vec![env])).unwrap();
        assert_eq!(cells[0].summary.success(), Some(1.0));
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("run_id,seed,env,metric,value\n"));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = trained(tmp.path());
        let err = evaluate(&eval_cfg(dir, vec![EnvConfig::PocketCube { scramble_depth: 1 }])).unwrap_err();
        assert_eq!(err.kind(), "contract");
    }

    #[test]
    fn missing_run_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(evaluate(&eval_cfg(tmp.path().join("nope"), vec![EnvConfig::Xormaze])).is_err());
    }
}
