//! Returns, success rates and the cue-based memory regrets.
//!
//! Regrets are tracked with a tag per stack slot recording which goal cue
//! (if any) the slot holds. A cue instance counts as *stored* once it has
//! survived one memory update after being pushed.
//!
//! * memory regret: fraction of steps, after every required cue of the
//!   current period has been observed, where some required cue is missing
//!   from the stack the agent acts on;
//! * active regret: a cue instance that was never stored is dropped and no
//!   other copy of that cue remains;
//! * passive regret: a stored cue instance is evicted and no other copy
//!   remains.
//!
//! Steps that start a new period (a respawn) never count as active or
//! passive regret.

use serde::{Deserialize, Serialize};

use crate::env::{CueAnnotation, Observation, StepResult};
use crate::error::{Error, Result};
use crate::memory::{JointAction, MemOp, MemoryStack};

/// `sum_t gamma^t r_{t+1}`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// `oracle_value - mean(returns)`, floored at zero.
pub fn reward_regret(returns: &[f64], oracle_value: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::contract("reward regret of an empty return list"));
    }
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    Ok((oracle_value - mean).max(0.0))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CueTag {
    period: u64,
    cue: u8,
    stored: bool,
}

/// What one memory update did to the goal cues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepRegret {
    /// Every required cue had been observed before this step.
    pub eligible: bool,
    /// Some required cue was missing from the stack acted on.
    pub absent: bool,
    pub active: bool,
    pub passive: bool,
}

#[derive(Debug, Clone)]
pub struct CueTracker {
    tags: Vec<Option<CueTag>>,
    period: u64,
    num_cues: u8,
    seen: u32,
}

fn tag_of(a: &CueAnnotation) -> Option<CueTag> {
    a.visible.map(|cue| CueTag {
        period: a.period,
        cue,
        stored: false,
    })
}

impl CueTracker {
    /// Tracker for a stack initialised with `k` copies of the observation
    /// described by `first`.
    pub fn new(k: usize, first: CueAnnotation) -> Self {
        let tag = tag_of(&first);
        Self {
            tags: vec![tag; k],
            period: first.period,
            num_cues: first.num_cues,
            seen: tag.map_or(0, |t| 1 << t.cue),
        }
    }

    fn all_seen(&self) -> bool {
        self.seen.count_ones() as u8 >= self.num_cues
    }

    fn holds(&self, cue: u8) -> bool {
        self.tags
            .iter()
            .flatten()
            .any(|t| t.period == self.period && t.cue == cue)
    }

    /// Every required cue of the current period is in the stack.
    pub fn cues_present(&self) -> bool {
        (0..self.num_cues).all(|c| self.holds(c))
    }

    /// Regret flags for the last step of an episode, whose memory update is
    /// discarded with the stack.
    pub fn terminal(&self) -> StepRegret {
        let eligible = self.all_seen();
        StepRegret {
            eligible,
            absent: eligible && !self.cues_present(),
            ..StepRegret::default()
        }
    }

    /// Applies the memory update `op`, where `next` describes the incoming
    /// observation. Regret flags refer to the stack before the update.
    pub fn update(&mut self, op: MemOp, next: CueAnnotation) -> StepRegret {
        let eligible = self.all_seen();
        let absent = eligible && !self.cues_present();
        let incoming = tag_of(&next);
        let removed = match op {
            MemOp::Pop(i) => {
                let r = self.tags.remove(i - 1);
                for t in self.tags.iter_mut().flatten() {
                    t.stored = true;
                }
                self.tags.push(incoming);
                r
            }
            MemOp::Skip => {
                for t in self.tags.iter_mut().flatten() {
                    t.stored = true;
                }
                incoming
            }
        };

        let mut out = StepRegret {
            eligible,
            absent,
            ..StepRegret::default()
        };
        if next.period != self.period {
            self.period = next.period;
            self.seen = 0;
        } else if let Some(r) = removed {
            if r.period == self.period && !self.holds(r.cue) {
                if r.stored {
                    out.passive = true;
                } else {
                    out.active = true;
                }
            }
        }
        // a skipped observation is seen even if it is not kept
        if let Some(t) = incoming {
            if t.period == self.period {
                self.seen |= 1 << t.cue;
            }
        }
        out
    }
}

/// One environment step as seen by the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub stack_before: MemoryStack,
    pub joint: JointAction,
    pub op: MemOp,
    pub obs_next: Observation,
    pub reward: f64,
    /// Cue bookkeeping for `obs_next`.
    pub cue_next: CueAnnotation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretSummary {
    /// Fraction of eligible steps with a missing cue (0 if none eligible).
    pub memory: f64,
    pub absent_steps: u64,
    pub eligible_steps: u64,
    pub active: u64,
    pub passive: u64,
}

/// Replays a trace that started from a stack of `k` copies of the
/// observation described by `first`.
pub fn regrets(first: Option<CueAnnotation>, k: usize, trace: &[TraceStep]) -> Result<RegretSummary> {
    let first = first.ok_or_else(|| Error::unsupported("regrets need a cue-based environment"))?;
    let mut tracker = CueTracker::new(k, first);
    let mut acc = RegretAccumulator::default();
    for step in trace {
        acc.add(tracker.update(step.op, step.cue_next));
    }
    Ok(acc.summary())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RegretAccumulator {
    pub absent_steps: u64,
    pub eligible_steps: u64,
    pub active: u64,
    pub passive: u64,
}

impl RegretAccumulator {
    pub fn add(&mut self, r: StepRegret) {
        self.eligible_steps += u64::from(r.eligible);
        self.absent_steps += u64::from(r.absent);
        self.active += u64::from(r.active);
        self.passive += u64::from(r.passive);
    }

    pub fn summary(&self) -> RegretSummary {
        RegretSummary {
            memory: if self.eligible_steps == 0 {
                0.0
            } else {
                self.absent_steps as f64 / self.eligible_steps as f64
            },
            absent_steps: self.absent_steps,
            eligible_steps: self.eligible_steps,
            active: self.active,
            passive: self.passive,
        }
    }
}

/// One logging window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Environment steps taken when the row was written.
    pub step: u64,
    pub seed: u64,
    /// Sum of rewards within the window.
    pub total_reward: f64,
    /// Goal periods (or episodes) that ended within the window.
    pub periods: u64,
    /// Mean discounted return of those periods.
    pub period_return: Option<f64>,
    pub goals: u64,
    pub successes: u64,
    pub reward_regret: Option<f64>,
    pub memory_regret: Option<f64>,
    pub memory_regret_steps: Option<u64>,
    pub active_regret: Option<u64>,
    pub passive_regret: Option<u64>,
}

impl MetricsRow {
    pub fn success(&self) -> Option<f64> {
        (self.goals > 0).then(|| self.successes as f64 / self.goals as f64)
    }

    /// `(metric, value)` pairs in a fixed order; undefined metrics are
    /// left out.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![("total_reward", self.total_reward), ("periods", self.periods as f64)];
        let optional = [
            ("return", self.period_return),
            ("success", self.success()),
            ("reward_regret", self.reward_regret),
            ("memory_regret", self.memory_regret),
            ("memory_regret_steps", self.memory_regret_steps.map(|v| v as f64)),
            ("active_regret", self.active_regret.map(|v| v as f64)),
            ("passive_regret", self.passive_regret.map(|v| v as f64)),
        ];
        out.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
        out
    }
}

pub type MetricsLog = Vec<MetricsRow>;

/// Success rate pooled over the last `fraction` of the logged steps.
pub fn final_success(log: &[MetricsRow], fraction: f64) -> Option<f64> {
    let last = log.last()?.step as f64;
    let cutoff = last * (1.0 - fraction);
    let (s, g) = log
        .iter()
        .filter(|r| r.step as f64 > cutoff)
        .fold((0u64, 0u64), |(s, g), r| (s + r.successes, g + r.goals));
    (g > 0).then(|| s as f64 / g as f64)
}

/// Mean of `metric` over the last `fraction` of the logged steps.
pub fn final_mean(log: &[MetricsRow], metric: &str, fraction: f64) -> Option<f64> {
    let last = log.last()?.step as f64;
    let cutoff = last * (1.0 - fraction);
    let vals: Vec<f64> = log
        .iter()
        .filter(|r| r.step as f64 > cutoff)
        .filter_map(|r| r.metrics().into_iter().find(|(k, _)| *k == metric).map(|(_, v)| v))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Streams steps into windowed [`MetricsRow`]s.
#[derive(Debug, Clone)]
pub struct MetricsLogger {
    log_every: u64,
    gamma: f64,
    seed: u64,
    optimal_period_value: Option<f64>,
    track_cues: bool,
    step: u64,
    // current period
    period_return: f64,
    period_discount: f64,
    // current window
    total_reward: f64,
    returns: Vec<f64>,
    goals: u64,
    successes: u64,
    regret: RegretAccumulator,
    rows: MetricsLog,
}

impl MetricsLogger {
    pub fn new(log_every: u64, gamma: f64, seed: u64, optimal_period_value: Option<f64>, track_cues: bool) -> Self {
        Self {
            log_every: log_every.max(1),
            gamma,
            seed,
            optimal_period_value,
            track_cues,
            step: 0,
            period_return: 0.0,
            period_discount: 1.0,
            total_reward: 0.0,
            returns: Vec::new(),
            goals: 0,
            successes: 0,
            regret: RegretAccumulator::default(),
            rows: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn record(&mut self, r: &StepResult, regret: Option<StepRegret>) {
        self.step += 1;
        self.total_reward += r.reward;
        self.period_return += self.period_discount * r.reward;
        self.period_discount *= self.gamma;
        if let Some(ok) = r.goal {
            self.goals += 1;
            self.successes += u64::from(ok);
        }
        if r.goal.is_some() || r.done {
            self.returns.push(self.period_return);
            self.period_return = 0.0;
            self.period_discount = 1.0;
        }
        if let Some(reg) = regret {
            self.regret.add(reg);
        }
        if self.step.is_multiple_of(self.log_every) {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let period_return = (!self.returns.is_empty())
            .then(|| self.returns.iter().sum::<f64>() / self.returns.len() as f64);
        let reward_regret = match (self.optimal_period_value, self.returns.is_empty()) {
            (Some(v), false) => reward_regret(&self.returns, v).ok(),
            _ => None,
        };
        let summary = self.regret.summary();
        let cues = self.track_cues;
        self.rows.push(MetricsRow {
            step: self.step,
            seed: self.seed,
            total_reward: self.total_reward,
            periods: self.returns.len() as u64,
            period_return,
            goals: self.goals,
            successes: self.successes,
            reward_regret,
            memory_regret: cues.then_some(summary.memory),
            memory_regret_steps: cues.then_some(summary.absent_steps),
            active_regret: cues.then_some(summary.active),
            passive_regret: cues.then_some(summary.passive),
        });
        self.total_reward = 0.0;
        self.returns.clear();
        self.goals = 0;
        self.successes = 0;
        self.regret = RegretAccumulator::default();
    }

    /// Flushes a trailing partial window, if any, and returns the log.
    pub fn finish(mut self) -> MetricsLog {
        if !self.step.is_multiple_of(self.log_every) {
            self.flush();
        }
        self.rows
    }
}
