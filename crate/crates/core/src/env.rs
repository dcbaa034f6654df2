//! The environment contract shared by every task.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One observation: a symbol from a finite alphabet, or a real vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Observation {
    Symbol(u16),
    Vector(Vec<f64>),
}

impl Observation {
    pub fn symbol(&self) -> Option<u16> {
        match self {
            Observation::Symbol(s) => Some(*s),
            Observation::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Observation::Vector(v) => Some(v),
            Observation::Symbol(_) => None,
        }
    }
}

// Vectors compare bitwise so stacks can be hashed.
impl PartialEq for Observation {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Observation::Symbol(a), Observation::Symbol(b)) => a == b,
            (Observation::Vector(a), Observation::Vector(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

impl Eq for Observation {}

impl Hash for Observation {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Observation::Symbol(s) => {
                0u8.hash(state);
                s.hash(state);
            }
            Observation::Vector(v) => {
                1u8.hash(state);
                for x in v {
                    x.to_bits().hash(state);
                }
            }
        }
    }
}

impl From<u16> for Observation {
    fn from(s: u16) -> Self {
        Observation::Symbol(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Episodic,
    Continual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsSpace {
    Discrete { alphabet_size: usize },
    Continuous { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub obs: ObsSpace,
    pub num_env_actions: usize,
    pub mode: Mode,
    /// Episode length cap (episodic) or nominal lifetime (continual).
    pub horizon: usize,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_env_actions < 2 {
            return Err(Error::config(format!(
                "{}: need at least 2 actions, got {}",
                self.name, self.num_env_actions
            )));
        }
        if self.horizon < 1 {
            return Err(Error::config(format!("{}: horizon must be >= 1", self.name)));
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> Option<usize> {
        match self.obs {
            ObsSpace::Discrete { alphabet_size } => Some(alphabet_size),
            ObsSpace::Continuous { .. } => None,
        }
    }

    /// Checks an observation against the declared space.
    pub fn check_obs(&self, obs: &Observation) -> bool {
        match (self.obs, obs) {
            (ObsSpace::Discrete { alphabet_size }, Observation::Symbol(s)) => {
                (*s as usize) < alphabet_size
            }
            (ObsSpace::Continuous { dim }, Observation::Vector(v)) => v.len() == dim,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// `Some(true)` on a correct goal transition, `Some(false)` on a wrong
    /// one, `None` on every other step.
    pub goal: Option<bool>,
}

/// Ground-truth cue bookkeeping for the most recently emitted observation.
///
/// A *period* is the stretch between two goal transitions; continual tasks
/// resample their cue at every respawn, which starts a new period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CueAnnotation {
    pub period: u64,
    /// How many distinct cues the agent must hold to act optimally.
    pub num_cues: u8,
    /// Which cue (if any) the latest observation reveals.
    pub visible: Option<u8>,
}

/// Abstract environment loop: `reset` once, then `step` until done.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    fn reset(&mut self, rng: &mut RngStream) -> Observation;

    fn step(&mut self, action: usize, rng: &mut RngStream) -> Result<StepResult>;

    /// Cue symbol(s) governing the current goal period.
    fn goal_cue(&self) -> Result<Vec<Observation>> {
        Err(Error::unsupported(format!(
            "{} has no goal cue",
            self.spec().name
        )))
    }

    fn cue_annotation(&self) -> Option<CueAnnotation> {
        None
    }

    /// Best achievable discounted return of one goal period, when known in
    /// closed form.
    fn optimal_period_value(&self, _gamma: f64) -> Option<f64> {
        None
    }

    /// Minimal history length making the task Markov (`None` = unbounded).
    fn k_star(&self) -> Option<usize> {
        None
    }

    /// Minimal stack capacity that still admits an optimal policy.
    fn kappa(&self) -> Option<usize> {
        None
    }
}

pub(crate) fn check_action(spec: &EnvSpec, action: usize) -> Result<()> {
    if action >= spec.num_env_actions {
        Err(Error::contract(format!(
            "{}: action {action} out of range (num actions {})",
            spec.name, spec.num_env_actions
        )))
    } else {
        Ok(())
    }
}
