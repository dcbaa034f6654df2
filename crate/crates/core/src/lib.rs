//! Adaptive memory stacks for partially observable reinforcement learning.

pub mod cost;
pub mod env;
pub mod envs;
pub mod error;
pub mod memory;
pub mod metrics;
pub mod neural;
pub mod oracle;
pub mod rng;
pub mod tabular;

pub use env::{CueAnnotation, EnvSpec, Environment, Mode, ObsSpace, Observation, StepResult};
pub use error::{Error, Result};
pub use memory::{JointAction, MemOp, MemoryMode, MemoryStack, MemoryState, StackKey};
pub use rng::RngStream;
