use std::path::Path;

use super::dist::{joint_log_prob, mode_action, sample_action};
use super::mlp::{NetShape, PolicyNet, StackEncoder};
use crate::env::{Environment, ObsSpace, StepResult};
use crate::error::{Error, Result};
use crate::memory::{JointAction, MemoryMode, MemoryState};
use crate::metrics::{CueTracker, MetricsLog, MetricsLogger};
use crate::rng::RngStream;

/// A policy network bound to a stack length, memory mode and input encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralAgent {
    pub net: PolicyNet,
    pub encoder: StackEncoder,
    pub k: usize,
    pub mode: MemoryMode,
}

/// One sampled decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub input: Vec<f64>,
    pub joint: JointAction,
    pub log_prob: f64,
    pub value: f64,
}

pub fn encoder_for(spec_obs: ObsSpace) -> StackEncoder {
    match spec_obs {
        ObsSpace::Discrete { alphabet_size } => StackEncoder::OneHot { alphabet: alphabet_size },
        ObsSpace::Continuous { dim } => StackEncoder::Vector { dim },
    }
}

impl NeuralAgent {
    pub fn new(encoder: StackEncoder, k: usize, mode: MemoryMode, num_env_actions: usize, hidden: &[usize], rng: &mut RngStream) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        let shape = NetShape {
            input: encoder.input_dim(k),
            hidden: hidden.to_vec(),
            env_out: num_env_actions,
            mem_out: mode.num_mem_actions(k),
        };
        Ok(Self {
            net: PolicyNet::new(shape, rng)?,
            encoder,
            k,
            mode,
        })
    }

    pub fn for_env(env: &dyn Environment, k: usize, mode: MemoryMode, hidden: &[usize], rng: &mut RngStream) -> Result<Self> {
        let spec = env.spec();
        Self::new(encoder_for(spec.obs), k, mode, spec.num_env_actions, hidden, rng)
    }

    /// Errors if the environment does not match the agent's input or action sizes.
    pub fn check_env(&self, env: &dyn Environment) -> Result<()> {
        let spec = env.spec();
        if encoder_for(spec.obs) != self.encoder || spec.num_env_actions != self.net.shape().env_out {
            return Err(Error::contract(format!(
                "agent ({:?}, {} actions) does not fit environment {}",
                self.encoder,
                self.net.shape().env_out,
                spec.name
            )));
        }
        Ok(())
    }

    pub fn encode(&self, m: &MemoryState) -> Result<Vec<f64>> {
        if m.stack.capacity() != self.k {
            return Err(Error::contract(format!("stack has {} slots, agent expects {}", m.stack.capacity(), self.k)));
        }
        self.encoder.encode(&m.stack)
    }

    pub fn act(&self, m: &MemoryState, rng: &mut RngStream) -> Result<Decision> {
        let input = self.encode(m)?;
        let f = self.net.forward(&input)?;
        let joint = sample_action(&f.env_logits, &f.mem_logits, rng);
        Ok(Decision {
            log_prob: joint_log_prob(&f.env_logits, &f.mem_logits, joint),
            value: f.value,
            joint,
            input,
        })
    }

    /// The most probable action of each head.
    pub fn greedy(&self, m: &MemoryState) -> Result<JointAction> {
        let f = self.net.forward(&self.encode(m)?)?;
        Ok(mode_action(&f.env_logits, &f.mem_logits))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.push(mode_code(self.mode));
        let (kind, width) = match self.encoder {
            StackEncoder::OneHot { alphabet } => (0u8, alphabet),
            StackEncoder::Vector { dim } => (1u8, dim),
        };
        out.push(kind);
        out.extend_from_slice(&(width as u32).to_le_bytes());
        let s = self.net.shape();
        let mut widths = vec![s.input];
        widths.extend(&s.hidden);
        widths.extend([s.env_out, s.mem_out]);
        out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for w in widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.net.num_params() as u64).to_le_bytes());
        for p in self.net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let k = r.u32()? as usize;
        let mode = mode_from_code(r.u8()?)?;
        let kind = r.u8()?;
        let width = r.u32()? as usize;
        let encoder = match kind {
            0 => StackEncoder::OneHot { alphabet: width },
            1 => StackEncoder::Vector { dim: width },
            other => return Err(Error::Checkpoint(format!("unknown encoder kind {other}"))),
        };
        let n = r.u32()? as usize;
        if !(4..=64).contains(&n) {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        let widths: Vec<usize> = (0..n).map(|_| r.u32().map(|w| w as usize)).collect::<Result<_>>()?;
        let shape = NetShape {
            input: widths[0],
            hidden: widths[1..n - 2].to_vec(),
            env_out: widths[n - 2],
            mem_out: widths[n - 1],
        };
        if shape.input != encoder.input_dim(k) || shape.mem_out != mode.num_mem_actions(k) {
            return Err(Error::Checkpoint("header dimensions are inconsistent".into()));
        }
        let mut net = PolicyNet::zeros(shape).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let count = r.u64()? as usize;
        if count != net.num_params() {
            return Err(Error::Checkpoint(format!("expected {} parameters, header says {count}", net.num_params())));
        }
        let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        net.set_params(params)?;
        if !net.all_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(Self { net, encoder, k, mode })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Checkpoint layout, all integers little-endian:
///
/// ```text
/// magic      8 bytes  "ADSTKNN1"
/// k          u32
/// mode       u8       0 fs, 1 as, 2 demir, 3 demir-im
/// encoder    u8       0 one-hot, 1 vector
/// width      u32      alphabet size or vector length
/// n          u32      number of layer widths
/// widths     n x u32  input, hidden..., env head, memory head
/// count      u64      number of parameters
/// params     count x f64
/// ```
///
/// Parameters are stored layer by layer (trunk, env head, memory head,
/// value head), each as a row-major `out x in` weight matrix followed by
/// its bias vector.
pub const MAGIC: &[u8; 8] = b"ADSTKNN1";

fn mode_code(m: MemoryMode) -> u8 {
    match m {
        MemoryMode::FrameStack => 0,
        MemoryMode::AdaptiveStack => 1,
        MemoryMode::Demir => 2,
        MemoryMode::DemirIm => 3,
    }
}

fn mode_from_code(c: u8) -> Result<MemoryMode> {
    Ok(match c {
        0 => MemoryMode::FrameStack,
        1 => MemoryMode::AdaptiveStack,
        2 => MemoryMode::Demir,
        3 => MemoryMode::DemirIm,
        other => return Err(Error::Checkpoint(format!("unknown memory mode code {other}"))),
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Drives an environment with joint actions, keeping the stack, cue
/// tracking and metrics in step.
pub(crate) struct Stepper<'a> {
    pub env: &'a mut dyn Environment,
    pub mem: MemoryState,
    k: usize,
    mode: MemoryMode,
    tracker: Option<CueTracker>,
    logger: MetricsLogger,
    rng: RngStream,
}

impl<'a> Stepper<'a> {
    pub fn new(env: &'a mut dyn Environment, k: usize, mode: MemoryMode, gamma: f64, seed: u64, log_every: u64, mut rng: RngStream) -> Result<Self> {
        let logger = MetricsLogger::new(log_every, gamma, seed, env.optimal_period_value(gamma), env.cue_annotation().is_some());
        let mem = MemoryState::new(env.reset(&mut rng), k)?;
        let tracker = env.cue_annotation().map(|a| CueTracker::new(k, a));
        Ok(Self {
            env,
            mem,
            k,
            mode,
            tracker,
            logger,
            rng,
        })
    }

    pub fn step(&mut self, joint: JointAction) -> Result<StepResult> {
        let r = self.env.step(joint.env_action, &mut self.rng)?;
        let (next, op) = self.mem.apply(self.mode, joint.mem_action, r.next_obs.clone())?;
        let regret = match (self.tracker.as_mut(), self.env.cue_annotation()) {
            (Some(t), Some(_)) if r.done => Some(t.terminal()),
            (Some(t), Some(a)) => Some(t.update(op, a)),
            _ => None,
        };
        self.logger.record(&r, regret);
        if r.done {
            self.mem = MemoryState::new(self.env.reset(&mut self.rng), self.k)?;
            self.tracker = self.env.cue_annotation().map(|a| CueTracker::new(self.k, a));
        } else {
            self.mem = next;
        }
        Ok(r)
    }

    pub fn steps(&self) -> u64 {
        self.logger.steps()
    }

    pub fn finish(self) -> MetricsLog {
        self.logger.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Mode, Observation};
    use crate::envs::{make_passive_tmaze, make_velocity_cartpole, CartPoleConfig, TMazeConfig};

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = RngStream::new(5);
        for mode in [MemoryMode::AdaptiveStack, MemoryMode::FrameStack, MemoryMode::Demir] {
            let a = NeuralAgent::new(StackEncoder::OneHot { alphabet: 4 }, 3, mode, 4, &[8, 8], &mut rng).unwrap();
            let b = NeuralAgent::from_bytes(&a.to_bytes()).unwrap();
            assert_eq!(a, b);
        }
        let c = NeuralAgent::new(StackEncoder::Vector { dim: 2 }, 2, MemoryMode::AdaptiveStack, 2, &[4, 4, 4], &mut rng).unwrap();
        let dir = tempfile_dir();
        let path = dir.join("c.bin");
        c.save(&path).unwrap();
        assert_eq!(NeuralAgent::load(&path).unwrap(), c);
        std::fs::remove_dir_all(dir).unwrap();
    }

    fn tempfile_dir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("adastack-agent-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let mut rng = RngStream::new(5);
        let a = NeuralAgent::new(StackEncoder::OneHot { alphabet: 4 }, 2, MemoryMode::AdaptiveStack, 4, &[8], &mut rng).unwrap();
        let bytes = a.to_bytes();
        assert!(NeuralAgent::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(NeuralAgent::from_bytes(&bad).unwrap_err().kind(), "checkpoint");
        let mut extra = bytes;
        extra.push(0);
        assert!(NeuralAgent::from_bytes(&extra).is_err());
    }

    #[test]
    fn agent_checks_its_environment() {
        let mut rng = RngStream::new(0);
        let maze = make_passive_tmaze(TMazeConfig::passive(1, Mode::Episodic)).unwrap();
        let pole = make_velocity_cartpole(CartPoleConfig::default()).unwrap();
        let a = NeuralAgent::for_env(&maze, 2, MemoryMode::AdaptiveStack, &[8], &mut rng).unwrap();
        assert!(a.check_env(&maze).is_ok());
        assert!(a.check_env(&pole).is_err());
        let wrong = MemoryState::new(Observation::Symbol(0), 3).unwrap();
        assert!(a.encode(&wrong).is_err());
    }

    #[test]
    fn sampled_actions_are_in_range() {
        let mut rng = RngStream::new(1);
        let a = NeuralAgent::new(StackEncoder::OneHot { alphabet: 4 }, 3, MemoryMode::AdaptiveStack, 4, &[8], &mut rng).unwrap();
        let m = MemoryState::new(Observation::Symbol(2), 3).unwrap();
        for _ in 0..100 {
            let d = a.act(&m, &mut rng).unwrap();
            assert!(d.joint.env_action < 4);
            assert!((1..=3).contains(&d.joint.mem_action));
            assert!(d.log_prob <= 0.0);
        }
    }
}
