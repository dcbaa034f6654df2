//! Run, sweep and evaluation configuration files.
//!
//! All three are TOML. A run file names one environment, one agent, one
//! memory configuration and a list of seeds:
//!
//! ```toml
//! run_id = "passive-as2"          # optional; derived from the fields below
//! agent = "q"                     # q | reinforce | ppo
//! memory_mode = "as"              # fs | as | demir | demir-im
//! k = 2
//! seeds = [0, 1, 2, 3, 4]
//! total_steps = 200000
//! log_every = 100
//! output = "runs"
//!
//! [env]
//! name = "passive_tmaze"          # passive_tmaze | active_tmaze | xormaze | pocket_cube | cartpole
//! length = 2
//! mode = "continual"
//!
//! [q]                             # tabular hyperparameters, all optional
//! alpha = 0.1
//! epsilon = 0.01
//! ```
//!
//! `[ppo]` and `[reinforce]` tables hold the neural hyperparameters.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use adastack::envs::{
    make_active_tmaze, make_passive_tmaze, make_pocket_cube, make_velocity_cartpole, make_xormaze, CartPoleConfig, CubeConfig,
    TMazeConfig,
};
use adastack::neural::{PpoConfig, ReinforceConfig};
use adastack::tabular::QLearnConfig;
use adastack::{Environment, MemoryMode, Mode, ObsSpace};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{read_to_string, HarnessError, Result};

/// Steps per seed unless a config says otherwise.
pub const DESK_STEPS: u64 = 200_000;
/// Steps per seed under `--paper-scale`.
pub const PAPER_STEPS: u64 = 1_000_000;

fn episodic() -> Mode {
    Mode::Episodic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    PassiveTmaze {
        length: usize,
        #[serde(default = "episodic")]
        mode: Mode,
        #[serde(default)]
        random_corridor: bool,
    },
    ActiveTmaze {
        length: usize,
        #[serde(default = "episodic")]
        mode: Mode,
    },
    Xormaze,
    PocketCube {
        scramble_depth: usize,
    },
    Cartpole {
        #[serde(default)]
        horizon: Option<usize>,
    },
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match *self {
            EnvConfig::PassiveTmaze {
                length,
                mode,
                random_corridor,
            } => Box::new(make_passive_tmaze(TMazeConfig {
                random_corridor,
                ..TMazeConfig::passive(length, mode)
            })?),
            EnvConfig::ActiveTmaze { length, mode } => Box::new(make_active_tmaze(TMazeConfig::active(length, mode))?),
            EnvConfig::Xormaze => Box::new(make_xormaze()),
            EnvConfig::PocketCube { scramble_depth } => Box::new(make_pocket_cube(CubeConfig { scramble_depth })),
            EnvConfig::Cartpole { horizon } => {
                let mut cfg = CartPoleConfig::default();
                if let Some(h) = horizon {
                    cfg.horizon = h;
                }
                Box::new(make_velocity_cartpole(cfg)?)
            }
        })
    }

    /// Short name used in run ids, e.g. `passive_tmaze-L3-continual`.
    pub fn label(&self) -> String {
        let mode = |m: &Mode| match m {
            Mode::Episodic => "episodic",
            Mode::Continual => "continual",
        };
        match self {
            EnvConfig::PassiveTmaze {
                length,
                mode: m,
                random_corridor,
            } => {
                let r = if *random_corridor { "-rand" } else { "" };
                format!("passive_tmaze-L{length}-{}{r}", mode(m))
            }
            EnvConfig::ActiveTmaze { length, mode: m } => format!("active_tmaze-L{length}-{}", mode(m)),
            EnvConfig::Xormaze => "xormaze".into(),
            EnvConfig::PocketCube { scramble_depth } => format!("pocket_cube-d{scramble_depth}"),
            EnvConfig::Cartpole { .. } => "cartpole".into(),
        }
    }

    /// The same environment with another corridor length; `None` for
    /// environments without one.
    pub fn with_length(&self, length: usize) -> Option<Self> {
        match self.clone() {
            EnvConfig::PassiveTmaze { mode, random_corridor, .. } => Some(EnvConfig::PassiveTmaze {
                length,
                mode,
                random_corridor,
            }),
            EnvConfig::ActiveTmaze { mode, .. } => Some(EnvConfig::ActiveTmaze { length, mode }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Q,
    Reinforce,
    Ppo,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Q => "q",
            AgentKind::Reinforce => "reinforce",
            AgentKind::Ppo => "ppo",
        })
    }
}

impl FromStr for AgentKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q" | "tabular" | "q-learning" => Ok(AgentKind::Q),
            "reinforce" => Ok(AgentKind::Reinforce),
            "ppo" => Ok(AgentKind::Ppo),
            other => Err(HarnessError::config(format!("unknown agent `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QParams {
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub im_beta: f64,
}

impl Default for QParams {
    fn default() -> Self {
        let d = QLearnConfig::default();
        Self {
            gamma: d.gamma,
            alpha: d.alpha,
            epsilon: d.epsilon,
            r_max: d.r_max,
            im_beta: d.im_beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoParams {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub n_steps: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
}

impl Default for PpoParams {
    fn default() -> Self {
        let d = PpoConfig::default();
        Self {
            gamma: d.gamma,
            gae_lambda: d.gae_lambda,
            n_steps: d.n_steps,
            minibatch: d.minibatch,
            epochs: d.epochs,
            lr: d.lr,
            clip: d.clip,
            entropy_coef: d.entropy_coef,
            value_coef: d.value_coef,
            max_grad_norm: d.max_grad_norm,
            hidden: d.hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReinforceParams {
    pub gamma: f64,
    pub lr: f64,
    pub entropy_coef: f64,
    pub anneal_entropy: bool,
    pub batch_episodes: usize,
    pub baseline: bool,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
}

impl Default for ReinforceParams {
    fn default() -> Self {
        let d = ReinforceConfig::default();
        Self {
            gamma: d.gamma,
            lr: d.lr,
            entropy_coef: d.entropy_coef,
            anneal_entropy: d.anneal_entropy,
            batch_episodes: d.batch_episodes,
            baseline: d.baseline,
            max_grad_norm: d.max_grad_norm,
            hidden: d.hidden,
        }
    }
}

fn default_steps() -> u64 {
    DESK_STEPS
}

fn default_log_every() -> u64 {
    100
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub env: EnvConfig,
    pub agent: AgentKind,
    pub memory_mode: MemoryMode,
    pub k: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_steps")]
    pub total_steps: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub q: QParams,
    #[serde(default)]
    pub ppo: PpoParams,
    #[serde(default)]
    pub reinforce: ReinforceParams,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl RunConfig {
    pub fn new(env: EnvConfig, agent: AgentKind, memory_mode: MemoryMode, k: usize, seeds: Vec<u64>) -> Self {
        Self {
            run_id: None,
            env,
            agent,
            memory_mode,
            k,
            seeds,
            total_steps: DESK_STEPS,
            log_every: default_log_every(),
            q: QParams::default(),
            ppo: PpoParams::default(),
            reinforce: ReinforceParams::default(),
            output: default_output(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        parse_toml(path, &read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialise")
    }

    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("{}_{}_{}{}", self.env.label(), self.agent, self.memory_mode, self.k))
    }

    /// Hex SHA-256 of the configuration, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        c.run_id = Some(self.run_id());
        let bytes = serde_json::to_vec(&c).expect("run configs always serialise");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn q_config(&self, seed: u64) -> QLearnConfig {
        QLearnConfig {
            gamma: self.q.gamma,
            alpha: self.q.alpha,
            epsilon: self.q.epsilon,
            total_steps: self.total_steps,
            k: self.k,
            memory_mode: self.memory_mode,
            seed,
            r_max: self.q.r_max,
            log_every: self.log_every,
            im_beta: self.q.im_beta,
        }
    }

    pub fn ppo_config(&self, seed: u64) -> PpoConfig {
        let p = &self.ppo;
        PpoConfig {
            gamma: p.gamma,
            gae_lambda: p.gae_lambda,
            n_steps: p.n_steps,
            minibatch: p.minibatch,
            epochs: p.epochs,
            lr: p.lr,
            clip: p.clip,
            entropy_coef: p.entropy_coef,
            value_coef: p.value_coef,
            max_grad_norm: p.max_grad_norm,
            total_steps: self.total_steps,
            k: self.k,
            memory_mode: self.memory_mode,
            hidden: p.hidden.clone(),
            seed,
            log_every: self.log_every,
        }
    }

    pub fn reinforce_config(&self, seed: u64) -> ReinforceConfig {
        let p = &self.reinforce;
        ReinforceConfig {
            gamma: p.gamma,
            lr: p.lr,
            entropy_coef: p.entropy_coef,
            anneal_entropy: p.anneal_entropy,
            batch_episodes: p.batch_episodes,
            baseline: p.baseline,
            max_grad_norm: p.max_grad_norm,
            total_steps: self.total_steps,
            k: self.k,
            memory_mode: self.memory_mode,
            hidden: p.hidden.clone(),
            seed,
            log_every: self.log_every,
        }
    }

    /// Discount used for returns and evaluation.
    pub fn gamma(&self) -> f64 {
        match self.agent {
            AgentKind::Q => self.q.gamma,
            AgentKind::Ppo => self.ppo.gamma,
            AgentKind::Reinforce => self.reinforce.gamma,
        }
    }

    /// Checks everything that can be checked without training.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seeds must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::config("seeds must be distinct"));
        }
        if self.k == 0 {
            return Err(HarnessError::config("k must be >= 1"));
        }
        if self.total_steps == 0 || self.log_every == 0 {
            return Err(HarnessError::config("total_steps and log_every must be positive"));
        }
        let id = self.run_id();
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(HarnessError::config(format!("run_id `{id}` is not a usable directory name")));
        }
        let env = self.env.build()?;
        let spec = env.spec();
        match self.agent {
            AgentKind::Q => {
                if !matches!(spec.obs, ObsSpace::Discrete { .. }) {
                    return Err(HarnessError::config(format!("{} has vector observations; use a neural agent", spec.name)));
                }
                self.q_config(self.seeds[0]).validate()?;
            }
            AgentKind::Ppo => self.ppo_config(self.seeds[0]).validate()?,
            AgentKind::Reinforce => {
                if spec.mode != Mode::Episodic {
                    return Err(HarnessError::config("reinforce needs an episodic environment"));
                }
                self.reinforce_config(self.seeds[0]).validate()?;
            }
        }
        if self.agent != AgentKind::Q && self.memory_mode == MemoryMode::DemirIm {
            return Err(HarnessError::config("the novelty bonus of demir-im is only implemented for the tabular agent"));
        }
        Ok(())
    }
}

/// A memory configuration in a sweep grid: `"as:2"`, `"fs:kstar"`,
/// `"demir:kappa"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MemorySpec {
    pub mode: MemoryMode,
    pub k: KSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KSpec {
    Fixed(usize),
    /// The environment's Markov order.
    KStar,
    /// The environment's minimal sufficient capacity.
    Kappa,
}

impl MemorySpec {
    pub fn resolve(&self, env: &dyn Environment) -> Result<usize> {
        match self.k {
            KSpec::Fixed(k) => Ok(k),
            KSpec::KStar => env
                .k_star()
                .ok_or_else(|| HarnessError::config(format!("{} has no finite order k*", env.spec().name))),
            KSpec::Kappa => env
                .kappa()
                .ok_or_else(|| HarnessError::config(format!("{} has no known minimal capacity", env.spec().name))),
        }
    }
}

impl fmt::Display for MemorySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.k {
            KSpec::Fixed(k) => write!(f, "{}:{k}", self.mode),
            KSpec::KStar => write!(f, "{}:kstar", self.mode),
            KSpec::Kappa => write!(f, "{}:kappa", self.mode),
        }
    }
}

impl FromStr for MemorySpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let (mode, k) = s
            .split_once(':')
            .ok_or_else(|| HarnessError::config(format!("memory spec `{s}` should look like `as:2` or `fs:kstar`")))?;
        let mode: MemoryMode = mode.parse()?;
        let k = match k.to_ascii_lowercase().as_str() {
            "kstar" | "k*" => KSpec::KStar,
            "kappa" => KSpec::Kappa,
            n => KSpec::Fixed(n.parse().map_err(|_| HarnessError::config(format!("bad capacity `{n}` in `{s}`")))?),
        };
        Ok(Self { mode, k })
    }
}

impl TryFrom<String> for MemorySpec {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MemorySpec> for String {
    fn from(m: MemorySpec) -> String {
        m.to_string()
    }
}

/// Grid axes; an empty axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub length: Vec<usize>,
    pub memory: Vec<MemorySpec>,
    pub agent: Vec<AgentKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub name: String,
    pub base: RunConfig,
    #[serde(default)]
    pub grid: Grid,
}

/// One point of a sweep: a run config, or the reason it could not be built.
#[derive(Debug, Clone)]
pub struct Cell {
    pub id: String,
    pub config: std::result::Result<RunConfig, String>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        parse_toml(path, &read_to_string(path)?)
    }

    /// Number of cells in the cartesian product.
    pub fn size(&self) -> usize {
        let n = |l: usize| l.max(1);
        n(self.grid.length.len()) * n(self.grid.memory.len()) * n(self.grid.agent.len())
    }

    /// Expands the grid in a fixed order: length, then memory, then agent.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        if self.grid.length.is_empty() && self.grid.memory.is_empty() && self.grid.agent.is_empty() {
            return Err(HarnessError::config("sweep grid is empty"));
        }
        let lengths: Vec<Option<usize>> = axis(&self.grid.length);
        let memories: Vec<Option<MemorySpec>> = axis(&self.grid.memory);
        let agents: Vec<Option<AgentKind>> = axis(&self.grid.agent);
        let mut out = Vec::with_capacity(self.size());
        for l in &lengths {
            for m in &memories {
                for a in &agents {
                    out.push(self.cell(*l, *m, *a));
                }
            }
        }
        Ok(out)
    }

    fn cell(&self, length: Option<usize>, memory: Option<MemorySpec>, agent: Option<AgentKind>) -> Cell {
        let mut parts = vec![self.name.clone()];
        let mut c = self.base.clone();
        c.run_id = None;
        let mut problem = None;
        if let Some(l) = length {
            parts.push(format!("L{l}"));
            match c.env.with_length(l) {
                Some(e) => c.env = e,
                None => problem = Some(format!("{} has no corridor length", c.env.label())),
            }
        }
        if let Some(a) = agent {
            parts.push(a.to_string());
            c.agent = a;
        }
        if let Some(m) = memory {
            parts.push(m.to_string().replace(':', "-"));
            c.memory_mode = m.mode;
            match c.env.build().and_then(|e| m.resolve(e.as_ref())) {
                Ok(k) => c.k = k,
                Err(e) => problem = problem.or(Some(e.to_string())),
            }
        }
        let id = parts.join("_");
        c.run_id = Some(id.clone());
        let config = match problem {
            Some(p) => Err(p),
            None => c.validate().map(|_| c).map_err(|e| e.to_string()),
        };
        Cell { id, config }
    }
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

fn default_episodes() -> u64 {
    100
}

fn default_max_steps() -> u64 {
    10_000_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Directory written by a training run.
    pub run_dir: PathBuf,
    pub envs: Vec<EnvConfig>,
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    /// Step cap per evaluation cell.
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    /// Greedy (tabular) or most probable (neural) actions; sampled otherwise.
    #[serde(default = "default_true")]
    pub greedy: bool,
    #[serde(default)]
    pub seed: u64,
    /// Output CSV; defaults to `eval.csv` inside `run_dir`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl EvalConfig {
    pub fn load(path: &Path) -> Result<Self> {
        parse_toml(path, &read_to_string(path)?)
    }
}

pub fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
