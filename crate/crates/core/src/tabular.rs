//! Tabular epsilon-greedy Q-learning over joint (environment, memory)
//! actions.
//!
//! Joint actions are flattened as `env_action * m + (mem_action - 1)` where
//! `m` is the number of memory actions of the mode (1 for Frame Stacking,
//! `k` for Adaptive Stacking, 2 for push/skip).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Environment, Mode, Observation};
use crate::error::{Error, Result};
use crate::memory::{encode_stack, JointAction, MemOp, MemoryMode, MemoryState, StackKey};
use crate::metrics::{CueTracker, MetricsLog, MetricsLogger, RegretAccumulator, RegretSummary};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QLearnConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub total_steps: u64,
    pub k: usize,
    pub memory_mode: MemoryMode,
    pub seed: u64,
    /// Largest one-step reward. Unvisited entries start at the matching
    /// upper bound on values: `r_max` for episodic tasks, whose only reward
    /// ends the episode, and `r_max / (1 - gamma)` for continual ones.
    pub r_max: f64,
    pub log_every: u64,
    /// Novelty bonus scale for the push/skip discipline with intrinsic
    /// motivation.
    pub im_beta: f64,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.1,
            epsilon: 0.01,
            total_steps: 1_000_000,
            k: 2,
            memory_mode: MemoryMode::AdaptiveStack,
            seed: 0,
            r_max: 1.0,
            log_every: 100,
            im_beta: 1.0,
        }
    }
}

impl QLearnConfig {
    /// The values printed in the algorithm header: slower learning and no
    /// exploration beyond optimism.
    pub fn algorithm_header() -> Self {
        Self {
            alpha: 0.01,
            epsilon: 0.0,
            ..Self::default()
        }
    }

    /// Value of unvisited table entries.
    pub fn initial_value(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Episodic => self.r_max,
            Mode::Continual => self.r_max / (1.0 - self.gamma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(format!("epsilon must be in [0, 1], got {}", self.epsilon)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("gamma must be in (0, 1), got {}", self.gamma)));
        }
        if self.k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        if !self.r_max.is_finite() {
            return Err(Error::config("r_max must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub k: usize,
    pub memory_mode: MemoryMode,
    pub alphabet_size: usize,
    pub num_env_actions: usize,
    pub default_value: f64,
    table: HashMap<StackKey, Vec<f64>>,
}

impl QTable {
    pub fn new(k: usize, memory_mode: MemoryMode, alphabet_size: usize, num_env_actions: usize, default_value: f64) -> Self {
        Self {
            k,
            memory_mode,
            alphabet_size,
            num_env_actions,
            default_value,
            table: HashMap::new(),
        }
    }

    pub fn num_mem_actions(&self) -> usize {
        self.memory_mode.num_mem_actions(self.k)
    }

    pub fn num_joint(&self) -> usize {
        self.num_env_actions * self.num_mem_actions()
    }

    pub fn joint_index(&self, j: JointAction) -> usize {
        j.env_action * self.num_mem_actions() + (j.mem_action - 1)
    }

    pub fn joint_of(&self, idx: usize) -> JointAction {
        let m = self.num_mem_actions();
        JointAction {
            env_action: idx / m,
            mem_action: idx % m + 1,
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Values of every joint action at `key`; absent keys read as the
    /// optimistic default.
    pub fn values(&self, key: StackKey) -> Vec<f64> {
        self.table
            .get(&key)
            .cloned()
            .unwrap_or_else(|| vec![self.default_value; self.num_joint()])
    }

    pub fn get(&self, key: StackKey, joint: JointAction) -> f64 {
        self.table
            .get(&key)
            .map_or(self.default_value, |v| v[self.joint_index(joint)])
    }

    fn entry(&mut self, key: StackKey) -> &mut Vec<f64> {
        let n = self.num_joint();
        let d = self.default_value;
        self.table.entry(key).or_insert_with(|| vec![d; n])
    }

    pub fn set_values(&mut self, key: StackKey, values: Vec<f64>) -> Result<()> {
        if values.len() != self.num_joint() {
            return Err(Error::contract("value row length differs from the joint action count"));
        }
        self.table.insert(key, values);
        Ok(())
    }

    pub fn max_value(&self, key: StackKey) -> f64 {
        self.table.get(&key).map_or(self.default_value, |v| {
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
    }

    /// Greedy joint action, ties to the lowest joint index.
    pub fn greedy(&self, key: StackKey) -> JointAction {
        let idx = match self.table.get(&key) {
            None => 0,
            Some(v) => argmax(v),
        };
        self.joint_of(idx)
    }

    pub fn all_finite(&self) -> bool {
        self.table.values().flatten().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StackKey, &Vec<f64>)> {
        self.table.iter()
    }

    pub fn key(&self, state: &MemoryState) -> Result<StackKey> {
        encode_stack(&state.stack, self.alphabet_size)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = QTableFile {
            format: "adastack-qtable/1".into(),
            k: self.k,
            memory_mode: self.memory_mode,
            alphabet_size: self.alphabet_size,
            num_env_actions: self.num_env_actions,
            default_value: self.default_value,
            entries: self.table.iter().map(|(k, v)| (k.0.to_string(), v.clone())).collect(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: QTableFile = serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if file.format != "adastack-qtable/1" {
            return Err(Error::Checkpoint(format!("unknown table format `{}`", file.format)));
        }
        let mut q = QTable::new(file.k, file.memory_mode, file.alphabet_size, file.num_env_actions, file.default_value);
        for (k, v) in file.entries {
            let key = k
                .parse::<u128>()
                .map_err(|e| Error::Checkpoint(format!("bad key `{k}`: {e}")))?;
            q.set_values(StackKey(key), v)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(q)
    }
}

#[derive(Serialize, Deserialize)]
struct QTableFile {
    format: String,
    k: usize,
    memory_mode: MemoryMode,
    alphabet_size: usize,
    num_env_actions: usize,
    default_value: f64,
    entries: BTreeMap<String, Vec<f64>>,
}

/// Index of the first maximal entry.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy joint action.
pub fn select_joint_action(q: &QTable, key: StackKey, epsilon: f64, rng: &mut RngStream) -> JointAction {
    if epsilon > 0.0 && rng.coin(epsilon) {
        q.joint_of(rng.below(q.num_joint()))
    } else {
        q.greedy(key)
    }
}

/// One Q-learning backup. `next = None` marks a terminal transition.
/// Returns the new value.
pub fn q_update(q: &mut QTable, key: StackKey, joint: JointAction, reward: f64, next: Option<StackKey>, gamma: f64, alpha: f64) -> f64 {
    let bootstrap = next.map_or(0.0, |n| q.max_value(n));
    let target = reward + gamma * bootstrap;
    let idx = q.joint_index(joint);
    let cell = &mut q.entry(key)[idx];
    *cell += alpha * (target - *cell);
    *cell
}

fn check_discrete(env: &dyn Environment) -> Result<usize> {
    env.spec()
        .alphabet_size()
        .ok_or_else(|| Error::unsupported("tabular agents need a discrete observation space"))
}

/// Runs Q-learning for `cfg.total_steps` environment steps.
pub fn train_q(env: &mut dyn Environment, cfg: &QLearnConfig) -> Result<(QTable, MetricsLog)> {
    cfg.validate()?;
    let alphabet = check_discrete(env)?;
    let spec = env.spec().clone();
    let mut q = QTable::new(cfg.k, cfg.memory_mode, alphabet, spec.num_env_actions, cfg.initial_value(spec.mode));
    let root = RngStream::new(cfg.seed);
    let mut agent_rng = root.fork(0);
    let mut env_rng = root.fork(1);
    let mut visits: HashMap<StackKey, u64> = HashMap::new();
    let mut logger = MetricsLogger::new(
        cfg.log_every,
        cfg.gamma,
        cfg.seed,
        env.optimal_period_value(cfg.gamma),
        env.cue_annotation().is_some(),
    );

    let x0 = env.reset(&mut env_rng);
    let mut mem = MemoryState::new(x0, cfg.k)?;
    let mut tracker = env.cue_annotation().map(|a| CueTracker::new(cfg.k, a));

    for _ in 0..cfg.total_steps {
        let key = q.key(&mem)?;
        let joint = select_joint_action(&q, key, cfg.epsilon, &mut agent_rng);
        let result = env.step(joint.env_action, &mut env_rng)?;
        let (next_mem, op) = mem.apply(cfg.memory_mode, joint.mem_action, result.next_obs.clone())?;
        let regret = match (tracker.as_mut(), env.cue_annotation()) {
            (Some(t), Some(_)) if result.done => Some(t.terminal()),
            (Some(t), Some(a)) => Some(t.update(op, a)),
            _ => None,
        };

        let mut reward = result.reward;
        if cfg.memory_mode == MemoryMode::DemirIm {
            let n = visits.entry(key).or_insert(0);
            *n += 1;
            if joint.mem_action == 1 {
                reward += cfg.im_beta / (*n as f64).sqrt();
            }
        }
        let next_key = if result.done { None } else { Some(q.key(&next_mem)?) };
        q_update(&mut q, key, joint, reward, next_key, cfg.gamma, cfg.alpha);
        if !q.all_finite_at(key) {
            return Err(Error::NonFinite(format!("Q value at stack key {}", key.0)));
        }
        logger.record(&result, regret);

        if result.done {
            let x0 = env.reset(&mut env_rng);
            mem = MemoryState::new(x0, cfg.k)?;
            tracker = env.cue_annotation().map(|a| CueTracker::new(cfg.k, a));
        } else {
            mem = next_mem;
        }
    }
    Ok((q, logger.finish()))
}

impl QTable {
    fn all_finite_at(&self, key: StackKey) -> bool {
        self.table.get(&key).is_none_or(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Outcome of running a frozen policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: u64,
    pub steps: u64,
    pub goals: u64,
    pub successes: u64,
    pub mean_return: f64,
    pub regret: Option<RegretSummary>,
}

impl EvalSummary {
    pub fn success(&self) -> Option<f64> {
        (self.goals > 0).then(|| self.successes as f64 / self.goals as f64)
    }
}

/// Drives `env` with a frozen stack policy for `episodes` episodes
/// (episodic) or goal periods (continual), capped at `max_steps`.
pub fn run_policy<F>(env: &mut dyn Environment, k: usize, mode: MemoryMode, gamma: f64, episodes: u64, max_steps: u64, seed: u64, mut policy: F) -> Result<EvalSummary>
where
    F: FnMut(&MemoryState, &mut RngStream) -> Result<JointAction>,
{
    let root = RngStream::new(seed);
    let mut agent_rng = root.fork(2);
    let mut env_rng = root.fork(3);
    let mut mem = MemoryState::new(env.reset(&mut env_rng), k)?;
    let mut tracker = env.cue_annotation().map(|a| CueTracker::new(k, a));
    let mut acc = RegretAccumulator::default();
    let mut out = EvalSummary {
        episodes: 0,
        steps: 0,
        goals: 0,
        successes: 0,
        mean_return: 0.0,
        regret: None,
    };
    let mut ret = 0.0;
    let mut disc = 1.0;
    let mut total_return = 0.0;
    while out.episodes < episodes && out.steps < max_steps {
        let joint = policy(&mem, &mut agent_rng)?;
        let r = env.step(joint.env_action, &mut env_rng)?;
        out.steps += 1;
        ret += disc * r.reward;
        disc *= gamma;
        let (next, op): (MemoryState, MemOp) = mem.apply(mode, joint.mem_action, r.next_obs.clone())?;
        if let (Some(t), Some(a)) = (tracker.as_mut(), env.cue_annotation()) {
            acc.add(if r.done { t.terminal() } else { t.update(op, a) });
        }
        if let Some(ok) = r.goal {
            out.goals += 1;
            out.successes += u64::from(ok);
        }
        let period_end = r.done || (env.spec().mode == Mode::Continual && r.goal.is_some());
        if period_end {
            out.episodes += 1;
            total_return += ret;
            ret = 0.0;
            disc = 1.0;
        }
        if r.done {
            mem = MemoryState::new(env.reset(&mut env_rng), k)?;
            tracker = env.cue_annotation().map(|a| CueTracker::new(k, a));
        } else {
            mem = next;
        }
    }
    out.mean_return = if out.episodes > 0 { total_return / out.episodes as f64 } else { 0.0 };
    out.regret = tracker.map(|_| acc.summary());
    Ok(out)
}

/// Greedy evaluation of a learned table.
pub fn evaluate_greedy(q: &QTable, env: &mut dyn Environment, gamma: f64, episodes: u64, max_steps: u64, seed: u64) -> Result<EvalSummary> {
    let alphabet = check_discrete(env)?;
    if alphabet != q.alphabet_size || env.spec().num_env_actions != q.num_env_actions {
        return Err(Error::contract(format!(
            "table built for alphabet {} / {} actions, environment has {} / {}",
            q.alphabet_size,
            q.num_env_actions,
            alphabet,
            env.spec().num_env_actions
        )));
    }
    run_policy(env, q.k, q.memory_mode, gamma, episodes, max_steps, seed, |m, _| {
        Ok(q.greedy(encode_stack(&m.stack, alphabet)?))
    })
}

/// Convenience for tests and examples: the symbols of a stack as a key.
pub fn key_of(symbols: &[u16], alphabet_size: usize) -> Result<StackKey> {
    let stack = crate::memory::MemoryStack::from_slots(symbols.iter().map(|&s| Observation::Symbol(s)).collect())?;
    encode_stack(&stack, alphabet_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::tmaze::{make_passive_tmaze, TMazeConfig, CORRIDOR, GREEN, JUNCTION, RED};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table(k: usize) -> QTable {
        QTable::new(k, MemoryMode::AdaptiveStack, 4, 2, 1.0)
    }

    #[test]
    fn greedy_prefers_first_maximum() {
        let mut q = table(2);
        let key = StackKey(3);
        q.set_values(key, vec![0.5, 0.9, 0.9, 0.1]).unwrap();
        let j = select_joint_action(&q, key, 0.0, &mut RngStream::new(0));
        assert_eq!(q.joint_index(j), 1);
        assert_eq!(j, JointAction { env_action: 0, mem_action: 2 });
    }

    #[test]
    fn fresh_table_picks_joint_zero() {
        let q = table(3);
        let j = select_joint_action(&q, StackKey(0), 0.0, &mut RngStream::new(0));
        assert_eq!(q.joint_index(j), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let q = table(2);
        let mut rng = RngStream::new(1);
        let n = 100_000;
        let mut counts = vec![0u64; q.num_joint()];
        for _ in 0..n {
            counts[q.joint_index(select_joint_action(&q, StackKey(0), 1.0, &mut rng))] += 1;
        }
        let p = 1.0 / counts.len() as f64;
        let expected = n as f64 * p;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 3 degrees of freedom, 0.1% critical value
        assert!(chi2 < 16.27, "chi2 = {chi2}");
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma + 1.0);
        }
    }

    #[test]
    fn update_examples() {
        let key = StackKey(0);
        let next = StackKey(1);
        let j = JointAction { env_action: 0, mem_action: 1 };
        let mut q = table(2);
        assert_abs_diff_eq!(q_update(&mut q, key, j, 0.0, Some(next), 0.99, 0.1), 0.999, epsilon = 1e-15);
        let mut q = table(2);
        q.set_values(key, vec![0.0; 4]).unwrap();
        assert_abs_diff_eq!(q_update(&mut q, key, j, 1.0, None, 0.99, 0.1), 0.1, epsilon = 1e-15);
        let mut q = table(2);
        q.set_values(key, vec![0.3; 4]).unwrap();
        assert_eq!(q_update(&mut q, key, j, 1.0, Some(next), 0.99, 0.0), 0.3);
    }

    #[test]
    fn joint_index_roundtrip() {
        for mode in [MemoryMode::FrameStack, MemoryMode::AdaptiveStack, MemoryMode::Demir] {
            let q = QTable::new(3, mode, 4, 4, 1.0);
            for idx in 0..q.num_joint() {
                assert_eq!(q.joint_index(q.joint_of(idx)), idx);
            }
        }
        assert_eq!(QTable::new(3, MemoryMode::Demir, 4, 4, 1.0).num_joint(), 8);
        assert_eq!(QTable::new(3, MemoryMode::FrameStack, 4, 4, 1.0).num_joint(), 4);
    }

    #[test]
    fn config_validation() {
        assert!(QLearnConfig::default().validate().is_ok());
        assert!(QLearnConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(QLearnConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(QLearnConfig { gamma: 1.0, ..Default::default() }.validate().is_err());
        let h = QLearnConfig::algorithm_header();
        assert_eq!((h.alpha, h.epsilon), (0.01, 0.0));
    }

    fn train(len: usize, k: usize, mode: MemoryMode, steps: u64, env_mode: Mode, seed: u64) -> (QTable, MetricsLog) {
        let mut env = make_passive_tmaze(TMazeConfig::passive(len, env_mode)).unwrap();
        let cfg = QLearnConfig {
            total_steps: steps,
            k,
            memory_mode: mode,
            seed,
            ..Default::default()
        };
        train_q(&mut env, &cfg).unwrap()
    }

    #[test]
    fn greedy_policy_optimal_on_tiny_mazes() {
        for len in 0..=2 {
            let (q, _) = train(len, 2, MemoryMode::AdaptiveStack, 30_000, Mode::Episodic, 3);
            let mut env = make_passive_tmaze(TMazeConfig::passive(len, Mode::Episodic)).unwrap();
            let ev = evaluate_greedy(&q, &mut env, 0.99, 200, 1_000_000, 9).unwrap();
            assert_eq!(ev.success(), Some(1.0), "L={len}");
            assert_abs_diff_eq!(ev.mean_return, 0.99f64.powi(len as i32 + 1), epsilon = 1e-12);
            // both cues reach their goal
            for cue in [GREEN, RED] {
                let mut s = vec![cue, cue];
                for x in std::iter::repeat_n(CORRIDOR, len).chain([JUNCTION]) {
                    let j = q.greedy(key_of(&s, 4).unwrap());
                    s.remove(j.mem_action - 1);
                    s.push(x);
                }
                let j = q.greedy(key_of(&s, 4).unwrap());
                let upper = j.env_action == 0 || j.env_action == 1;
                assert_eq!(upper, cue == GREEN, "L={len} cue={cue}");
            }
        }
    }

    #[test]
    fn q_values_stay_bounded() {
        let (q, _) = train(2, 2, MemoryMode::AdaptiveStack, 20_000, Mode::Continual, 0);
        let hi = 1.0 / (1.0 - 0.99);
        for (_, v) in q.iter() {
            for &x in v {
                assert!((0.0..=hi).contains(&x));
            }
        }
    }

    #[test]
    fn frame_stack_two_guesses_on_long_corridor() {
        let (_, log) = train(4, 2, MemoryMode::FrameStack, 60_000, Mode::Continual, 1);
        let s = crate::metrics::final_success(&log, 0.5).unwrap();
        assert!((0.4..=0.6).contains(&s), "success {s}");
    }

    #[test]
    fn push_skip_at_full_window_matches_frame_stack() {
        // With k = k* and every action a push, the push/skip agent sees the
        // same stacks as Frame Stacking.
        let len = 2;
        let k = len + 2;
        let mut env = make_passive_tmaze(TMazeConfig::passive(len, Mode::Episodic)).unwrap();
        let a = run_policy(&mut env, k, MemoryMode::Demir, 0.99, 50, 10_000, 4, |_, rng| {
            Ok(JointAction { env_action: rng.below(4), mem_action: 1 })
        })
        .unwrap();
        let mut env = make_passive_tmaze(TMazeConfig::passive(len, Mode::Episodic)).unwrap();
        let b = run_policy(&mut env, k, MemoryMode::FrameStack, 0.99, 50, 10_000, 4, |_, rng| {
            Ok(JointAction { env_action: rng.below(4), mem_action: 1 })
        })
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_is_reproducible() {
        let (q1, l1) = train(1, 2, MemoryMode::AdaptiveStack, 5_000, Mode::Continual, 11);
        let (q2, l2) = train(1, 2, MemoryMode::AdaptiveStack, 5_000, Mode::Continual, 11);
        assert_eq!(q1, q2);
        assert_eq!(l1, l2);
        assert_eq!(l1.len(), 50);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (q, _) = train(1, 2, MemoryMode::Demir, 2_000, Mode::Episodic, 2);
        let dir = std::env::temp_dir().join(format!("adastack-q-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("q.json");
        q.save_json(&path).unwrap();
        assert_eq!(QTable::load_json(&path).unwrap(), q);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn vector_env_is_rejected() {
        let mut env = crate::envs::make_velocity_cartpole(Default::default()).unwrap();
        let cfg = QLearnConfig { total_steps: 10, ..Default::default() };
        assert!(matches!(train_q(&mut env, &cfg), Err(Error::Unsupported(_))));
    }

    proptest! {
        #[test]
        fn update_moves_towards_target(
            q0 in -1.0f64..2.0, r in 0.0f64..1.0, m in 0.0f64..2.0, alpha in 0.0f64..1.0,
        ) {
            let mut q = table(1);
            let key = StackKey(0);
            let next = StackKey(1);
            q.set_values(key, vec![q0, q0]).unwrap();
            q.set_values(next, vec![m, m]).unwrap();
            let j = JointAction { env_action: 0, mem_action: 1 };
            let v = q_update(&mut q, key, j, r, Some(next), 0.9, alpha);
            let target = r + 0.9 * m;
            prop_assert!((v - target).abs() <= (q0 - target).abs() + 1e-12);
        }
    }
}
