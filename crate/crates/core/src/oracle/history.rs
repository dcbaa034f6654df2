//! Exact optimal values over full histories.
//!
//! Histories are enumerated by their posterior over latent states: two
//! histories with the same posterior have the same future, so they share
//! one entry.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::models::LatentModel;
use crate::error::{Error, Result};

/// Sparse distribution over latent states, sorted by state.
pub type Belief = Vec<(usize, f64)>;

type BeliefKey = Vec<(usize, i64)>;

const KEY_SCALE: f64 = 1e12;

fn key_of(b: &Belief) -> BeliefKey {
    b.iter().map(|&(s, p)| (s, (p * KEY_SCALE).round() as i64)).collect()
}

/// Result of one action in one belief.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Expected immediate reward.
    pub reward: f64,
    /// Non-terminal continuations `(observation, probability, belief)`.
    pub next: Vec<(u16, f64, usize)>,
}

/// Reachable beliefs of a model, their transitions and optimal values.
#[derive(Debug, Clone)]
pub struct HistoryMdp {
    pub gamma: f64,
    pub num_actions: usize,
    pub alphabet_size: usize,
    pub continual: bool,
    pub episode_horizon: usize,
    pub beliefs: Vec<Belief>,
    /// `outcomes[b][a]`.
    pub outcomes: Vec<Vec<Outcome>>,
    /// `(first observation, probability, belief)`.
    pub initial: Vec<(u16, f64, usize)>,
    /// Optimal values, filled by [`HistoryMdp::value_iteration`].
    pub values: Vec<f64>,
}

struct Interner {
    beliefs: Vec<Belief>,
    index: HashMap<BeliefKey, usize>,
    queue: VecDeque<usize>,
    cap: usize,
}

impl Interner {
    fn intern(&mut self, b: Belief) -> Result<usize> {
        let key = key_of(&b);
        if let Some(&id) = self.index.get(&key) {
            return Ok(id);
        }
        if self.beliefs.len() >= self.cap {
            return Err(Error::CapExceeded {
                what: "belief states",
                cap: self.cap,
            });
        }
        let id = self.beliefs.len();
        self.beliefs.push(b);
        self.index.insert(key, id);
        self.queue.push_back(id);
        Ok(id)
    }
}

fn split_by_obs(model: &dyn LatentModel, mass: BTreeMap<usize, f64>) -> Vec<(u16, f64, Belief)> {
    let mut groups: BTreeMap<u16, Belief> = BTreeMap::new();
    for (s, p) in mass {
        if p > 0.0 {
            groups.entry(model.observe(s)).or_default().push((s, p));
        }
    }
    groups
        .into_iter()
        .map(|(x, mut b)| {
            let total: f64 = b.iter().map(|e| e.1).sum();
            for e in &mut b {
                e.1 /= total;
            }
            (x, total, b)
        })
        .collect()
}

/// Sweep change below which a contraction with factor `gamma` is within
/// `tol / 2` of its fixed point.
pub(crate) fn stop_threshold(gamma: f64, tol: f64, values: &[f64]) -> f64 {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let bound = if gamma > 0.0 { tol * (1.0 - gamma) / (2.0 * gamma) } else { f64::INFINITY };
    bound.max(8.0 * f64::EPSILON * scale)
}

impl HistoryMdp {
    /// Enumerates every belief reachable from the initial distribution.
    pub fn build(model: &dyn LatentModel, gamma: f64, cap: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::config(format!("gamma {gamma} outside [0, 1)")));
        }
        let mut interner = Interner {
            beliefs: Vec::new(),
            index: HashMap::new(),
            queue: VecDeque::new(),
            cap,
        };
        let mut start = BTreeMap::new();
        for (s, p) in model.initial() {
            *start.entry(s).or_insert(0.0) += p;
        }
        let mut initial = Vec::new();
        for (x, p, b) in split_by_obs(model, start) {
            initial.push((x, p, interner.intern(b)?));
        }
        let mut outcomes: Vec<Vec<Outcome>> = Vec::new();
        while let Some(id) = interner.queue.pop_front() {
            let belief = interner.beliefs[id].clone();
            let mut row = Vec::with_capacity(model.num_actions());
            for a in 0..model.num_actions() {
                let mut reward = 0.0;
                let mut mass = BTreeMap::new();
                for &(s, p) in &belief {
                    for t in model.transitions(s, a) {
                        reward += p * t.prob * t.reward;
                        if !t.terminal {
                            *mass.entry(t.next).or_insert(0.0) += p * t.prob;
                        }
                    }
                }
                let mut next = Vec::new();
                for (x, q, b) in split_by_obs(model, mass) {
                    next.push((x, q, interner.intern(b)?));
                }
                row.push(Outcome { reward, next });
            }
            if outcomes.len() <= id {
                outcomes.resize(id + 1, Vec::new());
            }
            outcomes[id] = row;
        }
        let n = interner.beliefs.len();
        Ok(Self {
            gamma,
            num_actions: model.num_actions(),
            alphabet_size: model.alphabet_size(),
            continual: model.continual(),
            episode_horizon: model.episode_horizon(),
            beliefs: interner.beliefs,
            outcomes,
            initial,
            values: vec![0.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn q_value(&self, b: usize, a: usize) -> f64 {
        let o = &self.outcomes[b][a];
        o.reward + self.gamma * o.next.iter().map(|&(_, p, n)| p * self.values[n]).sum::<f64>()
    }

    /// Jacobi value iteration; the result is within `tol / 2` of the fixed
    /// point unless that is below floating-point resolution.
    pub fn value_iteration(&mut self, tol: f64) -> Result<&[f64]> {
        const MAX_SWEEPS: usize = 10_000_000;
        let mut v = vec![0.0; self.len()];
        self.values = v.clone();
        for _ in 0..MAX_SWEEPS {
            let mut delta: f64 = 0.0;
            for (b, slot) in v.iter_mut().enumerate() {
                let best = (0..self.num_actions)
                    .map(|a| self.q_value(b, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - self.values[b]).abs());
                *slot = best;
            }
            std::mem::swap(&mut self.values, &mut v);
            if !delta.is_finite() {
                return Err(Error::NonFinite("belief value iteration".into()));
            }
            if delta <= stop_threshold(self.gamma, tol, &self.values) {
                return Ok(&self.values);
            }
        }
        Err(Error::CapExceeded {
            what: "value iteration sweeps",
            cap: MAX_SWEEPS,
        })
    }

    pub fn is_optimal(&self, b: usize, a: usize, tol: f64) -> bool {
        self.q_value(b, a) >= self.values[b] - tol
    }

    /// Expected optimal value before the first observation is drawn.
    pub fn start_value(&self) -> f64 {
        self.initial.iter().map(|&(_, p, b)| p * self.values[b]).sum()
    }

    pub fn initial_belief(&self, x0: u16) -> Option<usize> {
        self.initial.iter().find(|e| e.0 == x0).map(|e| e.2)
    }

    pub fn successor(&self, b: usize, a: usize, x: u16) -> Option<usize> {
        self.outcomes[b][a].next.iter().find(|e| e.0 == x).map(|e| e.2)
    }

    /// Belief after an action-observation history, if it has positive probability.
    pub fn belief_after(&self, x0: u16, steps: &[(usize, u16)]) -> Option<usize> {
        let mut b = self.initial_belief(x0)?;
        for &(a, x) in steps {
            b = self.successor(b, a, x)?;
        }
        Some(b)
    }
}
