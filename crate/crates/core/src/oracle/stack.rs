//! The product of history classes with the agent's memory stack.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use super::history::{stop_threshold, HistoryMdp};
use crate::error::{Error, Result};
use crate::memory::JointAction;

pub type Stack = Vec<u16>;

/// Removes slot `i` (1-based, slot 1 oldest) and appends `x` as newest.
pub fn pop_push(s: &[u16], i: usize, x: u16) -> Stack {
    let mut out = Vec::with_capacity(s.len());
    out.extend(s.iter().enumerate().filter(|&(j, _)| j + 1 != i).map(|(_, &v)| v));
    out.push(x);
    out
}

/// A memory-bounded policy: a distribution over joint actions per stack.
pub trait StackPolicy {
    fn act(&self, stack: &[u16]) -> Vec<(JointAction, f64)>;
}

impl<F: Fn(&[u16]) -> Vec<(JointAction, f64)>> StackPolicy for F {
    fn act(&self, stack: &[u16]) -> Vec<(JointAction, f64)> {
        self(stack)
    }
}

/// Deterministic policy given as a lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TablePolicy {
    pub table: BTreeMap<Stack, JointAction>,
    /// Used for stacks missing from the table.
    pub fallback: JointAction,
}

impl TablePolicy {
    pub fn new(table: BTreeMap<Stack, JointAction>) -> Self {
        Self {
            table,
            fallback: JointAction {
                env_action: 0,
                mem_action: 1,
            },
        }
    }

    pub fn action(&self, stack: &[u16]) -> JointAction {
        self.table.get(stack).copied().unwrap_or(self.fallback)
    }
}

impl StackPolicy for TablePolicy {
    fn act(&self, stack: &[u16]) -> Vec<(JointAction, f64)> {
        vec![(self.action(stack), 1.0)]
    }
}

/// Uniform over environment actions and pop indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformPolicy {
    pub num_env_actions: usize,
    pub num_mem_actions: usize,
}

impl StackPolicy for UniformPolicy {
    fn act(&self, _stack: &[u16]) -> Vec<(JointAction, f64)> {
        let p = 1.0 / (self.num_env_actions * self.num_mem_actions) as f64;
        let mut out = Vec::new();
        for env_action in 0..self.num_env_actions {
            for mem_action in 1..=self.num_mem_actions {
                out.push((JointAction { env_action, mem_action }, p));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Branch {
    prob: f64,
    reward: f64,
    /// `(observation, probability, node)`.
    next: Vec<(u16, f64, usize)>,
}

/// Reachable `(history class, stack)` pairs under one policy.
#[derive(Debug, Clone)]
pub struct StackChain {
    pub k: usize,
    pub gamma: f64,
    pub nodes: Vec<(usize, Stack)>,
    index: HashMap<(usize, Stack), usize>,
    branches: Vec<Vec<Branch>>,
    /// `(probability, node)` for each first observation.
    pub initial: Vec<(f64, usize)>,
    pub values: Vec<f64>,
    continual: bool,
    episode_horizon: usize,
}

impl StackChain {
    pub fn build(mdp: &HistoryMdp, policy: &dyn StackPolicy, k: usize, cap: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("memory length must be at least 1"));
        }
        let mut nodes: Vec<(usize, Stack)> = Vec::new();
        let mut index = HashMap::new();
        let mut queue = VecDeque::new();
        let mut intern = |b: usize, s: Stack, nodes: &mut Vec<(usize, Stack)>, queue: &mut VecDeque<usize>| -> Result<usize> {
            if let Some(&id) = index.get(&(b, s.clone())) {
                return Ok(id);
            }
            if nodes.len() >= cap {
                return Err(Error::CapExceeded {
                    what: "stack-process states",
                    cap,
                });
            }
            let id = nodes.len();
            index.insert((b, s.clone()), id);
            nodes.push((b, s));
            queue.push_back(id);
            Ok(id)
        };
        let mut initial = Vec::new();
        for &(x0, p, b) in &mdp.initial {
            initial.push((p, intern(b, vec![x0; k], &mut nodes, &mut queue)?));
        }
        let mut branches: Vec<Vec<Branch>> = Vec::new();
        while let Some(id) = queue.pop_front() {
            let (b, s) = nodes[id].clone();
            let mut row = Vec::new();
            for (j, prob) in policy.act(&s) {
                if prob <= 0.0 {
                    continue;
                }
                if j.env_action >= mdp.num_actions || j.mem_action == 0 || j.mem_action > k {
                    return Err(Error::contract(format!("policy emitted out-of-range action {j:?}")));
                }
                let o = &mdp.outcomes[b][j.env_action];
                let mut next = Vec::with_capacity(o.next.len());
                for &(x, q, nb) in &o.next {
                    let ns = pop_push(&s, j.mem_action, x);
                    next.push((x, q, intern(nb, ns, &mut nodes, &mut queue)?));
                }
                row.push(Branch {
                    prob,
                    reward: o.reward,
                    next,
                });
            }
            if branches.len() <= id {
                branches.resize(id + 1, Vec::new());
            }
            branches[id] = row;
        }
        branches.resize(nodes.len(), Vec::new());
        let n = nodes.len();
        Ok(Self {
            k,
            gamma: mdp.gamma,
            index: nodes.iter().cloned().enumerate().map(|(i, key)| (key, i)).collect(),
            nodes,
            branches,
            initial,
            values: vec![0.0; n],
            continual: mdp.continual,
            episode_horizon: mdp.episode_horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, b: usize, s: &[u16]) -> Option<usize> {
        self.index.get(&(b, s.to_vec())).copied()
    }

    /// Successors `(observation, probability, node)` with their branch probabilities folded in.
    pub fn successors(&self, n: usize) -> Vec<(u16, f64, usize)> {
        let mut out = Vec::new();
        for br in &self.branches[n] {
            for &(x, q, m) in &br.next {
                out.push((x, br.prob * q, m));
            }
        }
        out
    }

    fn backup(&self, n: usize, v: &[f64]) -> f64 {
        self.branches[n]
            .iter()
            .map(|br| br.prob * (br.reward + self.gamma * br.next.iter().map(|&(_, q, m)| q * v[m]).sum::<f64>()))
            .sum()
    }

    /// Policy evaluation to within `tol / 2`.
    pub fn evaluate(&mut self, tol: f64) -> Result<()> {
        const MAX_SWEEPS: usize = 10_000_000;
        let mut v = vec![0.0; self.len()];
        self.values = v.clone();
        for _ in 0..MAX_SWEEPS {
            let mut delta: f64 = 0.0;
            for n in 0..self.len() {
                v[n] = self.backup(n, &self.values);
                delta = delta.max((v[n] - self.values[n]).abs());
            }
            std::mem::swap(&mut self.values, &mut v);
            if !delta.is_finite() {
                return Err(Error::NonFinite("stack policy evaluation".into()));
            }
            if delta <= stop_threshold(self.gamma, tol, &self.values) {
                return Ok(());
            }
        }
        Err(Error::CapExceeded {
            what: "policy evaluation sweeps",
            cap: MAX_SWEEPS,
        })
    }

    pub fn start_value(&self) -> f64 {
        self.initial.iter().map(|&(p, n)| p * self.values[n]).sum()
    }

    /// Visit weights: expected visits per episode for episodic models,
    /// long-run visit frequency for continual ones.
    pub fn occupancy(&self) -> Vec<f64> {
        let n = self.len();
        let mut d = vec![0.0; n];
        for &(p, i) in &self.initial {
            d[i] += p;
        }
        let push = |d: &[f64]| {
            let mut out = vec![0.0; n];
            for (i, &p) in d.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (_, q, m) in self.successors(i) {
                    out[m] += p * q;
                }
            }
            out
        };
        if !self.continual {
            let mut total = d.clone();
            for _ in 1..self.episode_horizon {
                d = push(&d);
                if d.iter().sum::<f64>() < 1e-15 {
                    break;
                }
                for (t, x) in total.iter_mut().zip(&d) {
                    *t += x;
                }
            }
            return total;
        }
        // lazy power iteration converges for periodic chains too
        for _ in 0..1_000_000 {
            let moved = push(&d);
            let next: Vec<f64> = d.iter().zip(&moved).map(|(a, b)| 0.5 * (a + b)).collect();
            let delta = next.iter().zip(&d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            d = next;
            if delta < 1e-14 {
                break;
            }
        }
        d
    }

    /// Occupancy-weighted value of each stack.
    pub fn stack_values(&self) -> BTreeMap<Stack, f64> {
        let occ = self.occupancy();
        let mut acc: BTreeMap<Stack, (f64, f64)> = BTreeMap::new();
        for (i, (_, s)) in self.nodes.iter().enumerate() {
            if occ[i] > 0.0 {
                let e = acc.entry(s.clone()).or_insert((0.0, 0.0));
                e.0 += occ[i] * self.values[i];
                e.1 += occ[i];
            }
        }
        acc.into_iter().map(|(s, (num, den))| (s, num / den)).collect()
    }

    /// Largest shortfall of the policy's value below the optimum over reachable pairs.
    pub fn max_shortfall(&self, mdp: &HistoryMdp) -> f64 {
        self.nodes
            .iter()
            .zip(&self.values)
            .map(|((b, _), v)| mdp.values[*b] - v)
            .fold(0.0, f64::max)
    }
}

/// Two histories that reach the same stack at the same time with different values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyWitness {
    pub t: usize,
    pub stack: Stack,
    pub history_a: Vec<u16>,
    pub history_b: Vec<u16>,
    pub value_a: f64,
    pub value_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Consistency {
    pub consistent: bool,
    pub witness: Option<ConsistencyWitness>,
    /// Time steps examined before the set of reachable pairs repeated.
    pub layers: usize,
}

/// Walks the chain one time step at a time and compares the values of all
/// pairs sharing a stack at the same step.
pub fn check_consistency(chain: &StackChain, eq_tol: f64) -> Result<Consistency> {
    const MAX_LAYERS: usize = 100_000;
    let mut layer: BTreeMap<usize, Vec<u16>> = BTreeMap::new();
    for &(_, n) in &chain.initial {
        layer.entry(n).or_insert_with(|| vec![chain.nodes[n].1[0]]);
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for t in 0..MAX_LAYERS {
        let ids: Vec<usize> = layer.keys().copied().collect();
        if ids.is_empty() || !seen.insert(ids) {
            return Ok(Consistency {
                consistent: true,
                witness: None,
                layers: t,
            });
        }
        let mut by_stack: HashMap<&Stack, (usize, &Vec<u16>)> = HashMap::new();
        for (&n, hist) in &layer {
            let s = &chain.nodes[n].1;
            match by_stack.get(s) {
                Some(&(m, other)) if (chain.values[m] - chain.values[n]).abs() > eq_tol => {
                    return Ok(Consistency {
                        consistent: false,
                        witness: Some(ConsistencyWitness {
                            t,
                            stack: s.clone(),
                            history_a: other.clone(),
                            history_b: hist.clone(),
                            value_a: chain.values[m],
                            value_b: chain.values[n],
                        }),
                        layers: t + 1,
                    });
                }
                Some(_) => {}
                None => {
                    by_stack.insert(s, (n, hist));
                }
            }
        }
        let mut next: BTreeMap<usize, Vec<u16>> = BTreeMap::new();
        for (&n, hist) in &layer {
            for (x, p, m) in chain.successors(n) {
                if p > 0.0 {
                    next.entry(m).or_insert_with(|| {
                        let mut h = hist.clone();
                        h.push(x);
                        h
                    });
                }
            }
        }
        layer = next;
    }
    Err(Error::CapExceeded {
        what: "consistency layers",
        cap: MAX_LAYERS,
    })
}

/// Probability-weighted value of each stack at each time step, up to `depth`.
pub fn timed_stack_values(chain: &StackChain, depth: usize) -> HashMap<(usize, Stack), f64> {
    let mut acc: HashMap<(usize, Stack), (f64, f64)> = HashMap::new();
    let mut d: HashMap<usize, f64> = HashMap::new();
    for &(p, n) in &chain.initial {
        *d.entry(n).or_insert(0.0) += p;
    }
    for t in 0..=depth {
        if d.is_empty() {
            break;
        }
        let mut next: HashMap<usize, f64> = HashMap::new();
        for (&n, &p) in &d {
            let e = acc.entry((t, chain.nodes[n].1.clone())).or_insert((0.0, 0.0));
            e.0 += p * chain.values[n];
            e.1 += p;
            for (_, q, m) in chain.successors(n) {
                *next.entry(m).or_insert(0.0) += p * q;
            }
        }
        d = next;
    }
    acc.into_iter().map(|(key, (num, den))| (key, num / den)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Observation;
    use crate::memory::{init_stack, update_stack};
    use crate::oracle::models::TMazeModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pop_push_matches_update_stack(slots in prop::collection::vec(0u16..4, 1..6), i in 0usize..6, x in 0u16..4) {
            let i = i % slots.len() + 1;
            let s = crate::memory::MemoryStack::from_symbols(&slots).unwrap();
            let expect = update_stack(&s, i, Observation::Symbol(x)).unwrap().symbols().unwrap();
            prop_assert_eq!(pop_push(&slots, i, x), expect);
        }
    }

    #[test]
    fn initial_stack_is_replicated() {
        let s = init_stack(Observation::Symbol(2), 3).unwrap();
        assert_eq!(s.symbols().unwrap(), vec![2, 2, 2]);
    }

    fn mdp(model: &TMazeModel, gamma: f64) -> HistoryMdp {
        let mut m = HistoryMdp::build(model, gamma, 1_000_000).unwrap();
        m.value_iteration(1e-12).unwrap();
        m
    }

    #[test]
    fn uniform_policy_value_on_short_maze() {
        let g = 0.99;
        let m = mdp(&TMazeModel::passive(1), g);
        let mut c = StackChain::build(
            &m,
            &UniformPolicy {
                num_env_actions: 4,
                num_mem_actions: 2,
            },
            2,
            1_000_000,
        )
        .unwrap();
        c.evaluate(1e-12).unwrap();
        assert_abs_diff_eq!(c.start_value(), 0.5 * g * g, epsilon = 1e-12);
    }

    #[test]
    fn episodic_occupancy_counts_visits() {
        let m = mdp(&TMazeModel::passive(3), 0.9);
        // always evict the newest slot: the cue stays put
        let keep = |_: &[u16]| {
            vec![(
                JointAction {
                    env_action: 0,
                    mem_action: 2,
                },
                1.0,
            )]
        };
        let c = StackChain::build(&m, &keep, 2, 1000).unwrap();
        let occ = c.occupancy();
        let total: f64 = occ.iter().sum();
        // five observations per episode
        assert_abs_diff_eq!(total, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn continual_occupancy_is_a_distribution() {
        let m = mdp(&TMazeModel::passive(2).continual(), 0.9);
        let c = StackChain::build(
            &m,
            &UniformPolicy {
                num_env_actions: 4,
                num_mem_actions: 2,
            },
            2,
            1000,
        )
        .unwrap();
        let occ = c.occupancy();
        assert_abs_diff_eq!(occ.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn chain_cap_is_enforced() {
        let m = mdp(&TMazeModel::passive(4), 0.9);
        let u = UniformPolicy {
            num_env_actions: 4,
            num_mem_actions: 3,
        };
        assert_eq!(StackChain::build(&m, &u, 3, 5).unwrap_err().kind(), "cap_exceeded");
    }

    #[test]
    fn bad_policy_action_is_rejected() {
        let m = mdp(&TMazeModel::passive(1), 0.9);
        let bad = |_: &[u16]| {
            vec![(
                JointAction {
                    env_action: 0,
                    mem_action: 3,
                },
                1.0,
            )]
        };
        assert_eq!(StackChain::build(&m, &bad, 2, 100).unwrap_err().kind(), "contract");
    }
}
