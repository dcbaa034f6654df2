//! Search over deterministic memory-bounded policies.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use super::history::HistoryMdp;
use super::stack::{pop_push, Stack, StackChain, TablePolicy};
use crate::error::{Error, Result};
use crate::memory::JointAction;
use crate::rng::RngStream;

fn popped(s: &[u16], i: usize) -> Stack {
    let mut out = s.to_vec();
    out.remove(i - 1);
    out
}

/// Joint actions at `(b, s)` whose environment part is optimal, one per
/// distinct eviction, newest slot first.
fn optimal_candidates(mdp: &HistoryMdp, b: usize, s: &[u16], k: usize, tol: f64) -> Vec<JointAction> {
    let mut out = Vec::new();
    for a in 0..mdp.num_actions {
        if !mdp.is_optimal(b, a, tol) {
            continue;
        }
        let mut seen = HashSet::new();
        for i in (1..=k).rev() {
            if seen.insert(popped(s, i)) {
                out.push(JointAction {
                    env_action: a,
                    mem_action: i,
                });
            }
        }
    }
    out
}

#[derive(Clone)]
struct Partial {
    table: BTreeMap<Stack, JointAction>,
    visited: HashSet<(usize, Stack)>,
    frontier: Vec<(usize, Stack)>,
}

struct Search<'a> {
    mdp: &'a HistoryMdp,
    k: usize,
    tol: f64,
    budget: usize,
    spent: usize,
}

impl Search<'_> {
    fn run(&mut self, mut st: Partial) -> Result<Option<BTreeMap<Stack, JointAction>>> {
        loop {
            let Some((b, s)) = st.frontier.pop() else {
                return Ok(Some(st.table));
            };
            if st.visited.contains(&(b, s.clone())) {
                continue;
            }
            if let Some(&j) = st.table.get(&s) {
                if !self.mdp.is_optimal(b, j.env_action, self.tol) {
                    return Ok(None);
                }
                for &(x, _, nb) in &self.mdp.outcomes[b][j.env_action].next {
                    st.frontier.push((nb, pop_push(&s, j.mem_action, x)));
                }
                st.visited.insert((b, s));
                continue;
            }
            self.spent += 1;
            if self.spent > self.budget {
                return Err(Error::CapExceeded {
                    what: "policy search nodes",
                    cap: self.budget,
                });
            }
            for j in optimal_candidates(self.mdp, b, &s, self.k, self.tol) {
                let mut next = st.clone();
                next.table.insert(s.clone(), j);
                next.frontier.push((b, s.clone()));
                if let Some(t) = self.run(next)? {
                    return Ok(Some(t));
                }
            }
            return Ok(None);
        }
    }
}

/// A deterministic policy over `k` slots that takes an optimal action at
/// every pair it reaches, or `None` if no such policy exists.
pub fn certified_policy(mdp: &HistoryMdp, k: usize, tol: f64, budget: usize) -> Result<Option<TablePolicy>> {
    if k == 0 {
        return Err(Error::config("memory length must be at least 1"));
    }
    let frontier = mdp.initial.iter().rev().map(|&(x0, _, b)| (b, vec![x0; k])).collect();
    let mut search = Search {
        mdp,
        k,
        tol,
        budget,
        spent: 0,
    };
    let found = search.run(Partial {
        table: BTreeMap::new(),
        visited: HashSet::new(),
        frontier,
    })?;
    Ok(found.map(TablePolicy::new))
}

/// Deterministic policies restricted to stacks reachable under some policy,
/// with joint actions of identical effect merged.
#[derive(Debug, Clone)]
pub struct PolicySpace {
    pub k: usize,
    /// Each stack with one representative per class of equivalent joint actions.
    pub choices: Vec<(Stack, Vec<JointAction>)>,
}

type Signature = Vec<(u64, Vec<(u16, u64, usize, Stack)>)>;

impl PolicySpace {
    pub fn build(mdp: &HistoryMdp, k: usize, cap: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("memory length must be at least 1"));
        }
        let mut seen: HashSet<(usize, Stack)> = HashSet::new();
        let mut classes: BTreeMap<Stack, BTreeSet<usize>> = BTreeMap::new();
        let mut queue = VecDeque::new();
        for &(x0, _, b) in &mdp.initial {
            queue.push_back((b, vec![x0; k]));
        }
        while let Some((b, s)) = queue.pop_front() {
            if !seen.insert((b, s.clone())) {
                continue;
            }
            if seen.len() > cap {
                return Err(Error::CapExceeded {
                    what: "stack-process states",
                    cap,
                });
            }
            classes.entry(s.clone()).or_default().insert(b);
            for o in &mdp.outcomes[b] {
                for &(x, _, nb) in &o.next {
                    for i in 1..=k {
                        queue.push_back((nb, pop_push(&s, i, x)));
                    }
                }
            }
        }
        let mut choices = Vec::new();
        for (s, bs) in classes {
            let mut reps: Vec<(Signature, JointAction)> = Vec::new();
            for a in 0..mdp.num_actions {
                for i in 1..=k {
                    let sig: Signature = bs
                        .iter()
                        .map(|&b| {
                            let o = &mdp.outcomes[b][a];
                            let next = o.next.iter().map(|&(x, p, nb)| (x, p.to_bits(), nb, pop_push(&s, i, x))).collect();
                            (o.reward.to_bits(), next)
                        })
                        .collect();
                    if !reps.iter().any(|(other, _)| *other == sig) {
                        reps.push((
                            sig,
                            JointAction {
                                env_action: a,
                                mem_action: i,
                            },
                        ));
                    }
                }
            }
            choices.push((s, reps.into_iter().map(|r| r.1).collect()));
        }
        Ok(Self { k, choices })
    }

    /// Number of distinct policies, if it fits in a `u128`.
    pub fn size(&self) -> Option<u128> {
        self.choices.iter().try_fold(1u128, |acc, (_, c)| acc.checked_mul(c.len() as u128))
    }

    /// The policy with mixed-radix index `index`; the last stack varies fastest.
    pub fn policy(&self, mut index: u128) -> TablePolicy {
        let mut table = BTreeMap::new();
        for (s, c) in self.choices.iter().rev() {
            let n = c.len() as u128;
            table.insert(s.clone(), c[(index % n) as usize]);
            index /= n;
        }
        TablePolicy::new(table)
    }

    pub fn sample(&self, rng: &mut RngStream) -> TablePolicy {
        let table = self.choices.iter().map(|(s, c)| (s.clone(), c[rng.below(c.len())])).collect();
        TablePolicy::new(table)
    }
}

/// The best deterministic policy for `k` slots and its stack values.
#[derive(Debug, Clone)]
pub struct StackSolution {
    pub k: usize,
    pub policy: TablePolicy,
    pub chain: StackChain,
    /// Visit-weighted value of each reachable stack.
    pub stack_values: BTreeMap<Stack, f64>,
    pub start_value: f64,
    pub optimal_value: f64,
    /// The policy acts optimally at every pair it reaches.
    pub attains_optimum: bool,
}

impl StackSolution {
    /// Value of the stack reached by following the policy along observations `probe`.
    pub fn probe(&self, mdp: &HistoryMdp, probe: &[u16]) -> Result<(f64, f64)> {
        let (&x0, rest) = probe.split_first().ok_or_else(|| Error::contract("empty probe history"))?;
        let unreachable = || Error::contract(format!("probe history {probe:?} is unreachable"));
        let mut b = mdp.initial_belief(x0).ok_or_else(unreachable)?;
        let mut s = vec![x0; self.k];
        for &x in rest {
            let j = self.policy.action(&s);
            b = mdp.successor(b, j.env_action, x).ok_or_else(unreachable)?;
            s = pop_push(&s, j.mem_action, x);
        }
        let v_k = *self.stack_values.get(&s).ok_or_else(unreachable)?;
        Ok((mdp.values[b], v_k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchLimits {
    pub state_cap: usize,
    pub node_budget: usize,
    pub policy_cap: u128,
    pub tol: f64,
    pub eq_tol: f64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            state_cap: 1_000_000,
            node_budget: 1_000_000,
            policy_cap: 1_000_000,
            tol: 1e-12,
            eq_tol: 1e-9,
        }
    }
}

pub fn best_stack_policy(mdp: &HistoryMdp, k: usize, lim: &SearchLimits) -> Result<StackSolution> {
    let policy = match certified_policy(mdp, k, lim.eq_tol, lim.node_budget)? {
        Some(p) => p,
        None => {
            let space = PolicySpace::build(mdp, k, lim.state_cap)?;
            let size = space.size().filter(|&n| n <= lim.policy_cap).ok_or(Error::CapExceeded {
                what: "deterministic policies",
                cap: lim.policy_cap as usize,
            })?;
            let mut best: Option<(f64, TablePolicy)> = None;
            for idx in 0..size {
                let p = space.policy(idx);
                let mut c = StackChain::build(mdp, &p, k, lim.state_cap)?;
                c.evaluate(lim.tol)?;
                let v = c.start_value();
                if best.as_ref().is_none_or(|(bv, _)| v > bv + lim.eq_tol) {
                    best = Some((v, p));
                }
            }
            best.expect("policy space is never empty").1
        }
    };
    let mut chain = StackChain::build(mdp, &policy, k, lim.state_cap)?;
    chain.evaluate(lim.tol)?;
    Ok(StackSolution {
        k,
        stack_values: chain.stack_values(),
        start_value: chain.start_value(),
        optimal_value: mdp.start_value(),
        attains_optimum: chain.max_shortfall(mdp) <= lim.eq_tol,
        policy,
        chain,
    })
}

/// Smallest `k <= k_max` admitting a policy that is optimal on every reachable history.
pub fn find_kappa(mdp: &HistoryMdp, k_max: usize, lim: &SearchLimits) -> Result<Option<usize>> {
    for k in 1..=k_max {
        if certified_policy(mdp, k, lim.eq_tol, lim.node_budget)?.is_some() {
            return Ok(Some(k));
        }
    }
    Ok(None)
}
