//! Checks that comparing policies by stack values agrees with comparing
//! them by history values, for value-consistent policies.

use std::collections::{HashMap, HashSet};

use super::history::HistoryMdp;
use super::search::{best_stack_policy, PolicySpace, SearchLimits};
use super::stack::{check_consistency, timed_stack_values, ConsistencyWitness, Stack, StackChain, StackPolicy};
use crate::error::Result;
use crate::rng::RngStream;

/// Policy spaces up to this size are enumerated rather than sampled.
pub const ENUMERATION_LIMIT: u128 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderWitness {
    pub first: usize,
    pub second: usize,
    /// Observation history where the first policy is worth more.
    pub history: Vec<u16>,
    pub first_value: f64,
    pub second_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartialOrderVerdict {
    Holds {
        /// Value-consistent policies considered.
        policies: usize,
        pairs: usize,
        /// Pairs whose stack values were ordered.
        ordered: usize,
    },
    Violated(OrderWitness),
    /// The optimal memory-bounded policy is not value-consistent, so the
    /// check does not apply.
    AssumptionViolated(ConsistencyWitness),
}

impl PartialOrderVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, PartialOrderVerdict::Holds { .. })
    }
}

struct Evaluated {
    chain: StackChain,
    timed: HashMap<(usize, Stack), f64>,
}

fn evaluate(mdp: &HistoryMdp, policy: &dyn StackPolicy, k: usize, depth: usize, lim: &SearchLimits) -> Result<Option<Evaluated>> {
    let mut chain = StackChain::build(mdp, policy, k, lim.state_cap)?;
    chain.evaluate(lim.tol)?;
    if !check_consistency(&chain, lim.eq_tol)?.consistent {
        return Ok(None);
    }
    let timed = timed_stack_values(&chain, depth);
    Ok(Some(Evaluated { chain, timed }))
}

/// Compares two policies over every observation history both can produce.
/// Returns whether stack values were ordered and, if so, a history where
/// the history values were not.
fn compare(p: &Evaluated, q: &Evaluated, depth: usize, eq_tol: f64) -> (bool, Option<(Vec<u16>, f64, f64)>) {
    let mut stack: Vec<(usize, usize, usize, Vec<u16>)> = Vec::new();
    for &(_, n) in &p.chain.initial {
        let x0 = p.chain.nodes[n].1[0];
        if let Some(&(_, m)) = q.chain.initial.iter().find(|&&(_, m)| q.chain.nodes[m].1[0] == x0) {
            stack.push((n, m, 0, vec![x0]));
        }
    }
    let mut seen = HashSet::new();
    let mut premise = true;
    let mut violation = None;
    while let Some((n, m, t, hist)) = stack.pop() {
        if !seen.insert((n, m, t)) {
            continue;
        }
        let vk_p = p.timed[&(t, p.chain.nodes[n].1.clone())];
        let vk_q = q.timed[&(t, q.chain.nodes[m].1.clone())];
        if vk_p > vk_q + eq_tol {
            premise = false;
            break;
        }
        let (vp, vq) = (p.chain.values[n], q.chain.values[m]);
        if vp > vq + eq_tol && violation.is_none() {
            violation = Some((hist.clone(), vp, vq));
        }
        if t >= depth {
            continue;
        }
        let next_q = q.chain.successors(m);
        for (x, pp, n2) in p.chain.successors(n) {
            if pp <= 0.0 {
                continue;
            }
            for &(y, qq, m2) in &next_q {
                if y == x && qq > 0.0 {
                    let mut h = hist.clone();
                    h.push(x);
                    stack.push((n2, m2, t + 1, h));
                }
            }
        }
    }
    (premise, if premise { violation } else { None })
}

pub fn check_partial_order(mdp: &HistoryMdp, k: usize, num_pairs: usize, rng: &mut RngStream, lim: &SearchLimits) -> Result<PartialOrderVerdict> {
    let best = best_stack_policy(mdp, k, lim)?;
    if let Some(w) = check_consistency(&best.chain, lim.eq_tol)?.witness {
        return Ok(PartialOrderVerdict::AssumptionViolated(w));
    }
    let space = PolicySpace::build(mdp, k, lim.state_cap)?;
    let policies: Vec<_> = match space.size() {
        Some(n) if n <= ENUMERATION_LIMIT => (0..n).map(|i| space.policy(i)).collect(),
        _ => (0..2 * num_pairs).map(|_| space.sample(rng)).collect(),
    };
    let depth = 2 * space.choices.len() + 2;
    let mut evaluated = Vec::new();
    for p in &policies {
        if let Some(e) = evaluate(mdp, p, k, depth, lim)? {
            evaluated.push(e);
        }
    }
    let n = evaluated.len();
    let pairs: Vec<(usize, usize)> = if n * n <= num_pairs {
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
    } else {
        (0..num_pairs).map(|_| (rng.below(n), rng.below(n))).collect()
    };
    let mut ordered = 0;
    for &(i, j) in &pairs {
        let (premise, violation) = compare(&evaluated[i], &evaluated[j], depth, lim.eq_tol);
        if premise {
            ordered += 1;
        }
        if let Some((history, first_value, second_value)) = violation {
            return Ok(PartialOrderVerdict::Violated(OrderWitness {
                first: i,
                second: j,
                history,
                first_value,
                second_value,
            }));
        }
    }
    Ok(PartialOrderVerdict::Holds {
        policies: n,
        pairs: pairs.len(),
        ordered,
    })
}
