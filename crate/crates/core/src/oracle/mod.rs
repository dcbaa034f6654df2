//! Exact ground truth for tiny tasks.
//!
//! An [`Oracle`] enumerates every reachable history of a [`LatentModel`],
//! solves for the optimal values, and then analyses memory-bounded
//! policies by pairing history classes with memory stacks.

mod history;
mod models;
mod order;
mod search;
mod stack;

pub use history::{Belief, HistoryMdp, Outcome};
pub use models::{LatentModel, MagnitudeTMazeModel, SingleStateModel, TMazeModel, Transition, XorMazeModel, BRIGHT, DIM};
pub use order::{OrderWitness, PartialOrderVerdict, ENUMERATION_LIMIT};
pub use search::{certified_policy, PolicySpace, SearchLimits, StackSolution};
pub use stack::{pop_push, Consistency, ConsistencyWitness, Stack, StackChain, StackPolicy, TablePolicy, UniformPolicy};

use crate::envs::tmaze::{CORRIDOR, GREEN, JUNCTION};
use crate::error::Result;
use crate::rng::RngStream;

/// A solved model plus the limits used for every query.
pub struct Oracle {
    pub mdp: HistoryMdp,
    pub limits: SearchLimits,
    name: String,
}

impl Oracle {
    pub fn new(model: &dyn LatentModel, gamma: f64) -> Result<Self> {
        Self::with_limits(model, gamma, SearchLimits::default())
    }

    pub fn with_limits(model: &dyn LatentModel, gamma: f64, limits: SearchLimits) -> Result<Self> {
        let mut mdp = HistoryMdp::build(model, gamma, limits.state_cap)?;
        mdp.value_iteration(limits.tol)?;
        Ok(Self {
            mdp,
            limits,
            name: model.name(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma
    }

    /// Optimal expected return before the first observation.
    pub fn optimal_value(&self) -> f64 {
        self.mdp.start_value()
    }

    /// Optimal value after the observation sequence, taking `action` every step.
    pub fn history_value(&self, observations: &[u16], action: usize) -> Option<f64> {
        let (&x0, rest) = observations.split_first()?;
        let steps: Vec<_> = rest.iter().map(|&x| (action, x)).collect();
        self.mdp.belief_after(x0, &steps).map(|b| self.mdp.values[b])
    }

    pub fn best_stack_policy(&self, k: usize) -> Result<StackSolution> {
        search::best_stack_policy(&self.mdp, k, &self.limits)
    }

    /// `|V* - V_k|` at the stack reached along the observations `probe`.
    pub fn value_gap(&self, k: usize, probe: &[u16]) -> Result<f64> {
        let sol = self.best_stack_policy(k)?;
        let (v_star, v_k) = sol.probe(&self.mdp, probe)?;
        Ok((v_star - v_k).abs())
    }

    pub fn find_kappa(&self, k_max: usize) -> Result<Option<usize>> {
        search::find_kappa(&self.mdp, k_max, &self.limits)
    }

    /// Exact values of an arbitrary stack policy.
    pub fn evaluate(&self, policy: &dyn StackPolicy, k: usize) -> Result<StackChain> {
        let mut chain = StackChain::build(&self.mdp, policy, k, self.limits.state_cap)?;
        chain.evaluate(self.limits.tol)?;
        Ok(chain)
    }

    pub fn check_value_consistency(&self, policy: &dyn StackPolicy, k: usize) -> Result<Consistency> {
        let chain = self.evaluate(policy, k)?;
        stack::check_consistency(&chain, self.limits.eq_tol)
    }

    pub fn check_partial_order(&self, k: usize, num_pairs: usize, rng: &mut RngStream) -> Result<PartialOrderVerdict> {
        order::check_partial_order(&self.mdp, k, num_pairs, rng, &self.limits)
    }
}

/// The T-Maze probe: the green cue followed by one corridor cell, or by
/// the junction when there is no corridor.
pub fn tmaze_probe(length: usize) -> Vec<u16> {
    vec![GREEN, if length == 0 { JUNCTION } else { CORRIDOR }]
}

/// Value gap of the passive T-Maze at the cue-then-corridor stack.
pub fn tmaze_value_gap(length: usize, k: usize, gamma: f64) -> Result<f64> {
    Oracle::new(&TMazeModel::passive(length), gamma)?.value_gap(k, &tmaze_probe(length))
}

/// `|gamma^L - mean(gamma^1..gamma^L)|`, the gap when a two-slot stack keeps
/// the cue and revisits the same corridor stack for `L` steps.
pub fn closed_form_gap(length: usize, gamma: f64) -> f64 {
    if length == 0 {
        return 0.0;
    }
    let mean = (1..=length).map(|j| gamma.powi(j as i32)).sum::<f64>() / length as f64;
    (gamma.powi(length as i32) - mean).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::tmaze::{RED, UP};
    use crate::memory::JointAction;
    use approx::assert_abs_diff_eq;

    const G: f64 = 0.99;

    #[test]
    fn optimal_values() {
        let o = Oracle::new(&TMazeModel::passive(3), G).unwrap();
        let v = o.history_value(&[GREEN, CORRIDOR], UP).unwrap();
        assert_abs_diff_eq!(v, 0.970299, epsilon = 1e-12);
        let o = Oracle::new(&TMazeModel::passive(0), G).unwrap();
        assert_abs_diff_eq!(o.history_value(&[RED], UP).unwrap(), G, epsilon = 1e-12);
        let o = Oracle::new(&TMazeModel::passive(3), 0.0).unwrap();
        assert_abs_diff_eq!(o.history_value(&[GREEN, CORRIDOR, CORRIDOR, CORRIDOR, JUNCTION], UP).unwrap(), 1.0);
        assert_eq!(o.history_value(&[GREEN, CORRIDOR], UP).unwrap(), 0.0);
    }

    #[test]
    fn two_slot_stack_value_averages_the_corridor() {
        let o = Oracle::new(&TMazeModel::passive(3), G).unwrap();
        let sol = o.best_stack_policy(2).unwrap();
        assert!(sol.attains_optimum);
        let v = sol.stack_values[&vec![GREEN, CORRIDOR]];
        assert_abs_diff_eq!(v, (G + G * G + G * G * G) / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.980133, epsilon = 1e-6);
    }

    #[test]
    fn value_gap_examples() {
        assert_abs_diff_eq!(tmaze_value_gap(3, 2, G).unwrap(), 0.009834, epsilon = 1e-6);
        assert_eq!(tmaze_value_gap(0, 2, G).unwrap(), 0.0);
        assert!(tmaze_value_gap(3, 2, 1e-6).unwrap() < 1e-6);
        for len in 1..=6 {
            assert_abs_diff_eq!(tmaze_value_gap(len, 2, G).unwrap(), closed_form_gap(len, G), epsilon = 1e-9);
        }
    }

    #[test]
    fn full_memory_attains_the_optimum() {
        let models: Vec<Box<dyn LatentModel>> = vec![
            Box::new(TMazeModel::passive(0)),
            Box::new(TMazeModel::passive(2)),
            Box::new(TMazeModel::passive(3).continual()),
            Box::new(XorMazeModel),
            Box::new(MagnitudeTMazeModel { length: 1 }),
            Box::new(SingleStateModel),
        ];
        for m in models {
            let k = m.k_star().unwrap();
            let o = Oracle::new(m.as_ref(), G).unwrap();
            let sol = o.best_stack_policy(k).unwrap();
            assert!(sol.attains_optimum, "{}", m.name());
            assert_abs_diff_eq!(sol.start_value, o.optimal_value(), epsilon = 1e-9);
        }
    }

    #[test]
    fn frame_stack_at_full_order_matches_history_values() {
        let len = 2;
        let o = Oracle::new(&TMazeModel::passive(len), G).unwrap();
        let sol = o.best_stack_policy(len + 2).unwrap();
        // frame stacking with the optimal junction choice read off the oldest slot
        let fs = |s: &[u16]| {
            let env_action = if s[0] == RED { crate::envs::tmaze::DOWN } else { UP };
            vec![(JointAction { env_action, mem_action: 1 }, 1.0)]
        };
        let chain = o.evaluate(&fs, len + 2).unwrap();
        for (i, (b, _)) in chain.nodes.iter().enumerate() {
            assert_abs_diff_eq!(chain.values[i], o.mdp.values[*b], epsilon = 1e-9);
        }
        let values = chain.stack_values();
        for (i, (b, s)) in chain.nodes.iter().enumerate() {
            assert_abs_diff_eq!(values[s], chain.values[i], epsilon = 1e-9);
            assert_abs_diff_eq!(values[s], o.mdp.values[*b], epsilon = 1e-9);
        }
        assert_abs_diff_eq!(sol.start_value, o.optimal_value(), epsilon = 1e-12);
    }

    #[test]
    fn one_slot_succeeds_half_the_time() {
        for len in 1..=3 {
            let o = Oracle::new(&TMazeModel::passive(len), G).unwrap();
            let sol = o.best_stack_policy(1).unwrap();
            assert!(!sol.attains_optimum);
            assert_abs_diff_eq!(sol.start_value / o.optimal_value(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn minimal_memory() {
        for len in 0..=4 {
            let o = Oracle::new(&TMazeModel::passive(len), G).unwrap();
            assert_eq!(o.find_kappa(6).unwrap(), Some(2), "L={len}");
        }
        let o = Oracle::new(&XorMazeModel, G).unwrap();
        assert_eq!(o.find_kappa(5).unwrap(), Some(3));
        let o = Oracle::new(&TMazeModel::active(2), G).unwrap();
        assert_eq!(o.find_kappa(4).unwrap(), Some(2));
        let o = Oracle::new(&SingleStateModel, G).unwrap();
        assert_eq!(o.find_kappa(3).unwrap(), Some(1));
        let o = Oracle::new(&TMazeModel::passive(3), G).unwrap();
        assert_eq!(o.find_kappa(1).unwrap(), None);
    }

    #[test]
    fn optimal_policy_is_value_consistent() {
        let o = Oracle::new(&TMazeModel::passive(3), G).unwrap();
        let sol = o.best_stack_policy(2).unwrap();
        let c = o.check_value_consistency(&sol.policy, 2).unwrap();
        assert!(c.consistent);
        assert!(c.witness.is_none());
        let o = Oracle::new(&SingleStateModel, G).unwrap();
        let sol = o.best_stack_policy(1).unwrap();
        assert!(o.check_value_consistency(&sol.policy, 1).unwrap().consistent);
    }

    #[test]
    fn memoryless_policy_merges_the_cues() {
        let o = Oracle::new(&TMazeModel::passive(2), G).unwrap();
        let always_up = |_: &[u16]| vec![(JointAction { env_action: UP, mem_action: 1 }, 1.0)];
        let c = o.check_value_consistency(&always_up, 1).unwrap();
        assert!(!c.consistent);
        let w = c.witness.unwrap();
        assert_eq!(w.t, 1);
        assert_eq!(w.stack, vec![CORRIDOR]);
        let mut cues = [w.history_a[0], w.history_b[0]];
        cues.sort();
        assert_eq!(cues, [GREEN, RED]);
        assert!((w.value_a - w.value_b).abs() > 0.5);
    }

    #[test]
    fn partial_order_holds_on_small_mazes() {
        for len in 0..=2 {
            let o = Oracle::new(&TMazeModel::passive(len), G).unwrap();
            let mut rng = RngStream::new(7);
            let v = o.check_partial_order(2, 200, &mut rng).unwrap();
            assert!(v.holds(), "L={len}: {v:?}");
        }
    }

    #[test]
    fn magnitude_fixture_violates_the_assumption() {
        let o = Oracle::new(&MagnitudeTMazeModel { length: 1 }, G).unwrap();
        let sol = o.best_stack_policy(2).unwrap();
        assert!(sol.attains_optimum);
        let c = o.check_value_consistency(&sol.policy, 2).unwrap();
        assert!(!c.consistent);
        let mut rng = RngStream::new(0);
        match o.check_partial_order(2, 50, &mut rng).unwrap() {
            PartialOrderVerdict::AssumptionViolated(w) => {
                let mut lamps = [w.history_a[1], w.history_b[1]];
                lamps.sort();
                assert_eq!(lamps, [BRIGHT, DIM]);
            }
            other => panic!("expected an assumption violation, got {other:?}"),
        }
    }

    #[test]
    fn uniform_policy_value() {
        let o = Oracle::new(&TMazeModel::passive(1), G).unwrap();
        let u = UniformPolicy {
            num_env_actions: 4,
            num_mem_actions: 2,
        };
        assert_abs_diff_eq!(o.evaluate(&u, 2).unwrap().start_value(), 0.5 * G * G, epsilon = 1e-12);
    }

    #[test]
    fn halving_tolerance_keeps_gaps_within_tolerance() {
        for len in 2..=6 {
            for tol in [1e-4, 1e-8] {
                let model = TMazeModel::passive(len);
                let lim = |t| SearchLimits { tol: t, ..SearchLimits::default() };
                let a = Oracle::with_limits(&model, G, lim(tol)).unwrap().value_gap(2, &tmaze_probe(len)).unwrap();
                let b = Oracle::with_limits(&model, G, lim(tol / 2.0)).unwrap().value_gap(2, &tmaze_probe(len)).unwrap();
                assert!((a - b).abs() <= tol);
            }
        }
    }
}
