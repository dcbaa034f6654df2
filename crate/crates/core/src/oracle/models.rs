//! Explicit latent-state models of the small tasks, plus two fixtures.

use crate::envs::tmaze::{correct_goal, junction_goal, Variant, CORRIDOR, GREEN, JUNCTION, LEFT, RED, RIGHT};
use crate::envs::xormaze::{cell_obs, move_cell, xor_goal_is_north, Cell};

/// One outcome of taking an action in a latent state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub prob: f64,
    pub next: usize,
    pub reward: f64,
    /// The episode ends; `next` is ignored.
    pub terminal: bool,
}

/// A finite POMDP with deterministic observations.
pub trait LatentModel {
    fn name(&self) -> String;
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn alphabet_size(&self) -> usize;
    fn initial(&self) -> Vec<(usize, f64)>;
    fn observe(&self, state: usize) -> u16;
    fn transitions(&self, state: usize, action: usize) -> Vec<Transition>;
    /// Continual models never terminate; their stack values are weighted
    /// by long-run visit frequency instead of per-episode visit counts.
    fn continual(&self) -> bool {
        false
    }
    fn k_star(&self) -> Option<usize> {
        None
    }
    /// Cap on per-episode visit counting for models that may loop.
    fn episode_horizon(&self) -> usize {
        100
    }
}

fn step(next: usize, reward: f64) -> Vec<Transition> {
    vec![Transition {
        prob: 1.0,
        next,
        reward,
        terminal: false,
    }]
}

fn terminal(reward: f64) -> Vec<Transition> {
    vec![Transition {
        prob: 1.0,
        next: 0,
        reward,
        terminal: true,
    }]
}

/// T-Maze with latent `(cue, position)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TMazeModel {
    pub length: usize,
    pub variant: Variant,
    pub continual: bool,
}

impl TMazeModel {
    pub fn passive(length: usize) -> Self {
        Self {
            length,
            variant: Variant::Passive,
            continual: false,
        }
    }

    pub fn active(length: usize) -> Self {
        Self {
            length,
            variant: Variant::Active,
            continual: false,
        }
    }

    pub fn continual(self) -> Self {
        Self {
            continual: true,
            ..self
        }
    }

    fn cells(&self) -> usize {
        self.length + 2
    }

    fn junction(&self) -> usize {
        self.length + 1
    }

    pub fn state(&self, cue: u16, pos: usize) -> usize {
        cue as usize * self.cells() + pos
    }

    fn start(&self) -> usize {
        match self.variant {
            Variant::Passive => 0,
            Variant::Active => 1,
        }
    }

    fn respawn(&self, reward: f64) -> Vec<Transition> {
        [GREEN, RED]
            .iter()
            .map(|&c| Transition {
                prob: 0.5,
                next: self.state(c, self.start()),
                reward,
                terminal: false,
            })
            .collect()
    }
}

impl LatentModel for TMazeModel {
    fn name(&self) -> String {
        let v = match self.variant {
            Variant::Passive => "passive",
            Variant::Active => "active",
        };
        format!("{v}_tmaze(L={})", self.length)
    }

    fn num_states(&self) -> usize {
        2 * self.cells()
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn alphabet_size(&self) -> usize {
        4
    }

    fn initial(&self) -> Vec<(usize, f64)> {
        vec![(self.state(GREEN, self.start()), 0.5), (self.state(RED, self.start()), 0.5)]
    }

    fn observe(&self, s: usize) -> u16 {
        let (cue, pos) = ((s / self.cells()) as u16, s % self.cells());
        if pos == 0 {
            cue
        } else if pos == self.junction() {
            JUNCTION
        } else {
            CORRIDOR
        }
    }

    fn transitions(&self, s: usize, a: usize) -> Vec<Transition> {
        let (cue, pos) = ((s / self.cells()) as u16, s % self.cells());
        if pos == self.junction() {
            if let Some(g) = junction_goal(self.variant, a) {
                let r = if g == correct_goal(cue) { 1.0 } else { 0.0 };
                return if self.continual { self.respawn(r) } else { terminal(r) };
            }
        }
        let next = match self.variant {
            Variant::Passive => pos + 1,
            Variant::Active => match a {
                RIGHT if pos < self.junction() => pos + 1,
                LEFT if pos > 0 => pos - 1,
                _ => pos,
            },
        };
        step(self.state(cue, next), 0.0)
    }

    fn continual(&self) -> bool {
        self.continual
    }

    fn episode_horizon(&self) -> usize {
        match self.variant {
            Variant::Passive => self.length + 2,
            Variant::Active => crate::envs::tmaze::ACTIVE_HORIZON,
        }
    }

    fn k_star(&self) -> Option<usize> {
        // without a clock, wandering in the active corridor has no finite order
        match self.variant {
            Variant::Passive => Some(self.length + 2),
            Variant::Active => None,
        }
    }
}

/// Plus-shaped two-cue maze with latent `(left cue, right cue, cell)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct XorMazeModel;

const XOR_CELLS: [Cell; 3] = [Cell::Centre, Cell::West, Cell::East];

impl XorMazeModel {
    pub fn state(cues: [u16; 2], cell: Cell) -> usize {
        let c = XOR_CELLS.iter().position(|&x| x == cell).expect("non-goal cell");
        (cues[0] as usize * 2 + cues[1] as usize) * 3 + c
    }

    fn decode(s: usize) -> ([u16; 2], Cell) {
        let pair = s / 3;
        ([(pair / 2) as u16, (pair % 2) as u16], XOR_CELLS[s % 3])
    }
}

impl LatentModel for XorMazeModel {
    fn name(&self) -> String {
        "xormaze".into()
    }

    fn num_states(&self) -> usize {
        12
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn alphabet_size(&self) -> usize {
        4
    }

    fn initial(&self) -> Vec<(usize, f64)> {
        (0..4)
            .map(|p| (Self::state([(p / 2) as u16, (p % 2) as u16], Cell::Centre), 0.25))
            .collect()
    }

    fn observe(&self, s: usize) -> u16 {
        let (cues, cell) = Self::decode(s);
        cell_obs(cell, cues)
    }

    fn transitions(&self, s: usize, a: usize) -> Vec<Transition> {
        let (cues, cell) = Self::decode(s);
        match move_cell(cell, a) {
            Cell::North => terminal(if xor_goal_is_north(cues) { 1.0 } else { 0.0 }),
            Cell::South => terminal(if xor_goal_is_north(cues) { 0.0 } else { 1.0 }),
            next => step(Self::state(cues, next), 0.0),
        }
    }

    fn k_star(&self) -> Option<usize> {
        Some(5)
    }
}

pub const BRIGHT: u16 = 4;
pub const DIM: u16 = 5;

/// Passive T-Maze whose second observation announces the reward size.
///
/// Step 0 shows the side cue, step 1 shows a bright or dim lamp, then the
/// corridor and the junction follow. The correct goal pays 1 after a
/// bright lamp and 0.5 after a dim one. With two slots an optimal agent
/// must keep the side cue and so forgets the lamp: histories sharing a
/// stack then have different values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MagnitudeTMazeModel {
    pub length: usize,
}

impl MagnitudeTMazeModel {
    fn cells(&self) -> usize {
        self.length + 3
    }

    fn junction(&self) -> usize {
        self.length + 2
    }

    pub fn state(&self, cue: u16, bright: bool, pos: usize) -> usize {
        (cue as usize * 2 + usize::from(bright)) * self.cells() + pos
    }
}

impl LatentModel for MagnitudeTMazeModel {
    fn name(&self) -> String {
        format!("magnitude_tmaze(L={})", self.length)
    }

    fn num_states(&self) -> usize {
        4 * self.cells()
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn alphabet_size(&self) -> usize {
        6
    }

    fn initial(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for cue in [GREEN, RED] {
            for bright in [false, true] {
                out.push((self.state(cue, bright, 0), 0.25));
            }
        }
        out
    }

    fn observe(&self, s: usize) -> u16 {
        let (latent, pos) = (s / self.cells(), s % self.cells());
        match pos {
            0 => (latent / 2) as u16,
            1 if latent % 2 == 1 => BRIGHT,
            1 => DIM,
            p if p == self.junction() => JUNCTION,
            _ => CORRIDOR,
        }
    }

    fn transitions(&self, s: usize, a: usize) -> Vec<Transition> {
        let (latent, pos) = (s / self.cells(), s % self.cells());
        if pos == self.junction() {
            let cue = (latent / 2) as u16;
            let size = if latent % 2 == 1 { 1.0 } else { 0.5 };
            let g = junction_goal(Variant::Passive, a).expect("every passive action is a goal");
            return terminal(if g == correct_goal(cue) { size } else { 0.0 });
        }
        step(s + 1, 0.0)
    }

    fn k_star(&self) -> Option<usize> {
        Some(self.length + 3)
    }

    fn episode_horizon(&self) -> usize {
        self.length + 3
    }
}

/// One state, one symbol, two actions paying 0 and 1 forever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SingleStateModel;

impl LatentModel for SingleStateModel {
    fn name(&self) -> String {
        "single_state".into()
    }

    fn num_states(&self) -> usize {
        1
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn alphabet_size(&self) -> usize {
        1
    }

    fn initial(&self) -> Vec<(usize, f64)> {
        vec![(0, 1.0)]
    }

    fn observe(&self, _s: usize) -> u16 {
        0
    }

    fn transitions(&self, _s: usize, a: usize) -> Vec<Transition> {
        step(0, a as f64)
    }

    fn continual(&self) -> bool {
        true
    }

    fn k_star(&self) -> Option<usize> {
        Some(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Environment, Mode};
    use crate::envs::tmaze::{make_active_tmaze, make_passive_tmaze, TMazeConfig, DOWN, UP};
    use crate::envs::xormaze::make_xormaze;
    use crate::rng::RngStream;

    fn check_stochastic(m: &dyn LatentModel) {
        let total: f64 = m.initial().iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for s in 0..m.num_states() {
            assert!((m.observe(s) as usize) < m.alphabet_size());
            for a in 0..m.num_actions() {
                let t = m.transitions(s, a);
                let p: f64 = t.iter().map(|t| t.prob).sum();
                assert!((p - 1.0).abs() < 1e-12, "{} s={s} a={a}", m.name());
                assert!(t.iter().all(|t| t.terminal || t.next < m.num_states()));
            }
        }
    }

    #[test]
    fn models_are_stochastic() {
        for len in 0..4 {
            check_stochastic(&TMazeModel::passive(len));
            check_stochastic(&TMazeModel::active(len));
            check_stochastic(&TMazeModel::passive(len).continual());
            check_stochastic(&MagnitudeTMazeModel { length: len });
        }
        check_stochastic(&XorMazeModel);
        check_stochastic(&SingleStateModel);
    }

    /// Replays random action sequences through the environment and the
    /// model and checks that observations and rewards agree.
    fn agree(env: &mut dyn Environment, model: &dyn LatentModel) {
        let mut rng = RngStream::new(0);
        for _ in 0..200 {
            let x0 = env.reset(&mut rng).symbol().unwrap();
            let mut belief: Vec<usize> = model
                .initial()
                .into_iter()
                .map(|(s, _)| s)
                .filter(|&s| model.observe(s) == x0)
                .collect();
            assert!(!belief.is_empty());
            for _ in 0..30 {
                let a = rng.below(4);
                let r = env.step(a, &mut rng).unwrap();
                let x = r.next_obs.symbol().unwrap();
                let mut next = Vec::new();
                let mut matched = false;
                for &s in &belief {
                    for t in model.transitions(s, a) {
                        if r.done && t.terminal && t.reward == r.reward {
                            matched = true;
                        }
                        if !t.terminal && model.observe(t.next) == x && t.reward == r.reward {
                            matched = true;
                            next.push(t.next);
                        }
                    }
                }
                assert!(matched, "{}: no model outcome matches the environment", model.name());
                if r.done {
                    break;
                }
                next.sort();
                next.dedup();
                belief = next;
            }
        }
    }

    #[test]
    fn models_agree_with_environments() {
        for len in 0..3 {
            let mut e = make_passive_tmaze(TMazeConfig::passive(len, Mode::Episodic)).unwrap();
            agree(&mut e, &TMazeModel::passive(len));
            let mut e = make_active_tmaze(TMazeConfig::active(len, Mode::Episodic)).unwrap();
            agree(&mut e, &TMazeModel::active(len));
            let mut e = make_passive_tmaze(TMazeConfig::passive(len, Mode::Continual)).unwrap();
            agree(&mut e, &TMazeModel::passive(len).continual());
        }
        let mut e = make_xormaze();
        agree(&mut e, &XorMazeModel);
    }

    #[test]
    fn magnitude_rewards() {
        let m = MagnitudeTMazeModel { length: 1 };
        let j = m.junction();
        assert_eq!(m.transitions(m.state(GREEN, true, j), UP)[0].reward, 1.0);
        assert_eq!(m.transitions(m.state(GREEN, false, j), UP)[0].reward, 0.5);
        assert_eq!(m.transitions(m.state(GREEN, false, j), DOWN)[0].reward, 0.0);
        assert_eq!(m.observe(m.state(RED, true, 1)), BRIGHT);
        assert_eq!(m.observe(m.state(RED, false, 0)), RED);
    }
}
