//! Plus-shaped maze whose goal depends on two cues.
//!
//! The agent starts in the centre. The left and right arms each show a random
//! colour; the top arm is the goal when the two colours differ and the bottom
//! arm when they match.

use crate::env::{check_action, CueAnnotation, EnvSpec, Environment, Mode, ObsSpace, Observation, StepResult};
use crate::envs::tmaze::{ALPHABET, DOWN, GREEN, JUNCTION, LEFT, RED, RIGHT, UP};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const HORIZON: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    Centre,
    West,
    East,
    North,
    South,
}

/// Move on the plus grid. Goal cells are absorbing and never stepped from.
pub fn move_cell(cell: Cell, action: usize) -> Cell {
    match (cell, action) {
        (Cell::Centre, UP) => Cell::North,
        (Cell::Centre, DOWN) => Cell::South,
        (Cell::Centre, LEFT) => Cell::West,
        (Cell::Centre, RIGHT) => Cell::East,
        (Cell::West, RIGHT) | (Cell::East, LEFT) => Cell::Centre,
        (c, _) => c,
    }
}

/// Upper goal iff the cues differ.
pub fn xor_goal_is_north(cues: [u16; 2]) -> bool {
    cues[0] != cues[1]
}

pub fn cell_obs(cell: Cell, cues: [u16; 2]) -> u16 {
    match cell {
        Cell::West => cues[0],
        Cell::East => cues[1],
        _ => JUNCTION,
    }
}

#[derive(Debug, Clone)]
pub struct XorMaze {
    spec: EnvSpec,
    cues: [u16; 2],
    cell: Cell,
    t: usize,
    done: bool,
    started: bool,
}

pub fn make_xormaze() -> XorMaze {
    XorMaze {
        spec: EnvSpec {
            name: "xormaze".into(),
            obs: ObsSpace::Discrete {
                alphabet_size: ALPHABET,
            },
            num_env_actions: 4,
            mode: Mode::Episodic,
            horizon: HORIZON,
        },
        cues: [GREEN, GREEN],
        cell: Cell::Centre,
        t: 0,
        done: false,
        started: false,
    }
}

impl XorMaze {
    pub fn cues(&self) -> [u16; 2] {
        self.cues
    }

    pub fn cell(&self) -> Cell {
        self.cell
    }
}

impl Environment for XorMaze {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut RngStream) -> Observation {
        for c in &mut self.cues {
            *c = if rng.coin(0.5) { GREEN } else { RED };
        }
        self.cell = Cell::Centre;
        self.t = 0;
        self.done = false;
        self.started = true;
        Observation::Symbol(JUNCTION)
    }

    fn step(&mut self, action: usize, _rng: &mut RngStream) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        if !self.started {
            return Err(Error::contract("step before reset"));
        }
        if self.done {
            return Err(Error::contract("step after episode end"));
        }
        self.t += 1;
        self.cell = move_cell(self.cell, action);
        let goal = match self.cell {
            Cell::North => Some(xor_goal_is_north(self.cues)),
            Cell::South => Some(!xor_goal_is_north(self.cues)),
            _ => None,
        };
        let reward = if goal == Some(true) { 1.0 } else { 0.0 };
        self.done = goal.is_some() || self.t >= HORIZON;
        Ok(StepResult {
            next_obs: Observation::Symbol(cell_obs(self.cell, self.cues)),
            reward,
            done: self.done,
            goal,
        })
    }

    fn goal_cue(&self) -> Result<Vec<Observation>> {
        Ok(self.cues.iter().map(|&c| Observation::Symbol(c)).collect())
    }

    fn cue_annotation(&self) -> Option<CueAnnotation> {
        let visible = match self.cell {
            Cell::West => Some(0),
            Cell::East => Some(1),
            _ => None,
        };
        Some(CueAnnotation {
            period: 0,
            num_cues: 2,
            visible,
        })
    }

    fn optimal_period_value(&self, gamma: f64) -> Option<f64> {
        // west, back, east, back, goal
        Some(gamma.powi(4))
    }

    fn k_star(&self) -> Option<usize> {
        Some(5)
    }

    fn kappa(&self) -> Option<usize> {
        Some(3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correct_goal_is_xor_of_cue_equality() {
        let cases = [
            ([RED, GREEN], true),
            ([GREEN, RED], true),
            ([RED, RED], false),
            ([GREEN, GREEN], false),
        ];
        for (cues, north) in cases {
            assert_eq!(xor_goal_is_north(cues), north);
        }
    }

    #[test]
    fn scripted_optimal_route() {
        for seed in 0..16 {
            let mut e = make_xormaze();
            let mut rng = RngStream::new(seed);
            assert_eq!(e.reset(&mut rng), Observation::Symbol(JUNCTION));
            let cues = e.cues();
            assert_eq!(e.step(LEFT, &mut rng).unwrap().next_obs, Observation::Symbol(cues[0]));
            assert_eq!(e.cue_annotation().unwrap().visible, Some(0));
            // walls at a corner
            assert_eq!(e.step(UP, &mut rng).unwrap().next_obs, Observation::Symbol(cues[0]));
            e.step(RIGHT, &mut rng).unwrap();
            assert_eq!(e.step(RIGHT, &mut rng).unwrap().next_obs, Observation::Symbol(cues[1]));
            e.step(LEFT, &mut rng).unwrap();
            let a = if xor_goal_is_north(cues) { UP } else { DOWN };
            let r = e.step(a, &mut rng).unwrap();
            assert_eq!((r.reward, r.done, r.goal), (1.0, true, Some(true)));
        }
    }

    #[test]
    fn wrong_goal_ends_with_zero() {
        let mut e = make_xormaze();
        let mut rng = RngStream::new(3);
        e.reset(&mut rng);
        let a = if xor_goal_is_north(e.cues()) { DOWN } else { UP };
        let r = e.step(a, &mut rng).unwrap();
        assert_eq!((r.reward, r.done, r.goal), (0.0, true, Some(false)));
    }

    #[test]
    fn horizon_ends_episode() {
        let mut e = make_xormaze();
        let mut rng = RngStream::new(3);
        e.reset(&mut rng);
        let mut n = 0;
        loop {
            n += 1;
            let a = if n % 2 == 0 { LEFT } else { RIGHT };
            if e.step(a, &mut rng).unwrap().done {
                break;
            }
        }
        assert_eq!(n, HORIZON);
    }

    #[test]
    fn both_cue_pairs_occur() {
        let mut e = make_xormaze();
        let mut rng = RngStream::new(11);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            e.reset(&mut rng);
            seen.insert(e.cues());
        }
        assert_eq!(seen.len(), 4);
    }
}
