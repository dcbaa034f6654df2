//! Passive and active T-Mazes.
//!
//! Cell layout along the corridor: position 0 is the tail (shows the cue),
//! positions `1..=L` are corridor cells and position `L + 1` is the junction.

use serde::{Deserialize, Serialize};

use crate::env::{check_action, CueAnnotation, EnvSpec, Environment, Mode, ObsSpace, Observation, StepResult};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const GREEN: u16 = 0;
pub const RED: u16 = 1;
pub const JUNCTION: u16 = 2;
pub const CORRIDOR: u16 = 3;
pub const ALPHABET: usize = 4;

pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

pub const ACTIVE_HORIZON: usize = 100;
/// Nominal lifetime reported by continual mazes; never enforced.
pub const CONTINUAL_LIFETIME: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Passive,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TMazeConfig {
    /// Corridor length `L` (maze length is `L + 2`).
    pub length: usize,
    pub variant: Variant,
    pub mode: Mode,
    /// Episodic only: resample the corridor length uniformly in `0..=L`
    /// at every reset.
    #[serde(default)]
    pub random_corridor: bool,
}

impl TMazeConfig {
    pub fn passive(length: usize, mode: Mode) -> Self {
        Self {
            length,
            variant: Variant::Passive,
            mode,
            random_corridor: false,
        }
    }

    pub fn active(length: usize, mode: Mode) -> Self {
        Self {
            length,
            variant: Variant::Active,
            mode,
            random_corridor: false,
        }
    }
}

/// Goal reached by `action` at the junction: `Some(0)` is the upper goal,
/// `Some(1)` the lower one.
pub fn junction_goal(variant: Variant, action: usize) -> Option<u8> {
    match (variant, action) {
        (_, UP) => Some(0),
        (_, DOWN) => Some(1),
        (Variant::Passive, RIGHT) => Some(0),
        (Variant::Passive, LEFT) => Some(1),
        _ => None,
    }
}

/// The green cue points to the upper goal, red to the lower one.
pub fn correct_goal(cue: u16) -> u8 {
    if cue == GREEN {
        0
    } else {
        1
    }
}

#[derive(Debug, Clone)]
pub struct TMaze {
    cfg: TMazeConfig,
    spec: EnvSpec,
    cue: u16,
    pos: usize,
    /// Corridor length of the current episode.
    cur_len: usize,
    t: usize,
    period: u64,
    done: bool,
    started: bool,
}

pub fn make_passive_tmaze(cfg: TMazeConfig) -> Result<TMaze> {
    TMaze::new(TMazeConfig {
        variant: Variant::Passive,
        ..cfg
    })
}

pub fn make_active_tmaze(cfg: TMazeConfig) -> Result<TMaze> {
    TMaze::new(TMazeConfig {
        variant: Variant::Active,
        ..cfg
    })
}

impl TMaze {
    pub fn new(cfg: TMazeConfig) -> Result<Self> {
        if cfg.random_corridor && cfg.mode == Mode::Continual {
            return Err(Error::config("random_corridor is an episodic option"));
        }
        let horizon = match (cfg.mode, cfg.variant) {
            (Mode::Continual, _) => CONTINUAL_LIFETIME,
            (Mode::Episodic, Variant::Passive) => cfg.length + 2,
            (Mode::Episodic, Variant::Active) => ACTIVE_HORIZON,
        };
        let name = match cfg.variant {
            Variant::Passive => "passive_tmaze",
            Variant::Active => "active_tmaze",
        };
        let spec = EnvSpec {
            name: name.into(),
            obs: ObsSpace::Discrete {
                alphabet_size: ALPHABET,
            },
            num_env_actions: 4,
            mode: cfg.mode,
            horizon,
        };
        spec.validate()?;
        Ok(Self {
            cfg,
            spec,
            cue: GREEN,
            pos: 0,
            cur_len: cfg.length,
            t: 0,
            period: 0,
            done: false,
            started: false,
        })
    }

    pub fn config(&self) -> &TMazeConfig {
        &self.cfg
    }

    pub fn cue(&self) -> u16 {
        self.cue
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn junction(&self) -> usize {
        self.cur_len + 1
    }

    fn start_pos(&self) -> usize {
        match self.cfg.variant {
            Variant::Passive => 0,
            Variant::Active => 1,
        }
    }

    fn observe(&self) -> u16 {
        if self.pos == 0 {
            self.cue
        } else if self.pos == self.junction() {
            JUNCTION
        } else {
            CORRIDOR
        }
    }

    fn begin_period(&mut self, rng: &mut RngStream) {
        self.cue = if rng.coin(0.5) { GREEN } else { RED };
        if self.cfg.random_corridor {
            self.cur_len = rng.below(self.cfg.length + 1);
        }
        self.pos = self.start_pos();
    }
}

impl Environment for TMaze {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut RngStream) -> Observation {
        self.cur_len = self.cfg.length;
        self.begin_period(rng);
        self.t = 0;
        self.period = 0;
        self.done = false;
        self.started = true;
        Observation::Symbol(self.observe())
    }

    fn step(&mut self, action: usize, rng: &mut RngStream) -> Result<StepResult> {
        check_action(&self.spec, action)?;
        if !self.started {
            return Err(Error::contract("step before reset"));
        }
        if self.done {
            return Err(Error::contract("step after episode end"));
        }
        self.t += 1;
        let at_junction = self.pos == self.junction();
        let goal = if at_junction {
            junction_goal(self.cfg.variant, action)
        } else {
            None
        };

        if let Some(g) = goal {
            let correct = g == correct_goal(self.cue);
            let reward = if correct { 1.0 } else { 0.0 };
            return Ok(match self.cfg.mode {
                Mode::Episodic => {
                    self.done = true;
                    StepResult {
                        next_obs: Observation::Symbol(self.observe()),
                        reward,
                        done: true,
                        goal: Some(correct),
                    }
                }
                Mode::Continual => {
                    self.period += 1;
                    self.begin_period(rng);
                    StepResult {
                        next_obs: Observation::Symbol(self.observe()),
                        reward,
                        done: false,
                        goal: Some(correct),
                    }
                }
            });
        }

        match self.cfg.variant {
            Variant::Passive => self.pos += 1,
            Variant::Active => match action {
                RIGHT if !at_junction => self.pos += 1,
                LEFT if self.pos > 0 => self.pos -= 1,
                _ => {}
            },
        }
        let done = self.cfg.mode == Mode::Episodic && self.t >= self.spec.horizon;
        self.done = done;
        Ok(StepResult {
            next_obs: Observation::Symbol(self.observe()),
            reward: 0.0,
            done,
            goal: None,
        })
    }

    fn goal_cue(&self) -> Result<Vec<Observation>> {
        Ok(vec![Observation::Symbol(self.cue)])
    }

    fn cue_annotation(&self) -> Option<CueAnnotation> {
        Some(CueAnnotation {
            period: self.period,
            num_cues: 1,
            visible: (self.pos == 0).then_some(0),
        })
    }

    fn optimal_period_value(&self, gamma: f64) -> Option<f64> {
        let len = self.cfg.length as i32;
        match (self.cfg.variant, self.cfg.random_corridor) {
            (_, true) => None,
            (Variant::Passive, false) => Some(gamma.powi(len + 1)),
            (Variant::Active, false) => Some(gamma.powi(len + 2)),
        }
    }

    fn k_star(&self) -> Option<usize> {
        match (self.cfg.variant, self.cfg.mode) {
            (Variant::Passive, _) => Some(self.cfg.length + 2),
            (Variant::Active, Mode::Episodic) => Some(ACTIVE_HORIZON),
            (Variant::Active, Mode::Continual) => None,
        }
    }

    fn kappa(&self) -> Option<usize> {
        Some(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(env: &mut TMaze, rng: &mut RngStream, actions: &[usize]) -> Vec<StepResult> {
        actions.iter().map(|&a| env.step(a, rng).unwrap()).collect()
    }

    #[test]
    fn reset_shows_a_cue_deterministically() {
        let mut e = make_passive_tmaze(TMazeConfig::passive(3, Mode::Episodic)).unwrap();
        let a = e.reset(&mut RngStream::new(1));
        let b = e.reset(&mut RngStream::new(1));
        assert_eq!(a, b);
        assert!(matches!(a, Observation::Symbol(GREEN) | Observation::Symbol(RED)));
    }

    #[test]
    fn passive_corridor_and_goal_table() {
        // All 2 cues x 4 junction actions.
        for seed in 0..20 {
            for a in 0..4 {
                let mut e = make_passive_tmaze(TMazeConfig::passive(2, Mode::Episodic)).unwrap();
                let mut rng = RngStream::new(seed);
                let cue = e.reset(&mut rng).symbol().unwrap();
                let out = run(&mut e, &mut rng, &[2, 0, 3]);
                let expect_obs = [CORRIDOR, CORRIDOR, JUNCTION];
                for (r, &o) in out.iter().zip(&expect_obs) {
                    assert_eq!(r.next_obs, Observation::Symbol(o));
                    assert_eq!(r.reward, 0.0);
                    assert!(!r.done);
                }
                let last = e.step(a, &mut rng).unwrap();
                assert!(last.done);
                let upper = a == UP || a == RIGHT;
                let expect = (cue == GREEN) == upper;
                assert_eq!(last.reward, if expect { 1.0 } else { 0.0 });
                assert_eq!(last.goal, Some(expect));
                assert!(matches!(e.step(0, &mut rng), Err(Error::Contract(_))));
            }
        }
    }

    #[test]
    fn passive_l0_is_cue_then_junction() {
        let mut e = make_passive_tmaze(TMazeConfig::passive(0, Mode::Episodic)).unwrap();
        let mut rng = RngStream::new(4);
        e.reset(&mut rng);
        assert_eq!(e.step(1, &mut rng).unwrap().next_obs, Observation::Symbol(JUNCTION));
        assert!(e.step(0, &mut rng).unwrap().done);
        assert_eq!(e.k_star(), Some(2));
    }

    #[test]
    fn passive_episode_has_exact_length() {
        for len in 0..8 {
            let mut e = make_passive_tmaze(TMazeConfig::passive(len, Mode::Episodic)).unwrap();
            let mut rng = RngStream::new(len as u64);
            e.reset(&mut rng);
            let mut steps = 0;
            loop {
                steps += 1;
                if e.step(1, &mut rng).unwrap().done {
                    break;
                }
            }
            assert_eq!(steps, len + 2);
        }
    }

    #[test]
    fn continual_respawns_with_fresh_cue() {
        let mut e = make_passive_tmaze(TMazeConfig::passive(1, Mode::Continual)).unwrap();
        let mut rng = RngStream::new(9);
        let cue = e.reset(&mut rng).symbol().unwrap();
        e.step(0, &mut rng).unwrap();
        e.step(0, &mut rng).unwrap();
        let correct = if cue == GREEN { UP } else { DOWN };
        let r = e.step(correct, &mut rng).unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(!r.done);
        assert_eq!(r.next_obs, Observation::Symbol(e.cue()));
        assert_eq!(e.cue_annotation().unwrap().period, 1);
        for _ in 0..1000 {
            assert!(!e.step(rng.below(4), &mut rng).unwrap().done);
        }
    }

    #[test]
    fn continual_cue_changes_only_at_respawn() {
        let mut e = make_passive_tmaze(TMazeConfig::passive(3, Mode::Continual)).unwrap();
        let mut rng = RngStream::new(5);
        e.reset(&mut rng);
        let mut cue = e.cue();
        for _ in 0..2000 {
            let r = e.step(rng.below(4), &mut rng).unwrap();
            if r.goal.is_none() {
                assert_eq!(e.cue(), cue);
            }
            cue = e.cue();
        }
    }

    #[test]
    fn random_corridor_lengths_in_range() {
        let mut cfg = TMazeConfig::passive(16, Mode::Episodic);
        cfg.random_corridor = true;
        let mut e = make_passive_tmaze(cfg).unwrap();
        let mut rng = RngStream::new(0);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..300 {
            e.reset(&mut rng);
            let mut steps = 0;
            while !e.step(0, &mut rng).unwrap().done {
                steps += 1;
            }
            assert!(steps <= 17);
            seen.insert(steps - 1);
        }
        assert!(seen.len() > 10);
    }

    #[test]
    fn active_walls_and_cue_visibility() {
        let mut e = make_active_tmaze(TMazeConfig::active(2, Mode::Episodic)).unwrap();
        let mut rng = RngStream::new(2);
        let first = e.reset(&mut rng);
        assert_eq!(first, Observation::Symbol(CORRIDOR));
        // up into a wall
        let r = e.step(UP, &mut rng).unwrap();
        assert_eq!(r.next_obs, Observation::Symbol(CORRIDOR));
        assert_eq!(e.position(), 1);
        // to the tail: cue visible
        let r = e.step(LEFT, &mut rng).unwrap();
        assert_eq!(r.next_obs, Observation::Symbol(e.cue()));
        assert_eq!(e.cue_annotation().unwrap().visible, Some(0));
        // left wall at the tail
        e.step(LEFT, &mut rng).unwrap();
        assert_eq!(e.position(), 0);
        for _ in 0..3 {
            e.step(RIGHT, &mut rng).unwrap();
        }
        assert_eq!(e.position(), 3);
        // right is a wall at the junction
        let r = e.step(RIGHT, &mut rng).unwrap();
        assert_eq!(r.next_obs, Observation::Symbol(JUNCTION));
        let a = if e.cue() == GREEN { UP } else { DOWN };
        let r = e.step(a, &mut rng).unwrap();
        assert_eq!((r.reward, r.done), (1.0, true));
    }

    #[test]
    fn active_continual_wrong_goal_respawns() {
        let mut e = make_active_tmaze(TMazeConfig::active(0, Mode::Continual)).unwrap();
        let mut rng = RngStream::new(8);
        assert_eq!(e.reset(&mut rng), Observation::Symbol(JUNCTION));
        let wrong = if e.cue() == GREEN { DOWN } else { UP };
        let r = e.step(wrong, &mut rng).unwrap();
        assert_eq!((r.reward, r.done, r.goal), (0.0, false, Some(false)));
        assert_eq!(e.position(), 1);
        assert_eq!(e.k_star(), None);
    }

    #[test]
    fn active_episodic_horizon() {
        let mut e = make_active_tmaze(TMazeConfig::active(3, Mode::Episodic)).unwrap();
        let mut rng = RngStream::new(1);
        e.reset(&mut rng);
        let mut n = 0;
        loop {
            n += 1;
            if e.step(UP, &mut rng).unwrap().done {
                break;
            }
        }
        assert_eq!(n, ACTIVE_HORIZON);
    }

    #[test]
    fn out_of_range_action_rejected() {
        let mut e = make_passive_tmaze(TMazeConfig::passive(1, Mode::Episodic)).unwrap();
        let mut rng = RngStream::new(0);
        e.reset(&mut rng);
        assert!(matches!(e.step(4, &mut rng), Err(Error::Contract(_))));
    }
}
