//! 2x2x2 pocket cube seen through a camera that shows one face at a time.
//!
//! Stickers are indexed by corner cubie and axis: corner `c` has position
//! bits `(x, y, z)` in `{-1, 1}^3`, and sticker `3c + a` sits on the outer
//! face whose normal points along axis `a`. Face-turn permutations are
//! derived from this geometry once, at first use.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::env::{check_action, EnvSpec, Environment, Mode, ObsSpace, Observation, StepResult};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const NUM_STICKERS: usize = 24;
pub const NUM_COLOURS: usize = 6;
pub const NUM_FACE_TURNS: usize = 12;
pub const NUM_ACTIONS: usize = 16;
pub const HORIZON: usize = 100;
/// Four stickers, six colours each.
pub const ALPHABET: usize = 1296;

pub const YAW_POS: usize = 12;
pub const YAW_NEG: usize = 13;
pub const PITCH_POS: usize = 14;
pub const PITCH_NEG: usize = 15;

type Vec3 = [i32; 3];
type Mat3 = [[i32; 3]; 3];

const IDENTITY: Mat3 = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

/// Quarter-turn rotation about a coordinate axis (counter-clockwise seen
/// from the positive end of the axis).
fn quarter(axis: usize, ccw: bool) -> Mat3 {
    let s = if ccw { 1 } else { -1 };
    match axis {
        0 => [[1, 0, 0], [0, 0, -s], [0, s, 0]],
        1 => [[0, 0, s], [0, 1, 0], [-s, 0, 0]],
        _ => [[0, -s, 0], [s, 0, 0], [0, 0, 1]],
    }
}

fn apply(m: &Mat3, v: Vec3) -> Vec3 {
    let mut out = [0; 3];
    for (r, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|c| m[r][c] * v[c]).sum();
    }
    out
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|j| a[r][j] * b[j][c]).sum();
        }
    }
    out
}

fn corner_pos(c: usize) -> Vec3 {
    let bit = |b: usize| if c >> b & 1 == 1 { 1 } else { -1 };
    [bit(0), bit(1), bit(2)]
}

fn sticker_geometry(i: usize) -> (Vec3, Vec3) {
    let p = corner_pos(i / 3);
    let a = i % 3;
    let mut n = [0; 3];
    n[a] = p[a];
    (p, n)
}

fn sticker_index(p: Vec3, n: Vec3) -> usize {
    let c = (0..3).map(|b| usize::from(p[b] > 0) << b).sum::<usize>();
    let a = (0..3).find(|&a| n[a] != 0).expect("unit normal");
    3 * c + a
}

/// Face id of an outward normal: `2 * axis + (negative as usize)`.
fn face_of(n: Vec3) -> usize {
    let a = (0..3).find(|&a| n[a] != 0).expect("unit normal");
    2 * a + usize::from(n[a] < 0)
}

fn face_normal(face: usize) -> Vec3 {
    let mut n = [0; 3];
    n[face / 2] = if face.is_multiple_of(2) { 1 } else { -1 };
    n
}

/// `perm[i]` is where the sticker at slot `i` moves under the turn.
pub type Perm = [usize; NUM_STICKERS];

/// Permutations of the 12 face turns: action `2 * face + d`, where `d = 0`
/// is clockwise seen from outside that face and `d = 1` anticlockwise.
pub fn face_turns() -> &'static [Perm; NUM_FACE_TURNS] {
    static TABLE: OnceLock<[Perm; NUM_FACE_TURNS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[0; NUM_STICKERS]; NUM_FACE_TURNS];
        for (action, perm) in table.iter_mut().enumerate() {
            let face = action / 2;
            let axis = face / 2;
            let outward = face_normal(face)[axis];
            // clockwise seen from outside the face
            let ccw_about_axis = (action % 2 == 1) == (outward > 0);
            let rot = quarter(axis, ccw_about_axis);
            for (i, slot) in perm.iter_mut().enumerate() {
                let (p, n) = sticker_geometry(i);
                *slot = if p[axis] == outward {
                    sticker_index(apply(&rot, p), apply(&rot, n))
                } else {
                    i
                };
            }
        }
        table
    })
}

pub fn inverse_turn(action: usize) -> usize {
    action ^ 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CubeState {
    pub stickers: [u8; NUM_STICKERS],
}

impl CubeState {
    pub fn solved() -> Self {
        let mut stickers = [0; NUM_STICKERS];
        for (i, s) in stickers.iter_mut().enumerate() {
            *s = face_of(sticker_geometry(i).1) as u8;
        }
        Self { stickers }
    }

    pub fn turn(&self, action: usize) -> Self {
        let perm = &face_turns()[action];
        let mut stickers = [0; NUM_STICKERS];
        for (i, &j) in perm.iter().enumerate() {
            stickers[j] = self.stickers[i];
        }
        Self { stickers }
    }

    /// Every face shows a single colour.
    pub fn is_solved(&self) -> bool {
        (0..6).all(|face| {
            let n = face_normal(face);
            let mut colours = (0..NUM_STICKERS)
                .filter(|&i| sticker_geometry(i).1 == n)
                .map(|i| self.stickers[i]);
            let first = colours.next().expect("four stickers per face");
            colours.all(|c| c == first)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeConfig {
    pub scramble_depth: usize,
}

#[derive(Debug, Clone)]
pub struct PocketCube {
    cfg: CubeConfig,
    spec: EnvSpec,
    state: CubeState,
    /// Cube frame to camera frame. The camera looks at the face whose
    /// normal maps to `+z`, with `+y` up and `+x` right.
    camera: Mat3,
    t: usize,
    done: bool,
    started: bool,
}

pub fn make_pocket_cube(cfg: CubeConfig) -> PocketCube {
    PocketCube {
        cfg,
        spec: EnvSpec {
            name: "pocket_cube".into(),
            obs: ObsSpace::Discrete {
                alphabet_size: ALPHABET,
            },
            num_env_actions: NUM_ACTIONS,
            mode: Mode::Episodic,
            horizon: HORIZON,
        },
        state: CubeState::solved(),
        camera: IDENTITY,
        t: 0,
        done: false,
        started: false,
    }
}

impl PocketCube {
    pub fn state(&self) -> &CubeState {
        &self.state
    }

    /// The four visible sticker colours: top-left, top-right, bottom-left,
    /// bottom-right.
    pub fn visible(&self) -> [u8; 4] {
        let mut seen: Vec<(i32, i32, u8)> = (0..NUM_STICKERS)
            .filter_map(|i| {
                let (p, n) = sticker_geometry(i);
                (apply(&self.camera, n) == [0, 0, 1]).then(|| {
                    let q = apply(&self.camera, p);
                    (-q[1], q[0], self.state.stickers[i])
                })
            })
            .collect();
        seen.sort_unstable();
        [seen[0].2, seen[1].2, seen[2].2, seen[3].2]
    }

    fn observe(&self) -> Observation {
        let sym = self
            .visible()
            .iter()
            .rev()
            .fold(0u16, |acc, &c| acc * NUM_COLOURS as u16 + c as u16);
        Observation::Symbol(sym)
    }

    fn rotate_camera(&mut self, action: usize) {
        let r = match action {
            YAW_POS => quarter(1, true),
            YAW_NEG => quarter(1, false),
            PITCH_POS => quarter(0, true),
            _ => quarter(0, false),
        };
        self.camera = matmul(&r, &self.camera);
    }
}

impl Environment for PocketCube {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut RngStream) -> Observation {
        self.state = CubeState::solved();
        for _ in 0..self.cfg.scramble_depth {
            self.state = self.state.turn(rng.below(NUM_FACE_TURNS));
        }
        self.camera = IDENTITY;
        self.t = 0;
        self.done = false;
        self.started = true;
        self.observe()
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
        if action < NUM_FACE_TURNS {
            self.state = self.state.turn(action);
        } else {
            self.rotate_camera(action);
        }
        let solved = self.state.is_solved();
        self.done = solved || self.t >= HORIZON;
        Ok(StepResult {
            next_obs: self.observe(),
            reward: if solved { 1.0 } else { 0.0 },
            done: self.done,
            goal: solved.then_some(true),
        })
    }
}
