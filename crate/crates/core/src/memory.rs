//! Bounded observation stacks and the disciplines that manage them.
//!
//! Slots are 1-based with slot 1 the oldest and slot `k` the newest. Every
//! update pops one slot and pushes the incoming observation on top, so Frame
//! Stacking is the constant memory action 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};

/// Ordered, fixed-capacity stack of observations (oldest first).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemoryStack {
    slots: Vec<Observation>,
}

impl MemoryStack {
    pub fn from_slots(slots: Vec<Observation>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::contract("memory stack capacity must be >= 1"));
        }
        Ok(Self { slots })
    }

    pub fn from_symbols(symbols: &[u16]) -> Result<Self> {
        Self::from_slots(symbols.iter().map(|&s| Observation::Symbol(s)).collect())
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Observation] {
        &self.slots
    }

    /// 1-based slot access.
    pub fn slot(&self, i: usize) -> Option<&Observation> {
        i.checked_sub(1).and_then(|j| self.slots.get(j))
    }

    pub fn newest(&self) -> &Observation {
        self.slots.last().expect("non-empty stack")
    }

    /// Symbols of a discrete stack, oldest first.
    pub fn symbols(&self) -> Result<Vec<u16>> {
        self.slots
            .iter()
            .map(|o| {
                o.symbol()
                    .ok_or_else(|| Error::unsupported("vector observation in a discrete stack"))
            })
            .collect()
    }
}

/// `[x0; k]`: the stack is filled by replicating the first observation.
pub fn init_stack(x0: Observation, k: usize) -> Result<MemoryStack> {
    if k == 0 {
        return Err(Error::contract("stack capacity k must be >= 1"));
    }
    Ok(MemoryStack {
        slots: vec![x0; k],
    })
}

/// `push(pop(s, i), x_next)`. The input stack is left untouched.
pub fn update_stack(s: &MemoryStack, i: usize, x_next: Observation) -> Result<MemoryStack> {
    let k = s.capacity();
    if i == 0 || i > k {
        return Err(Error::contract(format!("pop index {i} outside 1..={k}")));
    }
    let mut slots = Vec::with_capacity(k);
    slots.extend(s.slots[..i - 1].iter().cloned());
    slots.extend(s.slots[i..].iter().cloned());
    slots.push(x_next);
    Ok(MemoryStack { slots })
}

/// Frame Stacking always evicts the oldest slot.
pub fn fs_mem_action(_s: &MemoryStack) -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DemirChoice {
    Push,
    Skip,
}

impl DemirChoice {
    /// Memory-action encoding used in joint actions: 1 = push, 2 = skip.
    pub fn from_mem_action(i: usize) -> Result<Self> {
        match i {
            1 => Ok(DemirChoice::Push),
            2 => Ok(DemirChoice::Skip),
            _ => Err(Error::contract(format!("push/skip memory action {i} not in 1..=2"))),
        }
    }
}

/// What a memory decision does to the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemOp {
    /// Evict this 1-based slot and push the incoming observation.
    Pop(usize),
    /// Leave the stack unchanged and drop the incoming observation.
    Skip,
}

/// Push/skip discipline. `fill_count` counts real pushes since
/// initialisation (the replicated first observation counts as one).
///
/// A push evicts the oldest slot: when the stack is full this is FIFO, and
/// before that the oldest slot is always a replicated copy of `x0`. A skip on
/// a full stack drops the incoming observation; on a non-full stack it
/// behaves as a push.
pub fn demir_mem_action(s: &MemoryStack, choice: DemirChoice, fill_count: usize) -> MemOp {
    let full = fill_count >= s.capacity();
    match choice {
        DemirChoice::Skip if full => MemOp::Skip,
        _ => MemOp::Pop(1),
    }
}

/// Canonical tabular key of a discrete stack (mixed radix, slot 1 lowest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StackKey(pub u128);

pub fn encode_stack(s: &MemoryStack, alphabet_size: usize) -> Result<StackKey> {
    let radix = alphabet_size as u128;
    let mut key: u128 = 0;
    let mut place: u128 = 1;
    for (j, obs) in s.slots.iter().enumerate() {
        let sym = obs
            .symbol()
            .ok_or_else(|| Error::unsupported("tabular keys need discrete observations"))?;
        if sym as usize >= alphabet_size {
            return Err(Error::contract(format!(
                "symbol {sym} outside alphabet of size {alphabet_size}"
            )));
        }
        let term = (sym as u128)
            .checked_mul(place)
            .ok_or_else(|| Error::unsupported("stack key overflows 128 bits"))?;
        key = key
            .checked_add(term)
            .ok_or_else(|| Error::unsupported("stack key overflows 128 bits"))?;
        if j + 1 < s.slots.len() {
            place = place
                .checked_mul(radix)
                .ok_or_else(|| Error::unsupported("stack key overflows 128 bits"))?;
        }
    }
    Ok(StackKey(key))
}

pub fn decode_stack(key: StackKey, alphabet_size: usize, k: usize) -> MemoryStack {
    let radix = alphabet_size as u128;
    let mut rest = key.0;
    let slots = (0..k)
        .map(|_| {
            let sym = (rest % radix) as u16;
            rest /= radix;
            Observation::Symbol(sym)
        })
        .collect();
    MemoryStack { slots }
}

/// Environment action paired with a memory action.
///
/// `mem_action` is a 1-based pop index for Adaptive Stacking, always 1 for
/// Frame Stacking, and 1 = push / 2 = skip for the push/skip discipline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointAction {
    pub env_action: usize,
    pub mem_action: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MemoryMode {
    FrameStack,
    AdaptiveStack,
    Demir,
    DemirIm,
}

impl MemoryMode {
    /// Size of the memory-action component of the joint action.
    pub fn num_mem_actions(self, k: usize) -> usize {
        match self {
            MemoryMode::FrameStack => 1,
            MemoryMode::AdaptiveStack => k,
            MemoryMode::Demir | MemoryMode::DemirIm => 2,
        }
    }

    pub fn is_demir(self) -> bool {
        matches!(self, MemoryMode::Demir | MemoryMode::DemirIm)
    }

    pub fn short(self) -> &'static str {
        match self {
            MemoryMode::FrameStack => "fs",
            MemoryMode::AdaptiveStack => "as",
            MemoryMode::Demir => "demir",
            MemoryMode::DemirIm => "demir-im",
        }
    }
}

impl fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for MemoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "fs" | "frame-stack" | "framestack" => Ok(MemoryMode::FrameStack),
            "as" | "adaptive-stack" | "adaptivestack" => Ok(MemoryMode::AdaptiveStack),
            "demir" => Ok(MemoryMode::Demir),
            "demir-im" | "demirim" => Ok(MemoryMode::DemirIm),
            other => Err(Error::config(format!("unknown memory mode `{other}`"))),
        }
    }
}

impl TryFrom<String> for MemoryMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MemoryMode> for String {
    fn from(m: MemoryMode) -> String {
        m.short().to_string()
    }
}

/// Stack plus the push counter the push/skip discipline needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryState {
    pub stack: MemoryStack,
    pub fill_count: usize,
}

impl MemoryState {
    pub fn new(x0: Observation, k: usize) -> Result<Self> {
        Ok(Self {
            stack: init_stack(x0, k)?,
            fill_count: 1,
        })
    }

    /// Applies one memory decision under `mode` and returns the new state
    /// together with the operation that was carried out.
    pub fn apply(&self, mode: MemoryMode, mem_action: usize, x_next: Observation) -> Result<(Self, MemOp)> {
        let k = self.stack.capacity();
        let op = match mode {
            MemoryMode::FrameStack => MemOp::Pop(fs_mem_action(&self.stack)),
            MemoryMode::AdaptiveStack => MemOp::Pop(mem_action),
            MemoryMode::Demir | MemoryMode::DemirIm => {
                let choice = DemirChoice::from_mem_action(mem_action)?;
                demir_mem_action(&self.stack, choice, self.fill_count)
            }
        };
        let next = match op {
            MemOp::Pop(i) => Self {
                stack: update_stack(&self.stack, i, x_next)?,
                fill_count: (self.fill_count + 1).min(k),
            },
            MemOp::Skip => self.clone(),
        };
        Ok((next, op))
    }
}
