//! Lower bounds on compute and working memory for stacked-context agents.
//!
//! Every count is exact integer arithmetic on closed-form expressions for
//! an MLP, LSTM or Transformer encoder that reads `k` embeddings of width
//! `h`, with a linear action head and, under adaptive stacking, a second
//! head with one output per slot.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Mlp,
    Lstm,
    Transformer,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Mlp, Family::Lstm, Family::Transformer];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Mlp => "mlp",
            Family::Lstm => "lstm",
            Family::Transformer => "transformer",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Family::Mlp),
            "lstm" => Ok(Family::Lstm),
            "transformer" => Ok(Family::Transformer),
            other => Err(Error::config(format!("unknown architecture family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stacking {
    #[serde(rename = "fs")]
    Frame,
    #[serde(rename = "as")]
    Adaptive,
}

impl fmt::Display for Stacking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stacking::Frame => "fs",
            Stacking::Adaptive => "as",
        })
    }
}

impl FromStr for Stacking {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fs" | "frame" => Ok(Stacking::Frame),
            "as" | "adaptive" => Ok(Stacking::Adaptive),
            other => Err(Error::config(format!("unknown stacking {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub family: Family,
    pub layers: u64,
    pub hidden: u64,
    pub actions: u64,
    /// Stack length `k`.
    pub context: u64,
    /// Bytes per stored unit.
    pub precision: u64,
    /// Learning batch size; inference always uses one sample.
    pub batch: u64,
    /// Model-sized buffers kept by the optimizer: 1 for plain gradient
    /// descent, 4 for Adam-style optimizers.
    pub optimizer_copies: u64,
    pub stacking: Stacking,
}

impl ArchSpec {
    pub fn new(family: Family, stacking: Stacking) -> Self {
        Self {
            family,
            layers: 2,
            hidden: 128,
            actions: 4,
            context: 8,
            precision: 4,
            batch: 32,
            optimizer_copies: 4,
            stacking,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("actions", self.actions),
            ("context", self.context),
            ("precision", self.precision),
            ("batch", self.batch),
            ("optimizer_copies", self.optimizer_copies),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn with_context(self, context: u64) -> Self {
        Self { context, ..self }
    }

    pub fn with_stacking(self, stacking: Stacking) -> Self {
        Self { stacking, ..self }
    }
}

/// The expressions evaluated for one family and stacking choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Formulas {
    pub flops_action: &'static str,
    pub flops_td: &'static str,
    pub bytes_action: &'static str,
    pub bytes_td: &'static str,
}

/// Lower bounds: the true cost is at least each figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub flops_action: u128,
    pub flops_td: u128,
    pub bytes_action: u128,
    pub bytes_td: u128,
    pub formulas: Formulas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    FlopsAction,
    FlopsTd,
    BytesAction,
    BytesTd,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::FlopsAction, Metric::FlopsTd, Metric::BytesAction, Metric::BytesTd];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FlopsAction => "flops_action",
            Metric::FlopsTd => "flops_td",
            Metric::BytesAction => "bytes_action",
            Metric::BytesTd => "bytes_td",
        }
    }
}

impl CostReport {
    pub fn get(&self, m: Metric) -> u128 {
        match m {
            Metric::FlopsAction => self.flops_action,
            Metric::FlopsTd => self.flops_td,
            Metric::BytesAction => self.bytes_action,
            Metric::BytesTd => self.bytes_td,
        }
    }
}

fn formulas(family: Family, stacking: Stacking) -> Formulas {
    use Family::*;
    use Stacking::*;
    match (family, stacking) {
        (Mlp, Frame) => Formulas {
            flops_action: "2kh^2+2h+(L-1)(2h^2+2h)+2h|A|",
            flops_td: "3B(2kh^2+2h+(L-1)(2h^2+2h)+2h|A|)",
            bytes_action: "Pk(h^2+h)+P(L-1)h^2+PLh+P(h+1)|A|",
            bytes_td: "(2+G)(Pkh^2+P(L-1)h^2+PLh+P(h+1)|A|)+PBkh+PBhL",
        },
        (Mlp, Adaptive) => Formulas {
            flops_action: "2kh^2+2h+(L-1)(2h^2+2h)+2h(|A|+k)",
            flops_td: "3B(2kh^2+2h+(L-1)(2h^2+2h)+2h(|A|+k))",
            bytes_action: "Pk(h^2+h)+P(L-1)h^2+PLh+P(h+1)(|A|+k)",
            bytes_td: "(2+G)(Pkh^2+P(L-1)h^2+PLh+P(h+1)(|A|+k))+PBkh+PBhL",
        },
        (Lstm, Frame) => Formulas {
            flops_action: "kL(8h^2+20h)+2h|A|",
            flops_td: "3BkL(8h^2+20h)+6Bh|A|",
            bytes_action: "PL(8h^2+4h)+P(h+1)|A|+PhL+Pkh",
            bytes_td: "(2+G)(PL(8h^2+4h)+P(h+1)|A|)+PBkhL+PBkh",
        },
        (Lstm, Adaptive) => Formulas {
            flops_action: "kL(8h^2+20h)+2h(|A|+k)",
            flops_td: "3BkL(8h^2+20h)+6Bh(|A|+k)",
            bytes_action: "PL(8h^2+4h)+P(h+1)(|A|+k)+PhL+Pkh",
            bytes_td: "(2+G)(PL(8h^2+4h)+P(h+1)(|A|+k))+PBkhL+PBkh",
        },
        (Transformer, Frame) => Formulas {
            flops_action: "24Lh^2k+4Lhk^2+2h|A|",
            flops_td: "3B(24Lh^2k+4Lhk^2+2h|A|)",
            bytes_action: "PL(12h^2+4h)+P(h+1)|A|+P(L+1)hk",
            bytes_td: "(2+G)(PL(12h^2+4h)+P(h+1)|A|)+PB(L+1)hk",
        },
        (Transformer, Adaptive) => Formulas {
            flops_action: "24Lh^2k+4Lhk^2+2h(|A|+k)",
            flops_td: "3B(24Lh^2k+4Lhk^2+2h(|A|+k))",
            bytes_action: "PL(12h^2+4h)+P(h+1)(|A|+k)+P(L+1)hk",
            bytes_td: "(2+G)(PL(12h^2+4h)+P(h+1)(|A|+k))+PB(L+1)hk",
        },
    }
}

pub fn cost(arch: &ArchSpec) -> CostReport {
    let l = arch.layers as u128;
    let h = arch.hidden as u128;
    let k = arch.context as u128;
    let p = arch.precision as u128;
    let b = arch.batch as u128;
    let g = arch.optimizer_copies as u128;
    // outputs of the action head plus, when adaptive, the eviction head
    let heads = arch.actions as u128
        + match arch.stacking {
            Stacking::Frame => 0,
            Stacking::Adaptive => k,
        };
    let mid = l.saturating_sub(1);

    let (flops_action, bytes_action, bytes_td) = match arch.family {
        Family::Mlp => {
            let params = k * h * h + mid * h * h + l * h + (h + 1) * heads;
            (
                2 * k * h * h + 2 * h + mid * (2 * h * h + 2 * h) + 2 * h * heads,
                p * k * (h * h + h) + p * mid * h * h + p * l * h + p * (h + 1) * heads,
                (2 + g) * p * params + p * b * k * h + p * b * h * l,
            )
        }
        Family::Lstm => {
            let params = l * (8 * h * h + 4 * h) + (h + 1) * heads;
            (
                k * l * (8 * h * h + 20 * h) + 2 * h * heads,
                p * params + p * h * l + p * k * h,
                (2 + g) * p * params + p * b * k * h * l + p * b * k * h,
            )
        }
        Family::Transformer => {
            let params = l * (12 * h * h + 4 * h) + (h + 1) * heads;
            (
                24 * l * h * h * k + 4 * l * h * k * k + 2 * h * heads,
                p * params + p * (l + 1) * h * k,
                (2 + g) * p * params + p * b * (l + 1) * h * k,
            )
        }
    };
    CostReport {
        flops_action,
        flops_td: 3 * b * flops_action,
        bytes_action,
        bytes_td,
        formulas: formulas(arch.family, arch.stacking),
    }
}

/// Action compute of frame stacking at `k_star` over adaptive stacking at `kappa`.
pub fn efficiency_ratio(family: Family, k_star: u64, kappa: u64, fixed: &ArchSpec) -> Result<f64> {
    if kappa == 0 || k_star < kappa {
        return Err(Error::config(format!("need k_star >= kappa >= 1, got {k_star} and {kappa}")));
    }
    let base = ArchSpec { family, ..*fixed };
    let fs = cost(&base.with_context(k_star).with_stacking(Stacking::Frame));
    let ad = cost(&base.with_context(kappa).with_stacking(Stacking::Adaptive));
    Ok(fs.flops_action as f64 / ad.flops_action as f64)
}

/// Polynomial degree of a metric in the stack length, by finite differences.
pub fn degree_in_context(arch: &ArchSpec, metric: Metric) -> u32 {
    const MAX_DEGREE: usize = 4;
    let mut diffs: Vec<i128> = (1..=MAX_DEGREE as u64 + 2)
        .map(|k| cost(&arch.with_context(k)).get(metric) as i128)
        .collect();
    let mut degree = 0;
    while diffs.len() > 1 {
        diffs = diffs.windows(2).map(|w| w[1] - w[0]).collect();
        if diffs.iter().all(|&d| d == 0) {
            return degree;
        }
        degree += 1;
    }
    degree
}
