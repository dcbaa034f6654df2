//! Text and CSV tables for the `oracle` and `cost` subcommands.

use std::fmt;
use std::str::FromStr;

use adastack::cost::{cost, degree_in_context, efficiency_ratio, ArchSpec, Family, Metric, Stacking};
use adastack::oracle::{tmaze_probe, LatentModel, MagnitudeTMazeModel, Oracle, SingleStateModel, TMazeModel, XorMazeModel};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Text,
    Csv,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            o => Err(HarnessError::config(format!("unknown format `{o}` (text, csv)"))),
        }
    }
}

/// A rectangular table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Text => Ok(self.to_string()),
            Format::Csv => {
                let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
                w.write_record(&self.header)?;
                for r in &self.rows {
                    w.write_record(r)?;
                }
                let bytes = w.into_inner().map_err(|e| HarnessError::data(e.to_string()))?;
                String::from_utf8(bytes).map_err(|e| HarnessError::data(e.to_string()))
            }
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            writeln!(f, "{}", parts.join("  ").trim_end())
        };
        line(f, &self.header)?;
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(f, &rule)?;
        for r in &self.rows {
            line(f, r)?;
        }
        Ok(())
    }
}

/// Tiny latent models the oracle can solve exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleModel {
    PassiveTmaze { length: usize, continual: bool },
    ActiveTmaze { length: usize },
    Xormaze,
    MagnitudeTmaze { length: usize },
    SingleState,
}

impl OracleModel {
    /// Parses `passive:3`, `passive-continual:2`, `active:1`, `xormaze`,
    /// `magnitude:1`, `single`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let length = || -> Result<usize> {
            arg.parse()
                .map_err(|_| HarnessError::config(format!("`{s}` needs a corridor length, e.g. `{name}:3`")))
        };
        Ok(match name {
            "passive" => OracleModel::PassiveTmaze {
                length: length()?,
                continual: false,
            },
            "passive-continual" => OracleModel::PassiveTmaze {
                length: length()?,
                continual: true,
            },
            "active" => OracleModel::ActiveTmaze { length: length()? },
            "xormaze" => OracleModel::Xormaze,
            "magnitude" => OracleModel::MagnitudeTmaze { length: length()? },
            "single" => OracleModel::SingleState,
            o => return Err(HarnessError::config(format!("unknown oracle model `{o}`"))),
        })
    }

    pub fn model(&self) -> Box<dyn LatentModel> {
        match *self {
            OracleModel::PassiveTmaze { length, continual } => {
                let m = TMazeModel::passive(length);
                Box::new(if continual { m.continual() } else { m })
            }
            OracleModel::ActiveTmaze { length } => Box::new(TMazeModel::active(length)),
            OracleModel::Xormaze => Box::new(XorMazeModel),
            OracleModel::MagnitudeTmaze { length } => Box::new(MagnitudeTMazeModel { length }),
            OracleModel::SingleState => Box::new(SingleStateModel),
        }
    }

    /// The canonical cue-then-corridor history, where one exists.
    fn probe(&self) -> Option<Vec<u16>> {
        match *self {
            OracleModel::PassiveTmaze { length, .. } | OracleModel::ActiveTmaze { length } => Some(tmaze_probe(length)),
            _ => None,
        }
    }
}

fn f(v: f64) -> String {
    format!("{v:.9}")
}

/// Optimal value, best memory-bounded value, gap, minimal capacity and the
/// consistency verdict of the best policy, for each model and stack length.
pub fn oracle_table(models: &[OracleModel], ks: &[usize], gamma: f64, k_max: usize) -> Result<Table> {
    if models.is_empty() || ks.is_empty() {
        return Err(HarnessError::config("need at least one model and one k"));
    }
    let mut t = Table::new(&["env", "gamma", "k", "v_star", "v_k", "gap", "kappa", "consistent"]);
    for m in models {
        let o = Oracle::new(m.model().as_ref(), gamma)?;
        let kappa = match o.find_kappa(k_max)? {
            Some(k) => k.to_string(),
            None => format!(">{k_max}"),
        };
        for &k in ks {
            let sol = match o.best_stack_policy(k) {
                Ok(sol) => sol,
                Err(e @ adastack::Error::CapExceeded { .. }) => {
                    let mut row = vec![o.name().to_string(), gamma.to_string(), k.to_string(), f(o.optimal_value())];
                    row.extend(["-".to_string(), "-".to_string(), kappa.clone(), format!("({e})")]);
                    t.push(row);
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            let gap = match m.probe() {
                Some(p) => f(o.value_gap(k, &p)?),
                None => "-".into(),
            };
            let consistent = o.check_value_consistency(&sol.policy, k)?;
            t.push(vec![
                o.name().to_string(),
                gamma.to_string(),
                k.to_string(),
                f(sol.optimal_value),
                f(sol.start_value),
                gap,
                kappa.clone(),
                consistent.consistent.to_string(),
            ]);
        }
    }
    Ok(t)
}

/// Concrete lower bounds for every family and stacking at `arch`'s sizes.
pub fn cost_table(arch: &ArchSpec) -> Result<Table> {
    arch.validate()?;
    let mut t = Table::new(&["family", "stacking", "k", "flops_action", "flops_td", "bytes_action", "bytes_td", "flops_action_formula"]);
    for family in Family::ALL {
        for stacking in [Stacking::Frame, Stacking::Adaptive] {
            let a = ArchSpec { family, stacking, ..*arch };
            let r = cost(&a);
            t.push(vec![
                family.to_string(),
                stacking.to_string(),
                a.context.to_string(),
                r.flops_action.to_string(),
                r.flops_td.to_string(),
                r.bytes_action.to_string(),
                r.bytes_td.to_string(),
                r.formulas.flops_action.to_string(),
            ]);
        }
    }
    Ok(t)
}

/// Growth order in the stack length of every metric, as `Omega(k^d)`.
pub fn asymptotics_table(arch: &ArchSpec) -> Result<Table> {
    arch.validate()?;
    let mut t = Table::new(&["family", "stacking", "flops_action", "flops_td", "bytes_action", "bytes_td"]);
    for family in Family::ALL {
        for stacking in [Stacking::Frame, Stacking::Adaptive] {
            let a = ArchSpec { family, stacking, ..*arch };
            let mut row = vec![family.to_string(), stacking.to_string()];
            row.extend(Metric::ALL.iter().map(|&m| match degree_in_context(&a, m) {
                0 => "Omega(1)".to_string(),
                1 => "Omega(k)".to_string(),
                d => format!("Omega(k^{d})"),
            }));
            t.push(row);
        }
    }
    Ok(t)
}

/// Action-compute ratio of frame stacking at `k_star` to adaptive stacking
/// at `kappa`, per family.
pub fn efficiency_table(arch: &ArchSpec, k_star: u64, kappa: u64) -> Result<Table> {
    let mut t = Table::new(&["family", "k_star", "kappa", "ratio"]);
    for family in Family::ALL {
        let r = efficiency_ratio(family, k_star, kappa, arch)?;
        t.push(vec![family.to_string(), k_star.to_string(), kappa.to_string(), format!("{r:.4}")]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_table_reports_the_gap() {
        let t = oracle_table(&[OracleModel::parse("passive:3").unwrap()], &[2], 0.99, 3).unwrap();
        let row = &t.rows[0];
        assert_eq!(row[2], "2");
        let gap: f64 = row[5].parse().unwrap();
        assert!((gap - 0.009834).abs() < 1e-6, "{gap}");
        assert_eq!(row[6], "2");
        assert_eq!(row[7], "true");
    }

    #[test]
    fn model_names_parse() {
        for s in ["passive:0", "passive-continual:2", "active:1", "xormaze", "magnitude:1", "single"] {
            OracleModel::parse(s).unwrap();
        }
        assert!(OracleModel::parse("passive").is_err());
        assert!(OracleModel::parse("maze:1").is_err());
    }

    #[test]
    fn cost_table_has_the_known_mlp_figure() {
        let arch = ArchSpec {
            context: 2,
            hidden: 4,
            layers: 2,
            actions: 3,
            ..ArchSpec::new(Family::Mlp, Stacking::Frame)
        };
        let t = cost_table(&arch).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.rows[0][3], "136");
        let csv = t.render(Format::Csv).unwrap();
        assert!(csv.starts_with("family,stacking,k,"));
    }

    #[test]
    fn transformer_action_compute_is_quadratic() {
        let t = asymptotics_table(&ArchSpec::new(Family::Mlp, Stacking::Frame)).unwrap();
        let tr = t.rows.iter().find(|r| r[0] == "transformer").unwrap();
        assert_eq!(tr[2], "Omega(k^2)");
        let mlp = t.rows.iter().find(|r| r[0] == "mlp").unwrap();
        assert_eq!(mlp[2], "Omega(k)");
    }

    #[test]
    fn text_tables_align() {
        let mut t = Table::new(&["a", "long"]);
        t.push(vec!["xyz".into(), "1".into()]);
        let s = t.to_string();
        assert_eq!(s.lines().next().unwrap(), "a    long");
    }
}
