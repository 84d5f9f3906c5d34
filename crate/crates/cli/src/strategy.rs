//! Threshold strategy files, written by the solvers and read by `simulate`.
//!
//! ```toml
//! [player1]
//! region = "below"
//! border = -2.8125
//! target = 1.53125
//!
//! [player2]
//! region = "above"
//! border = 2.8125
//! table_x = [2.8125, 3.0]
//! table_delta = [-1.28125, -1.46875]
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use impulse_core::simulate::{ImpulseRule, Region, ThresholdStrategy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Never,
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    pub region: RegionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub border: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_delta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyFile {
    pub player1: StrategyEntry,
    pub player2: StrategyEntry,
}

impl StrategyEntry {
    pub fn from_strategy(s: &ThresholdStrategy) -> Self {
        let (region, border) = match s.region {
            Region::Never => (RegionKind::Never, None),
            Region::Below(b) => (RegionKind::Below, Some(b)),
            Region::Above(b) => (RegionKind::Above, Some(b)),
        };
        let mut e = StrategyEntry {
            region,
            border,
            target: None,
            table_x: None,
            table_delta: None,
        };
        if region != RegionKind::Never {
            match &s.impulse {
                ImpulseRule::Target(t) => e.target = Some(*t),
                ImpulseRule::Table { x, delta } => {
                    e.table_x = Some(x.clone());
                    e.table_delta = Some(delta.clone());
                }
            }
        }
        e
    }

    pub fn to_strategy(&self, who: &str) -> Result<ThresholdStrategy> {
        let border = || self.border.with_context(|| format!("{who}: border is required"));
        let region = match self.region {
            RegionKind::Never => return Ok(ThresholdStrategy::never()),
            RegionKind::Below => Region::Below(border()?),
            RegionKind::Above => Region::Above(border()?),
        };
        let impulse = match (self.target, &self.table_x, &self.table_delta) {
            (Some(t), None, None) => ImpulseRule::Target(t),
            (None, Some(x), Some(delta)) => {
                if x.is_empty() || x.len() != delta.len() {
                    bail!("{who}: table_x and table_delta must be nonempty and of equal length");
                }
                if x.windows(2).any(|w| w[0] >= w[1]) {
                    bail!("{who}: table_x must be strictly increasing");
                }
                ImpulseRule::Table {
                    x: x.clone(),
                    delta: delta.clone(),
                }
            }
            _ => bail!("{who}: give either target or both table_x and table_delta"),
        };
        Ok(ThresholdStrategy { region, impulse })
    }
}

impl StrategyFile {
    pub fn new(s: &[ThresholdStrategy; 2]) -> Self {
        StrategyFile {
            player1: StrategyEntry::from_strategy(&s[0]),
            player2: StrategyEntry::from_strategy(&s[1]),
        }
    }

    pub fn strategies(&self) -> Result<[ThresholdStrategy; 2]> {
        Ok([
            self.player1.to_strategy("player1")?,
            self.player2.to_strategy("player2")?,
        ])
    }

    pub fn load(path: &Path) -> Result<[ThresholdStrategy; 2]> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: StrategyFile =
            toml::from_str(&text).with_context(|| format!("in strategy file {}", path.display()))?;
        file.strategies()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let s = [
            ThresholdStrategy::below(-2.8125, 0.1 + 0.2),
            ThresholdStrategy {
                region: Region::Above(2.8125),
                impulse: ImpulseRule::Table {
                    x: vec![2.8125, 3.0],
                    delta: vec![-1.28125, -1.46875],
                },
            },
        ];
        let text = toml::to_string(&StrategyFile::new(&s)).unwrap();
        let back: StrategyFile = toml::from_str(&text).unwrap();
        assert_eq!(back.strategies().unwrap(), s);
    }

    #[test]
    fn incomplete_entries_rejected() {
        let text = "[player1]\nregion = \"below\"\ntarget = 1.0\n[player2]\nregion = \"never\"\n";
        let f: StrategyFile = toml::from_str(text).unwrap();
        assert!(f.strategies().is_err());
        let text = "[player1]\nregion = \"never\"\nside = 1\n[player2]\nregion = \"never\"\n";
        assert!(toml::from_str::<StrategyFile>(text).is_err());
    }
}
