//! Fully resolved run settings. Serialised as the run manifest.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use l1trend::{Bounds, ColumnKind, DictionarySpec, Grid, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::input::InputLayout;

/// Box constraint on one block; `None` means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockBound {
    pub block: ColumnKind,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl BlockBound {
    pub fn bounds(&self) -> Result<Bounds> {
        Ok(Bounds::new(
            self.lower.unwrap_or(f64::NEG_INFINITY),
            self.upper.unwrap_or(f64::INFINITY),
        )?)
    }
}

/// `block=lower:upper`, either side may be empty.
impl FromStr for BlockBound {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (block, range) = s
            .split_once('=')
            .ok_or_else(|| format!("expected BLOCK=LOWER:UPPER, got `{s}`"))?;
        let block: ColumnKind = block.parse().map_err(|e: l1trend::Error| e.to_string())?;
        let (lo, hi) = range
            .split_once(':')
            .ok_or_else(|| format!("expected LOWER:UPPER, got `{range}`"))?;
        let side = |v: &str| -> std::result::Result<Option<f64>, String> {
            let v = v.trim();
            if v.is_empty() {
                return Ok(None);
            }
            let x: f64 = v.parse().map_err(|_| format!("bad bound `{v}`"))?;
            Ok(x.is_finite().then_some(x))
        };
        let bound = BlockBound {
            block,
            lower: side(lo)?,
            upper: side(hi)?,
        };
        bound.bounds().map_err(|e| e.to_string())?;
        Ok(bound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub layout: InputLayout,
    /// Angular frequencies in radians per sample.
    pub omega: Vec<f64>,
    pub grid: Grid,
    pub ebic_xi: f64,
    pub solver: SolverConfig,
    pub bounds: Vec<BlockBound>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.solver.validate()?;
        if !(0.0..=1.0).contains(&self.ebic_xi) {
            return Err(CliError::Usage(format!(
                "ebic xi must lie in [0, 1], got {}",
                self.ebic_xi
            )));
        }
        for b in &self.bounds {
            b.bounds()?;
        }
        let mut seen = Vec::new();
        for b in &self.bounds {
            if seen.contains(&b.block) {
                return Err(CliError::Usage(format!("bounds for {} given twice", b.block)));
            }
            seen.push(b.block);
        }
        Ok(())
    }

    pub fn dictionary(&self, n: usize) -> Result<DictionarySpec> {
        let mut spec = DictionarySpec::new(n, self.omega.clone())?;
        for b in &self.bounds {
            spec = spec.with_bounds(b.block, b.bounds()?);
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid manifest {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}
