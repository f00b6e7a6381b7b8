//! Experiment configuration files.
//!
//! ```toml
//! schema_version = 1
//! seeds = [1, 2]
//! variants = ["scnn", "dcnn", "dcnn-opt", "oracle"]
//! density_points = [1.0, 0.5, 0.1]
//! output_dir = "results"
//! channel_scale = 1.0
//! pe_grids = [[2, 2], [8, 8]]
//! total_multipliers = 1024
//!
//! [arch]              # any ArchConfig field; omitted ones keep defaults
//! pe_rows = 8
//! [arch.energy]
//! dram_word = 200.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{ArchConfig, Variant};

use super::descriptor::SCHEMA_VERSION;

/// What a network run executes for each layer. `Oracle` checks every sparse
/// layer output against the dense reference convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunVariant {
    Scnn,
    Dcnn,
    DcnnOpt,
    Oracle,
}

impl RunVariant {
    pub const ALL: [RunVariant; 4] = [RunVariant::Scnn, RunVariant::Dcnn, RunVariant::DcnnOpt, RunVariant::Oracle];

    pub fn label(self) -> &'static str {
        match self {
            RunVariant::Scnn => "scnn",
            RunVariant::Dcnn => "dcnn",
            RunVariant::DcnnOpt => "dcnn-opt",
            RunVariant::Oracle => "oracle",
        }
    }

    /// The simulated machine, if any.
    pub fn machine(self) -> Option<Variant> {
        match self {
            RunVariant::Scnn => Some(Variant::Scnn),
            RunVariant::Dcnn => Some(Variant::Dcnn),
            RunVariant::DcnnOpt => Some(Variant::DcnnOpt),
            RunVariant::Oracle => None,
        }
    }
}

impl std::str::FromStr for RunVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("oracle") {
            return Ok(RunVariant::Oracle);
        }
        match s.parse::<Variant>().map_err(Error::InvalidArgument)? {
            Variant::Scnn => Ok(RunVariant::Scnn),
            Variant::Dcnn => Ok(RunVariant::Dcnn),
            Variant::DcnnOpt => Ok(RunVariant::DcnnOpt),
        }
    }
}

impl std::fmt::Display for RunVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub arch: ArchConfig,
    pub seeds: Vec<u64>,
    pub variants: Vec<RunVariant>,
    /// Weight and activation density, swept together.
    pub density_points: Vec<f64>,
    pub output_dir: PathBuf,
    /// Channel scaling applied to every network before running.
    pub channel_scale: f64,
    pub pe_grids: Vec<(usize, usize)>,
    pub total_multipliers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            arch: ArchConfig::default(),
            seeds: vec![1],
            variants: RunVariant::ALL.to_vec(),
            density_points: (1..=10).rev().map(|i| i as f64 / 10.0).collect(),
            output_dir: PathBuf::from("results"),
            channel_scale: 1.0,
            pe_grids: vec![(1, 1), (2, 2), (4, 4), (8, 8)],
            total_multipliers: 1024,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some(p) = self.density_points.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Config(format!("density point {p} outside (0, 1]")));
        }
        if !(self.channel_scale.is_finite() && self.channel_scale > 0.0) {
            return Err(Error::Config(format!("channel_scale {} must be positive", self.channel_scale)));
        }
        self.arch.validate()?;
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_arch_overrides_keep_defaults() {
        let cfg = ExperimentConfig::parse(
            "schema_version = 1\nseeds = [3]\n[arch]\npe_rows = 2\n[arch.energy]\ndram_word = 300.0\n",
        )
        .unwrap();
        assert_eq!(cfg.arch.pe_rows, 2);
        assert_eq!(cfg.arch.pe_cols, 8);
        assert_eq!(cfg.arch.energy.dram_word, 300.0);
        assert_eq!(cfg.arch.energy.multiply, ArchConfig::default().energy.multiply);
        assert_eq!(cfg.seeds, vec![3]);
    }

    #[test]
    fn empty_lists_are_rejected() {
        assert!(ExperimentConfig::parse("variants = []").is_err());
        assert!(ExperimentConfig::parse("seeds = []").is_err());
        assert!(ExperimentConfig::parse("density_points = [0.0]").is_err());
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
    }

    #[test]
    fn variant_names() {
        for v in RunVariant::ALL {
            assert_eq!(v.label().parse::<RunVariant>().unwrap(), v);
        }
        let cfg = ExperimentConfig::parse("variants = [\"dcnn-opt\", \"oracle\"]").unwrap();
        assert_eq!(cfg.variants, vec![RunVariant::DcnnOpt, RunVariant::Oracle]);
    }
}
