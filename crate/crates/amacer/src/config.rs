//! Pipeline configuration, one JSON object with a section per stage.
//!
//! Every field has a default, so `{}` is a valid config; unknown keys are
//! rejected so typos fail loudly.

use std::path::Path;

use amacer_core::eval::{EvalOptions, MatchMode, Split};
use amacer_core::grouping::GroupingConfig;
use amacer_core::posgen::{InduceOptions, DEFAULT_MAX_SPAN_LEN, DEFAULT_MIN_SUPPORT};
use amacer_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosgenConfig {
    pub min_support: usize,
    pub max_span_len: usize,
    pub exclude_punct: bool,
}

impl Default for PosgenConfig {
    fn default() -> Self {
        PosgenConfig { min_support: DEFAULT_MIN_SUPPORT, max_span_len: DEFAULT_MAX_SPAN_LEN, exclude_punct: true }
    }
}

impl PosgenConfig {
    pub fn induce_options(&self) -> InduceOptions {
        InduceOptions { min_support: self.min_support, exclude_punct: self.exclude_punct }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    Exact,
    Partial,
    #[default]
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<MatchMode> {
        match self {
            ModeSelection::Exact => vec![MatchMode::Exact],
            ModeSelection::Partial => vec![MatchMode::Partial],
            ModeSelection::Both => vec![MatchMode::Exact, MatchMode::Partial],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: ModeSelection,
    pub splits: Vec<Split>,
}

impl EvalConfig {
    pub fn options(&self) -> EvalOptions {
        let mut splits = self.splits.clone();
        splits.sort_by_key(|s| s.as_str());
        splits.dedup();
        EvalOptions { modes: self.mode.modes(), splits }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentsConfig {
    pub top_m: usize,
}

impl Default for LatentsConfig {
    fn default() -> Self {
        LatentsConfig { top_m: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub posgen: PosgenConfig,
    pub train: TrainConfig,
    pub grouping: GroupingConfig,
    pub eval: EvalConfig,
    pub latents: LatentsConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: PipelineConfig = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.posgen.min_support == 0 {
            return Err(Error::Validation("posgen.min_support must be at least 1".into()));
        }
        if self.posgen.max_span_len == 0 {
            return Err(Error::Validation("posgen.max_span_len must be at least 1".into()));
        }
        if self.latents.top_m == 0 {
            return Err(Error::Validation("latents.top_m must be at least 1".into()));
        }
        self.train.validate()?;
        self.grouping.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
        assert_eq!(c.train.k, 50);
        assert_eq!(c.grouping.delta, 0.8);
    }

    #[test]
    fn sections_are_partial_and_strict() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"train": {"K": 6, "lr": 0.01}, "eval": {"mode": "exact", "splits": ["new", "seed"]}}"#)
                .unwrap();
        assert_eq!((c.train.k, c.train.lr, c.train.tau), (6, 0.01, 0.1));
        assert_eq!(c.eval.options().modes, vec![MatchMode::Exact]);
        assert_eq!(c.eval.options().splits, vec![Split::New, Split::Seed]);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"train": {"kk": 1}}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"trian": {}}"#).is_err());
    }

    #[test]
    fn bad_values_fail_validation() {
        let mut c = PipelineConfig::default();
        c.grouping.delta = 1.5;
        assert!(matches!(c.validate(), Err(e @ Error::Core(_)) if e.exit_code() == 1));
        let mut c = PipelineConfig::default();
        c.latents.top_m = 0;
        assert!(c.validate().is_err());
    }
}
