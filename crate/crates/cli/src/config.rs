use std::path::Path;

use anyhow::{Context, Result};
use boxtm::{BoxAlgebraConfig, ClusterConfig, CorpusConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Settings for every stage, read from a TOML file with one table per
/// module: `[corpus]`, `[boxalg]`, `[cluster]` and `[train]`.
///
/// Box and cluster settings live in their own tables and replace whatever
/// `[train]` would otherwise carry for them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub boxalg: BoxAlgebraConfig,
    pub cluster: ClusterConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.corpus.seed = s;
            self.train.seed = s;
        }
        self
    }

    /// Training settings with the box and cluster tables folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            boxes: self.boxalg,
            cluster: self.cluster.clone(),
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate().context("[corpus]")?;
        self.boxalg.validate().context("[boxalg]")?;
        self.cluster.validate().context("[cluster]")?;
        self.train_config().validate().context("[train]")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_tables_keep_defaults() {
        let c: RunConfig = toml::from_str("[train]\nepochs = 7\n[boxalg]\ndim = 12\n").unwrap();
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.leaf_topics, TrainConfig::default().leaf_topics);
        let t = c.train_config();
        assert_eq!(t.boxes.dim, 12);
        assert_eq!(t.boxes.vol_temp, BoxAlgebraConfig::default().vol_temp);
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(toml::from_str::<RunConfig>("[model]\nx = 1\n").is_err());
    }

    #[test]
    fn seed_overrides_both_stages() {
        let c = RunConfig::default().with_seed(Some(9));
        assert_eq!((c.corpus.seed, c.train.seed), (9, 9));
    }

    #[test]
    fn invalid_values_are_reported() {
        let mut c = RunConfig::default();
        c.corpus.split_ratios = [0.5, 0.5, 0.5];
        assert!(c.validate().is_err());
    }
}
