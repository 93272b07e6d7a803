//! Config file layering: built-in defaults, then the TOML file, then flags.

use serde::{Deserialize, Serialize};
use std::path::Path;
use voxcolor::data::CorpusConfig;
use voxcolor::model::TrainConfig;
use voxcolor::{Error, Result};

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub gen: toml::Table,
    /// Overrides on top of the per-ratio training defaults.
    #[serde(default)]
    pub train: toml::Table,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub methods: Option<Vec<String>>,
    pub ratios: Option<Vec<u32>>,
    pub split: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Option<Vec<usize>>,
    pub method: Option<String>,
    pub ratio: Option<u32>,
    pub repeats: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn corpus(&self) -> Result<CorpusConfig> {
        overlay(&CorpusConfig::default(), &self.gen)
    }

    /// Training settings for `ratio`, with the file's `[train]` table applied.
    pub fn train(&self, ratio: u32) -> Result<TrainConfig> {
        overlay(&TrainConfig::for_ratio(ratio), &self.train)
    }

    /// Ratio from the file's `[train]` table, if set.
    pub fn train_ratio(&self) -> Result<Option<u32>> {
        self.train
            .get("ratio")
            .map(|v| {
                v.as_integer()
                    .and_then(|r| u32::try_from(r).ok())
                    .ok_or_else(|| Error::Config("train.ratio must be a non-negative integer".into()))
            })
            .transpose()
    }
}

/// Replaces fields of `base` with the keys present in `table`.
fn overlay<T: Serialize + serde::de::DeserializeOwned>(base: &T, table: &toml::Table) -> Result<T> {
    let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    for (k, v) in table {
        merged.insert(k.clone(), v.clone());
    }
    merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}
