//! Run configuration, its fingerprint, and per-stream seed derivation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::CsvSchema;
use crate::hybrid::ModelConfig;
use crate::screening::{FilterConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data_csv: PathBuf,
    pub corpus_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data_csv: PathBuf::from("creditcard.csv"),
            corpus_dir: PathBuf::from("corpus"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub samples_per_class: usize,
    pub smote_k: usize,
    pub split_ratios: [f64; 3],
    /// Split before balancing and scaling (SMOTE and the scaler then only see
    /// each partition's own rows).
    pub split_first: bool,
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            feature_columns: self.feature_columns.clone(),
            label_column: self.label_column.clone(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        let schema = CsvSchema::default();
        DataConfig {
            feature_columns: schema.feature_columns,
            label_column: schema.label_column,
            samples_per_class: 10_000,
            smote_k: 5,
            split_ratios: [0.6, 0.1, 0.3],
            split_first: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub data: DataConfig,
    pub filter: FilterConfig,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: PathsConfig::default(),
            data: DataConfig::default(),
            filter: FilterConfig::default(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            seed: 42,
            workers: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.filter.n_min > self.filter.n_max || self.filter.n_min == 0 {
            return bad("filter.n_min must be in 1..=filter.n_max");
        }
        if self.filter.p_max == 0 {
            return bad("filter.p_max must be at least 1");
        }
        if self.filter.trainable_set.iter().any(|k| !k.is_parametric()) {
            return bad("filter.trainable_set may only contain parametric gates");
        }
        if self.train.t_short > self.train.t_full {
            return bad("train.t_short must not exceed train.t_full");
        }
        if self.train.batch_size == 0 {
            return bad("train.batch_size must be positive");
        }
        if !(self.train.lr >= 0.0 && self.train.lr.is_finite()) {
            return bad("train.lr must be a finite non-negative number");
        }
        if self.model.hidden1 == 0 || self.model.hidden2 == 0 {
            return bad("model hidden sizes must be positive");
        }
        if self.data.smote_k == 0 {
            return bad("data.smote_k must be positive");
        }
        if self.data.feature_columns.is_empty() {
            return bad("data.feature_columns must not be empty");
        }
        if crate::data::check_ratios(self.data.split_ratios).is_err() {
            return bad("data.split_ratios must be non-negative and sum to 1");
        }
        Ok(())
    }

    /// Stable hash of the settings that determine results. Paths and the worker
    /// count are excluded: they do not change any output.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("paths");
            map.remove("workers");
        }
        // serde_json maps are sorted, so this text is canonical.
        let canonical = serde_json::to_string(&value).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn num_features(&self) -> usize {
        self.data.feature_columns.len()
    }
}

/// Seed for an independent random stream named `tag`.
pub fn derive_seed(global: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "train": {"t_full": 3, "t_short": 1}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.model.alpha_init, 0.1);
        assert_eq!(cfg.num_features(), 28);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 7}"#).is_err());
    }

    #[test]
    fn fingerprint_ignores_paths_and_workers() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.workers = 8;
        b.paths.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.model.skip_enabled = false;
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = RunConfig::default();
        cfg.train.t_short = 30;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.filter.trainable_set.insert(crate::qasm::GateKind::H);
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.data.split_ratios = [0.5, 0.5, 0.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }
}
