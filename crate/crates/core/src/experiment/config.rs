use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synthetic::SyntheticKind;
use crate::error::{Error, Result};
use crate::train::{Alignment, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    SyntheticBlobs {
        n_train: usize,
        n_test: usize,
        classes: usize,
        noise: f64,
        seed: u64,
    },
    SyntheticTwoMoons {
        n_train: usize,
        n_test: usize,
        noise: f64,
        seed: u64,
    },
    /// IDX files; relative paths are resolved against the config file.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        limit: usize,
        classes: usize,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::SyntheticBlobs {
            n_train: 800,
            n_test: 2000,
            classes: 4,
            noise: 0.3,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn synthetic_kind(&self) -> Option<SyntheticKind> {
        match self {
            DatasetSpec::SyntheticBlobs { .. } => Some(SyntheticKind::Blobs),
            DatasetSpec::SyntheticTwoMoons { .. } => Some(SyntheticKind::TwoMoons),
            DatasetSpec::Idx { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// One run of `train` as configured.
    Single,
    /// With/without alignment for every seed.
    MainPair,
    GammaSweep,
    EpochBudget,
    /// One run per alignment variant for every seed.
    Ablation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub preset: Preset,
    /// Training seeds for multi-run presets; `single` uses `train.seed`.
    pub seeds: Vec<u64>,
    pub gammas: Vec<f64>,
    pub fractions: Vec<f64>,
    pub variants: Vec<Alignment>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Single,
            seeds: vec![0, 1, 2, 3, 4],
            gammas: vec![0.1, 0.25, 0.5],
            fractions: vec![0.25, 0.5, 0.75],
            variants: vec![Alignment::Csa, Alignment::SaOnly, Alignment::Supcon, Alignment::None],
        }
    }
}

pub const BUILTIN_TABLE_NAME: &str = "builtin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    /// Corruption parameter table: `builtin` or a TOML file path.
    pub corruption_table: String,
    pub dataset: DatasetSpec,
    pub train: TrainConfig,
    pub study: StudyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            output_dir: PathBuf::from("runs"),
            corruption_table: BUILTIN_TABLE_NAME.into(),
            dataset: DatasetSpec::default(),
            train: TrainConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Parses TOML; errors carry the line and field of the offending value.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file, resolving relative paths against its directory
    /// and checking that referenced files exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = resolve(base, &cfg.output_dir);
        if cfg.corruption_table != BUILTIN_TABLE_NAME {
            cfg.corruption_table = resolve(base, Path::new(&cfg.corruption_table)).display().to_string();
        }
        if let DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &mut cfg.dataset
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                *p = resolve(base, p);
            }
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    fn check_files(&self) -> Result<()> {
        let mut files: Vec<PathBuf> = Vec::new();
        if self.corruption_table != BUILTIN_TABLE_NAME {
            files.push(PathBuf::from(&self.corruption_table));
        }
        if let DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = &self.dataset
        {
            files.extend([train_images, train_labels, test_images, test_labels].map(|p| p.to_path_buf()));
        }
        match files.iter().find(|p| !p.is_file()) {
            Some(p) => Err(Error::Config(format!("referenced file {} does not exist", p.display()))),
            None => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid experiment name `{}`", self.name)));
        }
        self.train.validate()?;
        if self.study.preset != Preset::Single && self.study.seeds.is_empty() {
            return Err(Error::Config("study.seeds must not be empty".into()));
        }
        Ok(())
    }

    /// Canonical serialization with every field written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Hex digest of the canonical serialization.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}
