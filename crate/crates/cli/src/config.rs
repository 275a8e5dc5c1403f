use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speechedit::corpus::SyntheticConfig;
use speechedit::dataset::{equal_mix, SpanSamplerConfig, TaskMix};
use speechedit::flow::{FlowConfig, FlowTrainConfig};
use speechedit::lm::{LMConfig, LmTrainConfig};
use speechedit::pipeline::{FeatureConfig, InferenceConfig};
use speechedit::sequence::PromptMode;

use crate::CliError;

/// Everything a command needs. Relative paths resolve against the directory
/// of the config file, or the working directory without one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Prompt layouts the edit LM is trained on.
    pub lm_formats: Vec<PromptMode>,
    pub paths: Paths,
    pub synthetic: SyntheticConfig,
    pub dataset: DatasetConfig,
    pub features: FeatureConfig,
    pub lm: LMConfig,
    pub lm_train: LmTrainConfig,
    pub flow: FlowConfig,
    pub flow_train: FlowTrainConfig,
    pub base: BaseConfig,
    pub inference: InferenceConfig,
    pub evaluation: EvaluationConfig,
    #[serde(skip)]
    pub root: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lm_formats: vec![PromptMode::ZeroShot, PromptMode::OneShot],
            paths: Paths::default(),
            synthetic: SyntheticConfig::default(),
            dataset: DatasetConfig::default(),
            features: FeatureConfig::default(),
            lm: LMConfig::default(),
            lm_train: LmTrainConfig::default(),
            flow: FlowConfig::default(),
            flow_train: FlowTrainConfig::default(),
            base: BaseConfig::default(),
            inference: InferenceConfig::default(),
            evaluation: EvaluationConfig::default(),
            root: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of alignment JSON files with their WAVs.
    pub corpus: PathBuf,
    /// Manifest directory written by `build-dataset`.
    pub dataset: PathBuf,
    pub checkpoints: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: "corpus".into(),
            dataset: "dataset".into(),
            checkpoints: "checkpoints".into(),
            output: "output".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub mix: TaskMix,
    pub spans: SpanSamplerConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            mix: equal_mix(),
            spans: SpanSamplerConfig::default(),
        }
    }
}

/// Plain-synthesis training that produces the starting point of the edit
/// models (`train --stage base`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseConfig {
    pub lm_epochs: usize,
    pub flow_epochs: usize,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            lm_epochs: 10,
            flow_epochs: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub fade_ms: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { fade_ms: 20.0 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.root.as_os_str().is_empty() {
            cfg.root = PathBuf::from(".");
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.resolve(&self.paths.corpus)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.resolve(&self.paths.dataset)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.resolve(&self.paths.checkpoints)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.paths.output)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Runtime(e.into()))
    }

    /// Writes the resolved config to `dir/config.toml`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(e.into()))?;
        std::fs::write(dir.join("config.toml"), self.to_toml()?).map_err(|e| CliError::Runtime(e.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "seed = 7\n[paths]\ndataset = \"d\"\n[lm]\nwidth = 32\n").unwrap();
        let c = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.lm.width, 32);
        assert_eq!(c.lm.layers, LMConfig::default().layers);
        assert_eq!(c.dataset_dir(), dir.path().join("d"));
        std::fs::write(&p, "sed = 1\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&p)), Err(CliError::Usage(_))));
    }
}
