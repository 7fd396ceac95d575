//! Run configuration: every subcommand reads an optional JSON config,
//! applies command-line overrides, and archives the effective result next
//! to its outputs.

use std::path::{Path, PathBuf};

use hlpd::corpusbuild::TaskKind;
use hlpd::curvature::DetectorConfig;
use hlpd::evalkit::SyntheticExperimentSpec;
use hlpd::humanizer::HumanizeConfig;
use hlpd::hlpo::TrainerConfig;
use hlpd::lm::Architecture;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RUN_CONFIG_VERSION: u32 = 1;
pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub mock: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detect: Option<DetectSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build_dataset: Option<BuildSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_prompts: Option<GenSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub humanize: Option<HumanizeSection>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self {
            version: RUN_CONFIG_VERSION,
            command: command.into(),
            seed: 0,
            threads: None,
            mock: false,
            out_dir: None,
            train: None,
            detect: None,
            eval: None,
            build_dataset: None,
            gen_prompts: None,
            humanize: None,
        }
    }

    pub fn load(path: &Path, command: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if cfg.version != RUN_CONFIG_VERSION {
            return Err(CliError::Usage(format!("{}: unsupported config version {}", path.display(), cfg.version)));
        }
        if cfg.command != command {
            return Err(CliError::Usage(format!(
                "{}: config is for `{}`, not `{command}`",
                path.display(),
                cfg.command
            )));
        }
        Ok(cfg)
    }

    pub fn archive(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("run config serializes") + "\n";
        crate::write_file(&dir.join(RUN_CONFIG_FILE), text.as_bytes())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    /// Preference-pair corpus.
    pub pairs: Option<PathBuf>,
    /// Checkpoint to start from; a fresh model otherwise.
    pub init: Option<PathBuf>,
    pub architecture: Architecture,
    pub trainer: TrainerConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectSection {
    pub model: Option<PathBuf>,
    /// Perturbation checkpoint; the scoring model samples for itself when
    /// absent.
    pub perturb: Option<PathBuf>,
    /// Pair corpus (labelled rows) or document file.
    pub input: Option<PathBuf>,
    pub detector: DetectorConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Labelled score dumps, one per run.
    pub scores: Vec<PathBuf>,
    /// Synthetic experiment, used when no score dumps are given.
    pub synthetic: Option<SyntheticExperimentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildSection {
    pub documents: Option<PathBuf>,
    pub tasks: Vec<TaskKind>,
    pub registry: Option<PathBuf>,
    pub stage1_model: String,
    pub stage2_model: String,
}

impl Default for BuildSection {
    fn default() -> Self {
        Self {
            documents: None,
            tasks: TaskKind::TRAINING.to_vec(),
            registry: None,
            stage1_model: "mock-instruct".into(),
            stage2_model: "mock-target".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSection {
    pub size: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        Self { size: 750 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanizeSection {
    pub model: Option<PathBuf>,
    /// Perturbation checkpoint.
    pub perturb: Option<PathBuf>,
    /// Corpus to fit a count perturbation model on instead.
    pub perturb_corpus: Option<PathBuf>,
    /// Pair corpus (machine sides are humanized) or document file.
    pub input: Option<PathBuf>,
    pub limit: Option<usize>,
    pub config: HumanizeConfig,
    pub detector: DetectorConfig,
}
