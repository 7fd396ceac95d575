//! Self-describing JSON checkpoints.
//!
//! Floats are written with shortest round-trip formatting and parsed with
//! exact round-tripping, so `save -> load` reproduces every weight bit for
//! bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::count::CountTables;
use super::{Architecture, Backend, CountModel, CountModelConfig, LmError, Result, TransformerLm};

pub const CHECKPOINT_FORMAT: &str = "hlpd-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One step in the history of seeds that produced a set of weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub stage: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelPayload {
    Transformer { architecture: Architecture, params: Vec<f64> },
    Count { config: CountModelConfig, tables: CountTables },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed_lineage: Vec<LineageEntry>,
    pub model: ModelPayload,
}

impl Checkpoint {
    pub fn from_backend(backend: &Backend, seed_lineage: Vec<LineageEntry>) -> Result<Self> {
        let model = match backend {
            Backend::Transformer(m) => ModelPayload::Transformer { architecture: m.architecture(), params: m.params().to_vec() },
            Backend::Count(m) => ModelPayload::Count { config: m.config(), tables: m.to_tables() },
            Backend::Table(_) => return Err(LmError::Checkpoint("table models are not checkpointable".into())),
        };
        Ok(Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, seed_lineage, model })
    }

    pub fn into_backend(self) -> Result<Backend> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(LmError::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(LmError::Checkpoint(format!("unsupported checkpoint version {}", self.version)));
        }
        match self.model {
            ModelPayload::Transformer { architecture, params } => {
                Ok(Backend::Transformer(TransformerLm::from_params(architecture, params)?))
            }
            ModelPayload::Count { config, tables } => Ok(Backend::Count(CountModel::from_tables(config, tables)?)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| LmError::Checkpoint(e.to_string()))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> LmError {
    LmError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn save_model(path: &Path, backend: &Backend, seed_lineage: Vec<LineageEntry>) -> Result<()> {
    let ckpt = Checkpoint::from_backend(backend, seed_lineage)?;
    fs::write(path, ckpt.to_json()).map_err(|e| io_err(path, e))
}

pub fn load_model(path: &Path) -> Result<(Backend, Vec<LineageEntry>)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let ckpt = Checkpoint::from_json(&text)?;
    let lineage = ckpt.seed_lineage.clone();
    Ok((ckpt.into_backend()?, lineage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{tokenize, LanguageModel};

    #[test]
    fn transformer_round_trip_is_bit_exact() {
        let arch = Architecture { context: 32, width: 16, ..Default::default() };
        let m = TransformerLm::new(arch, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let lineage = vec![LineageEntry { stage: "init".into(), seed: 11 }];
        save_model(&path, &Backend::Transformer(m.clone()), lineage.clone()).unwrap();
        let (back, got_lineage) = load_model(&path).unwrap();
        assert_eq!(got_lineage, lineage);
        let Backend::Transformer(back) = back else { panic!("wrong kind") };
        assert!(m.params().iter().zip(back.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
        let x = tokenize("round trip").unwrap();
        let a = m.forward_logprobs(&x).unwrap();
        let b = back.forward_logprobs(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn version_is_checked() {
        let m = CountModel::new(CountModelConfig::default());
        let mut ckpt = Checkpoint::from_backend(&Backend::Count(m), vec![]).unwrap();
        ckpt.version = 99;
        assert!(matches!(ckpt.into_backend(), Err(LmError::Checkpoint(_))));
    }
}
