//! Preference-pair corpus construction.
//!
//! Human documents are revised by a target model, either directly from a
//! single-task template or in two stages, where an instruction model first
//! writes the revision instruction. Everything a record depends on is kept
//! in its provenance so mock-mode builds replay byte for byte.

mod endpoint;
mod io;
mod pipeline;

pub use endpoint::{
    network_calls, ChatEndpoint, ChatMessage, ChatRequest, EndpointCall, EndpointRegistry, EndpointSpec, LlmEndpoint,
    MockEndpoint, RetryPolicy, Stage,
};
pub use io::{
    read_corpus, read_documents, read_jsonl, write_corpus, write_documents, write_jsonl, SchemaHeader, CORPUS_SCHEMA,
    DOCUMENT_SCHEMA, SCHEMA_VERSION,
};
pub use pipeline::{
    build_training_set, revise_document, stage1_instruction, stage2_revise, BuildConfig, BuildOutput, Clock, DatasetManifest,
    RecordFailure, TaskKind,
};

use serde::{Deserialize, Serialize};

use crate::promptgen::{PromptError, PromptRecord};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("endpoint `{endpoint}` failed after {attempts} attempt(s): {message}")]
    Endpoint { endpoint: String, attempts: u32, message: String },
    #[error("endpoint `{0}` returned an empty completion")]
    EmptyCompletion(String),
    #[error("revision is empty or identical to the source text")]
    DegenerateRevision,
    #[error("environment variable `{0}` holding the endpoint token is not set")]
    MissingToken(String),
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("malformed record on line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("no documents to process")]
    EmptyCorpus,
    #[error("document `{0}` has empty text")]
    EmptyDocument(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl CorpusError {
    pub fn is_endpoint_error(&self) -> bool {
        matches!(self, CorpusError::Endpoint { .. } | CorpusError::EmptyCompletion(_) | CorpusError::MissingToken(_))
    }
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source_dataset: String,
    #[serde(default = "default_language")]
    pub language: String,
}

fn default_language() -> String {
    "en".into()
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), source_dataset: String::new(), language: default_language() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(CorpusError::EmptyDocument(self.id.clone()));
        }
        Ok(())
    }
}

/// Raw request and response bodies of one endpoint exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub endpoint: String,
    pub request: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub document_id: String,
    pub human_text: String,
    pub machine_text: String,
    pub task: TaskKind,
    pub prompt: PromptRecord,
    /// Stage-1 output for two-stage tasks, the filled template otherwise.
    pub instruction: String,
    pub source_model: String,
    pub stage1: Option<Exchange>,
    pub stage2: Exchange,
    pub created_at: String,
    pub seed_lineage: Vec<u64>,
}
