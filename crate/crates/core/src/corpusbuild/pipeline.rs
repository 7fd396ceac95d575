use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::endpoint::{ChatEndpoint, ChatMessage, ChatRequest, EndpointCall, Stage};
use super::{CorpusError, Document, Exchange, PairRecord, Result, SCHEMA_VERSION};
use crate::promptgen::{
    render_single_task, render_stage1, sample_dimensions, PromptKind, PromptParams, PromptRecord, SingleTaskParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Expand,
    Polish,
    Rewrite,
    Generate,
    /// Five-dimension adversarial revision.
    Adversarial,
}

impl TaskKind {
    pub const TRAINING: [TaskKind; 4] = [TaskKind::Expand, TaskKind::Polish, TaskKind::Rewrite, TaskKind::Generate];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Expand => "expand",
            TaskKind::Polish => "polish",
            TaskKind::Rewrite => "rewrite",
            TaskKind::Generate => "generate",
            TaskKind::Adversarial => "adversarial",
        }
    }

    fn two_stage(self) -> bool {
        matches!(self, TaskKind::Polish | TaskKind::Adversarial)
    }
}

/// Source of record timestamps. Mock builds use a fixed value so replays
/// are byte-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    System,
    Fixed(String),
}

impl Clock {
    pub fn fixed() -> Self {
        Clock::Fixed("unix:0".into())
    }

    fn now(&self) -> String {
        match self {
            Clock::System => {
                format!("unix:{}", SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
            }
            Clock::Fixed(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub tasks: Vec<TaskKind>,
    pub seed: u64,
    pub clock: Clock,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self { tasks: TaskKind::TRAINING.to_vec(), seed: 0, clock: Clock::fixed() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub document_id: String,
    pub task: TaskKind,
    pub error: String,
    pub endpoint_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: String,
    pub seed: u64,
    pub tasks: Vec<TaskKind>,
    pub n_documents: usize,
    /// Task drawn for each document, in input order.
    pub assignment: Vec<TaskKind>,
    pub counts: BTreeMap<String, usize>,
    pub stage1_endpoint: String,
    pub stage2_endpoint: String,
    pub n_records: usize,
    pub failures: Vec<RecordFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOutput {
    pub records: Vec<PairRecord>,
    pub manifest: DatasetManifest,
}

/// Asks the instruction model to turn a prompt into a revision instruction.
pub fn stage1_instruction(endpoint: &dyn ChatEndpoint, prompt: &PromptRecord) -> Result<(String, Exchange)> {
    let request = ChatRequest { model: endpoint.model_id().into(), messages: vec![ChatMessage::user(&prompt.text)] };
    let call = EndpointCall { stage: Stage::Instruction, request: &request, prompt: Some(prompt), source_text: None };
    let (raw, text) = endpoint.complete(call)?;
    let text = text.trim().to_string();
    if text.is_empty() {
        return Err(CorpusError::EmptyCompletion(endpoint.model_id().into()));
    }
    let exchange = Exchange { endpoint: endpoint.model_id().into(), request: request.to_body(), response: raw };
    Ok((text, exchange))
}

/// Sends `message` to the target model and checks the revision differs
/// from the human text.
pub fn stage2_revise(
    endpoint: &dyn ChatEndpoint,
    message: &str,
    human: &Document,
    prompt: &PromptRecord,
) -> Result<(String, Exchange)> {
    human.validate()?;
    if message.trim().is_empty() {
        return Err(CorpusError::EmptyCompletion("<instruction>".into()));
    }
    let request = ChatRequest { model: endpoint.model_id().into(), messages: vec![ChatMessage::user(message)] };
    let call = EndpointCall { stage: Stage::Revision, request: &request, prompt: Some(prompt), source_text: Some(&human.text) };
    let (raw, text) = endpoint.complete(call)?;
    let text = text.trim().to_string();
    if text.is_empty() || text == human.text.trim() {
        return Err(CorpusError::DegenerateRevision);
    }
    let exchange = Exchange { endpoint: endpoint.model_id().into(), request: request.to_body(), response: raw };
    Ok((text, exchange))
}

fn record_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Builds one pair. `rng_seed` drives every random choice for the record.
pub fn revise_document(
    doc: &Document,
    task: TaskKind,
    stage1: &dyn ChatEndpoint,
    stage2: &dyn ChatEndpoint,
    rng_seed: u64,
    clock: &Clock,
) -> Result<PairRecord> {
    doc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (kind, params, input) = match task {
        TaskKind::Adversarial => (PromptKind::AdversarialStage1, PromptParams::Dimensions(sample_dimensions(&mut rng)), None),
        TaskKind::Polish => (PromptKind::Polish, PromptParams::SingleTask(SingleTaskParams::polish(&mut rng)), None),
        TaskKind::Expand => {
            (PromptKind::Expand, PromptParams::SingleTask(SingleTaskParams::expand(&mut rng)), Some(doc.text.clone()))
        }
        TaskKind::Rewrite => (PromptKind::Rewrite, PromptParams::SingleTask(SingleTaskParams::default()), Some(doc.text.clone())),
        TaskKind::Generate => {
            (PromptKind::Generate, PromptParams::SingleTask(SingleTaskParams::default()), Some(doc.text.clone()))
        }
    };
    let text = match &params {
        PromptParams::Dimensions(d) => render_stage1(d),
        PromptParams::SingleTask(p) => render_single_task(kind, p, input.as_deref().unwrap_or(""))?,
    };
    let prompt = PromptRecord { kind, text, params, input, seed_lineage: vec![rng_seed] };

    let (instruction, stage1_exchange, message) = if task.two_stage() {
        let (instruction, ex) = stage1_instruction(stage1, &prompt)?;
        let message = format!("{instruction}\n\n{}", doc.text);
        (instruction, Some(ex), message)
    } else {
        (prompt.text.clone(), None, prompt.text.clone())
    };
    let (machine_text, stage2_exchange) = stage2_revise(stage2, &message, doc, &prompt)?;
    Ok(PairRecord {
        id: format!("{}:{}", doc.id, task.name()),
        document_id: doc.id.clone(),
        human_text: doc.text.clone(),
        machine_text,
        task,
        prompt,
        instruction,
        source_model: stage2.model_id().into(),
        stage1: stage1_exchange,
        stage2: stage2_exchange,
        created_at: clock.now(),
        seed_lineage: vec![rng_seed],
    })
}

/// Assigns each document one task uniformly at random and revises it.
/// A failing record is logged in the manifest; the build continues.
pub fn build_training_set(
    docs: &[Document],
    config: &BuildConfig,
    stage1: &dyn ChatEndpoint,
    stage2: &dyn ChatEndpoint,
) -> Result<BuildOutput> {
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if config.tasks.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let assignment: Vec<TaskKind> =
        docs.iter().map(|_| config.tasks[rng.random_range(0..config.tasks.len())]).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut counts = BTreeMap::new();
    for (i, (doc, &task)) in docs.iter().zip(&assignment).enumerate() {
        *counts.entry(task.name().to_string()).or_insert(0) += 1;
        match revise_document(doc, task, stage1, stage2, record_seed(config.seed, i), &config.clock) {
            Ok(r) => records.push(r),
            Err(e) => failures.push(RecordFailure {
                document_id: doc.id.clone(),
                task,
                endpoint_error: e.is_endpoint_error(),
                error: e.to_string(),
            }),
        }
    }
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION.into(),
        seed: config.seed,
        tasks: config.tasks.clone(),
        n_documents: docs.len(),
        assignment,
        counts,
        stage1_endpoint: stage1.model_id().into(),
        stage2_endpoint: stage2.model_id().into(),
        n_records: records.len(),
        failures,
    };
    Ok(BuildOutput { records, manifest })
}
