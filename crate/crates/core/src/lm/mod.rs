//! Byte-level autoregressive language models.
//!
//! Every model in the crate predicts, for each input position, a full
//! next-token distribution in natural-log space. Scoring, curvature and
//! training are all written against [`LanguageModel`], so the trainable
//! transformer, the order-2 count model and hand-built table models are
//! interchangeable wherever only probabilities are needed.

mod checkpoint;
mod count;
mod optim;
mod pretrain;
mod table;
mod tensor;
mod transformer;

pub use checkpoint::{load_model, save_model, Checkpoint, LineageEntry, ModelPayload, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use count::{CountModel, CountModelConfig};
pub use optim::{Adam, AdamConfig};
pub use pretrain::{fit_next_token, PretrainConfig};
pub use table::TableModel;
pub use transformer::{Architecture, Gradients, TransformerLm};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Number of raw byte values.
pub const BYTE_VALUES: usize = 256;
/// Beginning-of-sequence marker.
pub const BOS: Token = Token(256);
/// End-of-sequence marker.
pub const EOS: Token = Token(257);
/// Padding; never allowed inside a scored span.
pub const PAD: Token = Token(258);
/// Vocabulary size of the byte tokenizer.
pub const VOCAB_SIZE: usize = 259;
/// Default context window in tokens (BOS included).
pub const DEFAULT_CONTEXT: usize = 128;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LmError {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("sequence of {len} tokens exceeds context window {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("sequence must hold BOS plus at least one token (got {0})")]
    SequenceTooShort(usize),
    #[error("sequence must start with BOS")]
    MissingBos,
    #[error("PAD token at position {0} inside a scored span")]
    PadInSpan(usize),
    #[error("token id {0} outside vocabulary")]
    TokenOutOfRange(u16),
    #[error("model is frozen and rejects gradient updates")]
    FrozenModel,
    #[error("backend `{0}` has no trainable parameters")]
    NotDifferentiable(&'static str),
    #[error("vocabulary mismatch: {0} vs {1}")]
    VocabMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, LmError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u16);

impl Token {
    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn is_byte(self) -> bool {
        (self.0 as usize) < BYTE_VALUES
    }
}

/// A token stream that always starts with [`BOS`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sequence {
    tokens: Vec<Token>,
}

impl Sequence {
    pub fn from_tokens(tokens: Vec<Token>) -> Result<Self> {
        match tokens.first() {
            None => Err(LmError::SequenceTooShort(0)),
            Some(&t) if t != BOS => Err(LmError::MissingBos),
            _ => {
                if let Some(t) = tokens.iter().find(|t| t.id() >= VOCAB_SIZE) {
                    return Err(LmError::TokenOutOfRange(t.0));
                }
                Ok(Self { tokens })
            }
        }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Appends EOS unless already present.
    pub fn with_eos(mut self) -> Self {
        if self.tokens.last() != Some(&EOS) {
            self.tokens.push(EOS);
        }
        self
    }

    /// Clips to at most `max_len` tokens, BOS included.
    pub fn truncated(&self, max_len: usize) -> Self {
        let n = self.tokens.len().min(max_len.max(1));
        Self { tokens: self.tokens[..n].to_vec() }
    }

    /// Number of scored positions (every token after BOS).
    pub fn n_positions(&self) -> usize {
        self.tokens.len().saturating_sub(1)
    }

    pub(crate) fn validate_scored(&self, context: usize) -> Result<()> {
        if self.tokens.len() < 2 {
            return Err(LmError::SequenceTooShort(self.tokens.len()));
        }
        if self.tokens.len() > context {
            return Err(LmError::ContextOverflow { len: self.tokens.len(), context });
        }
        if let Some(pos) = self.tokens.iter().position(|&t| t == PAD) {
            return Err(LmError::PadInSpan(pos));
        }
        Ok(())
    }
}

/// Maps UTF-8 text to `[BOS, byte...]`.
pub fn tokenize(text: &str) -> Result<Sequence> {
    if text.trim().is_empty() {
        return Err(LmError::EmptyText);
    }
    let mut tokens = Vec::with_capacity(text.len() + 1);
    tokens.push(BOS);
    tokens.extend(text.bytes().map(|b| Token(b as u16)));
    Ok(Sequence { tokens })
}

/// Inverse of [`tokenize`]; special tokens are dropped and invalid UTF-8 is
/// replaced lossily (sampled byte streams need not be valid UTF-8).
pub fn detokenize(seq: &Sequence) -> String {
    let bytes: Vec<u8> = seq.tokens.iter().filter(|t| t.is_byte()).map(|t| t.0 as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Natural-log probabilities over the vocabulary for one position.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    log_probs: Vec<f64>,
}

impl NextTokenDistribution {
    /// Normalizes arbitrary finite log-weights with logsumexp.
    pub fn from_logits(logits: &[f64]) -> Self {
        let lse = logsumexp(logits);
        Self { log_probs: logits.iter().map(|&l| l - lse).collect() }
    }

    /// Wraps values that are already normalized log-probabilities.
    pub(crate) fn from_normalized(log_probs: Vec<f64>) -> Self {
        Self { log_probs }
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, token: Token) -> f64 {
        self.log_probs[token.id()]
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    /// Mean and second moment of `values` under this distribution.
    pub fn moments(&self, values: &[f64]) -> (f64, f64) {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (lp, v) in self.log_probs.iter().zip(values) {
            let p = lp.exp();
            if p > 0.0 {
                m1 += p * v;
                m2 += p * v * v;
            }
        }
        (m1, m2)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .filter(|lp| lp.is_finite())
            .map(|&lp| lp.exp() * lp)
            .sum::<f64>()
    }
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draws one token; `temperature` rescales log-probabilities before sampling.
pub fn sample_token<R: Rng + ?Sized>(dist: &NextTokenDistribution, temperature: f64, rng: &mut R) -> Token {
    assert!(temperature > 0.0, "temperature must be positive");
    let u: f64 = rng.random();
    let weights: Vec<f64> = if temperature == 1.0 {
        dist.log_probs.iter().map(|lp| lp.exp()).collect()
    } else {
        let scaled: Vec<f64> = dist.log_probs.iter().map(|lp| lp / temperature).collect();
        let lse = logsumexp(&scaled);
        scaled.iter().map(|s| (s - lse).exp()).collect()
    };
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return Token(i as u16);
            }
        }
    }
    Token(last_positive as u16)
}

/// `dist` conditioned on the next token being a raw byte.
pub fn restrict_to_bytes(dist: &NextTokenDistribution) -> NextTokenDistribution {
    let logits: Vec<f64> =
        dist.log_probs.iter().enumerate().map(|(i, &lp)| if i < BYTE_VALUES { lp } else { f64::NEG_INFINITY }).collect();
    NextTokenDistribution::from_logits(&logits)
}

/// Extends `prefix` by `n_new` sampled bytes.
pub fn sample_continuation<M, R>(model: &M, prefix: &[Token], n_new: usize, temperature: f64, rng: &mut R) -> Result<Sequence>
where
    M: LanguageModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut toks = prefix.to_vec();
    for _ in 0..n_new {
        let dist = restrict_to_bytes(&model.next_distribution(&toks)?);
        toks.push(sample_token(&dist, temperature, rng));
    }
    Sequence::from_tokens(toks)
}

/// Anything that yields next-token distributions from a causal prefix.
pub trait LanguageModel {
    fn vocab_size(&self) -> usize;

    /// Longest sequence (BOS included) the model accepts.
    fn context_window(&self) -> usize;

    /// One distribution per input token: entry `j` is `p(. | inputs[..=j])`.
    fn predict(&self, inputs: &[Token]) -> Result<Vec<NextTokenDistribution>>;

    /// Distributions for every scored position of `x`; entry `j` conditions
    /// on `x[..=j]` and scores `x[j + 1]`.
    fn position_distributions(&self, x: &Sequence) -> Result<Vec<NextTokenDistribution>> {
        x.validate_scored(self.context_window())?;
        self.predict(&x.tokens()[..x.len() - 1])
    }

    /// Per-position `log p(x_j | x_<j)`.
    fn forward_logprobs(&self, x: &Sequence) -> Result<Vec<f64>> {
        let dists = self.position_distributions(x)?;
        Ok(dists.iter().zip(&x.tokens()[1..]).map(|(d, &t)| d.log_prob(t)).collect())
    }

    fn sequence_logprob(&self, x: &Sequence) -> Result<f64> {
        Ok(self.forward_logprobs(x)?.iter().sum())
    }

    /// Distribution of the token following `prefix`.
    fn next_distribution(&self, prefix: &[Token]) -> Result<NextTokenDistribution> {
        if prefix.is_empty() {
            return Err(LmError::SequenceTooShort(0));
        }
        if prefix.len() >= self.context_window() {
            return Err(LmError::ContextOverflow { len: prefix.len() + 1, context: self.context_window() });
        }
        Ok(self.predict(prefix)?.pop().expect("non-empty prefix yields a distribution"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Scoring,
    Reference,
    Perturbation,
}

/// Concrete model families.
#[derive(Debug, Clone)]
pub enum Backend {
    Transformer(TransformerLm),
    Count(CountModel),
    Table(TableModel),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Transformer(_) => "transformer",
            Backend::Count(_) => "count",
            Backend::Table(_) => "table",
        }
    }
}

impl LanguageModel for Backend {
    fn vocab_size(&self) -> usize {
        match self {
            Backend::Transformer(m) => m.vocab_size(),
            Backend::Count(m) => m.vocab_size(),
            Backend::Table(m) => m.vocab_size(),
        }
    }

    fn context_window(&self) -> usize {
        match self {
            Backend::Transformer(m) => m.context_window(),
            Backend::Count(m) => m.context_window(),
            Backend::Table(m) => m.context_window(),
        }
    }

    fn predict(&self, inputs: &[Token]) -> Result<Vec<NextTokenDistribution>> {
        match self {
            Backend::Transformer(m) => m.predict(inputs),
            Backend::Count(m) => m.predict(inputs),
            Backend::Table(m) => m.predict(inputs),
        }
    }

    fn next_distribution(&self, prefix: &[Token]) -> Result<NextTokenDistribution> {
        match self {
            Backend::Transformer(m) => m.next_distribution(prefix),
            Backend::Count(m) => m.next_distribution(prefix),
            Backend::Table(m) => m.next_distribution(prefix),
        }
    }

    fn forward_logprobs(&self, x: &Sequence) -> Result<Vec<f64>> {
        match self {
            Backend::Transformer(m) => m.forward_logprobs(x),
            Backend::Count(m) => m.forward_logprobs(x),
            Backend::Table(m) => m.forward_logprobs(x),
        }
    }
}

/// A model tagged with the role it plays. Reference and perturbation handles
/// are always frozen.
#[derive(Debug, Clone)]
pub struct ModelHandle {
    role: Role,
    backend: Backend,
    frozen: bool,
}

impl ModelHandle {
    pub fn new(role: Role, backend: Backend) -> Self {
        let frozen = role != Role::Scoring;
        Self { role, backend, frozen }
    }

    pub fn scoring(backend: Backend) -> Self {
        Self::new(Role::Scoring, backend)
    }

    pub fn reference(backend: Backend) -> Self {
        Self::new(Role::Reference, backend)
    }

    pub fn perturbation(backend: Backend) -> Self {
        Self::new(Role::Perturbation, backend)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Freezes a scoring handle (e.g. to use it as a fixed detector).
    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    /// Frozen copy of this model's current weights in another role.
    pub fn snapshot_as(&self, role: Role) -> Self {
        Self { role, backend: self.backend.clone(), frozen: true }
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn transformer(&self) -> Option<&TransformerLm> {
        match &self.backend {
            Backend::Transformer(m) => Some(m),
            _ => None,
        }
    }

    /// Mutable access to trainable weights; frozen handles refuse.
    pub fn transformer_mut(&mut self) -> Result<&mut TransformerLm> {
        if self.frozen {
            return Err(LmError::FrozenModel);
        }
        match &mut self.backend {
            Backend::Transformer(m) => Ok(m),
            other => Err(LmError::NotDifferentiable(other.name())),
        }
    }

    /// Gradient of `sum_i weight_i * log p(seq_i)` with respect to every
    /// parameter.
    pub fn backward(&self, spec: &LossGradSpec) -> Result<Gradients> {
        if self.frozen {
            return Err(LmError::FrozenModel);
        }
        match &self.backend {
            Backend::Transformer(m) => m.backward(spec),
            other => Err(LmError::NotDifferentiable(other.name())),
        }
    }
}

impl ModelHandle {
    /// Fused forward/backward; see [`TransformerLm::value_and_grad`].
    pub fn value_and_grad<F>(&self, seqs: &[Sequence], weights: F) -> Result<(Vec<f64>, Gradients)>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        if self.frozen {
            return Err(LmError::FrozenModel);
        }
        match &self.backend {
            Backend::Transformer(m) => m.value_and_grad(seqs, weights),
            other => Err(LmError::NotDifferentiable(other.name())),
        }
    }
}

impl LanguageModel for ModelHandle {
    fn vocab_size(&self) -> usize {
        self.backend.vocab_size()
    }

    fn context_window(&self) -> usize {
        self.backend.context_window()
    }

    fn predict(&self, inputs: &[Token]) -> Result<Vec<NextTokenDistribution>> {
        self.backend.predict(inputs)
    }

    fn next_distribution(&self, prefix: &[Token]) -> Result<NextTokenDistribution> {
        self.backend.next_distribution(prefix)
    }

    fn forward_logprobs(&self, x: &Sequence) -> Result<Vec<f64>> {
        self.backend.forward_logprobs(x)
    }
}

/// A scalar loss expressed through sequence log-probabilities: the loss
/// gradient is `sum_i weight_i * d log p(seq_i) / d theta`.
#[derive(Debug, Clone, Default)]
pub struct LossGradSpec {
    pub terms: Vec<(Sequence, f64)>,
}

impl LossGradSpec {
    pub fn push(&mut self, seq: Sequence, weight: f64) {
        self.terms.push((seq, weight));
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(_, w)| *w == 0.0)
    }
}
