//! Human language preference optimization.
//!
//! The scoring model is trained so that, relative to a frozen reference
//! copy of its initial weights, human-written members of preference pairs
//! gain log-probability over their machine revisions. The reward margin of
//! a pair is
//!
//! ```text
//! r(x_h, x_m) = [log p(x_h) - log p(x_m)] - [log p_ref(x_h) - log p_ref(x_m)]
//! ```
//!
//! and the default objective is the linear contrastive loss
//! `-beta_t * mean(r)`, where `beta_t` follows a variance-aware schedule
//! over a sliding window of recent margins. The Bradley-Terry sigmoid loss
//! `-mean(log sigmoid(beta * r))` is kept as an ablation.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lm::{Adam, AdamConfig, LanguageModel, LmError, LossGradSpec, ModelHandle, Role, Sequence};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HlpoError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("reference model must be frozen")]
    ReferenceNotFrozen,
    #[error(transparent)]
    Lm(#[from] LmError),
}

pub type Result<T> = std::result::Result<T, HlpoError>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    pub task: String,
    pub source_model: String,
}

/// A human text and its machine revision; the human side is preferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub human: Sequence,
    pub machine: Sequence,
    #[serde(default)]
    pub meta: PairMeta,
}

impl PreferencePair {
    pub fn new(human: Sequence, machine: Sequence) -> Self {
        Self { human, machine, meta: PairMeta::default() }
    }

    pub fn swapped(&self) -> Self {
        Self { human: self.machine.clone(), machine: self.human.clone(), meta: self.meta.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardMargin(pub f64);

/// How a sequence's log-probability enters the margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarginOptions {
    /// Clip bound `r_max` applied before the loss.
    pub r_max: f64,
    /// Use the per-token mean instead of the summed log-probability.
    pub length_normalize: bool,
}

impl Default for MarginOptions {
    fn default() -> Self {
        Self { r_max: 20.0, length_normalize: false }
    }
}

impl MarginOptions {
    fn seq_scale(&self, seq: &Sequence) -> f64 {
        if self.length_normalize {
            1.0 / seq.n_positions().max(1) as f64
        } else {
            1.0
        }
    }
}

/// Margin from the four sequence log-probabilities, before clipping.
pub fn margin_from_logprobs(scoring_h: f64, scoring_m: f64, ref_h: f64, ref_m: f64) -> f64 {
    (scoring_h - scoring_m) - (ref_h - ref_m)
}

fn scaled_logprob(model: &ModelHandle, seq: &Sequence, opts: &MarginOptions) -> Result<f64> {
    Ok(model.sequence_logprob(seq)? * opts.seq_scale(seq))
}

/// Clipped reward margin of one pair.
pub fn reward_margin(scoring: &ModelHandle, reference: &ModelHandle, pair: &PreferencePair, opts: &MarginOptions) -> Result<RewardMargin> {
    if !reference.is_frozen() {
        return Err(HlpoError::ReferenceNotFrozen);
    }
    let raw = margin_from_logprobs(
        scaled_logprob(scoring, &pair.human, opts)?,
        scaled_logprob(scoring, &pair.machine, opts)?,
        scaled_logprob(reference, &pair.human, opts)?,
        scaled_logprob(reference, &pair.machine, opts)?,
    );
    Ok(RewardMargin(raw.clamp(-opts.r_max, opts.r_max)))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log sigmoid(z)` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Bradley-Terry probability that the human side is preferred.
pub fn bt_preference_prob(margin: RewardMargin) -> f64 {
    sigmoid(margin.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    #[default]
    Linear,
    Sigmoid,
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossVariant::Linear => "linear",
            LossVariant::Sigmoid => "sigmoid",
        })
    }
}

/// Loss value plus `d loss / d raw_margin_i` for every pair of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginLoss {
    pub loss: f64,
    pub clipped: Vec<RewardMargin>,
    pub dloss_dmargin: Vec<f64>,
}

/// Evaluates either loss on raw margins. A margin outside `[-r_max, r_max]`
/// is clipped and contributes no gradient.
pub fn loss_from_margins(variant: LossVariant, raw: &[f64], beta: f64, r_max: f64) -> MarginLoss {
    let n = raw.len() as f64;
    let clipped: Vec<f64> = raw.iter().map(|r| r.clamp(-r_max, r_max)).collect();
    let active = |r: f64| if r.abs() < r_max { 1.0 } else { 0.0 };
    let (loss, dloss_dmargin) = match variant {
        LossVariant::Linear => {
            let loss = -beta * clipped.iter().sum::<f64>() / n;
            let d = raw.iter().map(|&r| -beta / n * active(r)).collect();
            (loss, d)
        }
        LossVariant::Sigmoid => {
            let loss = -clipped.iter().map(|&r| log_sigmoid(beta * r)).sum::<f64>() / n;
            let d = raw
                .iter()
                .zip(&clipped)
                .map(|(&r, &c)| -beta * (1.0 - sigmoid(beta * c)) / n * active(r))
                .collect();
            (loss, d)
        }
    };
    MarginLoss { loss, clipped: clipped.into_iter().map(RewardMargin).collect(), dloss_dmargin }
}

/// Scalar loss, clipped margins and the sequence-level gradient spec for a
/// batch.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub margins: Vec<RewardMargin>,
    pub grad_spec: LossGradSpec,
}

fn batch_loss(
    variant: LossVariant,
    batch: &[PreferencePair],
    scoring: &ModelHandle,
    reference: &ModelHandle,
    beta: f64,
    opts: &MarginOptions,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(HlpoError::EmptyBatch);
    }
    if !(beta > 0.0) {
        return Err(HlpoError::InvalidConfig(format!("beta must be positive, got {beta}")));
    }
    let mut raw = Vec::with_capacity(batch.len());
    for pair in batch {
        if !reference.is_frozen() {
            return Err(HlpoError::ReferenceNotFrozen);
        }
        raw.push(margin_from_logprobs(
            scaled_logprob(scoring, &pair.human, opts)?,
            scaled_logprob(scoring, &pair.machine, opts)?,
            scaled_logprob(reference, &pair.human, opts)?,
            scaled_logprob(reference, &pair.machine, opts)?,
        ));
    }
    let ml = loss_from_margins(variant, &raw, beta, opts.r_max);
    let mut grad_spec = LossGradSpec::default();
    for (pair, d) in batch.iter().zip(&ml.dloss_dmargin) {
        grad_spec.push(pair.human.clone(), d * opts.seq_scale(&pair.human));
        grad_spec.push(pair.machine.clone(), -d * opts.seq_scale(&pair.machine));
    }
    Ok(LossOutput { loss: ml.loss, margins: ml.clipped, grad_spec })
}

/// Linear contrastive loss `-beta_t * mean(r)`.
pub fn hlpo_loss(batch: &[PreferencePair], scoring: &ModelHandle, reference: &ModelHandle, beta_t: f64, opts: &MarginOptions) -> Result<LossOutput> {
    batch_loss(LossVariant::Linear, batch, scoring, reference, beta_t, opts)
}

/// Bradley-Terry loss `-mean(log sigmoid(beta * r))`.
pub fn dpo_sigmoid_loss(batch: &[PreferencePair], scoring: &ModelHandle, reference: &ModelHandle, beta: f64, opts: &MarginOptions) -> Result<LossOutput> {
    batch_loss(LossVariant::Sigmoid, batch, scoring, reference, beta, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaConfig {
    /// When false, `beta_t` stays at `fixed_beta`.
    pub dynamic: bool,
    pub fixed_beta: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Variance scale `c` of the schedule.
    pub curvature: f64,
    pub window: usize,
}

impl Default for BetaConfig {
    fn default() -> Self {
        Self { dynamic: true, fixed_beta: 0.1, beta_min: 0.01, beta_max: 0.5, curvature: 1.0, window: 32 }
    }
}

impl BetaConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta_min > 0.0
            && self.beta_min <= self.beta_max
            && self.curvature > 0.0
            && self.window >= 1
            && self.fixed_beta > 0.0;
        ok.then_some(()).ok_or_else(|| HlpoError::InvalidConfig(format!("bad beta config {self:?}")))
    }

    /// `beta_min + (beta_max - beta_min) * c / (c + v)`.
    pub fn beta_for_variance(&self, variance: f64) -> f64 {
        let b = self.beta_min + (self.beta_max - self.beta_min) * self.curvature / (self.curvature + variance);
        b.clamp(self.beta_min, self.beta_max)
    }
}

/// Sliding window of recent margins driving `beta_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicBetaState {
    pub config: BetaConfig,
    window: VecDeque<f64>,
    beta_t: f64,
}

impl DynamicBetaState {
    pub fn new(config: BetaConfig) -> Self {
        let beta_t = if config.dynamic { config.beta_max } else { config.fixed_beta };
        Self { config, window: VecDeque::with_capacity(config.window), beta_t }
    }

    pub fn beta_t(&self) -> f64 {
        self.beta_t
    }

    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    /// Unbiased sample variance of the window; 0 with fewer than two entries.
    pub fn variance(&self) -> f64 {
        let n = self.window.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.window.iter().sum::<f64>() / n as f64;
        self.window.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64
    }

    pub fn update(&mut self, margin: RewardMargin) {
        if self.window.len() == self.config.window {
            self.window.pop_front();
        }
        self.window.push_back(margin.0);
        self.beta_t = if self.config.dynamic { self.config.beta_for_variance(self.variance()) } else { self.config.fixed_beta };
    }
}

/// Pushes one margin and returns the updated state.
pub fn dynamic_beta_update(mut state: DynamicBetaState, new_margin: RewardMargin) -> DynamicBetaState {
    state.update(new_margin);
    state
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_variant: LossVariant,
    pub beta: BetaConfig,
    pub margin: MarginOptions,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 2,
            batch_size: 8,
            loss_variant: LossVariant::Linear,
            beta: BetaConfig::default(),
            margin: MarginOptions::default(),
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(HlpoError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(HlpoError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.margin.r_max > 0.0) {
            return Err(HlpoError::InvalidConfig("r_max must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(HlpoError::InvalidConfig("learning_rate must be non-negative".into()));
        }
        self.beta.validate()
    }
}

/// One optimizer step as written to the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub mean_margin: f64,
    pub window_variance: f64,
    pub beta_t: f64,
    pub loss: f64,
    pub loss_variant: LossVariant,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub scoring: ModelHandle,
    pub reference: ModelHandle,
    pub trace: Vec<TraceRow>,
}

/// Writes the trace as line-delimited JSON.
pub fn trace_to_jsonl(trace: &[TraceRow]) -> String {
    trace.iter().map(|r| serde_json::to_string(r).expect("trace row serializes") + "\n").collect()
}

/// Trains `initial` on `dataset`. The reference model is a frozen snapshot of
/// `initial`; pairs are reshuffled every epoch with the run seed and the
/// margin window persists across epochs.
pub fn train(dataset: &[PreferencePair], initial: ModelHandle, config: &TrainerConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(HlpoError::EmptyDataset);
    }
    let reference = initial.snapshot_as(Role::Reference);
    let mut scoring = initial;
    let opts = config.margin;

    let ref_logps: Vec<(f64, f64)> = dataset
        .iter()
        .map(|p| Ok((scaled_logprob(&reference, &p.human, &opts)?, scaled_logprob(&reference, &p.machine, &opts)?)))
        .collect::<Result<_>>()?;

    let n_params = scoring.transformer_mut()?.params().len();
    let mut opt = Adam::new(AdamConfig { learning_rate: config.learning_rate, ..Default::default() }, n_params);
    let mut beta_state = DynamicBetaState::new(config.beta);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::new();

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let seqs: Vec<Sequence> = batch
                .iter()
                .flat_map(|&i| [dataset[i].human.clone(), dataset[i].machine.clone()])
                .collect();
            let scales: Vec<f64> = seqs.iter().map(|s| opts.seq_scale(s)).collect();
            let mut row = None;
            let (_, grads) = scoring.value_and_grad(&seqs, |logps| {
                let raw: Vec<f64> = batch
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let (rh, rm) = ref_logps[i];
                        margin_from_logprobs(logps[2 * k] * scales[2 * k], logps[2 * k + 1] * scales[2 * k + 1], rh, rm)
                    })
                    .collect();
                for r in &raw {
                    beta_state.update(RewardMargin(r.clamp(-opts.r_max, opts.r_max)));
                }
                let beta_t = beta_state.beta_t();
                let ml = loss_from_margins(config.loss_variant, &raw, beta_t, opts.r_max);
                let mean_margin = ml.clipped.iter().map(|m| m.0).sum::<f64>() / raw.len() as f64;
                row = Some(TraceRow {
                    step: trace.len(),
                    mean_margin,
                    window_variance: beta_state.variance(),
                    beta_t,
                    loss: ml.loss,
                    loss_variant: config.loss_variant,
                });
                ml.dloss_dmargin
                    .iter()
                    .enumerate()
                    .flat_map(|(k, d)| [d * scales[2 * k], -d * scales[2 * k + 1]])
                    .collect()
            })?;
            opt.step(scoring.transformer_mut()?.params_mut(), &grads);
            trace.push(row.expect("weights closure ran"));
        }
    }
    Ok(TrainOutcome { scoring, reference, trace })
}

/// Mean clipped margin over a set of pairs.
pub fn mean_margin(pairs: &[PreferencePair], scoring: &ModelHandle, reference: &ModelHandle, opts: &MarginOptions) -> Result<f64> {
    if pairs.is_empty() {
        return Err(HlpoError::EmptyBatch);
    }
    let mut total = 0.0;
    for p in pairs {
        total += reward_margin(scoring, reference, p, opts)?.0;
    }
    Ok(total / pairs.len() as f64)
}
