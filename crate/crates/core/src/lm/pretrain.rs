//! Maximum-likelihood next-token training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, LanguageModel, LossGradSpec, ModelHandle, Result, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { optimizer: AdamConfig { learning_rate: 3e-3, ..Default::default() }, epochs: 1, batch_size: 8, seed: 0 }
    }
}

/// Minimizes mean per-token negative log-likelihood; returns the mean loss
/// of every step.
pub fn fit_next_token(model: &mut ModelHandle, corpus: &[Sequence], config: &PretrainConfig) -> Result<Vec<f64>> {
    let n_params = model.transformer_mut()?.params().len();
    let mut opt = Adam::new(config.optimizer, n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut losses = Vec::new();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let n_tokens: usize = batch.iter().map(|&i| corpus[i].n_positions()).sum();
            if n_tokens == 0 {
                continue;
            }
            let mut spec = LossGradSpec::default();
            let mut total = 0.0;
            for &i in batch {
                total += model.sequence_logprob(&corpus[i])?;
                spec.push(corpus[i].clone(), -1.0 / n_tokens as f64);
            }
            losses.push(-total / n_tokens as f64);
            let grads = model.backward(&spec)?;
            opt.step(model.transformer_mut()?.params_mut(), &grads);
        }
    }
    Ok(losses)
}
