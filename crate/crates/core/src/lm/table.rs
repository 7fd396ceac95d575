//! Hand-specified conditional tables, mostly for exact oracles in tests.

use std::collections::HashMap;

use super::{LanguageModel, LmError, NextTokenDistribution, Result, Sequence, Token};

/// Looks up the next-token distribution by exact prefix first, then by the
/// last token, then falls back to a default row.
#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    vocab: usize,
    context: usize,
    default: Vec<f64>,
    by_last: HashMap<Token, Vec<f64>>,
    by_prefix: HashMap<Vec<Token>, Vec<f64>>,
}

fn log_row(vocab: usize, probs: &[(Token, f64)]) -> Vec<f64> {
    let mut row = vec![f64::NEG_INFINITY; vocab];
    for &(t, p) in probs {
        row[t.id()] = p.ln();
    }
    row
}

impl TableModel {
    pub fn uniform(vocab: usize, context: usize) -> Self {
        Self {
            vocab,
            context,
            default: vec![-(vocab as f64).ln(); vocab],
            by_last: HashMap::new(),
            by_prefix: HashMap::new(),
        }
    }

    /// Bigram row `p(. | last)`; unspecified tokens get probability 0.
    pub fn with_bigram(mut self, last: Token, probs: &[(Token, f64)]) -> Self {
        self.by_last.insert(last, log_row(self.vocab, probs));
        self
    }

    /// Arbitrary (normalizable) log-weights for one exact prefix.
    pub fn with_prefix_logits(mut self, prefix: Vec<Token>, logits: &[f64]) -> Self {
        assert_eq!(logits.len(), self.vocab);
        self.by_prefix.insert(prefix, NextTokenDistribution::from_logits(logits).log_probs().to_vec());
        self
    }

    /// Deterministic model that always continues `seq` exactly.
    pub fn point_mass_on(seq: &Sequence, vocab: usize, context: usize) -> Self {
        let mut m = Self::uniform(vocab, context);
        let toks = seq.tokens();
        for j in 1..toks.len() {
            m.by_prefix.insert(toks[..j].to_vec(), log_row(vocab, &[(toks[j], 1.0)]));
        }
        m
    }

    fn row(&self, prefix: &[Token]) -> &[f64] {
        if let Some(r) = self.by_prefix.get(prefix) {
            return r;
        }
        prefix.last().and_then(|t| self.by_last.get(t)).unwrap_or(&self.default)
    }
}

impl LanguageModel for TableModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn context_window(&self) -> usize {
        self.context
    }

    fn predict(&self, inputs: &[Token]) -> Result<Vec<NextTokenDistribution>> {
        if inputs.len() > self.context {
            return Err(LmError::ContextOverflow { len: inputs.len(), context: self.context });
        }
        Ok((1..=inputs.len())
            .map(|n| NextTokenDistribution::from_normalized(self.row(&inputs[..n]).to_vec()))
            .collect())
    }
}
