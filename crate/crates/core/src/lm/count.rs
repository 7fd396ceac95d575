//! Order-2 byte count model with hierarchical additive smoothing.
//!
//! `p(v | a, b) = (c(a,b,v) + k * p(v | b)) / (c(a,b) + k)`, backing off to
//! a bigram level smoothed the same way and an add-one unigram. Every
//! probability is strictly positive, so it doubles as a cheap generator,
//! perturbation model and exactly computable oracle.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{LanguageModel, LmError, NextTokenDistribution, Result, Sequence, Token, BOS, DEFAULT_CONTEXT, VOCAB_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountModelConfig {
    /// Pseudo-count mass given to the lower-order distribution.
    pub backoff_strength: f64,
    pub context: usize,
    pub vocab: usize,
}

impl Default for CountModelConfig {
    fn default() -> Self {
        Self { backoff_strength: 2.0, context: DEFAULT_CONTEXT, vocab: VOCAB_SIZE }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Counts {
    next: HashMap<u16, u64>,
    total: u64,
}

impl Counts {
    fn add(&mut self, t: u16) {
        *self.next.entry(t).or_insert(0) += 1;
        self.total += 1;
    }

    fn merge(&mut self, other: &Counts) {
        for (&t, &c) in &other.next {
            *self.next.entry(t).or_insert(0) += c;
        }
        self.total += other.total;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountModel {
    config: CountModelConfig,
    unigram: Vec<u64>,
    unigram_total: u64,
    bigram: HashMap<u16, Counts>,
    trigram: HashMap<(u16, u16), Counts>,
}

/// Flat, order-stable representation used by checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTables {
    pub unigram: Vec<u64>,
    pub bigram: BTreeMap<u16, BTreeMap<u16, u64>>,
    pub trigram: BTreeMap<String, BTreeMap<u16, u64>>,
}

impl CountModel {
    pub fn new(config: CountModelConfig) -> Self {
        Self {
            config,
            unigram: vec![0; config.vocab],
            unigram_total: 0,
            bigram: HashMap::new(),
            trigram: HashMap::new(),
        }
    }

    /// Counts every transition of every sequence (BOS-padded on the left).
    pub fn fit<'a>(config: CountModelConfig, corpus: impl IntoIterator<Item = &'a Sequence>) -> Self {
        let mut model = Self::new(config);
        for seq in corpus {
            model.observe(seq);
        }
        model
    }

    /// Adds every count of `other`, as if its corpus had been observed too.
    pub fn merge(&mut self, other: &CountModel) {
        for (u, o) in self.unigram.iter_mut().zip(&other.unigram) {
            *u += o;
        }
        self.unigram_total += other.unigram_total;
        for (k, c) in &other.bigram {
            self.bigram.entry(*k).or_default().merge(c);
        }
        for (k, c) in &other.trigram {
            self.trigram.entry(*k).or_default().merge(c);
        }
    }

    pub fn observe(&mut self, seq: &Sequence) {
        let toks = seq.tokens();
        for j in 1..toks.len() {
            let next = toks[j].0;
            let b = toks[j - 1].0;
            let a = if j >= 2 { toks[j - 2].0 } else { BOS.0 };
            self.unigram[next as usize] += 1;
            self.unigram_total += 1;
            self.bigram.entry(b).or_default().add(next);
            self.trigram.entry((a, b)).or_default().add(next);
        }
    }

    pub fn config(&self) -> CountModelConfig {
        self.config
    }

    fn probs(&self, a: u16, b: u16) -> Vec<f64> {
        let v = self.config.vocab;
        let k = self.config.backoff_strength;
        let denom1 = (self.unigram_total + v as u64) as f64;
        let mut p: Vec<f64> = self.unigram.iter().map(|&c| (c as f64 + 1.0) / denom1).collect();
        for counts in [self.bigram.get(&b), self.trigram.get(&(a, b))].into_iter().flatten() {
            let denom = counts.total as f64 + k;
            for pv in p.iter_mut() {
                *pv *= k / denom;
            }
            for (&t, &c) in &counts.next {
                p[t as usize] += c as f64 / denom;
            }
        }
        p
    }

    pub fn to_tables(&self) -> CountTables {
        let sorted = |c: &Counts| c.next.iter().map(|(&k, &v)| (k, v)).collect::<BTreeMap<_, _>>();
        CountTables {
            unigram: self.unigram.clone(),
            bigram: self.bigram.iter().map(|(&k, c)| (k, sorted(c))).collect(),
            trigram: self.trigram.iter().map(|(&(a, b), c)| (format!("{a},{b}"), sorted(c))).collect(),
        }
    }

    pub fn from_tables(config: CountModelConfig, tables: CountTables) -> Result<Self> {
        if tables.unigram.len() != config.vocab {
            return Err(LmError::VocabMismatch(tables.unigram.len(), config.vocab));
        }
        let to_counts = |m: BTreeMap<u16, u64>| Counts { total: m.values().sum(), next: m.into_iter().collect() };
        let mut trigram = HashMap::new();
        for (key, m) in tables.trigram {
            let (a, b) = key
                .split_once(',')
                .and_then(|(a, b)| Some((a.parse::<u16>().ok()?, b.parse::<u16>().ok()?)))
                .ok_or_else(|| LmError::Checkpoint(format!("bad trigram key `{key}`")))?;
            trigram.insert((a, b), to_counts(m));
        }
        Ok(Self {
            config,
            unigram_total: tables.unigram.iter().sum(),
            unigram: tables.unigram,
            bigram: tables.bigram.into_iter().map(|(k, m)| (k, to_counts(m))).collect(),
            trigram,
        })
    }
}

impl LanguageModel for CountModel {
    fn vocab_size(&self) -> usize {
        self.config.vocab
    }

    fn context_window(&self) -> usize {
        self.config.context
    }

    fn predict(&self, inputs: &[Token]) -> Result<Vec<NextTokenDistribution>> {
        if inputs.len() > self.config.context {
            return Err(LmError::ContextOverflow { len: inputs.len(), context: self.config.context });
        }
        Ok((0..inputs.len())
            .map(|j| {
                let b = inputs[j].0;
                let a = if j >= 1 { inputs[j - 1].0 } else { BOS.0 };
                NextTokenDistribution::from_normalized(self.probs(a, b).into_iter().map(f64::ln).collect())
            })
            .collect())
    }

    fn next_distribution(&self, prefix: &[Token]) -> Result<NextTokenDistribution> {
        let n = prefix.len();
        if n == 0 {
            return Err(LmError::SequenceTooShort(0));
        }
        if n >= self.config.context {
            return Err(LmError::ContextOverflow { len: n + 1, context: self.config.context });
        }
        let a = if n >= 2 { prefix[n - 2].0 } else { BOS.0 };
        Ok(NextTokenDistribution::from_normalized(self.probs(a, prefix[n - 1].0).into_iter().map(f64::ln).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{logsumexp, tokenize};

    #[test]
    fn probabilities_normalize_and_stay_positive() {
        let corpus = [tokenize("abracadabra").unwrap(), tokenize("abacus").unwrap()];
        let m = CountModel::fit(CountModelConfig::default(), &corpus);
        for dist in m.position_distributions(&tokenize("abzq").unwrap()).unwrap() {
            assert!(logsumexp(dist.log_probs()).abs() < 1e-12);
            assert!(dist.log_probs().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn frequent_trigram_dominates() {
        let corpus: Vec<_> = (0..50).map(|_| tokenize("abc").unwrap()).collect();
        let m = CountModel::fit(CountModelConfig::default(), &corpus);
        let d = m.next_distribution(&tokenize("ab").unwrap().tokens().to_vec()).unwrap();
        assert!(d.log_prob(Token(b'c' as u16)).exp() > 0.9);
    }

    #[test]
    fn next_distribution_matches_full_prediction() {
        let corpus = [tokenize("mississippi").unwrap()];
        let m = CountModel::fit(CountModelConfig::default(), &corpus);
        let x = tokenize("missi").unwrap();
        for k in 1..=x.len() {
            let fast = m.next_distribution(&x.tokens()[..k]).unwrap();
            let full = m.predict(&x.tokens()[..k]).unwrap().pop().unwrap();
            assert_eq!(fast, full);
        }
    }

    #[test]
    fn merge_equals_joint_fit() {
        let a = [tokenize("abcab").unwrap()];
        let b = [tokenize("bcd").unwrap()];
        let mut m = CountModel::fit(CountModelConfig::default(), &a);
        m.merge(&CountModel::fit(CountModelConfig::default(), &b));
        assert_eq!(m, CountModel::fit(CountModelConfig::default(), a.iter().chain(&b)));
    }

    #[test]
    fn table_round_trip() {
        let corpus = [tokenize("hello world").unwrap()];
        let m = CountModel::fit(CountModelConfig::default(), &corpus);
        let back = CountModel::from_tables(m.config(), m.to_tables()).unwrap();
        assert_eq!(m, back);
    }
}
