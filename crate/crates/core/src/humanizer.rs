//! Iterative perturb-select-replace humanization.
//!
//! Each iteration masks short spans of the current text, refills them from
//! the perturbation model, and keeps whichever candidate the scoring model
//! assigns the highest log-probability. With the unmodified text in the
//! pool the selected log-probability can never decrease.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{hlp_cpc_score, DetectorConfig};
use crate::lm::{restrict_to_bytes, sample_token, LanguageModel, LmError, ModelHandle, Sequence};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HumanizeError {
    #[error("text has {0} content tokens; at least 4 are required")]
    TextTooShort(usize),
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("invalid humanizer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Lm(#[from] LmError),
}

pub type Result<T> = std::result::Result<T, HumanizeError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanizeConfig {
    pub candidates_per_iter: usize,
    pub iterations: usize,
    /// Fraction of content tokens masked per candidate.
    pub rho: f64,
    pub span_min: usize,
    pub span_max: usize,
    pub temperature: f64,
    pub include_identity: bool,
    /// Upper bound on the fraction of tokens that may differ from the
    /// original over the whole run; candidates beyond it are discarded.
    pub max_drift: Option<f64>,
    pub seed: u64,
}

impl Default for HumanizeConfig {
    fn default() -> Self {
        Self {
            candidates_per_iter: 100,
            iterations: 4,
            rho: 0.15,
            span_min: 1,
            span_max: 3,
            temperature: 1.0,
            include_identity: true,
            max_drift: None,
            seed: 0,
        }
    }
}

impl HumanizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates_per_iter == 0 {
            return Err(HumanizeError::InvalidConfig("candidates_per_iter must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(HumanizeError::InvalidConfig(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if self.span_min == 0 || self.span_min > self.span_max {
            return Err(HumanizeError::InvalidConfig("span range must satisfy 1 <= min <= max".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(HumanizeError::InvalidConfig("temperature must be positive".into()));
        }
        if let Some(d) = self.max_drift {
            if !(0.0..=1.0).contains(&d) {
                return Err(HumanizeError::InvalidConfig(format!("max_drift must lie in [0, 1], got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCandidate {
    #[serde(with = "seq_text")]
    pub text: Sequence,
    /// Summed scoring-model log-probability; NaN until scored.
    pub score: f64,
    /// Masked `(start, len)` spans in token positions, sorted and disjoint.
    pub spans: Vec<(usize, usize)>,
}

mod seq_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::lm::{detokenize, tokenize, Sequence};

    pub fn serialize<S: Serializer>(s: &Sequence, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&detokenize(s))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Sequence, D::Error> {
        let text = String::deserialize(de)?;
        tokenize(&text).map_err(serde::de::Error::custom)
    }
}

/// Content positions of `x` (after BOS, before any trailing EOS).
fn content_range(x: &Sequence) -> std::ops::Range<usize> {
    let toks = x.tokens();
    let end = if toks.last().is_some_and(|t| !t.is_byte()) && toks.len() > 1 { toks.len() - 1 } else { toks.len() };
    1..end
}

fn sample_spans<R: Rng>(range: std::ops::Range<usize>, config: &HumanizeConfig, rng: &mut R) -> Vec<(usize, usize)> {
    let n = range.len();
    let target = (config.rho * n as f64).round() as usize;
    let mut masked = vec![false; n];
    let mut spans = Vec::new();
    let mut count = 0;
    while count < target {
        let want = rng.random_range(config.span_min..=config.span_max).min(target - count);
        let mut len = want;
        let starts = loop {
            let s: Vec<usize> = (0..=n - len).filter(|&s| masked[s..s + len].iter().all(|m| !m)).collect();
            if !s.is_empty() || len == 1 {
                break s;
            }
            len -= 1;
        };
        let s = starts[rng.random_range(0..starts.len())];
        masked[s..s + len].iter_mut().for_each(|m| *m = true);
        spans.push((range.start + s, len));
        count += len;
    }
    spans.sort_unstable();
    spans
}

/// Candidate perturbations of `x`; the identity is appended last when
/// configured. Candidates are unscored.
pub fn generate_candidates<R: Rng>(
    x: &Sequence,
    perturb: &ModelHandle,
    config: &HumanizeConfig,
    rng: &mut R,
) -> Result<Vec<PerturbationCandidate>> {
    config.validate()?;
    let range = content_range(x);
    if range.len() < 4 {
        return Err(HumanizeError::TextTooShort(range.len()));
    }
    let mut out = Vec::with_capacity(config.candidates_per_iter + 1);
    for _ in 0..config.candidates_per_iter {
        let spans = sample_spans(range.clone(), config, rng);
        let mut toks = x.tokens().to_vec();
        for &(start, len) in &spans {
            for pos in start..start + len {
                let dist = restrict_to_bytes(&perturb.next_distribution(&toks[..pos])?);
                toks[pos] = sample_token(&dist, config.temperature, rng);
            }
        }
        out.push(PerturbationCandidate { text: Sequence::from_tokens(toks)?, score: f64::NAN, spans });
    }
    if config.include_identity {
        out.push(PerturbationCandidate { text: x.clone(), score: f64::NAN, spans: vec![] });
    }
    Ok(out)
}

/// Scores every candidate and returns the index of the best one. Ties go to
/// the lowest index.
pub fn select_best(candidates: &mut [PerturbationCandidate], scoring: &ModelHandle) -> Result<usize> {
    let scores = candidates.par_iter().map(|c| scoring.sequence_logprob(&c.text)).collect::<std::result::Result<Vec<_>, _>>()?;
    for (c, s) in candidates.iter_mut().zip(scores) {
        c.score = s;
    }
    argmax_lowest(candidates.iter().map(|c| c.score)).ok_or(HumanizeError::NoCandidates)
}

pub(crate) fn argmax_lowest(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl CandidateSummary {
    fn of(candidates: &[PerturbationCandidate]) -> Self {
        let scores: Vec<f64> = candidates.iter().map(|c| c.score).collect();
        Self {
            count: scores.len(),
            min: scores.iter().copied().fold(f64::INFINITY, f64::min),
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    pub iteration: usize,
    #[serde(with = "seq_text")]
    pub text: Sequence,
    pub log_prob: f64,
    /// Detection score `-d` of the selected text.
    pub hlp_score: f64,
    /// `None` at iteration 0.
    pub candidates: Option<CandidateSummary>,
}

/// Index 0 holds the original text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
}

impl IterationTrace {
    pub fn final_text(&self) -> &Sequence {
        &self.steps.last().expect("trace always holds the original").text
    }
}

fn changed_fraction(a: &Sequence, b: &Sequence) -> f64 {
    let range = content_range(a);
    let n = range.len().max(1);
    range.filter(|&i| a.tokens()[i] != b.tokens()[i]).count() as f64 / n as f64
}

pub fn humanize(
    x_m: &Sequence,
    scoring: &ModelHandle,
    perturb: &ModelHandle,
    detector: &DetectorConfig,
    config: &HumanizeConfig,
) -> Result<IterationTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // -d always uses the scorer as its own sampling model
    let hlp = |x: &Sequence| -> Result<f64> { Ok(-hlp_cpc_score(x, scoring, scoring, detector)?.d) };
    let mut current = x_m.clone();
    let mut steps = vec![IterationStep {
        iteration: 0,
        text: current.clone(),
        log_prob: scoring.sequence_logprob(&current)?,
        hlp_score: hlp(&current)?,
        candidates: None,
    }];
    for iteration in 1..=config.iterations {
        let mut candidates = generate_candidates(&current, perturb, config, &mut rng)?;
        if let Some(limit) = config.max_drift {
            candidates.retain(|c| changed_fraction(x_m, &c.text) <= limit);
            if candidates.is_empty() {
                candidates.push(PerturbationCandidate { text: current.clone(), score: f64::NAN, spans: vec![] });
            }
        }
        let best = select_best(&mut candidates, scoring)?;
        let summary = CandidateSummary::of(&candidates);
        let chosen = candidates.swap_remove(best);
        current = chosen.text;
        steps.push(IterationStep {
            iteration,
            text: current.clone(),
            log_prob: chosen.score,
            hlp_score: hlp(&current)?,
            candidates: Some(summary),
        });
    }
    Ok(IterationTrace { steps })
}

/// Line-by-line side-by-side rendering of consecutive iterations.
pub fn render_diff(trace: &IterationTrace) -> String {
    use crate::lm::detokenize;
    let mut out = String::new();
    for w in trace.steps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        out.push_str(&format!(
            "== iteration {} -> {} (log p {:.3} -> {:.3}, -d {:.3} -> {:.3})\n",
            a.iteration, b.iteration, a.log_prob, b.log_prob, a.hlp_score, b.hlp_score
        ));
        out.push_str(&format!("- {}\n+ {}\n", detokenize(&a.text), detokenize(&b.text)));
        let marks: String = a
            .text
            .tokens()
            .iter()
            .zip(b.text.tokens())
            .skip(1)
            .map(|(p, q)| if p == q { ' ' } else { '^' })
            .collect();
        out.push_str(&format!("  {}\n", marks.trim_end()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{tokenize, Backend, CountModel, CountModelConfig, TableModel, VOCAB_SIZE};

    fn perturber() -> ModelHandle {
        let corpus: Vec<Sequence> =
            ["the cat sat on the mat", "a dog ran in the park", "the sun is warm today"].iter().map(|s| tokenize(s).unwrap()).collect();
        ModelHandle::perturbation(Backend::Count(CountModel::fit(CountModelConfig::default(), &corpus)))
    }

    fn scorer() -> ModelHandle {
        let corpus: Vec<Sequence> = ["the cat and the hat", "on the mat"].iter().map(|s| tokenize(s).unwrap()).collect();
        ModelHandle::scoring(Backend::Count(CountModel::fit(CountModelConfig::default(), &corpus)))
    }

    #[test]
    fn short_text_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = generate_candidates(&tokenize("abc").unwrap(), &perturber(), &HumanizeConfig::default(), &mut rng);
        assert_eq!(r.unwrap_err(), HumanizeError::TextTooShort(3));
    }

    #[test]
    fn tiny_rho_leaves_text_unchanged() {
        let x = tokenize("the quick brown fox").unwrap();
        let cfg = HumanizeConfig { rho: 1e-6, candidates_per_iter: 5, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cands = generate_candidates(&x, &perturber(), &cfg, &mut rng).unwrap();
        assert!(cands.iter().all(|c| c.text == x && c.spans.is_empty()));
    }

    #[test]
    fn mask_locality_and_determinism() {
        let x = tokenize("the weather was mild and the streets were quiet").unwrap();
        let cfg = HumanizeConfig { candidates_per_iter: 20, ..Default::default() };
        let a = generate_candidates(&x, &perturber(), &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_candidates(&x, &perturber(), &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let strip = |v: &[PerturbationCandidate]| v.iter().map(|c| (c.text.clone(), c.spans.clone())).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        for c in &a {
            let mut masked = vec![false; x.len()];
            for &(s, l) in &c.spans {
                assert!((1..=3).contains(&l));
                masked[s..s + l].iter_mut().for_each(|m| *m = true);
            }
            for (i, m) in masked.iter().enumerate() {
                if !m {
                    assert_eq!(c.text.tokens()[i], x.tokens()[i]);
                }
            }
        }
        assert_eq!(a.last().unwrap().text, x);
    }

    #[test]
    fn masked_fraction_tracks_rho() {
        let x = tokenize("a fairly ordinary sentence of moderate length, used for masking statistics").unwrap();
        let n = x.len() - 1;
        let cfg = HumanizeConfig { candidates_per_iter: 1000, include_identity: false, ..Default::default() };
        let cands = generate_candidates(&x, &perturber(), &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mean = cands.iter().map(|c| c.spans.iter().map(|s| s.1).sum::<usize>() as f64 / n as f64).sum::<f64>()
            / cands.len() as f64;
        assert!((mean - cfg.rho).abs() <= 0.03, "{mean}");
    }

    #[test]
    fn select_by_hand_scores() {
        assert_eq!(argmax_lowest([-10.0, -8.0, -9.0]), Some(1));
        assert_eq!(argmax_lowest([-3.0, -3.0]), Some(0));
        assert_eq!(argmax_lowest(std::iter::empty()), None);
        let x = tokenize("solo").unwrap();
        let mut one = vec![PerturbationCandidate { text: x.clone(), score: f64::NAN, spans: vec![] }];
        let table = ModelHandle::scoring(Backend::Table(TableModel::uniform(VOCAB_SIZE, 32)));
        assert_eq!(select_best(&mut one, &table).unwrap(), 0);
    }

    #[test]
    fn zero_iterations_echoes_input() {
        let x = tokenize("the cat sat on a mat").unwrap();
        let cfg = HumanizeConfig { iterations: 0, ..Default::default() };
        let t = humanize(&x, &scorer(), &perturber(), &DetectorConfig::default(), &cfg).unwrap();
        assert_eq!(t.steps.len(), 1);
        assert_eq!(t.final_text(), &x);
    }

    #[test]
    fn selected_log_prob_never_decreases() {
        let x = tokenize("an old dog sat by the warm fire").unwrap();
        let cfg = HumanizeConfig { candidates_per_iter: 10, seed: 5, ..Default::default() };
        let t = humanize(&x, &scorer(), &perturber(), &DetectorConfig::default(), &cfg).unwrap();
        assert_eq!(t.steps.len(), 5);
        for w in t.steps.windows(2) {
            assert!(w[1].log_prob >= w[0].log_prob);
        }
        let again = humanize(&x, &scorer(), &perturber(), &DetectorConfig::default(), &cfg).unwrap();
        assert_eq!(t, again);
        assert!(render_diff(&t).contains("iteration 0 -> 1"));
    }

    #[test]
    fn drift_guard_bounds_changes() {
        let x = tokenize("an old dog sat by the warm fire all night").unwrap();
        let cfg = HumanizeConfig { candidates_per_iter: 10, max_drift: Some(0.2), seed: 2, ..Default::default() };
        let t = humanize(&x, &scorer(), &perturber(), &DetectorConfig::default(), &cfg).unwrap();
        assert!(changed_fraction(&x, t.final_text()) <= 0.2);
    }
}
