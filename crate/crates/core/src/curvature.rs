//! Conditional probability curvature scoring and the detection decision.
//!
//! For a passage `x`, the scoring model `p` and the perturbation model `q`,
//! perturbed passages `x~` are drawn token by token from `q(. | x_<j)`,
//! always conditioning on the *original* prefix. Scoring them with
//! `log p(x~ | x) = sum_j log p(x~_j | x_<j)` gives a sum of independent
//! per-position terms, so its mean and variance under `q` are available in
//! closed form:
//!
//! ```text
//! mu      = sum_j E_q[log p(v | x_<j)]
//! sigma^2 = sum_j Var_q[log p(v | x_<j)]
//! d       = (log p(x | x) - mu) / sigma
//! ```
//!
//! A human-aligned scorer gives human text high `d`, so the detector
//! thresholds `-d`; the unaligned (Fast-DetectGPT style) convention
//! thresholds `d` itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lm::{LanguageModel, LmError, ModelHandle, NextTokenDistribution, Sequence, Token};

pub type Result<T> = std::result::Result<T, LmError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Analytic,
    MonteCarlo { samples: usize },
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Analytic => f.write_str("analytic"),
            Estimator::MonteCarlo { samples } => write!(f, "monte_carlo({samples})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureStats {
    /// `log p(x | x)`.
    pub log_p_x: f64,
    pub mu: f64,
    pub sigma: f64,
    pub n_positions: usize,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureScore {
    pub d: f64,
    pub degenerate: bool,
    pub stats: CurvatureStats,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSign {
    /// Threshold `-d` (human-aligned scorer).
    #[default]
    Hlp,
    /// Threshold `d` (unaligned scorer).
    FastDetect,
}

impl ScoreSign {
    pub fn apply(self, d: f64) -> f64 {
        match self {
            ScoreSign::Hlp => -d,
            ScoreSign::FastDetect => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub epsilon: f64,
    pub estimator: Estimator,
    pub sigma_floor: f64,
    pub score_sign: ScoreSign,
    /// Seed for the Monte-Carlo estimator.
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { epsilon: 0.0, estimator: Estimator::Analytic, sigma_floor: 1e-8, score_sign: ScoreSign::Hlp, seed: 0 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Estimator::MonteCarlo { samples: 0 } = self.estimator {
            return Err(LmError::InvalidArgument("monte-carlo estimator needs at least one sample".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Human = 0,
    Machine = 1,
}

impl Label {
    pub fn as_int(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionDecision {
    pub label: Label,
    /// The thresholded quantity (`-d` or `d`).
    pub score: f64,
    pub curvature: CurvatureScore,
    pub config: DetectorConfig,
}

fn check_compatible(scoring: &ModelHandle, perturb: &ModelHandle) -> Result<()> {
    if scoring.vocab_size() != perturb.vocab_size() {
        return Err(LmError::VocabMismatch(scoring.vocab_size(), perturb.vocab_size()));
    }
    Ok(())
}

/// Closed-form statistics from per-position score rows (log-scores of the
/// scoring model, not necessarily normalized) and perturbation
/// distributions.
pub fn curvature_from_rows(score_rows: &[&[f64]], perturb: &[NextTokenDistribution], observed: &[Token]) -> CurvatureStats {
    let mut log_p_x = 0.0;
    let mut mu = 0.0;
    let mut var = 0.0;
    for ((row, q), tok) in score_rows.iter().zip(perturb).zip(observed) {
        log_p_x += row[tok.id()];
        let (m1, _) = q.moments(row);
        // centered second moment keeps the variance exact under row shifts
        let centered: Vec<f64> = row.iter().map(|v| v - m1).collect();
        let (_, c2) = q.moments(&centered);
        mu += m1;
        var += c2.max(0.0);
    }
    CurvatureStats { log_p_x, mu, sigma: var.sqrt(), n_positions: observed.len(), estimator: Estimator::Analytic }
}

/// Exact mean and standard deviation of `log p(x~ | x)` under `q`.
pub fn analytic_curvature(x: &Sequence, scoring: &ModelHandle, perturb: &ModelHandle) -> Result<CurvatureStats> {
    check_compatible(scoring, perturb)?;
    let ps = scoring.position_distributions(x)?;
    let qs = perturb.position_distributions(x)?;
    let rows: Vec<&[f64]> = ps.iter().map(|d| d.log_probs()).collect();
    Ok(curvature_from_rows(&rows, &qs, &x.tokens()[1..]))
}

/// Inverse-CDF sampler for one position.
struct CdfSampler {
    cdf: Vec<f64>,
}

impl CdfSampler {
    fn new(dist: &NextTokenDistribution) -> Self {
        let mut acc = 0.0;
        let cdf = dist
            .log_probs()
            .iter()
            .map(|lp| {
                acc += lp.exp();
                acc
            })
            .collect();
        Self { cdf }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u);
        // guards against rounding at the top of the cdf
        idx.min(self.cdf.len() - 1)
    }
}

/// Scores of `samples` perturbed passages, each token drawn independently
/// from `q(. | x_<j)`.
pub fn sample_perturbed_scores(x: &Sequence, scoring: &ModelHandle, perturb: &ModelHandle, samples: usize, seed: u64) -> Result<Vec<f64>> {
    check_compatible(scoring, perturb)?;
    let ps = scoring.position_distributions(x)?;
    let qs = perturb.position_distributions(x)?;
    let samplers: Vec<CdfSampler> = qs.iter().map(CdfSampler::new).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..samples)
        .map(|_| samplers.iter().zip(&ps).map(|(s, p)| p.log_probs()[s.sample(&mut rng)]).sum())
        .collect())
}

/// Monte-Carlo estimate of the curvature statistics; the sample standard
/// deviation is 0 when `samples == 1`.
pub fn mc_curvature(x: &Sequence, scoring: &ModelHandle, perturb: &ModelHandle, samples: usize, seed: u64) -> Result<CurvatureStats> {
    if samples == 0 {
        return Err(LmError::InvalidArgument("monte-carlo estimator needs at least one sample".into()));
    }
    let scores = sample_perturbed_scores(x, scoring, perturb, samples, seed)?;
    let n = scores.len() as f64;
    let mu = scores.iter().sum::<f64>() / n;
    let var = if scores.len() < 2 { 0.0 } else { scores.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / (n - 1.0) };
    let log_p_x = scoring.sequence_logprob(x)?;
    Ok(CurvatureStats { log_p_x, mu, sigma: var.sqrt(), n_positions: x.n_positions(), estimator: Estimator::MonteCarlo { samples } })
}

/// Standardizes statistics into `d`; below `sigma_floor` the score is
/// flagged degenerate and pinned to 0.
pub fn score_from_stats(stats: CurvatureStats, sigma_floor: f64) -> CurvatureScore {
    if !(stats.sigma >= sigma_floor) {
        return CurvatureScore { d: 0.0, degenerate: true, stats };
    }
    CurvatureScore { d: (stats.log_p_x - stats.mu) / stats.sigma, degenerate: false, stats }
}

pub fn hlp_cpc_score(x: &Sequence, scoring: &ModelHandle, perturb: &ModelHandle, config: &DetectorConfig) -> Result<CurvatureScore> {
    config.validate()?;
    let stats = match config.estimator {
        Estimator::Analytic => analytic_curvature(x, scoring, perturb)?,
        Estimator::MonteCarlo { samples } => mc_curvature(x, scoring, perturb, samples, config.seed)?,
    };
    Ok(score_from_stats(stats, config.sigma_floor))
}

/// Applies the threshold rule to an already computed score.
pub fn decide_from_score(curvature: CurvatureScore, config: &DetectorConfig) -> DetectionDecision {
    let score = config.score_sign.apply(curvature.d);
    let label = if !curvature.degenerate && score > config.epsilon { Label::Machine } else { Label::Human };
    DetectionDecision { label, score, curvature, config: *config }
}

pub fn decide(x: &Sequence, scoring: &ModelHandle, perturb: &ModelHandle, config: &DetectorConfig) -> Result<DetectionDecision> {
    Ok(decide_from_score(hlp_cpc_score(x, scoring, perturb, config)?, config))
}

/// Zero-shot statistics from a single forward pass of the scoring model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    /// Mean per-token log-probability.
    pub likelihood: f64,
    /// Mean `ln(rank)`, rank 1 = most probable, ties take the minimum rank.
    pub log_rank: f64,
    /// Mean per-position entropy in nats.
    pub entropy: f64,
    /// `|likelihood| / |log_rank|`; 0 when both vanish, infinite when only
    /// the log-rank does.
    pub lrr: f64,
}

/// `1 + #{v : p(v) > p(observed)}`.
pub fn token_rank(dist: &NextTokenDistribution, observed: Token) -> usize {
    let target = dist.log_prob(observed);
    1 + dist.log_probs().iter().filter(|&&lp| lp > target).count()
}

pub fn baseline_scores(x: &Sequence, scoring: &ModelHandle) -> Result<BaselineScores> {
    let dists = scoring.position_distributions(x)?;
    let observed = &x.tokens()[1..];
    let n = observed.len() as f64;
    let mut likelihood = 0.0;
    let mut log_rank = 0.0;
    let mut entropy = 0.0;
    for (d, &t) in dists.iter().zip(observed) {
        likelihood += d.log_prob(t);
        log_rank += (token_rank(d, t) as f64).ln();
        entropy += d.entropy();
    }
    likelihood /= n;
    log_rank /= n;
    entropy /= n;
    let lrr = if log_rank == 0.0 {
        if likelihood == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        likelihood.abs() / log_rank.abs()
    };
    Ok(BaselineScores { likelihood, log_rank, entropy, lrr })
}

/// One row of a score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub d: f64,
    pub score: f64,
    pub label: u8,
    pub estimator: String,
    pub n_positions: usize,
}

impl ScoreRecord {
    pub fn from_decision(id: impl Into<String>, decision: &DetectionDecision) -> Self {
        Self {
            id: id.into(),
            d: decision.curvature.d,
            score: decision.score,
            label: decision.label.as_int(),
            estimator: decision.curvature.stats.estimator.to_string(),
            n_positions: decision.curvature.stats.n_positions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{tokenize, Architecture, Backend, TableModel, TransformerLm, BOS, VOCAB_SIZE};

    fn table(m: TableModel) -> ModelHandle {
        ModelHandle::perturbation(Backend::Table(m))
    }

    fn transformer(seed: u64) -> ModelHandle {
        let arch = Architecture { context: 48, width: 16, ..Default::default() };
        ModelHandle::scoring(Backend::Transformer(TransformerLm::new(arch, seed).unwrap()))
    }

    #[test]
    fn point_mass_perturbation_is_degenerate() {
        let x = tokenize("abc").unwrap();
        let scoring = transformer(1);
        let perturb = table(TableModel::point_mass_on(&x, VOCAB_SIZE, 48));
        let stats = analytic_curvature(&x, &scoring, &perturb).unwrap();
        assert!((stats.mu - stats.log_p_x).abs() < 1e-12);
        assert_eq!(stats.sigma, 0.0);
        let cfg = DetectorConfig::default();
        let score = hlp_cpc_score(&x, &scoring, &perturb, &cfg).unwrap();
        assert!(score.degenerate);
        assert_eq!(score.d, 0.0);
        assert_eq!(decide(&x, &scoring, &perturb, &DetectorConfig { epsilon: -1e9, ..cfg }).unwrap().label, Label::Human);
    }

    #[test]
    fn two_outcome_hand_computation() {
        let a = Token(0);
        let score_rows = vec![0.8f64.ln(), 0.2f64.ln()];
        let q = NextTokenDistribution::from_logits(&[0.0, 0.0]);
        let stats = curvature_from_rows(&[&score_rows], &[q], &[a]);
        let mu = (0.8f64.ln() + 0.2f64.ln()) / 2.0;
        let sigma = (0.8f64.ln() - 0.2f64.ln()).abs() / 2.0;
        assert!((stats.mu - mu).abs() < 1e-15);
        assert!((stats.mu - (-0.916_290_731_874_155)).abs() < 1e-12);
        assert!((stats.sigma - sigma).abs() < 1e-15);
        assert!((stats.sigma - 0.693_147_180_559_945_3).abs() < 1e-12);
    }

    #[test]
    fn independent_positions_add() {
        let r1 = vec![0.8f64.ln(), 0.2f64.ln()];
        let r2 = vec![0.6f64.ln(), 0.4f64.ln()];
        let q1 = NextTokenDistribution::from_logits(&[0.3f64.ln(), 0.7f64.ln()]);
        let q2 = NextTokenDistribution::from_logits(&[0.5f64.ln(), 0.5f64.ln()]);
        let s1 = curvature_from_rows(&[&r1], &[q1.clone()], &[Token(0)]);
        let s2 = curvature_from_rows(&[&r2], &[q2.clone()], &[Token(1)]);
        let both = curvature_from_rows(&[&r1, &r2], &[q1, q2], &[Token(0), Token(1)]);
        assert!((both.mu - (s1.mu + s2.mu)).abs() < 1e-15);
        assert!((both.sigma.powi(2) - (s1.sigma.powi(2) + s2.sigma.powi(2))).abs() < 1e-15);
    }

    #[test]
    fn standardized_score_and_sign_rules() {
        let stats = CurvatureStats { log_p_x: -1.0, mu: -3.0, sigma: 1.0, n_positions: 3, estimator: Estimator::Analytic };
        let s = score_from_stats(stats, 1e-8);
        assert_eq!(s.d, 2.0);
        let centered = score_from_stats(CurvatureStats { log_p_x: -3.0, ..stats }, 1e-8);
        assert_eq!(centered.d, 0.0);

        let hlp = DetectorConfig::default();
        let neg = score_from_stats(CurvatureStats { log_p_x: -5.0, ..stats }, 1e-8);
        assert_eq!(neg.d, -2.0);
        let dec = decide_from_score(neg, &hlp);
        assert_eq!((dec.score, dec.label), (2.0, Label::Machine));
        assert_eq!(decide_from_score(s, &hlp).label, Label::Human);
        let inf = DetectorConfig { epsilon: f64::INFINITY, ..hlp };
        assert_eq!(decide_from_score(neg, &inf).label, Label::Human);
        assert_eq!(decide_from_score(s, &inf).label, Label::Human);
    }

    #[test]
    fn mc_single_sample_is_degenerate_and_seeded() {
        let x = tokenize("some text here").unwrap();
        let scoring = transformer(3);
        let perturb = transformer(4).freeze();
        let one = mc_curvature(&x, &scoring, &perturb, 1, 5).unwrap();
        assert_eq!(one.sigma, 0.0);
        assert!(score_from_stats(one, 1e-8).degenerate);
        let a = mc_curvature(&x, &scoring, &perturb, 200, 5).unwrap();
        let b = mc_curvature(&x, &scoring, &perturb, 200, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn row_shift_leaves_d_unchanged() {
        let rows: Vec<Vec<f64>> = vec![vec![-0.3, -1.2, -2.5], vec![-1.0, -0.7, -3.0], vec![-2.2, -0.1, -0.9]];
        let qs: Vec<_> = [[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.3, 0.3, 0.4]]
            .iter()
            .map(|p| NextTokenDistribution::from_logits(&p.map(f64::ln)))
            .collect();
        let obs = [Token(0), Token(1), Token(2)];
        let base = curvature_from_rows(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(), &qs, &obs);
        let shifted: Vec<Vec<f64>> = rows.iter().zip([5.0, -3.25, 0.5]).map(|(r, c)| r.iter().map(|v| v + c).collect()).collect();
        let moved = curvature_from_rows(&shifted.iter().map(|r| r.as_slice()).collect::<Vec<_>>(), &qs, &obs);
        let d0 = score_from_stats(base, 1e-8).d;
        let d1 = score_from_stats(moved, 1e-8).d;
        assert!((d0 - d1).abs() < 1e-12, "{d0} vs {d1}");
        assert!(((moved.mu - base.mu) - 2.25).abs() < 1e-12);
        assert!(((moved.log_p_x - base.log_p_x) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn baselines_uniform_and_point_mass() {
        let x = tokenize("abcd").unwrap();
        let uniform = ModelHandle::scoring(Backend::Table(TableModel::uniform(VOCAB_SIZE, 32)));
        let b = baseline_scores(&x, &uniform).unwrap();
        let ln_v = (VOCAB_SIZE as f64).ln();
        assert!((b.likelihood + ln_v).abs() < 1e-12);
        assert!((b.entropy - ln_v).abs() < 1e-9);
        assert_eq!(b.log_rank, 0.0);

        let pm = ModelHandle::scoring(Backend::Table(TableModel::point_mass_on(&x, VOCAB_SIZE, 32)));
        let b = baseline_scores(&x, &pm).unwrap();
        assert_eq!((b.likelihood, b.log_rank, b.entropy, b.lrr), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn baselines_two_token_toy() {
        // position 1: p(a)=0.6 observed a (rank 1); position 2: p(b)=0.3 observed b, one token above (rank 2)
        let a = Token(b'a' as u16);
        let b = Token(b'b' as u16);
        let c = Token(b'c' as u16);
        let m = TableModel::uniform(VOCAB_SIZE, 16)
            .with_bigram(BOS, &[(a, 0.6), (b, 0.4)])
            .with_bigram(a, &[(c, 0.7), (b, 0.3)]);
        let x = tokenize("ab").unwrap();
        let s = baseline_scores(&x, &ModelHandle::scoring(Backend::Table(m))).unwrap();
        let h = |ps: &[f64]| -ps.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((s.likelihood - (0.6f64.ln() + 0.3f64.ln()) / 2.0).abs() < 1e-12);
        assert!((s.log_rank - 2f64.ln() / 2.0).abs() < 1e-12);
        assert!((s.entropy - (h(&[0.6, 0.4]) + h(&[0.7, 0.3])) / 2.0).abs() < 1e-12);
        assert!((s.lrr - s.likelihood.abs() / s.log_rank).abs() < 1e-12);
    }

    #[test]
    fn rank_uses_minimum_on_ties() {
        let d = NextTokenDistribution::from_logits(&[0.0, 1.0, 1.0, -1.0]);
        assert_eq!(token_rank(&d, Token(1)), 1);
        assert_eq!(token_rank(&d, Token(2)), 1);
        assert_eq!(token_rank(&d, Token(0)), 3);
        assert_eq!(token_rank(&d, Token(3)), 4);
    }
}
