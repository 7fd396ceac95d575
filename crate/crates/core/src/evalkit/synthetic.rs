//! Desk-scale end-to-end experiment.
//!
//! Two count-model generators fitted on stylistically distinct corpora play
//! "human" and "machine". Each machine text continues the first tokens of a
//! human text, giving content-matched pairs. A freshly initialized
//! transformer is scored before and after preference training.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{auroc, roc_points, CiReport, EvalError, Result, RocPoint, ScoredSet};
use crate::curvature::{hlp_cpc_score, DetectorConfig, ScoreSign};
use crate::hlpo::{mean_margin, train, PreferencePair, TrainerConfig};
use crate::humanizer::{humanize, HumanizeConfig};
use crate::lm::{
    sample_continuation, tokenize, Architecture, Backend, CountModel, CountModelConfig, LanguageModel, LineageEntry,
    ModelHandle, Sequence, TransformerLm, BOS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Plain-text corpus, one passage per line.
    pub corpus: PathBuf,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default)]
    pub counts: CountModelConfig,
}

fn one() -> f64 {
    1.0
}

impl GeneratorConfig {
    pub fn new(corpus: impl Into<PathBuf>) -> Self {
        Self { corpus: corpus.into(), temperature: 1.0, counts: CountModelConfig::default() }
    }

    fn fit(&self) -> Result<CountModel> {
        let text = std::fs::read_to_string(&self.corpus).map_err(|e| {
            EvalError::Lm(crate::lm::LmError::Io { path: self.corpus.display().to_string(), message: e.to_string() })
        })?;
        let lines = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| tokenize(l).map(|s| s.truncated(self.counts.context)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if lines.is_empty() {
            return Err(EvalError::InvalidSpec(format!("corpus {} is empty", self.corpus.display())));
        }
        Ok(CountModel::fit(self.counts, &lines))
    }
}

/// Optional humanization pass over held-out machine texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanizeEval {
    /// How many held-out machine texts to humanize.
    pub n_texts: usize,
    pub config: HumanizeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExperimentSpec {
    pub generator_a: GeneratorConfig,
    pub generator_b: GeneratorConfig,
    pub n_train_pairs: usize,
    pub n_heldout: usize,
    /// Content tokens per text.
    pub seq_len: usize,
    /// Human tokens each machine text starts from.
    pub shared_prefix: usize,
    pub architecture: Architecture,
    pub trainer: TrainerConfig,
    pub detector: DetectorConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub humanize: Option<HumanizeEval>,
    /// Permits identical generators (the null experiment).
    #[serde(default)]
    pub allow_identical_generators: bool,
}

impl SyntheticExperimentSpec {
    /// The default acceptance-scale configuration.
    pub fn desk_scale(corpus_a: impl Into<PathBuf>, corpus_b: impl Into<PathBuf>) -> Self {
        Self {
            generator_a: GeneratorConfig::new(corpus_a),
            generator_b: GeneratorConfig::new(corpus_b),
            n_train_pairs: 500,
            n_heldout: 200,
            seq_len: 64,
            shared_prefix: 16,
            architecture: Architecture { context: 80, width: 32, layers: 2, heads: 2, ..Default::default() },
            trainer: TrainerConfig::default(),
            detector: DetectorConfig::default(),
            seeds: super::DEFAULT_SEEDS.to_vec(),
            humanize: Some(HumanizeEval { n_texts: 40, config: HumanizeConfig::default() }),
            allow_identical_generators: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.generator_a == self.generator_b && !self.allow_identical_generators {
            return Err(EvalError::InvalidSpec("generators A and B are identical".into()));
        }
        if self.seeds.len() < 2 {
            return Err(EvalError::TooFewSeeds(self.seeds.len()));
        }
        if self.n_train_pairs == 0 || self.n_heldout == 0 {
            return Err(EvalError::InvalidSpec("train and held-out sizes must be positive".into()));
        }
        if self.shared_prefix >= self.seq_len {
            return Err(EvalError::InvalidSpec("shared prefix must be shorter than the text".into()));
        }
        if self.seq_len + 1 > self.architecture.context {
            return Err(EvalError::InvalidSpec(format!(
                "texts of {} tokens do not fit a context of {}",
                self.seq_len + 1,
                self.architecture.context
            )));
        }
        if let Some(h) = &self.humanize {
            h.config.validate()?;
            if h.n_texts == 0 || h.n_texts > self.n_heldout {
                return Err(EvalError::InvalidSpec("humanize.n_texts must lie in 1..=n_heldout".into()));
            }
        }
        self.trainer.validate()?;
        self.detector.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanizeSeedResult {
    /// Detection AUROC of humanized machine texts against held-out human
    /// texts, indexed by iteration.
    pub auroc_per_iteration: Vec<f64>,
    pub mean_hlp_per_iteration: Vec<f64>,
    /// Every trace kept a non-decreasing selected log-probability.
    pub log_prob_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub seed_lineage: Vec<LineageEntry>,
    pub auroc_before: f64,
    pub auroc_after: f64,
    pub roc_after: Vec<RocPoint>,
    pub heldout_margin_before: f64,
    pub heldout_margin_after: f64,
    pub train_steps: usize,
    pub beta_range: (f64, f64),
    pub humanize: Option<HumanizeSeedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub spec: SyntheticExperimentSpec,
    pub auroc_before: CiReport,
    pub auroc_after: CiReport,
    pub margin_after: CiReport,
    pub per_seed: Vec<SeedArtifacts>,
}

fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stage)
}

struct Data {
    train: Vec<PreferencePair>,
    heldout: Vec<PreferencePair>,
}

fn sample_pairs(spec: &SyntheticExperimentSpec, a: &CountModel, b: &CountModel, seed: u64) -> Result<Data> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(spec.n_train_pairs + spec.n_heldout);
    for _ in 0..spec.n_train_pairs + spec.n_heldout {
        let human = sample_continuation(a, &[BOS], spec.seq_len, spec.generator_a.temperature, &mut rng)?;
        let prefix = &human.tokens()[..=spec.shared_prefix];
        let machine =
            sample_continuation(b, prefix, spec.seq_len - spec.shared_prefix, spec.generator_b.temperature, &mut rng)?;
        pairs.push(PreferencePair::new(human, machine));
    }
    let heldout = pairs.split_off(spec.n_train_pairs);
    Ok(Data { train: pairs, heldout })
}

fn detection_scores(texts: &[&Sequence], model: &ModelHandle, detector: &DetectorConfig) -> Result<Vec<f64>> {
    texts
        .par_iter()
        .map(|x| {
            let c = hlp_cpc_score(x, model, model, detector)?;
            Ok(detector.score_sign.apply(c.d))
        })
        .collect()
}

fn detection_set(data: &[PreferencePair], model: &ModelHandle, detector: &DetectorConfig) -> Result<ScoredSet> {
    let machine: Vec<&Sequence> = data.iter().map(|p| &p.machine).collect();
    let human: Vec<&Sequence> = data.iter().map(|p| &p.human).collect();
    Ok(ScoredSet::new(detection_scores(&machine, model, detector)?, detection_scores(&human, model, detector)?))
}

fn run_seed(spec: &SyntheticExperimentSpec, a: &CountModel, b: &CountModel, perturb: &ModelHandle, seed: u64) -> Result<SeedArtifacts> {
    let lineage = vec![
        LineageEntry { stage: "sample_pairs".into(), seed: stage_seed(seed, 1) },
        LineageEntry { stage: "init_scoring".into(), seed: stage_seed(seed, 2) },
        LineageEntry { stage: "hlpo_train".into(), seed: stage_seed(seed, 3) },
        LineageEntry { stage: "humanize".into(), seed: stage_seed(seed, 4) },
    ];
    let data = sample_pairs(spec, a, b, lineage[0].seed)?;
    let initial = ModelHandle::scoring(Backend::Transformer(TransformerLm::new(spec.architecture, lineage[1].seed)?));

    let before_cfg = DetectorConfig { score_sign: ScoreSign::FastDetect, ..spec.detector.clone() };
    let auroc_before = auroc(&detection_set(&data.heldout, &initial, &before_cfg)?)?;

    let trainer = TrainerConfig { seed: lineage[2].seed, ..spec.trainer.clone() };
    let outcome = train(&data.train, initial, &trainer)?;
    let heldout_margin_before = mean_margin(&data.heldout, &outcome.reference, &outcome.reference, &trainer.margin)?;
    let heldout_margin_after = mean_margin(&data.heldout, &outcome.scoring, &outcome.reference, &trainer.margin)?;

    let after_cfg = DetectorConfig { score_sign: ScoreSign::Hlp, ..spec.detector.clone() };
    let after_set = detection_set(&data.heldout, &outcome.scoring, &after_cfg)?;
    let auroc_after = auroc(&after_set)?;

    let beta_range = outcome
        .trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.beta_t), hi.max(r.beta_t)));

    let humanize_result = match &spec.humanize {
        None => None,
        Some(h) => Some(run_humanize(h, &data.heldout, &outcome.scoring, perturb, &after_cfg, lineage[3].seed)?),
    };

    Ok(SeedArtifacts {
        seed,
        seed_lineage: lineage,
        auroc_before,
        auroc_after,
        roc_after: roc_points(&after_set)?,
        heldout_margin_before,
        heldout_margin_after,
        train_steps: outcome.trace.len(),
        beta_range,
        humanize: humanize_result,
    })
}

fn run_humanize(
    h: &HumanizeEval,
    heldout: &[PreferencePair],
    scoring: &ModelHandle,
    perturb: &ModelHandle,
    detector: &DetectorConfig,
    seed: u64,
) -> Result<HumanizeSeedResult> {
    let human: Vec<&Sequence> = heldout.iter().map(|p| &p.human).collect();
    let human_scores = detection_scores(&human, scoring, detector)?;
    let iters = h.config.iterations;
    let mut per_iter: Vec<Vec<f64>> = vec![Vec::with_capacity(h.n_texts); iters + 1];
    let mut monotone = true;
    for (i, pair) in heldout.iter().take(h.n_texts).enumerate() {
        let cfg = HumanizeConfig { seed: stage_seed(seed, i as u64), ..h.config.clone() };
        let trace = humanize(&pair.machine, scoring, perturb, detector, &cfg)?;
        monotone &= trace.steps.windows(2).all(|w| w[1].log_prob >= w[0].log_prob);
        for (k, step) in trace.steps.iter().enumerate() {
            per_iter[k].push(step.hlp_score);
        }
    }
    let auroc_per_iteration = per_iter
        .iter()
        .map(|m| auroc(&ScoredSet::new(m.clone(), human_scores.clone())))
        .collect::<Result<Vec<_>>>()?;
    let mean_hlp_per_iteration = per_iter.iter().map(|m| m.iter().sum::<f64>() / m.len() as f64).collect();
    Ok(HumanizeSeedResult { auroc_per_iteration, mean_hlp_per_iteration, log_prob_monotone: monotone })
}

pub fn run_synthetic_experiment(spec: &SyntheticExperimentSpec) -> Result<SyntheticReport> {
    spec.validate()?;
    let a = spec.generator_a.fit()?;
    let b = spec.generator_b.fit()?;
    // the attack refills spans from a model of both styles
    let perturb = {
        let mut both = a.clone();
        both.merge(&b);
        ModelHandle::perturbation(Backend::Count(both))
    };
    debug_assert_eq!(perturb.vocab_size(), spec.architecture.vocab);
    let per_seed = spec.seeds.par_iter().map(|&s| run_seed(spec, &a, &b, &perturb, s)).collect::<Result<Vec<_>>>()?;
    let collect = |f: fn(&SeedArtifacts) -> f64| -> Result<CiReport> {
        CiReport::from_values(spec.seeds.clone(), per_seed.iter().map(f).collect())
    };
    Ok(SyntheticReport {
        auroc_before: collect(|s| s.auroc_before)?,
        auroc_after: collect(|s| s.auroc_after)?,
        margin_after: collect(|s| s.heldout_margin_after)?,
        spec: spec.clone(),
        per_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(name: &str) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
    }

    fn small(a: &str, b: &str) -> SyntheticExperimentSpec {
        SyntheticExperimentSpec {
            n_train_pairs: 32,
            n_heldout: 60,
            seq_len: 32,
            shared_prefix: 8,
            architecture: Architecture { context: 40, width: 16, layers: 1, heads: 2, ..Default::default() },
            trainer: TrainerConfig { epochs: 1, ..Default::default() },
            seeds: vec![1, 2, 3],
            humanize: None,
            allow_identical_generators: a == b,
            ..SyntheticExperimentSpec::desk_scale(fixture(a), fixture(b))
        }
    }

    #[test]
    fn identical_generators_need_opt_in() {
        let spec = SyntheticExperimentSpec { allow_identical_generators: false, ..small("corpus_a.txt", "corpus_a.txt") };
        assert!(matches!(spec.validate(), Err(EvalError::InvalidSpec(_))));
    }

    #[test]
    fn null_experiment_has_no_signal() {
        let r = run_synthetic_experiment(&small("corpus_a.txt", "corpus_a.txt")).unwrap();
        let tol = r.auroc_after.half_width_95.max(0.1);
        assert!((r.auroc_after.mean - 0.5).abs() <= tol, "{:?}", r.auroc_after);
    }

    #[test]
    fn rerun_is_identical() {
        let spec = small("corpus_a.txt", "corpus_b.txt");
        let a = run_synthetic_experiment(&spec).unwrap();
        let b = run_synthetic_experiment(&spec).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.per_seed.iter().all(|s| s.heldout_margin_before == 0.0));
    }
}
