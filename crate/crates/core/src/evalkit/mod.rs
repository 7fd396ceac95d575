//! Threshold-free evaluation, confidence intervals and the desk-scale
//! synthetic experiment.

mod auroc;
mod ci;
mod synthetic;

pub use auroc::{auroc, auroc_counts, fit_threshold_youden, roc_points, roc_to_csv, trapezoid_area, RocPoint, ScoredSet};
pub use ci::{seed_sweep, CiReport, DEFAULT_SEEDS};
pub use synthetic::{
    run_synthetic_experiment, GeneratorConfig, HumanizeEval, HumanizeSeedResult, SeedArtifacts, SyntheticExperimentSpec, SyntheticReport,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("both classes need at least one score")]
    EmptyClass,
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("at least two seeds are required (got {0})")]
    TooFewSeeds(usize),
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Lm(#[from] crate::lm::LmError),
    #[error(transparent)]
    Hlpo(#[from] crate::hlpo::HlpoError),
    #[error(transparent)]
    Humanize(#[from] crate::humanizer::HumanizeError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
