use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{EvalError, Result};

pub const DEFAULT_SEEDS: [u64; 5] = [42, 199, 410, 2231, 2533];

/// Mean and Student-t 95% half-width over per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiReport {
    pub mean: f64,
    pub half_width_95: f64,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
}

impl CiReport {
    pub fn from_values(seeds: Vec<u64>, per_seed: Vec<f64>) -> Result<Self> {
        if per_seed.len() < 2 || seeds.len() != per_seed.len() {
            return Err(EvalError::TooFewSeeds(per_seed.len().min(seeds.len())));
        }
        // summing in sorted order makes the report independent of seed order
        let mut sorted = per_seed.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid degrees of freedom").inverse_cdf(0.975);
        let half_width_95 = if var == 0.0 { 0.0 } else { t * var.sqrt() / n.sqrt() };
        Ok(Self { mean, half_width_95, seeds, per_seed })
    }
}

/// Runs `run` once per seed and summarizes.
pub fn seed_sweep<F>(seeds: &[u64], mut run: F) -> Result<CiReport>
where
    F: FnMut(u64) -> Result<f64>,
{
    if seeds.len() < 2 {
        return Err(EvalError::TooFewSeeds(seeds.len()));
    }
    let per_seed = seeds.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()?;
    CiReport::from_values(seeds.to_vec(), per_seed)
}
