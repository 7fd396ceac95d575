use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Scores of the positive (machine) and negative (human) class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoredSet {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Self {
        Self { positives, negatives }
    }

    /// Same scores with the class labels exchanged.
    pub fn reversed(&self) -> Self {
        Self { positives: self.negatives.clone(), negatives: self.positives.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.positives.is_empty() || self.negatives.is_empty() {
            return Err(EvalError::EmptyClass);
        }
        if let Some(&bad) = self.positives.iter().chain(&self.negatives).find(|v| !v.is_finite()) {
            return Err(EvalError::NonFiniteScore(bad));
        }
        Ok(())
    }
}

/// `(2 * wins + ties, 2 * n_pos * n_neg)` from mid-ranks: AUROC is the
/// exact ratio of the two integers.
pub fn auroc_counts(s: &ScoredSet) -> Result<(u64, u64)> {
    s.validate()?;
    let mut all: Vec<(f64, bool)> = s
        .positives
        .iter()
        .map(|&v| (v, true))
        .chain(s.negatives.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum over positives of twice their 1-based mid-rank
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the mid-rank (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u64;
        let pos_in_group = all[i..=j].iter().filter(|e| e.1).count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j + 1;
    }
    let np = s.positives.len() as u64;
    let nn = s.negatives.len() as u64;
    Ok((twice_rank_sum - np * (np + 1), 2 * np * nn))
}

/// `P(pos > neg) + 0.5 * P(pos == neg)`.
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    let (num, den) = auroc_counts(s)?;
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>=` this value are called positive (`+inf` for the origin).
    pub threshold: f64,
}

/// Sweeps the threshold from high to low, one point per distinct score.
pub fn roc_points(s: &ScoredSet) -> Result<Vec<RocPoint>> {
    s.validate()?;
    let mut all: Vec<(f64, bool)> = s
        .positives
        .iter()
        .map(|&v| (v, true))
        .chain(s.negatives.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let np = s.positives.len() as f64;
    let nn = s.negatives.len() as f64;
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let threshold = all[i].0;
        while i < all.len() && all[i].0 == threshold {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / nn, tpr: tp as f64 / np, threshold });
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0).sum()
}

pub fn roc_to_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
    }
    out
}

/// Threshold `eps` maximizing `TPR - FPR` for the rule `score > eps`.
/// Candidates are midpoints between consecutive distinct scores plus one
/// value below the minimum; ties keep the largest threshold.
pub fn fit_threshold_youden(s: &ScoredSet) -> Result<f64> {
    s.validate()?;
    let mut values: Vec<f64> = s.positives.iter().chain(&s.negatives).copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
    let mut candidates = vec![values[0] - 1.0];
    candidates.extend(values.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    candidates.push(values[values.len() - 1]);
    let rate = |xs: &[f64], eps: f64| xs.iter().filter(|&&v| v > eps).count() as f64 / xs.len() as f64;
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for &eps in candidates.iter().rev() {
        let j = rate(&s.positives, eps) - rate(&s.negatives, eps);
        if j > best.0 {
            best = (j, eps);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Pair-counting oracle.
    fn brute(s: &ScoredSet) -> f64 {
        let mut twice = 0u64;
        for p in &s.positives {
            for n in &s.negatives {
                twice += if p > n { 2 } else if p == n { 1 } else { 0 };
            }
        }
        twice as f64 / (2 * s.positives.len() * s.negatives.len()) as f64
    }

    #[test]
    fn hand_examples() {
        assert_eq!(auroc(&ScoredSet::new(vec![2.0, 3.0], vec![0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(auroc(&ScoredSet::new(vec![1.0], vec![1.0])).unwrap(), 0.5);
        let s = ScoredSet::new(vec![3.0, 1.0], vec![2.0, 0.0]);
        assert_eq!(brute(&s), 0.75);
        assert_eq!(auroc(&s).unwrap(), 0.75);
        assert_eq!(trapezoid_area(&roc_points(&s).unwrap()), 0.75);
    }

    #[test]
    fn empty_class_rejected() {
        assert_eq!(auroc(&ScoredSet::new(vec![], vec![1.0])), Err(EvalError::EmptyClass));
        assert_eq!(roc_points(&ScoredSet::new(vec![1.0], vec![])), Err(EvalError::EmptyClass));
    }

    #[test]
    fn perfect_separation_passes_through_top_left() {
        let pts = roc_points(&ScoredSet::new(vec![5.0, 6.0], vec![1.0, 2.0, 3.0])).unwrap();
        assert!(pts.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(pts.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(pts.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn youden_threshold_separates() {
        let s = ScoredSet::new(vec![0.9, 0.8, 0.7], vec![0.1, 0.2, 0.75]);
        let eps = fit_threshold_youden(&s).unwrap();
        assert!(eps > 0.2 && eps < 0.7, "{eps}");
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0i32..20).prop_map(|v| v as f64 / 4.0), 1..60)
    }

    proptest! {
        #[test]
        fn rank_auroc_matches_pair_counting(pos in scores(), neg in scores()) {
            let s = ScoredSet::new(pos, neg);
            let a = auroc(&s).unwrap();
            prop_assert_eq!(a, brute(&s));
            prop_assert!((trapezoid_area(&roc_points(&s).unwrap()) - a).abs() <= 1e-12);
        }

        #[test]
        fn reversal_complements(pos in scores(), neg in scores()) {
            let s = ScoredSet::new(pos, neg);
            let (num, den) = auroc_counts(&s).unwrap();
            let (rnum, rden) = auroc_counts(&s.reversed()).unwrap();
            prop_assert_eq!(den, rden);
            prop_assert_eq!(rnum, den - num);
        }

        #[test]
        fn increasing_transform_invariance(pos in scores(), neg in scores()) {
            let s = ScoredSet::new(pos, neg);
            let f = |v: &f64| v * v * v + 2.0 * v - 7.0;
            let t = ScoredSet::new(s.positives.iter().map(f).collect(), s.negatives.iter().map(f).collect());
            prop_assert_eq!(auroc_counts(&s).unwrap(), auroc_counts(&t).unwrap());
        }

        #[test]
        fn roc_is_monotone(pos in scores(), neg in scores()) {
            let pts = roc_points(&ScoredSet::new(pos, neg)).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }
    }
}
