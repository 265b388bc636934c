//! Univariate statistics behind feature pre-selection and per-sample
//! feature selection: Fisher discriminant score, normal tail membership
//! probability and the squared one-dimensional Mahalanobis distance.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::dataset::{ClassId, LabeledMatrix};
use crate::error::{Error, Result};

/// Spread below which a class (or a class pair) is treated as constant.
pub const VARIANCE_EPS: f64 = 1e-12;

/// Pre-selection keeps features whose best pairwise FDS is strictly above this.
pub const FDS_THRESHOLD: f64 = 1.0;

/// Mean and population standard deviation of one class on one feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub class: ClassId,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl ClassStats {
    pub fn from_values(class: ClassId, values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            class,
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }

    fn z(&self, x: f64) -> Result<f64> {
        if self.std <= VARIANCE_EPS {
            return Err(Error::DegenerateVariance { eps: VARIANCE_EPS });
        }
        Ok((x - self.mean) / self.std)
    }
}

/// Fisher discriminant score of two classes on a single feature.
///
/// `SB = (μa − μ̄)² + (μb − μ̄)²` with μ̄ the mean of the pooled values and
/// `SW = var(a) + var(b)` using population variances.
pub fn pairwise_fds(values_a: &[f64], values_b: &[f64]) -> Result<f64> {
    if values_a.len() < 2 || values_b.len() < 2 {
        return Err(Error::InvalidInput(
            "pairwise FDS needs at least two values per class".into(),
        ));
    }
    let (sb, sw) = fds_terms(values_a, values_b);
    if sw < VARIANCE_EPS {
        return Err(Error::DegenerateVariance { eps: VARIANCE_EPS });
    }
    Ok(sb / sw)
}

fn fds_terms(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let grand = (a.iter().sum::<f64>() + b.iter().sum::<f64>()) / (a.len() + b.len()) as f64;
    let sb = (ma - grand).powi(2) + (mb - grand).powi(2);
    let within = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (sb, within(a, ma) + within(b, mb))
}

/// FDS with the degenerate case resolved: +∞ for distinct constant
/// classes, 0 for identical ones.
fn pairwise_fds_or_limit(a: &[f64], b: &[f64]) -> Result<f64> {
    match pairwise_fds(a, b) {
        Err(Error::DegenerateVariance { .. }) => {
            let (sb, _) = fds_terms(a, b);
            Ok(if sb > VARIANCE_EPS { f64::INFINITY } else { 0.0 })
        }
        other => other,
    }
}

/// Pairwise FDS for every feature and every unordered pair of classes.
#[derive(Debug, Clone, PartialEq)]
pub struct FdsTable {
    pairs: Vec<(ClassId, ClassId)>,
    /// `values[feature][pair]`
    values: Vec<Vec<f64>>,
}

impl FdsTable {
    /// Classes with fewer than two rows are left out of every pair.
    pub fn compute(data: &LabeledMatrix, columns: &[usize]) -> Result<Self> {
        let classes: Vec<ClassId> = data
            .class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c >= 2)
            .map(|(i, _)| ClassId(i))
            .collect();
        let mut pairs = Vec::new();
        for (i, &a) in classes.iter().enumerate() {
            for &b in &classes[i + 1..] {
                pairs.push((a, b));
            }
        }
        let mut values = Vec::with_capacity(columns.len());
        for &col in columns {
            let per_class: Vec<Vec<f64>> = (0..data.n_classes())
                .map(|c| data.class_column(col, ClassId(c)))
                .collect();
            let row = pairs
                .iter()
                .map(|(a, b)| pairwise_fds_or_limit(&per_class[a.0], &per_class[b.0]))
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        Ok(Self { pairs, values })
    }

    pub fn get(&self, feature: usize, a: ClassId, b: ClassId) -> Option<f64> {
        let key = if a <= b { (a, b) } else { (b, a) };
        let p = self.pairs.iter().position(|&p| p == key)?;
        Some(self.values[feature][p])
    }

    pub fn max_for_feature(&self, feature: usize) -> f64 {
        self.values[feature]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }
}

/// Mask of features whose best pairwise FDS exceeds [`FDS_THRESHOLD`].
pub fn preselect_features(data: &LabeledMatrix) -> Result<Vec<bool>> {
    let cols: Vec<usize> = (0..data.n_cols()).collect();
    preselect_columns(data, &cols).map(|sel| {
        let mut mask = vec![false; data.n_cols()];
        for c in sel {
            mask[c] = true;
        }
        mask
    })
}

/// Subset of `columns` that pass pre-selection, in input order.
pub fn preselect_columns(data: &LabeledMatrix, columns: &[usize]) -> Result<Vec<usize>> {
    let present = data.class_counts().iter().filter(|&&c| c >= 2).count();
    if present < 2 {
        return Err(Error::InvalidInput(
            "pre-selection needs at least two classes with two samples each".into(),
        ));
    }
    let table = FdsTable::compute(data, columns)?;
    Ok(columns
        .iter()
        .enumerate()
        .filter(|(i, _)| table.max_for_feature(*i) > FDS_THRESHOLD)
        .map(|(_, &c)| c)
        .collect())
}

/// Two-sided normal tail probability `P(|Z| ≥ |x − μ| / σ)`.
pub fn membership_probability(x: f64, stats: &ClassStats) -> Result<f64> {
    let z = stats.z(x)?;
    Ok(erfc(z.abs() / SQRT_2))
}

/// Squared one-dimensional Mahalanobis distance `((x − μ) / σ)²`.
pub fn mahal_1d(x: f64, stats: &ClassStats) -> Result<f64> {
    stats.z(x).map(|z| z * z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionThresholds {
    #[serde(rename = "t1")]
    pub min_probability: f64,
    #[serde(rename = "t2")]
    pub min_probability_ratio: f64,
    #[serde(rename = "t3")]
    pub max_distance_ratio: f64,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        Self {
            min_probability: 0.005,
            min_probability_ratio: 5.0,
            max_distance_ratio: 0.1,
        }
    }
}

impl SelectionThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_probability > 0.0
            && self.min_probability < 1.0
            && self.min_probability_ratio > 1.0
            && self.max_distance_ratio > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid selection thresholds {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureVerdict {
    pub feature: usize,
    pub selected: bool,
    pub winning_class: Option<ClassId>,
}

/// Per-class membership probability and squared distance for one feature value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore {
    pub class: ClassId,
    pub probability: f64,
    pub distance: f64,
}

/// The two best classes by probability and by distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriteriaValues {
    pub prob_class: ClassId,
    pub prob_first: f64,
    pub prob_second: f64,
    pub dist_class: ClassId,
    pub dist_first: f64,
    pub dist_second: f64,
}

impl CriteriaValues {
    /// Requires at least two scores. Ties resolve to the lower class id.
    pub fn from_scores(scores: &[ClassScore]) -> Option<Self> {
        if scores.len() < 2 {
            return None;
        }
        let mut by_prob: Vec<&ClassScore> = scores.iter().collect();
        by_prob.sort_by(|a, b| {
            b.probability
                .total_cmp(&a.probability)
                .then(a.class.cmp(&b.class))
        });
        let mut by_dist: Vec<&ClassScore> = scores.iter().collect();
        by_dist.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.class.cmp(&b.class)));
        Some(Self {
            prob_class: by_prob[0].class,
            prob_first: by_prob[0].probability,
            prob_second: by_prob[1].probability,
            dist_class: by_dist[0].class,
            dist_first: by_dist[0].distance,
            dist_second: by_dist[1].distance,
        })
    }

    /// Winning class when all three criteria pass and agree on it.
    pub fn decide(&self, t: &SelectionThresholds) -> Option<ClassId> {
        let prob_ok = self.prob_first > t.min_probability;
        // prob_second may underflow to 0; the ratio is then +inf
        let ratio_ok = self.prob_first > t.min_probability_ratio * self.prob_second;
        let dist_ok = self.dist_second > 0.0
            && self.dist_first * self.dist_first / self.dist_second < t.max_distance_ratio;
        (prob_ok && ratio_ok && dist_ok && self.prob_class == self.dist_class)
            .then_some(self.prob_class)
    }
}

/// Per-sample verdict for one feature value against the class statistics.
///
/// Classes whose spread is degenerate are skipped; fewer than two remaining
/// classes means the feature is not selected.
pub fn feature_verdict(
    feature: usize,
    x: f64,
    per_class: &[ClassStats],
    thresholds: &SelectionThresholds,
) -> FeatureVerdict {
    let scores: Vec<ClassScore> = per_class
        .iter()
        .filter_map(|s| {
            Some(ClassScore {
                class: s.class,
                probability: membership_probability(x, s).ok()?,
                distance: mahal_1d(x, s).ok()?,
            })
        })
        .collect();
    let winner = CriteriaValues::from_scores(&scores).and_then(|c| c.decide(thresholds));
    FeatureVerdict {
        feature,
        selected: winner.is_some(),
        winning_class: winner,
    }
}
