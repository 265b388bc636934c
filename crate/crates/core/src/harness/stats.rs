//! Summary statistics over runs and the paired rank comparison of modes.

use serde::{Deserialize, Serialize};

use super::runner::RunResult;
use crate::error::{Error, Result};

/// Box-plot statistics of a set of classification rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl RateSummary {
    pub fn from_rates(rates: &[f64]) -> Self {
        let mut sorted: Vec<f64> = rates.iter().copied().filter(|r| r.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (sorted.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            n,
            mean,
            std,
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub rates: RateSummary,
    pub n_failed: usize,
    pub n_flagged: usize,
    /// Mean fraction of each sensor's features used per sample, averaged
    /// over successful runs.
    pub sensor_selection: Vec<f64>,
}

pub fn summarize(results: &[RunResult]) -> SummaryStats {
    let ok: Vec<&RunResult> = results.iter().filter(|r| !r.is_failed()).collect();
    let rates: Vec<f64> = ok.iter().map(|r| r.rate).collect();
    let n_sensors = ok.first().map(|r| r.sensor_map.n_sensors()).unwrap_or(0);
    let mut sensor_selection = vec![0.0; n_sensors];
    for r in &ok {
        let tl = r.timeline(1);
        for (s, acc) in sensor_selection.iter_mut().enumerate() {
            *acc += tl.mean_rate(&r.sensor_map, s, 0..r.selected.len());
        }
    }
    for acc in &mut sensor_selection {
        *acc /= ok.len().max(1) as f64;
    }
    SummaryStats {
        rates: RateSummary::from_rates(&rates),
        n_failed: results.len() - ok.len(),
        n_flagged: ok.iter().filter(|r| r.is_flagged()).count(),
        sensor_selection,
    }
}

/// Wilcoxon signed-rank test with the normal approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedRank {
    /// Pairs with a nonzero difference.
    pub n_nonzero: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
}

pub fn signed_rank_test(diffs: &[f64]) -> SignedRank {
    let mut nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    nz.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = nz.len();
    if n == 0 {
        return SignedRank {
            n_nonzero: 0,
            w_plus: 0.0,
            w_minus: 0.0,
            z: 0.0,
            p_value: 1.0,
        };
    }
    // average ranks over runs of tied magnitudes
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        ranks[i..=j].fill(avg);
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).fold(0.0, |acc, (_, r)| acc + r);
    let nf = n as f64;
    let total = nf * (nf + 1.0) / 2.0;
    let w_minus = total - w_plus;
    let mean = total / 2.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let (z, p_value) = if var > 0.0 {
        let dev = w_plus - mean;
        let corrected = (dev.abs() - 0.5).max(0.0) * dev.signum();
        let z = corrected / var.sqrt();
        (z, libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
    } else {
        (0.0, 1.0)
    };
    SignedRank {
        n_nonzero: n,
        w_plus,
        w_minus,
        z,
        p_value,
    }
}

/// Paired comparison of two experiments over their shared run seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub n_pairs: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// mean(a − b)
    pub mean_diff: f64,
    pub test: SignedRank,
    pub alpha: f64,
    pub significant: bool,
}

pub fn compare_modes(a: &[RunResult], b: &[RunResult], alpha: f64) -> Result<PairedComparison> {
    let rates = |rs: &[RunResult]| -> Vec<(u64, f64)> {
        rs.iter().filter(|r| !r.is_failed()).map(|r| (r.seed, r.rate)).collect()
    };
    compare_paired(&rates(a), &rates(b), alpha)
}

/// Paired comparison of `(seed, rate)` lists; seeds missing from either
/// side are ignored.
pub fn compare_paired(a: &[(u64, f64)], b: &[(u64, f64)], alpha: f64) -> Result<PairedComparison> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .filter_map(|&(seed, ra)| b.iter().find(|(s, _)| *s == seed).map(|&(_, rb)| (ra, rb)))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no successful runs share a seed".into()));
    }
    let n = pairs.len() as f64;
    let mean_a = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_b = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let diffs: Vec<f64> = pairs.iter().map(|(x, y)| x - y).collect();
    let test = signed_rank_test(&diffs);
    Ok(PairedComparison {
        n_pairs: pairs.len(),
        mean_a,
        mean_b,
        mean_diff: diffs.iter().sum::<f64>() / n,
        test,
        alpha,
        significant: test.p_value < alpha,
    })
}
