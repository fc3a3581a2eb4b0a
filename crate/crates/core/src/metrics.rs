// SPDX-License-Identifier: Apache-2.0

//! Run scoring: pass@k, token cost, savings and latency reduction, and
//! aggregation of run records into report rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{PromptingMode, RunRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid pass@k input: n={n}, c={c}, k={k} (need 0 <= c <= n and 1 <= k <= n)")]
    InvalidPassAtK { n: u32, c: u32, k: u32 },
    #[error("{what} baseline must be positive, got {value}")]
    NonPositiveBaseline { what: &'static str, value: f64 },
    #[error("cannot aggregate an empty record list")]
    NoRecords,
}

/// Probability that at least one of `k` samples drawn without replacement
/// from `n` attempts (of which `c` are correct) passes.
///
/// Evaluated as `1 - prod_{i=n-c+1}^{n} (1 - k/i)`, which equals
/// `1 - C(n-c, k) / C(n, k)` without forming any binomial coefficient.
pub fn pass_at_k(n: u32, c: u32, k: u32) -> Result<f64, MetricsError> {
    if c > n || k == 0 || k > n {
        return Err(MetricsError::InvalidPassAtK { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let kf = f64::from(k);
    let miss: f64 = ((n - c + 1)..=n).map(|i| 1.0 - kf / f64::from(i)).product();
    Ok(1.0 - miss)
}

/// Prices per 1000 tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRates {
    pub input_rate: f64,
    pub output_rate: f64,
}

impl CostRates {
    pub fn new(input_rate: f64, output_rate: f64) -> Self {
        assert!(
            input_rate >= 0.0 && output_rate >= 0.0,
            "cost rates must be non-negative"
        );
        Self {
            input_rate,
            output_rate,
        }
    }
}

impl Default for CostRates {
    /// Reproduces the published GPT-3.5 cost table rows.
    fn default() -> Self {
        Self::new(0.001, 0.002)
    }
}

/// Unrounded cost of a run.
pub fn cost_estimate(input_tokens: u64, output_tokens: u64, rates: CostRates) -> f64 {
    input_tokens as f64 / 1000.0 * rates.input_rate
        + output_tokens as f64 / 1000.0 * rates.output_rate
}

/// Display form used in reports: 5 decimals.
pub fn format_cost(cost: f64) -> String {
    format!("{cost:.5}")
}

/// Percent saved by the hierarchical run relative to the flat one.
/// Callers pass unrounded costs.
pub fn savings_percent(nh_cost: f64, h_cost: f64) -> Result<f64, MetricsError> {
    relative_reduction("flat cost", nh_cost, h_cost)
}

pub fn latency_reduction(nh_time: f64, h_time: f64) -> Result<f64, MetricsError> {
    relative_reduction("flat time", nh_time, h_time)
}

fn relative_reduction(what: &'static str, base: f64, value: f64) -> Result<f64, MetricsError> {
    if base.is_nan() || base <= 0.0 {
        return Err(MetricsError::NonPositiveBaseline { what, value: base });
    }
    Ok(100.0 * (base - value) / base)
}

/// One row of the pass@k table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReportRow {
    pub benchmark_id: String,
    pub model_id: String,
    pub mode: PromptingMode,
    pub runs: u32,
    pub correct: u32,
    /// k -> pass@k, only for k <= runs.
    pub pass_at: BTreeMap<u32, f64>,
    pub avg_time: f64,
    pub avg_input_tokens: f64,
    pub avg_output_tokens: f64,
    /// `None` when no rates were supplied.
    pub avg_cost: Option<f64>,
    /// Some run fell back to local token approximation.
    pub approximate_tokens: bool,
    /// ks that could not be evaluated for this row (k > runs).
    pub skipped_ks: Vec<u32>,
}

/// Groups records by (benchmark, model, mode) and scores each group.
/// Rows come out sorted by that key.
pub fn aggregate(
    records: &[RunRecord],
    ks: &[u32],
    rates: Option<CostRates>,
) -> Result<Vec<BenchReportRow>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut groups: BTreeMap<(String, String, PromptingMode), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.benchmark_id.clone(), r.model_id.clone(), r.mode))
            .or_default()
            .push(r);
    }

    let mut rows = Vec::with_capacity(groups.len());
    for ((benchmark_id, model_id, mode), group) in groups {
        let n = group.len() as u32;
        let c = group.iter().filter(|r| r.success).count() as u32;
        let mut pass_at = BTreeMap::new();
        let mut skipped_ks = Vec::new();
        for &k in ks {
            match pass_at_k(n, c, k) {
                Ok(p) => {
                    pass_at.insert(k, p);
                }
                Err(_) => {
                    log::warn!("{benchmark_id}/{model_id}/{mode}: k={k} exceeds n={n}, skipped");
                    skipped_ks.push(k);
                }
            }
        }
        let nf = f64::from(n);
        let avg_time = group.iter().map(|r| r.wall_time).sum::<f64>() / nf;
        let avg_input_tokens = group.iter().map(|r| r.input_tokens as f64).sum::<f64>() / nf;
        let avg_output_tokens = group.iter().map(|r| r.output_tokens as f64).sum::<f64>() / nf;
        let avg_cost = rates.map(|rates| {
            group
                .iter()
                .map(|r| cost_estimate(r.input_tokens, r.output_tokens, rates))
                .sum::<f64>()
                / nf
        });
        rows.push(BenchReportRow {
            benchmark_id,
            model_id,
            mode,
            runs: n,
            correct: c,
            pass_at,
            avg_time,
            avg_input_tokens,
            avg_output_tokens,
            avg_cost,
            approximate_tokens: group.iter().any(|r| r.approximate_tokens),
            skipped_ks,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Counts k-subsets of n attempts that contain at least one of the
    /// first c (correct) attempts.
    fn enumerate(n: u32, c: u32, k: u32) -> f64 {
        let mut hit = 0u64;
        let mut total = 0u64;
        let correct_mask: u32 = (1u32 << c) - 1;
        for subset in 0u32..(1u32 << n) {
            if subset.count_ones() != k {
                continue;
            }
            total += 1;
            if subset & correct_mask != 0 {
                hit += 1;
            }
        }
        hit as f64 / total as f64
    }

    #[test]
    fn published_cells() {
        let p = |c, k| pass_at_k(10, c, k).unwrap();
        assert!((p(4, 1) - 0.4).abs() < 1e-12);
        assert!((p(4, 5) - 0.976).abs() < 0.001);
        assert!((p(3, 5) - 0.9167).abs() < 0.001);
        assert!((p(5, 5) - 0.996).abs() < 0.001);
        for k in 1..=10 {
            assert_eq!(p(0, k), 0.0);
            assert_eq!(p(10, k), 1.0);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(pass_at_k(3, 4, 1).is_err());
        assert!(pass_at_k(3, 1, 4).is_err());
        assert!(pass_at_k(3, 1, 0).is_err());
    }

    #[test]
    fn matches_enumeration_small() {
        for n in 1..=12 {
            for c in 0..=n {
                for k in 1..=n {
                    let got = pass_at_k(n, c, k).unwrap();
                    let want = enumerate(n, c, k);
                    assert!((got - want).abs() < 1e-12, "n={n} c={c} k={k}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn large_n_stays_finite() {
        let p = pass_at_k(10_000, 37, 100).unwrap();
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }

    #[test]
    fn cost_table_rows() {
        let r = CostRates::default();
        let h = cost_estimate(92, 2376, r);
        let nh = cost_estimate(91, 3283, r);
        assert!((h - 0.004844).abs() < 1e-12);
        assert_eq!(format_cost(h), "0.00484");
        assert!((savings_percent(nh, h).unwrap() - 27.23).abs() < 0.05);
        assert!((cost_estimate(191, 4268, r) - 0.008727).abs() < 1e-12);
        assert_eq!(format_cost(cost_estimate(191, 4268, r)), "0.00873");
        assert_eq!(cost_estimate(0, 0, r), 0.0);
    }

    #[test]
    fn savings_uses_unrounded_costs() {
        // Rounded display values would give 27.33.
        let rounded = savings_percent(0.00666, 0.00484).unwrap();
        assert!((rounded - 27.33).abs() < 0.01);
        let exact = savings_percent(0.006657, 0.004844).unwrap();
        assert!((exact - 27.23).abs() < 0.01);
    }

    #[test]
    fn reductions() {
        assert!((latency_reduction(621.54, 342.63).unwrap() - 44.87).abs() < 0.05);
        assert!((latency_reduction(450.66, 42.44).unwrap() - 90.58).abs() < 0.05);
        assert_eq!(latency_reduction(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(savings_percent(1.0, 1.0).unwrap(), 0.0);
        assert!(latency_reduction(0.0, 1.0).is_err());
        assert!(savings_percent(0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_c_and_k(n in 1u32..60, c in 0u32..60, k in 1u32..60) {
            prop_assume!(c < n && k < n);
            let base = pass_at_k(n, c, k).unwrap();
            prop_assert!(pass_at_k(n, c + 1, k).unwrap() >= base - 1e-12);
            prop_assert!(pass_at_k(n, c, k + 1).unwrap() >= base - 1e-12);
        }

        #[test]
        fn cost_is_linear(a in 0u64..1_000_000, b in 0u64..1_000_000, x in 0u64..1_000_000) {
            let r = CostRates::default();
            let lhs = cost_estimate(a + b, x, r);
            let rhs = cost_estimate(a, x, r) + cost_estimate(b, 0, r);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn reduction_in_range(base in 0.001f64..1e6, frac in 0.0f64..=1.0) {
            let h = base * frac;
            let s = savings_percent(base, h).unwrap();
            prop_assert!((-1e-9..=100.0 + 1e-9).contains(&s));
        }
    }
}
