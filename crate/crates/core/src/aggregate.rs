//! Cross-site metric aggregation (the "virtual test set").

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AggregationMethod, EvaluationResult, MetricSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateValue {
    pub value: f64,
    pub site_count: u64,
    pub total_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no results to aggregate")]
    EmptyInput,
    #[error("result {result} lacks metric {metric}")]
    MissingMetric { result: String, metric: String },
    #[error("weighted mean over zero samples")]
    ZeroSamples,
}

impl AggregateError {
    pub fn code(&self) -> &'static str {
        match self {
            AggregateError::EmptyInput => "EMPTY_INPUT",
            AggregateError::MissingMetric { .. } => "MISSING_METRIC",
            AggregateError::ZeroSamples => "ZERO_SAMPLES",
        }
    }
}

/// Aggregates one metric over per-site results of a single
/// (benchmark, model) pair.
pub fn aggregate_results<'a, I>(
    results: I,
    spec: &MetricSpec,
    method: AggregationMethod,
) -> Result<AggregateValue, AggregateError>
where
    I: IntoIterator<Item = &'a EvaluationResult>,
{
    let mut sites = Vec::new();
    for r in results {
        let v = *r
            .metrics
            .get(&spec.name)
            .ok_or_else(|| AggregateError::MissingMetric {
                result: r.id.to_string(),
                metric: spec.name.clone(),
            })?;
        sites.push((v, r.sample_count));
    }
    if sites.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let total_samples: u64 = sites.iter().map(|&(_, n)| n).sum();
    let value = match method {
        AggregationMethod::WeightedMean => {
            if total_samples == 0 {
                return Err(AggregateError::ZeroSamples);
            }
            weighted_mean(&sites, total_samples)
        }
        AggregationMethod::UnweightedMean => {
            exact_sum(sites.iter().map(|&(v, _)| v)) / sites.len() as f64
        }
        AggregationMethod::Min => sites.iter().map(|&(v, _)| v).fold(f64::INFINITY, f64::min),
        AggregationMethod::Max => sites
            .iter()
            .map(|&(v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(AggregateValue {
        value,
        site_count: sites.len() as u64,
        total_samples,
    })
}

/// Σ(vᵢ·nᵢ)/Σnᵢ with a single rounding at the end.
///
/// Each product is formed exactly as `p + e` (fma error term). When it sits
/// within `n·ulp(v)` of an integer, which is the representation error of a
/// count ratio `c/n`, the integer is used. For count-ratio metrics the result
/// is then bit-identical to pooling the counts.
fn weighted_mean(sites: &[(f64, u64)], total: u64) -> f64 {
    let mut terms = Vec::with_capacity(sites.len() * 2);
    for &(v, n) in sites {
        let n = n as f64;
        let p = v * n;
        let e = v.mul_add(n, -p);
        let r = p.round();
        let off = (p - r) + e;
        if off.abs() <= n * ulp(v) {
            terms.push(r);
        } else {
            terms.push(p);
            terms.push(e);
        }
    }
    exact_sum(terms) / total as f64
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 || !x.is_finite() {
        return f64::MIN_POSITIVE;
    }
    x.next_up() - x
}

/// Correctly rounded floating-point sum (Shewchuk partials).
fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the partials from the top, as Python's math.fsum does.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}
