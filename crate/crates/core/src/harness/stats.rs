//! Exact per-condition statistics.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformance::ConformanceScore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SummaryError {
    #[error("condition has no completed runs")]
    EmptyCondition,
}

/// Linear-interpolation quartiles and extremes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: Ratio<u64>,
    pub q1: Ratio<u64>,
    pub median: Ratio<u64>,
    pub q3: Ratio<u64>,
    pub max: Ratio<u64>,
}

impl FiveNumber {
    pub fn as_array(&self) -> [Ratio<u64>; 5] {
        [self.min, self.q1, self.median, self.q3, self.max]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub mean: Ratio<u64>,
    /// Sample variance (n − 1 denominator); zero for a single run.
    pub variance: Option<Ratio<u128>>,
    pub sd: f64,
    pub five_number: Option<FiveNumber>,
    pub scores: Vec<ConformanceScore>,
}

impl ConditionSummary {
    /// A summary known only by its moments, as in a published table.
    pub fn from_moments(mean: Ratio<u64>, sd: f64) -> Self {
        ConditionSummary { mean, variance: None, sd, five_number: None, scores: Vec::new() }
    }

    pub fn mean_f64(&self) -> f64 {
        self.mean.to_f64().unwrap_or(f64::NAN)
    }
}

/// Quantile of sorted values at `p` (R type 7).
pub(crate) fn quantile(sorted: &[Ratio<u64>], p: Ratio<u64>) -> Ratio<u64> {
    let h = Ratio::from_integer(sorted.len() as u64 - 1) * p;
    let lo = h.to_integer() as usize;
    let frac = h - Ratio::from_integer(lo as u64);
    match sorted.get(lo + 1) {
        Some(&hi) if !frac.is_zero() => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    }
}

pub fn summarize(scores: &[ConformanceScore]) -> Result<ConditionSummary, SummaryError> {
    if scores.is_empty() {
        return Err(SummaryError::EmptyCondition);
    }
    let n = scores.len() as u64;
    let values: Vec<Ratio<u64>> = scores.iter().map(ConformanceScore::value).collect();
    let mean = values.iter().copied().fold(Ratio::zero(), |a, b| a + b) / Ratio::from_integer(n);

    let wide = |r: Ratio<u64>| Ratio::new(*r.numer() as u128, *r.denom() as u128);
    let m = wide(mean);
    let variance = if n == 1 {
        Ratio::zero()
    } else {
        let ss = values.iter().fold(Ratio::<u128>::zero(), |acc, &v| {
            let v = wide(v);
            let d = if v >= m { v - m } else { m - v };
            acc + d * d
        });
        ss / Ratio::from_integer((n - 1) as u128)
    };
    let sd = variance.to_f64().unwrap_or(f64::NAN).sqrt();

    let mut sorted = values;
    sorted.sort();
    let q = |num: u64| quantile(&sorted, Ratio::new(num, 4));
    let five_number = FiveNumber { min: q(0), q1: q(1), median: q(2), q3: q(3), max: q(4) };

    Ok(ConditionSummary { mean, variance: Some(variance), sd, five_number: Some(five_number), scores: scores.to_vec() })
}
