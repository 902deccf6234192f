use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WorkflowError;

/// Distribution of the number of intentions per day; the cap for a generated day is drawn
/// from it before generation starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentionCountDistribution {
    pub histogram: BTreeMap<u32, f64>,
}

impl IntentionCountDistribution {
    pub fn new(histogram: BTreeMap<u32, f64>) -> Result<Self, WorkflowError> {
        let d = Self { histogram };
        d.validate()?;
        Ok(d)
    }

    pub fn point_mass(count: u32) -> Self {
        Self { histogram: BTreeMap::from([(count, 1.0)]) }
    }

    /// Normalised histogram of observed per-day counts. Zero counts are dropped.
    pub fn from_counts(counts: impl IntoIterator<Item = usize>) -> Result<Self, WorkflowError> {
        let mut tally: BTreeMap<u32, u64> = BTreeMap::new();
        for c in counts.into_iter().filter(|&c| c > 0) {
            *tally.entry(c as u32).or_default() += 1;
        }
        let total: u64 = tally.values().sum();
        if total == 0 {
            return Err(WorkflowError::Config("no non-empty days to build a count histogram".into()));
        }
        Self::new(tally.into_iter().map(|(k, n)| (k, n as f64 / total as f64)).collect())
    }

    pub fn validate(&self) -> Result<(), WorkflowError> {
        if self.histogram.is_empty() {
            return Err(WorkflowError::Config("intention-count distribution is empty".into()));
        }
        if self.histogram.contains_key(&0) {
            return Err(WorkflowError::Config("intention counts must be at least 1".into()));
        }
        if self.histogram.values().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(WorkflowError::Config("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = self.histogram.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WorkflowError::Config(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.histogram.iter().map(|(&k, &p)| k as f64 * p).sum()
    }
}

pub fn sample_intention_cap<R: Rng + ?Sized>(
    dist: &IntentionCountDistribution,
    rng: &mut R,
) -> Result<u32, WorkflowError> {
    dist.validate()?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (&count, &p) in &dist.histogram {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = count;
        if u < acc {
            return Ok(count);
        }
    }
    Ok(last)
}
