//! Comparisons between a generated corpus and a reference corpus.
//!
//! Distribution metrics return Jensen–Shannon divergences in bits, so every value lies in
//! `[0, 1]` and identical inputs give exactly 0.

pub mod grid;
pub mod report;
pub mod semantic;
pub mod stats;

use std::path::Path;

use thiserror::Error;

use crate::io::{read_jsonl, DayRecord, IoError};
use crate::model::{IntentionSequence, Trajectory, TrajectoryPoint};

pub use grid::{export_heatmap_grid, metric_locfreq, metric_odsim, GridSpec, OdMatrix};
pub use report::{evaluate, EvalConfig, MetricReport};
pub use semantic::{
    aggregate_week, day_slices, metric_itderr, metric_itdtype, uniqueness_overlap, Grouping, ItdErr, Slices,
    Uniqueness, SLICES_PER_DAY, SLICE_MINUTES,
};
pub use stats::{metric_dayloc, metric_grank, metric_itdnum, metric_radius, radius_of_gyration};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("histogram supports differ: {0}")]
    Support(String),
    #[error("{0}")]
    Empty(String),
    #[error("{} point(s) outside the grid, e.g. {}", .0.len(), .0.iter().take(5).cloned().collect::<Vec<_>>().join("; "))]
    OutOfGrid(Vec<String>),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("{path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// What a histogram's probabilities are indexed by.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Equal-width bins on `[0, width * count)` plus one overflow bin.
    Bins {
        width: f64,
        count: usize,
    },
    /// Integers `0..=max` plus one overflow bin.
    Counts {
        max: usize,
    },
    Labels(Vec<String>),
    /// Positional support of a given length, e.g. rank or grid cell.
    Positions(usize),
}

impl Support {
    pub fn len(&self) -> usize {
        match self {
            Support::Bins { count, .. } => count + 1,
            Support::Counts { max } => max + 2,
            Support::Labels(l) => l.len(),
            Support::Positions(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Probability vector over a fixed support. All-zero when built from no observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub support: Support,
    pub probabilities: Vec<f64>,
}

impl Histogram {
    pub fn from_counts(support: Support, counts: &[f64]) -> Self {
        assert_eq!(support.len(), counts.len(), "counts must match the support");
        let total: f64 = counts.iter().sum();
        let probabilities =
            if total > 0.0 { counts.iter().map(|c| c / total).collect() } else { vec![0.0; counts.len()] };
        Self { support, probabilities }
    }

    /// Bins values of a continuous statistic; values at or past the last edge go to overflow.
    pub fn binned(values: impl IntoIterator<Item = f64>, width: f64, count: usize) -> Self {
        let mut counts = vec![0.0; count + 1];
        for v in values {
            let k = if v.is_finite() && v >= 0.0 { ((v / width).floor() as usize).min(count) } else { count };
            counts[k] += 1.0;
        }
        Self::from_counts(Support::Bins { width, count }, &counts)
    }

    pub fn integer_counts(values: impl IntoIterator<Item = usize>, max: usize) -> Self {
        let mut counts = vec![0.0; max + 2];
        for v in values {
            counts[v.min(max + 1)] += 1.0;
        }
        Self::from_counts(Support::Counts { max }, &counts)
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.iter().all(|&p| p == 0.0)
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.log2()).sum::<f64>()
}

/// `h((p+q)/2) - (h(p) + h(q))/2` in bits for two probability vectors of equal length.
pub fn jsd_vectors(p: &[f64], q: &[f64]) -> Result<f64, MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::Support(format!("lengths {} and {}", p.len(), q.len())));
    }
    for (name, v) in [("p", p), ("q", q)] {
        if v.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(MetricError::Support(format!("{name} has a negative or non-finite entry")));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(MetricError::Support(format!("{name} sums to {s}, not 1")));
        }
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    let d = entropy_bits(&m) - (entropy_bits(p) + entropy_bits(q)) / 2.0;
    Ok(d.clamp(0.0, 1.0))
}

/// Divergence between two histograms. Both empty gives 0; exactly one empty is an error.
pub fn jsd(p: &Histogram, q: &Histogram) -> Result<f64, MetricError> {
    if p.support != q.support {
        return Err(MetricError::Support(format!("{:?} vs {:?}", p.support, q.support)));
    }
    match (p.is_empty(), q.is_empty()) {
        (true, true) => Ok(0.0),
        (true, false) | (false, true) => {
            Err(MetricError::Empty("one side has no observations for this statistic".into()))
        }
        _ => jsd_vectors(&p.probabilities, &q.probabilities),
    }
}

/// A loaded corpus: every day as an intention sequence, and the days whose events all carry
/// coordinates as trajectories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub sequences: Vec<IntentionSequence>,
    pub trajectories: Vec<Trajectory>,
}

impl Corpus {
    pub fn from_records(records: &[DayRecord], path: &str) -> Result<Self, MetricError> {
        let mut c = Corpus::default();
        for (i, r) in records.iter().enumerate() {
            let err = |message: String| MetricError::Record { path: path.into(), line: i + 1, message };
            c.sequences.push(r.to_sequence().map_err(|e| err(e.to_string()))?);
            let located = r.events.iter().all(|e| e.lat.is_some() && e.lon.is_some());
            if located && !r.events.is_empty() {
                let mut points = Vec::with_capacity(r.events.len());
                for (k, e) in r.events.iter().enumerate() {
                    let location =
                        e.location().map_err(|x| err(format!("event {k}: {x}")))?.expect("checked");
                    points.push(TrajectoryPoint {
                        window: e.window().map_err(|x| err(format!("event {k}: {x}")))?,
                        // Without a POI id the grid cell stands in for location identity.
                        poi_id: e.poi_id.clone().unwrap_or_default(),
                        location,
                        intention: c.sequences.last().expect("pushed").events[k].intention,
                    });
                }
                c.trajectories.push(Trajectory {
                    persona_id: r.persona_id.clone(),
                    day_index: r.day,
                    points,
                });
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, MetricError> {
        let records: Vec<DayRecord> = read_jsonl(path)?;
        Self::from_records(&records, &path.display().to_string())
    }

    pub fn from_trajectories(trajectories: Vec<Trajectory>) -> Self {
        Self { sequences: trajectories.iter().map(|t| t.intentions()).collect(), trajectories }
    }
}
