use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{jsd, Histogram, MetricError, Support};
use crate::model::{IntentionSequence, IntentionType};

pub const SLICE_MINUTES: u16 = 30;
pub const SLICES_PER_DAY: usize = 48;

/// Intention covering the midpoint of each half-hour slice, `None` where nothing does.
pub type Slices = [Option<IntentionType>; SLICES_PER_DAY];

pub fn day_slices(seq: &IntentionSequence) -> Slices {
    let mut out = [None; SLICES_PER_DAY];
    for (s, slot) in out.iter_mut().enumerate() {
        let mid = s as u16 * SLICE_MINUTES + SLICE_MINUTES / 2;
        *slot =
            seq.events.iter().find(|e| e.window.start() <= mid && mid < e.window.end()).map(|e| e.intention);
    }
    out
}

pub fn matching_slices(a: &Slices, b: &Slices) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

/// Per-slice majority over days given oldest first. A tie goes to the label of the most recent
/// day among the tied labels.
pub fn aggregate_week(days: &[Slices]) -> Result<Slices, MetricError> {
    if days.is_empty() {
        return Err(MetricError::Empty("cannot aggregate zero days".into()));
    }
    let mut out = [None; SLICES_PER_DAY];
    for (s, slot) in out.iter_mut().enumerate() {
        let mut votes: HashMap<Option<IntentionType>, usize> = HashMap::new();
        for d in days {
            *votes.entry(d[s]).or_default() += 1;
        }
        let best = *votes.values().max().expect("non-empty");
        *slot = days.iter().rev().map(|d| d[s]).find(|l| votes[l] == best).expect("a day holds the winner");
    }
    Ok(out)
}

/// How personas are matched to reference groups.
#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    /// Same persona id on both sides.
    PersonaId,
    /// Persona id to profile key, per side; personas share a group when their keys are equal.
    Attributes { generated: HashMap<String, String>, reference: HashMap<String, String> },
}

impl Grouping {
    pub fn label(&self) -> &'static str {
        match self {
            Grouping::PersonaId => "persona_id",
            Grouping::Attributes { .. } => "profile_attributes",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItdErr {
    /// Mean mismatch rate over matched personas; absent when none matched.
    pub value: Option<f64>,
    pub matched: usize,
    pub skipped: usize,
}

fn representative_days(
    seqs: &[IntentionSequence],
    key: impl Fn(&str) -> Option<String>,
) -> Result<BTreeMap<String, Slices>, MetricError> {
    let mut groups: BTreeMap<String, Vec<&IntentionSequence>> = BTreeMap::new();
    for s in seqs {
        if let Some(k) = key(&s.persona_id) {
            groups.entry(k).or_default().push(s);
        }
    }
    groups
        .into_iter()
        .map(|(k, mut days)| {
            days.sort_by(|a, b| a.day_index.cmp(&b.day_index).then(a.persona_id.cmp(&b.persona_id)));
            let slices: Vec<Slices> = days.iter().map(|d| day_slices(d)).collect();
            Ok((k, aggregate_week(&slices)?))
        })
        .collect()
}

/// Mean over generated personas of the share of slices where the persona's representative day
/// differs from its reference group's representative day.
pub fn metric_itderr(
    gen: &[IntentionSequence],
    reference: &[IntentionSequence],
    grouping: &Grouping,
) -> Result<ItdErr, MetricError> {
    let reference_reps = match grouping {
        Grouping::PersonaId => representative_days(reference, |id| Some(id.to_string()))?,
        Grouping::Attributes { reference: m, .. } => representative_days(reference, |id| m.get(id).cloned())?,
    };
    let gen_reps = representative_days(gen, |id| Some(id.to_string()))?;
    let mut errors = Vec::new();
    let mut skipped = 0;
    for (persona, rep) in &gen_reps {
        let key = match grouping {
            Grouping::PersonaId => Some(persona.clone()),
            Grouping::Attributes { generated, .. } => generated.get(persona).cloned(),
        };
        match key.and_then(|k| reference_reps.get(&k)) {
            Some(r) => errors.push((SLICES_PER_DAY - matching_slices(rep, r)) as f64 / SLICES_PER_DAY as f64),
            None => {
                log::warn!("itdErr: no reference group for generated persona {persona}");
                skipped += 1;
            }
        }
    }
    let value = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);
    Ok(ItdErr { value, matched: errors.len(), skipped })
}

pub fn duration_shares(corpus: &[IntentionSequence]) -> Histogram {
    let mut minutes = vec![0.0; IntentionType::ALL.len()];
    for s in corpus {
        for e in &s.events {
            minutes[e.intention.index()] += e.window.duration_minutes() as f64;
        }
    }
    let labels = IntentionType::ALL.iter().map(|i| i.label().to_string()).collect();
    Histogram::from_counts(Support::Labels(labels), &minutes)
}

pub fn metric_itdtype(
    gen: &[IntentionSequence],
    reference: &[IntentionSequence],
) -> Result<f64, MetricError> {
    jsd(&duration_shares(gen), &duration_shares(reference))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uniqueness {
    /// Mean overlap over every (generated, training) pair.
    pub mean_overlap: f64,
    /// Mean over generated sequences of their best overlap with any training sequence.
    pub mean_max_overlap: f64,
    #[serde(skip)]
    pub max_overlap: Vec<f64>,
}

pub fn overlap(a: &Slices, b: &Slices) -> f64 {
    matching_slices(a, b) as f64 / SLICES_PER_DAY as f64
}

pub fn uniqueness_overlap(
    gen: &[IntentionSequence],
    train: &[IntentionSequence],
) -> Result<Uniqueness, MetricError> {
    if gen.is_empty() || train.is_empty() {
        return Err(MetricError::Empty("uniqueness needs sequences on both sides".into()));
    }
    let g: Vec<Slices> = gen.iter().map(day_slices).collect();
    let t: Vec<Slices> = train.iter().map(day_slices).collect();
    let rows: Vec<(f64, f64)> = g
        .par_iter()
        .map(|a| {
            let (sum, max) =
                t.iter().map(|b| overlap(a, b)).fold((0.0, 0.0f64), |(s, m), o| (s + o, m.max(o)));
            (sum, max)
        })
        .collect();
    let mean_overlap = rows.iter().map(|r| r.0).sum::<f64>() / (g.len() * t.len()) as f64;
    let max_overlap: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mean_max_overlap = max_overlap.iter().sum::<f64>() / max_overlap.len() as f64;
    Ok(Uniqueness { mean_overlap, mean_max_overlap, max_overlap })
}
