use std::collections::{BTreeSet, HashMap};

use super::{jsd, Histogram, MetricError, Support};
use crate::model::{haversine_km, GeoPoint, Trajectory};

pub const RADIUS_BIN_KM: f64 = 0.5;
pub const RADIUS_BINS: usize = 100;
pub const COUNT_MAX: usize = 24;
pub const GRANK_TOP: usize = 100;

/// Root-mean-square haversine distance of the points from their mean coordinate.
pub fn radius_of_gyration(traj: &Trajectory) -> f64 {
    let n = traj.points.len();
    if n == 0 {
        return 0.0;
    }
    let lat = traj.points.iter().map(|p| p.location.lat).sum::<f64>() / n as f64;
    let lon = traj.points.iter().map(|p| p.location.lon).sum::<f64>() / n as f64;
    let c = GeoPoint { lat, lon };
    (traj.points.iter().map(|p| haversine_km(c, p.location).powi(2)).sum::<f64>() / n as f64).sqrt()
}

pub fn radius_histogram(corpus: &[Trajectory]) -> Histogram {
    Histogram::binned(corpus.iter().map(radius_of_gyration), RADIUS_BIN_KM, RADIUS_BINS)
}

pub fn metric_radius(gen: &[Trajectory], reference: &[Trajectory]) -> Result<f64, MetricError> {
    jsd(&radius_histogram(gen), &radius_histogram(reference))
}

pub fn distinct_locations(traj: &Trajectory) -> usize {
    traj.points.iter().map(|p| p.poi_id.as_str()).collect::<BTreeSet<_>>().len()
}

pub fn metric_dayloc(gen: &[Trajectory], reference: &[Trajectory]) -> Result<f64, MetricError> {
    let h = |c: &[Trajectory]| Histogram::integer_counts(c.iter().map(distinct_locations), COUNT_MAX);
    jsd(&h(gen), &h(reference))
}

/// Event counts per day, without de-duplicating repeated locations.
pub fn metric_itdnum(gen: &[Trajectory], reference: &[Trajectory]) -> Result<f64, MetricError> {
    let h = |c: &[Trajectory]| Histogram::integer_counts(c.iter().map(|t| t.points.len()), COUNT_MAX);
    jsd(&h(gen), &h(reference))
}

/// Visit counts of the most visited locations, sorted descending and zero-padded to `top`.
/// Ties are ordered by location id.
pub fn rank_frequency(corpus: &[Trajectory], top: usize) -> Vec<f64> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in corpus {
        for p in &t.points {
            *counts.entry(p.poi_id.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    if ranked.len() < top {
        log::info!("g-rank: {} distinct location(s), padding to {top}", ranked.len());
    }
    let mut v: Vec<f64> = ranked.iter().take(top).map(|(_, c)| *c as f64).collect();
    v.resize(top, 0.0);
    v
}

/// Rank-aligned comparison of the two corpora's top-100 visit frequency vectors.
pub fn metric_grank(gen: &[Trajectory], reference: &[Trajectory]) -> Result<f64, MetricError> {
    let h = |c: &[Trajectory]| {
        Histogram::from_counts(Support::Positions(GRANK_TOP), &rank_frequency(c, GRANK_TOP))
    };
    jsd(&h(gen), &h(reference))
}
