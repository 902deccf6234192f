use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::index::{PoiRecord, SpatialIndex};
use super::mapper::CategoryMap;
use super::GravityError;
use crate::model::{GeoPoint, IntentionType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GravityParams {
    pub decay_exponent: f64,
    pub ring_width_km: f64,
    pub max_radius_km: f64,
    pub min_distance_km: f64,
    pub trajectories_per_sequence: usize,
    /// Radius doubling stops here when nothing matches within `max_radius_km`.
    pub fallback_max_radius_km: f64,
    /// Turns an empty neighbourhood into an error instead of widening the search.
    pub strict_coverage: bool,
}

impl Default for GravityParams {
    fn default() -> Self {
        Self {
            decay_exponent: 2.5,
            ring_width_km: 1.0,
            max_radius_km: 10.0,
            min_distance_km: 0.1,
            trajectories_per_sequence: 20,
            fallback_max_radius_km: 40.0,
            strict_coverage: false,
        }
    }
}

impl GravityParams {
    pub fn validate(&self) -> Result<(), GravityError> {
        let bad = |m: &str| Err(GravityError::Config(m.into()));
        if !(self.decay_exponent > 0.0 && self.decay_exponent.is_finite()) {
            return bad("decay_exponent must be positive");
        }
        if !(self.ring_width_km > 0.0 && self.ring_width_km <= self.max_radius_km) {
            return bad("ring width must be positive and at most max_radius_km");
        }
        if !self.max_radius_km.is_finite() {
            return bad("max_radius_km must be finite");
        }
        if !(self.min_distance_km > 0.0) {
            return bad("min_distance_km must be positive");
        }
        if self.trajectories_per_sequence == 0 {
            return bad("trajectories_per_sequence must be at least 1");
        }
        if !(self.fallback_max_radius_km.is_finite()) {
            return bad("fallback_max_radius_km must be finite");
        }
        Ok(())
    }
}

/// 1-based ring of a distance: ring k covers `((k-1)w, kw]`, with distance 0 in ring 1.
pub fn ring_of(distance_km: f64, ring_width_km: f64) -> usize {
    ((distance_km / ring_width_km).ceil() as usize).max(1)
}

pub fn ring_count(radius_km: f64, ring_width_km: f64) -> usize {
    ring_of(radius_km, ring_width_km)
}

/// Area of ring k, with the outer edge clipped at `radius_km`.
pub fn ring_area(k: usize, ring_width_km: f64, radius_km: f64) -> f64 {
    let outer = (k as f64 * ring_width_km).min(radius_km);
    let inner = (k - 1) as f64 * ring_width_km;
    PI * (outer * outer - inner * inner)
}

/// Matching-POI density per km² in each ring around `center` out to `radius_km`.
pub fn ring_densities_within(
    index: &SpatialIndex,
    center: GeoPoint,
    categories: &BTreeSet<String>,
    ring_width_km: f64,
    radius_km: f64,
) -> Vec<f64> {
    let n = ring_count(radius_km, ring_width_km);
    let mut counts = vec![0usize; n];
    for hit in index.within_filtered(center, radius_km, |p| categories.contains(&p.category)) {
        counts[ring_of(hit.distance_km, ring_width_km).min(n) - 1] += 1;
    }
    counts.iter().enumerate().map(|(i, &c)| c as f64 / ring_area(i + 1, ring_width_km, radius_km)).collect()
}

/// Ring densities out to the configured maximum radius.
pub fn ring_densities(
    index: &SpatialIndex,
    center: GeoPoint,
    categories: &BTreeSet<String>,
    params: &GravityParams,
) -> Vec<f64> {
    ring_densities_within(index, center, categories, params.ring_width_km, params.max_radius_km)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    pub distance_km: f64,
    pub weight: f64,
}

/// Candidates for one draw, with the radius that was finally searched.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub radius_km: f64,
    pub candidates: Vec<Candidate>,
}

/// Gravity weights for POIs of the given categories: ring density times the clamped distance
/// raised to the negative decay exponent.
pub fn category_weights(
    index: &SpatialIndex,
    center: GeoPoint,
    categories: &BTreeSet<String>,
    params: &GravityParams,
) -> Result<CandidateSet, GravityError> {
    let mut radius = params.max_radius_km;
    loop {
        let hits = index.within_filtered(center, radius, |p| categories.contains(&p.category));
        if !hits.is_empty() {
            let n = ring_count(radius, params.ring_width_km);
            let mut counts = vec![0usize; n];
            for h in &hits {
                counts[ring_of(h.distance_km, params.ring_width_km).min(n) - 1] += 1;
            }
            let candidates = hits
                .iter()
                .map(|h| {
                    let k = ring_of(h.distance_km, params.ring_width_km).min(n);
                    let m = counts[k - 1] as f64 / ring_area(k, params.ring_width_km, radius);
                    let r = h.distance_km.max(params.min_distance_km);
                    Candidate {
                        index: h.index,
                        distance_km: h.distance_km,
                        weight: m * r.powf(-params.decay_exponent),
                    }
                })
                .collect();
            return Ok(CandidateSet { radius_km: radius, candidates });
        }
        let next = radius * 2.0;
        if params.strict_coverage || next > params.fallback_max_radius_km {
            return Err(GravityError::Coverage {
                categories: categories.iter().cloned().collect::<Vec<_>>().join(","),
                radius_km: radius,
            });
        }
        log::warn!("no {categories:?} POI within {radius} km of {center:?}; widening to {next} km");
        radius = next;
    }
}

pub fn candidate_weights(
    index: &SpatialIndex,
    center: GeoPoint,
    intention: IntentionType,
    params: &GravityParams,
    category_map: &CategoryMap,
) -> Result<CandidateSet, GravityError> {
    let categories = category_map.categories(intention).ok_or(GravityError::Anchor(intention))?;
    category_weights(index, center, categories, params)
}

/// Index drawn with probability proportional to its weight.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize, GravityError> {
    if weights.is_empty() {
        return Err(GravityError::Sampling("no candidates".into()));
    }
    let dist = WeightedIndex::new(weights).map_err(|e| GravityError::Sampling(e.to_string()))?;
    Ok(dist.sample(rng))
}

pub fn sample_destination<'a, R: Rng + ?Sized>(
    index: &'a SpatialIndex,
    set: &CandidateSet,
    rng: &mut R,
) -> Result<&'a PoiRecord, GravityError> {
    let weights: Vec<f64> = set.candidates.iter().map(|c| c.weight).collect();
    let i = sample_index(&weights, rng)?;
    Ok(index.get(set.candidates[i].index))
}
