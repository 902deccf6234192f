use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::index::SpatialIndex;
use super::weights::{category_weights, sample_destination, GravityParams};
use super::GravityError;
use crate::model::{IntentionSequence, IntentionType, Persona, Trajectory, TrajectoryPoint};

/// Intention to POI-category mapping. Home and work intentions are anchors and carry no
/// categories; `workplace` lists the categories a persona's workplace is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryMap {
    pub intentions: BTreeMap<IntentionType, BTreeSet<String>>,
    pub workplace: BTreeSet<String>,
}

pub enum Anchor {
    Home,
    Work,
}

impl Default for CategoryMap {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../assets/category_map.json"))
            .expect("bundled category map parses")
    }
}

impl CategoryMap {
    pub fn anchor(intention: IntentionType) -> Option<Anchor> {
        match intention {
            IntentionType::GoHome | IntentionType::Sleep => Some(Anchor::Home),
            IntentionType::GoToWork => Some(Anchor::Work),
            _ => None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, GravityError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GravityError::Config(format!("{}: {e}", path.display())))?;
        let map: Self = serde_json::from_str(&text)
            .map_err(|e| GravityError::Config(format!("{}: {e}", path.display())))?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<(), GravityError> {
        for i in IntentionType::ALL {
            let cats = self.intentions.get(&i).filter(|c| !c.is_empty());
            match (Self::anchor(i), cats) {
                (None, None) => {
                    return Err(GravityError::Config(format!(
                        "intention {:?} maps to no POI category",
                        i.label()
                    )))
                }
                (Some(_), Some(_)) => {
                    return Err(GravityError::Config(format!(
                        "anchor intention {:?} must not list categories",
                        i.label()
                    )))
                }
                _ => {}
            }
        }
        if self.workplace.is_empty() {
            return Err(GravityError::Config("workplace categories are empty".into()));
        }
        Ok(())
    }

    /// Categories for a non-anchor intention; `None` for anchors.
    pub fn categories(&self, intention: IntentionType) -> Option<&BTreeSet<String>> {
        if Self::anchor(intention).is_some() {
            return None;
        }
        self.intentions.get(&intention)
    }
}

/// Identifier used for a persona's home in trajectories.
pub fn home_id(persona: &Persona) -> String {
    format!("home:{}", persona.id)
}

pub fn work_id(persona: &Persona) -> String {
    format!("work:{}", persona.id)
}

/// Deterministic rng stream for one replica of one persona-day.
pub fn replica_rng(seed: u64, persona_id: &str, day: u32, replica: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((persona_id.len() as u64).to_le_bytes());
    h.update(persona_id.as_bytes());
    h.update(day.to_le_bytes());
    h.update((replica as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Grounds one sequence once. The day starts at home; each non-anchor event is drawn around
/// the previously resolved location.
pub fn map_replica<R: rand::Rng + ?Sized>(
    persona: &Persona,
    seq: &IntentionSequence,
    index: &SpatialIndex,
    params: &GravityParams,
    map: &CategoryMap,
    rng: &mut R,
) -> Result<Trajectory, GravityError> {
    let mut prev = persona.home;
    let mut points = Vec::with_capacity(seq.events.len());
    for (i, ev) in seq.events.iter().enumerate() {
        let at = |source: GravityError| GravityError::Event { index: i, source: Box::new(source) };
        let (poi_id, location) = match CategoryMap::anchor(ev.intention) {
            Some(Anchor::Home) => (home_id(persona), persona.home),
            Some(Anchor::Work) => {
                let w = persona.work.ok_or_else(|| at(GravityError::NoWorkplace(persona.id.clone())))?;
                (work_id(persona), w)
            }
            None => {
                let cats =
                    map.categories(ev.intention).ok_or_else(|| at(GravityError::Anchor(ev.intention)))?;
                let set = category_weights(index, prev, cats, params).map_err(at)?;
                let poi = sample_destination(index, &set, rng).map_err(at)?;
                (poi.id.clone(), poi.location)
            }
        };
        points.push(TrajectoryPoint { window: ev.window, poi_id, location, intention: ev.intention });
        prev = location;
    }
    Ok(Trajectory { persona_id: seq.persona_id.clone(), day_index: seq.day_index, points })
}

/// `n` independent groundings of one sequence, each on its own derived rng stream.
pub fn map_sequence(
    persona: &Persona,
    seq: &IntentionSequence,
    index: &SpatialIndex,
    params: &GravityParams,
    map: &CategoryMap,
    seed: u64,
    n: usize,
) -> Result<Vec<Trajectory>, GravityError> {
    if seq.events.iter().any(|e| e.intention == IntentionType::GoToWork) && persona.work.is_none() {
        return Err(GravityError::NoWorkplace(persona.id.clone()));
    }
    (0..n)
        .map(|r| {
            let mut rng = replica_rng(seed, &persona.id, seq.day_index, r);
            map_replica(persona, seq, index, params, map, &mut rng)
        })
        .collect()
}
