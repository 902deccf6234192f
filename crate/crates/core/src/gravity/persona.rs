use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::index::SpatialIndex;
use super::mapper::CategoryMap;
use super::weights::{category_weights, sample_destination, sample_index, GravityParams};
use super::GravityError;
use crate::model::{GeoPoint, Persona};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionProfile {
    pub weight: f64,
    pub residential_pois: Vec<String>,
    /// Attribute name to value probabilities. Attributes are drawn independently.
    #[serde(default)]
    pub attributes: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Regional demographics: region weights, residential POIs and per-region attribute marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfileDistribution {
    pub regions: BTreeMap<String, RegionProfile>,
}

fn normalise(values: impl Iterator<Item = f64> + Clone, what: &str) -> Result<f64, GravityError> {
    if values.clone().any(|w| !(w >= 0.0) || !w.is_finite()) {
        return Err(GravityError::Config(format!("{what}: weights must be finite and non-negative")));
    }
    let total: f64 = values.sum();
    if !(total > 0.0) {
        return Err(GravityError::Config(format!("{what}: weights sum to zero")));
    }
    Ok(total)
}

impl ProfileDistribution {
    pub fn load(path: &Path) -> Result<Self, GravityError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GravityError::Config(format!("{}: {e}", path.display())))?;
        let dist: Self = serde_json::from_str(&text)
            .map_err(|e| GravityError::Config(format!("{}: {e}", path.display())))?;
        dist.normalised()
    }

    /// Checks every weight table and rescales it to sum to 1.
    pub fn normalised(mut self) -> Result<Self, GravityError> {
        if self.regions.is_empty() {
            return Err(GravityError::Config("profile distribution has no regions".into()));
        }
        let total = normalise(self.regions.values().map(|r| r.weight), "region weights")?;
        for (name, region) in &mut self.regions {
            region.weight /= total;
            for (attr, values) in &mut region.attributes {
                let t = normalise(values.values().copied(), &format!("region {name} attribute {attr}"))?;
                values.values_mut().for_each(|p| *p /= t);
            }
        }
        Ok(self)
    }

    /// Every region with positive weight must list residential POIs present in the index.
    pub fn check_against(&self, index: &SpatialIndex) -> Result<(), GravityError> {
        let ids: HashMap<&str, ()> = index.pois().iter().map(|p| (p.id.as_str(), ())).collect();
        for (name, r) in &self.regions {
            if r.weight > 0.0 && r.residential_pois.is_empty() {
                return Err(GravityError::Config(format!("region {name} has no residential POI")));
            }
            let missing: Vec<&String> =
                r.residential_pois.iter().filter(|id| !ids.contains_key(id.as_str())).collect();
            if !missing.is_empty() {
                return Err(GravityError::Config(format!(
                    "region {name}: residential POI(s) not in POI file: {missing:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomeDraw {
    pub region: String,
    pub home: GeoPoint,
    pub home_poi: String,
    pub attributes: BTreeMap<String, String>,
}

/// Region by weight, then each attribute from that region's marginals, then a uniformly chosen
/// residential POI in the region.
pub fn sample_home<R: Rng + ?Sized>(
    dist: &ProfileDistribution,
    index: &SpatialIndex,
    rng: &mut R,
) -> Result<HomeDraw, GravityError> {
    let regions: Vec<(&String, &RegionProfile)> = dist.regions.iter().collect();
    let weights: Vec<f64> = regions.iter().map(|(_, r)| r.weight).collect();
    let (name, region) = regions[sample_index(&weights, rng)?];
    let mut attributes = BTreeMap::new();
    for (attr, values) in &region.attributes {
        let options: Vec<(&String, &f64)> = values.iter().collect();
        let w: Vec<f64> = options.iter().map(|(_, p)| **p).collect();
        attributes.insert(attr.clone(), options[sample_index(&w, rng)?].0.clone());
    }
    let poi_id = region
        .residential_pois
        .choose(rng)
        .ok_or_else(|| GravityError::Config(format!("region {name} has no residential POI")))?;
    let home = index
        .position(poi_id)
        .map(|i| index.get(i).location)
        .ok_or_else(|| GravityError::Config(format!("residential POI {poi_id} not in POI file")))?;
    Ok(HomeDraw { region: name.clone(), home, home_poi: poi_id.clone(), attributes })
}

/// Workplace drawn once by gravity weights around home over the workplace categories.
pub fn assign_work<R: Rng + ?Sized>(
    home: GeoPoint,
    index: &SpatialIndex,
    params: &GravityParams,
    map: &CategoryMap,
    rng: &mut R,
) -> Result<GeoPoint, GravityError> {
    let set = category_weights(index, home, &map.workplace, params)?;
    Ok(sample_destination(index, &set, rng)?.location)
}

/// A full persona. Work is left unset when no workplace lies within the search radius.
pub fn sample_persona<R: Rng + ?Sized>(
    id: String,
    dist: &ProfileDistribution,
    index: &SpatialIndex,
    params: &GravityParams,
    map: &CategoryMap,
    rng: &mut R,
) -> Result<Persona, GravityError> {
    let draw = sample_home(dist, index, rng)?;
    let work = match assign_work(draw.home, index, params, map, rng) {
        Ok(w) => Some(w),
        Err(GravityError::Coverage { .. }) => {
            log::warn!("persona {id}: no workplace near home, work left unset");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(Persona { id, attributes: draw.attributes, home: draw.home, home_region: draw.region, work })
}
