//! Spatial grounding: turns intention sequences into POI trajectories with a ring-density
//! gravity model, plus persona placement and decay-exponent fitting.

pub mod fit;
pub mod index;
pub mod mapper;
pub mod persona;
pub mod weights;

use thiserror::Error;

use crate::io::IoError;
use crate::model::IntentionType;

pub use fit::{displacements, fit_decay_exponent, ExponentFit};
pub use index::{build_index, load_pois, BoundingBox, PoiRecord, SpatialIndex};
pub use mapper::{map_replica, map_sequence, replica_rng, CategoryMap};
pub use persona::{assign_work, sample_home, sample_persona, ProfileDistribution};
pub use weights::{
    candidate_weights, category_weights, ring_densities, sample_destination, sample_index, Candidate,
    CandidateSet, GravityParams,
};

#[derive(Debug, Error)]
pub enum GravityError {
    #[error("POI ingest ({reason}): {ids:?}")]
    Ingest { reason: String, ids: Vec<String> },
    #[error("no POI of [{categories}] within {radius_km} km")]
    Coverage { categories: String, radius_km: f64 },
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("{:?} is an anchor intention and has no POI categories", .0.label())]
    Anchor(IntentionType),
    #[error("persona {0} has no workplace")]
    NoWorkplace(String),
    #[error("event {index}: {source}")]
    Event { index: usize, source: Box<GravityError> },
    #[error("fit: {0}")]
    Fit(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::PoiRecord;
    use crate::model::{GeoPoint, EARTH_RADIUS_KM};

    /// Point `north_km` north and `east_km` east of `p`, exact along each axis separately.
    pub fn offset(p: GeoPoint, north_km: f64, east_km: f64) -> GeoPoint {
        let lat = p.lat + (north_km / EARTH_RADIUS_KM).to_degrees();
        let lon = p.lon + (east_km / (EARTH_RADIUS_KM * lat.to_radians().cos())).to_degrees();
        GeoPoint::new(lat, lon).unwrap()
    }

    pub fn poi_at(id: &str, category: &str, at: GeoPoint) -> PoiRecord {
        PoiRecord { id: id.into(), name: id.into(), category: category.into(), location: at }
    }
}
