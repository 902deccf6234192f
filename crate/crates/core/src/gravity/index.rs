use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GravityError;
use crate::model::{haversine_km, GeoPoint, EARTH_RADIUS_KM};

const KM_PER_DEG_LAT: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// Grids larger than this coarsen their cells so memory stays bounded.
const MAX_CELLS: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub id: String,
    pub name: String,
    pub category: String,
    pub location: GeoPoint,
}

#[derive(Deserialize)]
struct PoiRow {
    id: String,
    name: String,
    category: String,
    lat: f64,
    lon: f64,
}

/// Reads `id,name,category,lat,lon` CSV. Row numbers in errors count the header as line 1.
pub fn load_pois(path: &Path) -> Result<Vec<PoiRecord>, GravityError> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| GravityError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<PoiRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| GravityError::Config(format!("{}:{line}: {e}", path.display())))?;
        let location = GeoPoint::new(row.lat, row.lon)
            .map_err(|e| GravityError::Config(format!("{}:{line}: {e}", path.display())))?;
        out.push(PoiRecord { id: row.id, name: row.name, category: row.category, location });
    }
    Ok(out)
}

pub fn write_pois(path: &Path, pois: &[PoiRecord]) -> Result<(), GravityError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "name", "category", "lat", "lon"]).map_err(csv_err)?;
    for p in pois {
        w.write_record([
            p.id.as_str(),
            p.name.as_str(),
            p.category.as_str(),
            &p.location.lat.to_string(),
            &p.location.lon.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| GravityError::Config(e.to_string()))?;
    crate::io::write_atomic(path, &bytes)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> GravityError {
    GravityError::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }

    pub fn around<'a>(points: impl IntoIterator<Item = &'a GeoPoint>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Self { min_lat: first.lat, min_lon: first.lon, max_lat: first.lat, max_lon: first.lon };
        for p in it {
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lat = b.max_lat.max(p.lat);
            b.min_lon = b.min_lon.min(p.lon);
            b.max_lon = b.max_lon.max(p.lon);
        }
        Some(b)
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = self.min_lat <= self.max_lat
            && self.min_lon <= self.max_lon
            && GeoPoint::new(self.min_lat, self.min_lon).is_ok()
            && GeoPoint::new(self.max_lat, self.max_lon).is_ok();
        if ok {
            Ok(())
        } else {
            Err(format!("invalid bounding box {self:?}"))
        }
    }
}

/// Uniform lat/lon grid over the POI bounding box. Immutable once built.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    pois: Vec<PoiRecord>,
    bbox: BoundingBox,
    cell_size_km: f64,
    lat_step: f64,
    lon_step: f64,
    rows: usize,
    cols: usize,
    cells: Vec<Vec<u32>>,
}

/// A POI hit from a range query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub distance_km: f64,
}

/// Builds the index. With `bbox` given, POIs outside it are rejected; otherwise the box is
/// fitted to the POIs.
pub fn build_index(
    pois: Vec<PoiRecord>,
    cell_size_km: f64,
    bbox: Option<BoundingBox>,
) -> Result<SpatialIndex, GravityError> {
    if pois.is_empty() {
        return Err(GravityError::Config("POI list is empty".into()));
    }
    if !(cell_size_km > 0.0) || !cell_size_km.is_finite() {
        return Err(GravityError::Config(format!("cell size must be positive, got {cell_size_km}")));
    }
    let mut seen = HashSet::new();
    let dup: Vec<String> =
        pois.iter().filter(|p| !seen.insert(p.id.as_str())).map(|p| p.id.clone()).collect();
    if !dup.is_empty() {
        return Err(GravityError::Ingest { reason: "duplicate id".into(), ids: dup });
    }
    let blank: Vec<String> =
        pois.iter().filter(|p| p.category.trim().is_empty()).map(|p| p.id.clone()).collect();
    if !blank.is_empty() {
        return Err(GravityError::Ingest { reason: "empty category".into(), ids: blank });
    }
    let bbox = match bbox {
        Some(b) => {
            b.validate().map_err(GravityError::Config)?;
            let outside: Vec<String> =
                pois.iter().filter(|p| !b.contains(p.location)).map(|p| p.id.clone()).collect();
            if !outside.is_empty() {
                return Err(GravityError::Ingest { reason: "outside bounding box".into(), ids: outside });
            }
            b
        }
        None => BoundingBox::around(pois.iter().map(|p| &p.location)).expect("non-empty"),
    };

    let mid_lat = ((bbox.min_lat + bbox.max_lat) / 2.0).to_radians();
    let mut lat_step = cell_size_km / KM_PER_DEG_LAT;
    let mut lon_step = cell_size_km / (KM_PER_DEG_LAT * mid_lat.cos().max(1e-6));
    let dims = |ls: f64, os: f64| {
        (
            (((bbox.max_lat - bbox.min_lat) / ls).floor() as usize + 1),
            (((bbox.max_lon - bbox.min_lon) / os).floor() as usize + 1),
        )
    };
    let (mut rows, mut cols) = dims(lat_step, lon_step);
    while rows.saturating_mul(cols) > MAX_CELLS {
        lat_step *= 2.0;
        lon_step *= 2.0;
        (rows, cols) = dims(lat_step, lon_step);
    }
    let mut index = SpatialIndex {
        pois,
        bbox,
        cell_size_km,
        lat_step,
        lon_step,
        rows,
        cols,
        cells: vec![Vec::new(); rows * cols],
    };
    for i in 0..index.pois.len() {
        let (r, c) = index.cell_of(index.pois[i].location);
        index.cells[r * cols + c].push(i as u32);
    }
    Ok(index)
}

impl SpatialIndex {
    pub fn pois(&self) -> &[PoiRecord] {
        &self.pois
    }

    pub fn get(&self, index: usize) -> &PoiRecord {
        &self.pois[index]
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn cell_size_km(&self) -> f64 {
        self.cell_size_km
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.pois.iter().position(|p| p.id == id)
    }

    fn cell_of(&self, p: GeoPoint) -> (usize, usize) {
        let r = ((p.lat - self.bbox.min_lat) / self.lat_step).floor().clamp(0.0, (self.rows - 1) as f64);
        let c = ((p.lon - self.bbox.min_lon) / self.lon_step).floor().clamp(0.0, (self.cols - 1) as f64);
        (r as usize, c as usize)
    }

    /// POIs whose haversine distance from `center` is at most `radius_km`, in ingest order.
    pub fn within(&self, center: GeoPoint, radius_km: f64) -> Vec<Hit> {
        self.within_filtered(center, radius_km, |_| true)
    }

    pub fn within_filtered(
        &self,
        center: GeoPoint,
        radius_km: f64,
        keep: impl Fn(&PoiRecord) -> bool,
    ) -> Vec<Hit> {
        if !(radius_km >= 0.0) {
            return Vec::new();
        }
        let delta = radius_km / EARTH_RADIUS_KM;
        let dlat = delta.to_degrees();
        let lat_lo = center.lat - dlat;
        let lat_hi = center.lat + dlat;
        // Longitude half-width of a spherical cap; unbounded near the poles or past the antimeridian.
        let all_lon = lat_hi >= 90.0 || lat_lo <= -90.0 || delta >= std::f64::consts::FRAC_PI_2;
        let (lon_lo, lon_hi) = if all_lon {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            let dlon = (delta.sin() / center.lat.to_radians().cos()).min(1.0).asin().to_degrees();
            if center.lon - dlon < -180.0 || center.lon + dlon > 180.0 {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                (center.lon - dlon, center.lon + dlon)
            }
        };
        if lat_hi < self.bbox.min_lat
            || lat_lo > self.bbox.max_lat
            || lon_hi < self.bbox.min_lon
            || lon_lo > self.bbox.max_lon
        {
            return Vec::new();
        }
        let row_range = self.span(lat_lo, lat_hi, self.bbox.min_lat, self.lat_step, self.rows);
        let col_range = self.span(lon_lo, lon_hi, self.bbox.min_lon, self.lon_step, self.cols);
        let mut hits = Vec::new();
        for r in row_range.0..=row_range.1 {
            for c in col_range.0..=col_range.1 {
                for &i in &self.cells[r * self.cols + c] {
                    let p = &self.pois[i as usize];
                    let d = haversine_km(center, p.location);
                    if d <= radius_km && keep(p) {
                        hits.push(Hit { index: i as usize, distance_km: d });
                    }
                }
            }
        }
        hits.sort_by_key(|h| h.index);
        hits
    }

    /// Inclusive cell range covering `[lo, hi]`, widened by one cell for rounding.
    fn span(&self, lo: f64, hi: f64, origin: f64, step: f64, n: usize) -> (usize, usize) {
        let to_cell = |x: f64| {
            if x.is_infinite() {
                if x < 0.0 {
                    0.0
                } else {
                    (n - 1) as f64
                }
            } else {
                ((x - origin) / step).floor()
            }
        };
        let a = (to_cell(lo) - 1.0).clamp(0.0, (n - 1) as f64) as usize;
        let b = (to_cell(hi) + 1.0).clamp(0.0, (n - 1) as f64) as usize;
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn poi(id: &str, cat: &str, lat: f64, lon: f64) -> PoiRecord {
        PoiRecord {
            id: id.into(),
            name: id.into(),
            category: cat.into(),
            location: GeoPoint::new(lat, lon).unwrap(),
        }
    }

    #[test]
    fn single_poi_found() {
        let idx = build_index(vec![poi("a", "eat", 39.9, 116.4)], 1.0, None).unwrap();
        let hits = idx.within(GeoPoint::new(39.9, 116.4).unwrap(), 10.0);
        assert_eq!(hits.len(), 1);
        assert_eq!(idx.get(hits[0].index).id, "a");
    }

    #[test]
    fn zero_radius_in_empty_cell() {
        let idx =
            build_index(vec![poi("a", "eat", 39.9, 116.4), poi("b", "eat", 40.0, 116.6)], 1.0, None).unwrap();
        assert!(idx.within(GeoPoint::new(39.95, 116.5).unwrap(), 0.0).is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_index(vec![], 1.0, None).is_err());
        assert!(build_index(vec![poi("a", "eat", 0.0, 0.0)], 0.0, None).is_err());
        let bbox = BoundingBox { min_lat: 39.0, min_lon: 116.0, max_lat: 40.0, max_lon: 117.0 };
        match build_index(vec![poi("in", "x", 39.5, 116.5), poi("out", "x", 41.0, 116.5)], 1.0, Some(bbox)) {
            Err(GravityError::Ingest { ids, .. }) => assert_eq!(ids, vec!["out"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            build_index(vec![poi("a", "x", 0.0, 0.0), poi("a", "y", 0.1, 0.0)], 1.0, None),
            Err(GravityError::Ingest { .. })
        ));
    }

    #[test]
    fn random_thousand_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pois: Vec<PoiRecord> = (0..1000)
            .map(|i| poi(&i.to_string(), "x", rng.random_range(39.6..40.2), rng.random_range(116.0..116.8)))
            .collect();
        let idx = build_index(pois.clone(), 1.0, None).unwrap();
        for _ in 0..200 {
            let c = GeoPoint::new(rng.random_range(39.5..40.3), rng.random_range(115.9..116.9)).unwrap();
            let r = rng.random_range(0.0..25.0);
            let got: Vec<usize> = idx.within(c, r).iter().map(|h| h.index).collect();
            let want: Vec<usize> =
                (0..pois.len()).filter(|&i| haversine_km(c, pois[i].location) <= r).collect();
            assert_eq!(got, want);
        }
    }

    proptest! {
        #[test]
        fn query_equals_scan_anywhere(
            pts in prop::collection::vec((-85.0f64..85.0, -179.0f64..179.0), 1..60),
            clat in -89.0f64..89.0, clon in -179.9f64..179.9, r in 0.0f64..3000.0, cell in 0.5f64..500.0,
        ) {
            let pois: Vec<PoiRecord> = pts.iter().enumerate().map(|(i, &(a, b))| poi(&i.to_string(), "x", a, b)).collect();
            let idx = build_index(pois.clone(), cell, None).unwrap();
            let c = GeoPoint::new(clat, clon).unwrap();
            let got: Vec<usize> = idx.within(c, r).iter().map(|h| h.index).collect();
            let want: Vec<usize> = (0..pois.len()).filter(|&i| haversine_km(c, pois[i].location) <= r).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let pois = vec![
            poi("a", "restaurant", 39.9, 116.4),
            PoiRecord { name: "Joe's, \"best\"".into(), ..poi("b", "mall", 39.91, 116.41) },
        ];
        write_pois(&path, &pois).unwrap();
        assert_eq!(load_pois(&path).unwrap(), pois);
        std::fs::write(&path, "id,name,category,lat,lon\na,A,x,95,0\n").unwrap();
        let err = load_pois(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
