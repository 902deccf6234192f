use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{jsd, Corpus, Histogram, MetricError, Support};
use crate::gravity::BoundingBox;
use crate::model::{GeoPoint, Trajectory, EARTH_RADIUS_KM};

const KM_PER_DEG: f64 = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

/// Uniform grid over a bounding box, with cells of roughly `cell_size_km` on a side at the
/// box's middle latitude. Cells are numbered row-major from the south-west corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub bbox: BoundingBox,
    #[serde(default = "default_cell")]
    pub cell_size_km: f64,
}

fn default_cell() -> f64 {
    1.0
}

impl GridSpec {
    pub fn new(bbox: BoundingBox, cell_size_km: f64) -> Result<Self, MetricError> {
        let g = Self { bbox, cell_size_km };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        self.bbox.validate().map_err(MetricError::Grid)?;
        if !(self.cell_size_km > 0.0 && self.cell_size_km.is_finite()) {
            return Err(MetricError::Grid(format!("cell size {} must be positive", self.cell_size_km)));
        }
        if self.rows().saturating_mul(self.cols()) > 50_000_000 {
            return Err(MetricError::Grid("grid has more than 50M cells".into()));
        }
        Ok(())
    }

    /// Smallest box around every located point of the given corpora.
    pub fn covering(corpora: &[&Corpus], cell_size_km: f64) -> Result<Self, MetricError> {
        let pts: Vec<GeoPoint> = corpora
            .iter()
            .flat_map(|c| c.trajectories.iter())
            .flat_map(|t| t.points.iter().map(|p| p.location))
            .collect();
        let bbox = BoundingBox::around(pts.iter())
            .ok_or_else(|| MetricError::Empty("no located points to fit a grid".into()))?;
        Self::new(bbox, cell_size_km)
    }

    fn steps(&self) -> (f64, f64) {
        let mid = ((self.bbox.min_lat + self.bbox.max_lat) / 2.0).to_radians();
        (self.cell_size_km / KM_PER_DEG, self.cell_size_km / (KM_PER_DEG * mid.cos().max(1e-6)))
    }

    pub fn rows(&self) -> usize {
        ((self.bbox.max_lat - self.bbox.min_lat) / self.steps().0).floor() as usize + 1
    }

    pub fn cols(&self) -> usize {
        ((self.bbox.max_lon - self.bbox.min_lon) / self.steps().1).floor() as usize + 1
    }

    pub fn cells(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Row-major cell index, or `None` outside the box.
    pub fn cell_of(&self, p: GeoPoint) -> Option<usize> {
        if !self.bbox.contains(p) {
            return None;
        }
        let (ls, os) = self.steps();
        let r = (((p.lat - self.bbox.min_lat) / ls).floor() as usize).min(self.rows() - 1);
        let c = (((p.lon - self.bbox.min_lon) / os).floor() as usize).min(self.cols() - 1);
        Some(r * self.cols() + c)
    }

    /// Cell of every point of every trajectory; fails listing all points outside the box.
    pub fn locate(&self, corpus: &[Trajectory]) -> Result<Vec<Vec<usize>>, MetricError> {
        let mut out = Vec::with_capacity(corpus.len());
        let mut offenders = Vec::new();
        for t in corpus {
            let mut cells = Vec::with_capacity(t.points.len());
            for (i, p) in t.points.iter().enumerate() {
                match self.cell_of(p.location) {
                    Some(c) => cells.push(c),
                    None => offenders.push(format!(
                        "{}/day {}/event {i} ({}, {})",
                        t.persona_id, t.day_index, p.location.lat, p.location.lon
                    )),
                }
            }
            out.push(cells);
        }
        if offenders.is_empty() {
            Ok(out)
        } else {
            Err(MetricError::OutOfGrid(offenders))
        }
    }

    pub fn cell_label(&self, cell: usize) -> String {
        format!("cell:{}:{}", cell / self.cols(), cell % self.cols())
    }
}

/// Visit count per cell.
pub fn visit_counts(corpus: &[Trajectory], grid: &GridSpec) -> Result<Vec<f64>, MetricError> {
    let mut counts = vec![0.0; grid.cells()];
    for cells in grid.locate(corpus)? {
        for c in cells {
            counts[c] += 1.0;
        }
    }
    Ok(counts)
}

pub fn metric_locfreq(
    gen: &[Trajectory],
    reference: &[Trajectory],
    grid: &GridSpec,
) -> Result<f64, MetricError> {
    let h = |c: &[Trajectory]| -> Result<Histogram, MetricError> {
        Ok(Histogram::from_counts(Support::Positions(grid.cells()), &visit_counts(c, grid)?))
    };
    jsd(&h(gen)?, &h(reference)?)
}

/// Sparse row-stochastic transition matrix between grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct OdMatrix {
    pub size: usize,
    pub rows: BTreeMap<usize, BTreeMap<usize, f64>>,
}

impl OdMatrix {
    /// Transitions between consecutive points of each trajectory, including stays in one cell.
    pub fn build(corpus: &[Trajectory], grid: &GridSpec) -> Result<Self, MetricError> {
        let mut counts: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
        for cells in grid.locate(corpus)? {
            for w in cells.windows(2) {
                *counts.entry(w[0]).or_default().entry(w[1]).or_default() += 1.0;
            }
        }
        for row in counts.values_mut() {
            let total: f64 = row.values().sum();
            row.values_mut().for_each(|v| *v /= total);
        }
        Ok(Self { size: grid.cells(), rows: counts })
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows.get(&from).and_then(|r| r.get(&to)).copied().unwrap_or(0.0)
    }
}

/// Mean squared difference over all `size²` entries of the two matrices.
pub fn od_mse(a: &OdMatrix, b: &OdMatrix) -> Result<f64, MetricError> {
    if a.size != b.size {
        return Err(MetricError::Support(format!("OD sizes {} and {}", a.size, b.size)));
    }
    let keys: BTreeSet<(usize, usize)> = [a, b]
        .iter()
        .flat_map(|m| m.rows.iter().flat_map(|(&i, row)| row.keys().map(move |&j| (i, j))))
        .collect();
    let sum: f64 = keys.iter().map(|&(i, j)| (a.get(i, j) - b.get(i, j)).powi(2)).sum();
    Ok(sum / (a.size as f64 * a.size as f64))
}

pub fn metric_odsim(
    gen: &[Trajectory],
    reference: &[Trajectory],
    grid: &GridSpec,
) -> Result<f64, MetricError> {
    od_mse(&OdMatrix::build(gen, grid)?, &OdMatrix::build(reference, grid)?)
}

fn normalised(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.into_iter().map(|x| x / s).collect()
    } else {
        v
    }
}

/// Writes `row,col,gen_freq,ref_freq,diff` for every cell in row-major order.
pub fn export_heatmap_grid(
    gen: &[Trajectory],
    reference: &[Trajectory],
    grid: &GridSpec,
    path: &Path,
) -> Result<(), MetricError> {
    let g = normalised(visit_counts(gen, grid)?);
    let r = normalised(visit_counts(reference, grid)?);
    let mut out = String::from("row,col,gen_freq,ref_freq,diff\n");
    let cols = grid.cols();
    for (i, (a, b)) in g.iter().zip(&r).enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i / cols, i % cols, a, b, a - b);
    }
    crate::io::write_atomic(path, out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{IntentionType, TimeWindow, TrajectoryPoint};

    fn grid() -> GridSpec {
        GridSpec::new(BoundingBox { min_lat: 0.0, min_lon: 0.0, max_lat: 0.005, max_lon: 0.015 }, 1.0)
            .unwrap()
    }

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory {
            persona_id: "p".into(),
            day_index: 0,
            points: pts
                .iter()
                .map(|&(lat, lon)| TrajectoryPoint {
                    window: TimeWindow::new(0, 1).unwrap(),
                    poi_id: String::new(),
                    location: GeoPoint::new(lat, lon).unwrap(),
                    intention: IntentionType::Eat,
                })
                .collect(),
        }
    }

    #[test]
    fn grid_shape() {
        let g = grid();
        assert_eq!((g.rows(), g.cols()), (1, 2));
        assert_eq!(g.cell_of(GeoPoint::new(0.001, 0.001).unwrap()), Some(0));
        assert_eq!(g.cell_of(GeoPoint::new(0.001, 0.0095).unwrap()), Some(1));
        assert_eq!(g.cell_of(GeoPoint::new(0.1, 0.0).unwrap()), None);
    }

    #[test]
    fn two_cell_od_matches_hand_matrix() {
        let g = grid();
        // Cells: A = 0, B = 1. Transitions: A->B, B->A, A->A, A->B.
        let c = vec![traj(&[(0.001, 0.001), (0.001, 0.012), (0.001, 0.001), (0.001, 0.002), (0.001, 0.013)])];
        let m = OdMatrix::build(&c, &g).unwrap();
        assert!((m.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.get(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.get(1, 0), 1.0);
        assert_eq!(m.get(1, 1), 0.0);
        for row in m.rows.values() {
            assert!((row.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let other = vec![traj(&[(0.001, 0.001), (0.001, 0.012)])];
        // Differences: (0,0): 1/3, (0,1): 1/3, (1,0): 1.
        let want = ((1.0f64 / 3.0).powi(2) * 2.0 + 1.0) / 4.0;
        assert!((metric_odsim(&c, &other, &g).unwrap() - want).abs() < 1e-12);
        assert_eq!(metric_odsim(&c, &c, &g).unwrap(), 0.0);
        assert_eq!(metric_locfreq(&c, &c, &g).unwrap(), 0.0);
    }

    #[test]
    fn out_of_grid_lists_offenders() {
        let c = vec![traj(&[(0.001, 0.001), (1.0, 1.0)])];
        match metric_locfreq(&c, &c, &grid()) {
            Err(MetricError::OutOfGrid(v)) => assert_eq!(v, vec!["p/day 0/event 1 (1, 1)"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heatmap_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let g = grid();
        let a = vec![traj(&[(0.001, 0.001)])];
        export_heatmap_grid(&a, &a, &g, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
        let b = vec![traj(&[(0.001, 0.012)])];
        export_heatmap_grid(&a, &b, &g, &path).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<(usize, usize, f64, f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows.iter().map(|r| r.2).sum::<f64>(), 1.0);
        assert_eq!(rows.iter().map(|r| r.3).sum::<f64>(), 1.0);
        assert_eq!(rows[0], (0, 0, 1.0, 0.0, 1.0));
    }
}
