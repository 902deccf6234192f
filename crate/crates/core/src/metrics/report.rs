use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::grid::{metric_locfreq, metric_odsim, GridSpec};
use super::semantic::{
    metric_itderr, metric_itdtype, uniqueness_overlap, Grouping, ItdErr, Uniqueness, SLICE_MINUTES,
};
use super::stats::{
    metric_dayloc, metric_grank, metric_itdnum, metric_radius, COUNT_MAX, GRANK_TOP, RADIUS_BINS,
    RADIUS_BIN_KM,
};
use super::{Corpus, MetricError};
use crate::io::{to_jsonl, DayRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Fixed grid; when absent one is fitted around both corpora.
    pub grid: Option<GridSpec>,
    pub cell_size_km: f64,
    pub grouping: Grouping,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { grid: None, cell_size_km: 1.0, grouping: Grouping::PersonaId }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub radius: Option<f64>,
    pub dayloc: Option<f64>,
    #[serde(rename = "itdNum")]
    pub itd_num: Option<f64>,
    pub g_rank: Option<f64>,
    #[serde(rename = "itdErr")]
    pub itd_err: Option<f64>,
    #[serde(rename = "itdType")]
    pub itd_type: f64,
    pub locfreq: Option<f64>,
    #[serde(rename = "odSim")]
    pub od_sim: Option<f64>,
    pub uniqueness: Uniqueness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub log_base: u32,
    pub radius_bin_km: f64,
    pub radius_bins: usize,
    pub count_support_max: usize,
    pub grank_top: usize,
    pub grank_alignment: String,
    pub slice_minutes: u16,
    pub itd_err_grouping: String,
    /// Absent when neither corpus carries coordinates and no grid was configured.
    pub grid: Option<GridSpec>,
    pub grid_rows: Option<usize>,
    pub grid_cols: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub source: String,
    pub records: usize,
    pub located_records: usize,
    pub personas: usize,
    pub points: usize,
    pub day_range: Option<[u32; 2]>,
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(corpus: &Corpus, source: &str) -> Self {
        let personas: BTreeSet<&str> = corpus.sequences.iter().map(|s| s.persona_id.as_str()).collect();
        let days = corpus.sequences.iter().map(|s| s.day_index);
        let day_range = days.clone().min().zip(days.max()).map(|(a, b)| [a, b]);
        let mut h = Sha256::new();
        let seqs: Vec<DayRecord> = corpus.sequences.iter().map(DayRecord::from).collect();
        let trajs: Vec<DayRecord> = corpus.trajectories.iter().map(DayRecord::from).collect();
        h.update(to_jsonl(&seqs));
        h.update(to_jsonl(&trajs));
        Self {
            source: source.to_string(),
            records: corpus.sequences.len(),
            located_records: corpus.trajectories.len(),
            personas: personas.len(),
            points: corpus.trajectories.iter().map(|t| t.points.len()).sum(),
            day_range,
            sha256: hex::encode(h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datasets {
    pub generated: Fingerprint,
    pub reference: Fingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Metrics,
    pub itd_err_detail: ItdErr,
    pub config: ReportConfig,
    pub datasets: Datasets,
    pub notes: Vec<String>,
}

/// Fills missing location ids with grid cell labels.
fn with_cell_ids(corpus: &Corpus, grid: &GridSpec) -> Result<Corpus, MetricError> {
    let mut c = corpus.clone();
    let cells = grid.locate(&c.trajectories)?;
    for (t, cells) in c.trajectories.iter_mut().zip(cells) {
        for (p, cell) in t.points.iter_mut().zip(cells) {
            if p.poi_id.is_empty() {
                p.poi_id = grid.cell_label(cell);
            }
        }
    }
    Ok(c)
}

pub fn evaluate(gen: &Corpus, reference: &Corpus, cfg: &EvalConfig) -> Result<MetricReport, MetricError> {
    let mut notes = vec!["g_rank compares the two top-100 frequency vectors rank by rank".to_string()];
    let located = !gen.trajectories.is_empty() && !reference.trajectories.is_empty();
    let grid = match (cfg.grid, located) {
        (Some(g), _) => {
            g.validate()?;
            Some(g)
        }
        (None, true) => Some(GridSpec::covering(&[gen, reference], cfg.cell_size_km)?),
        (None, false) => None,
    };
    let (g, r, grid) = match grid {
        Some(grid) if located => (with_cell_ids(gen, &grid)?, with_cell_ids(reference, &grid)?, grid),
        _ => {
            notes.push("spatial metrics omitted: a corpus has no fully located days".into());
            return finish(gen, reference, cfg, grid, notes, None);
        }
    };
    let spatial = SpatialMetrics {
        radius: metric_radius(&g.trajectories, &r.trajectories)?,
        dayloc: metric_dayloc(&g.trajectories, &r.trajectories)?,
        itd_num: metric_itdnum(&g.trajectories, &r.trajectories)?,
        g_rank: metric_grank(&g.trajectories, &r.trajectories)?,
        locfreq: metric_locfreq(&g.trajectories, &r.trajectories, &grid)?,
        od_sim: metric_odsim(&g.trajectories, &r.trajectories, &grid)?,
    };
    finish(gen, reference, cfg, Some(grid), notes, Some(spatial))
}

struct SpatialMetrics {
    radius: f64,
    dayloc: f64,
    itd_num: f64,
    g_rank: f64,
    locfreq: f64,
    od_sim: f64,
}

fn finish(
    gen: &Corpus,
    reference: &Corpus,
    cfg: &EvalConfig,
    grid: Option<GridSpec>,
    mut notes: Vec<String>,
    spatial: Option<SpatialMetrics>,
) -> Result<MetricReport, MetricError> {
    let itd = metric_itderr(&gen.sequences, &reference.sequences, &cfg.grouping)?;
    if itd.skipped > 0 {
        notes.push(format!("itdErr: {} generated persona(s) had no matching reference group", itd.skipped));
    }
    let pick = |f: fn(&SpatialMetrics) -> f64| spatial.as_ref().map(f);
    let metrics = Metrics {
        radius: pick(|s| s.radius),
        dayloc: pick(|s| s.dayloc),
        itd_num: pick(|s| s.itd_num),
        g_rank: pick(|s| s.g_rank),
        itd_err: itd.value,
        itd_type: metric_itdtype(&gen.sequences, &reference.sequences)?,
        locfreq: pick(|s| s.locfreq),
        od_sim: pick(|s| s.od_sim),
        uniqueness: uniqueness_overlap(&gen.sequences, &reference.sequences)?,
    };
    Ok(MetricReport {
        metrics,
        itd_err_detail: itd,
        config: ReportConfig {
            log_base: 2,
            radius_bin_km: RADIUS_BIN_KM,
            radius_bins: RADIUS_BINS,
            count_support_max: COUNT_MAX,
            grank_top: GRANK_TOP,
            grank_alignment: "rank".into(),
            slice_minutes: SLICE_MINUTES,
            itd_err_grouping: cfg.grouping.label().into(),
            grid,
            grid_rows: grid.map(|g| g.rows()),
            grid_cols: grid.map(|g| g.cols()),
        },
        datasets: Datasets {
            generated: Fingerprint::of(gen, "generated"),
            reference: Fingerprint::of(reference, "reference"),
        },
        notes,
    })
}
