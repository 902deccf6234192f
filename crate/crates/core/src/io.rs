//! JSON Lines record formats and atomic file output.

use std::borrow::Cow;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    format_clock, parse_clock, EventSeries, GeoPoint, IntentionEvent, IntentionSequence, IntentionType,
    ParseError, RawEvent, TimeWindow, Trajectory, TrajectoryPoint,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}

/// One event of a persona-day record. Location fields are absent on intention-only records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub start: String,
    pub end: String,
    pub intention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poi_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
}

impl EventRecord {
    pub fn window(&self) -> Result<TimeWindow, ParseError> {
        let start = parse_clock(&self.start)?;
        let end = parse_clock(&self.end)?;
        TimeWindow::new(start, end)
            .ok_or_else(|| ParseError::Backward { text: format!("({}, {})", self.start, self.end) })
    }

    pub fn location(&self) -> Result<Option<GeoPoint>, ParseError> {
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => GeoPoint::new(lat, lon).map(Some),
            _ => Ok(None),
        }
    }
}

/// A persona-day: `{"persona_id", "day", "events": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayRecord {
    pub persona_id: String,
    pub day: u32,
    pub events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    /// Grounding replica number for mapped trajectories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<u32>,
}

impl DayRecord {
    pub fn to_sequence(&self) -> Result<IntentionSequence, ParseError> {
        let events = self
            .events
            .iter()
            .map(|e| {
                Ok(IntentionEvent {
                    window: e.window()?,
                    intention: IntentionType::parse_label(&e.intention)?,
                })
            })
            .collect::<Result<Vec<_>, ParseError>>()?;
        Ok(IntentionSequence {
            persona_id: self.persona_id.clone(),
            day_index: self.day,
            events,
            cap: self.cap,
        })
    }

    /// Fails when any event lacks a POI id or coordinate.
    pub fn to_trajectory(&self) -> Result<Trajectory, String> {
        let points = self
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let location = e
                    .location()
                    .map_err(|err| format!("event {i}: {err}"))?
                    .ok_or_else(|| format!("event {i}: missing lat/lon"))?;
                let poi_id = e.poi_id.clone().ok_or_else(|| format!("event {i}: missing poi_id"))?;
                Ok(TrajectoryPoint {
                    window: e.window().map_err(|err| format!("event {i}: {err}"))?,
                    poi_id,
                    location,
                    intention: IntentionType::parse_label(&e.intention)
                        .map_err(|err| format!("event {i}: {err}"))?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(Trajectory { persona_id: self.persona_id.clone(), day_index: self.day, points })
    }
}

impl From<&IntentionSequence> for DayRecord {
    fn from(seq: &IntentionSequence) -> Self {
        DayRecord {
            persona_id: seq.persona_id.clone(),
            day: seq.day_index,
            events: seq
                .events
                .iter()
                .map(|e| EventRecord {
                    start: format_clock(e.window.start()),
                    end: format_clock(e.window.end()),
                    intention: e.intention.label().to_string(),
                    poi_id: None,
                    lat: None,
                    lon: None,
                })
                .collect(),
            cap: seq.cap,
            replica: None,
        }
    }
}

impl From<&Trajectory> for DayRecord {
    fn from(t: &Trajectory) -> Self {
        DayRecord {
            persona_id: t.persona_id.clone(),
            day: t.day_index,
            events: t
                .points
                .iter()
                .map(|p| EventRecord {
                    start: format_clock(p.window.start()),
                    end: format_clock(p.window.end()),
                    intention: p.intention.label().to_string(),
                    poi_id: Some(p.poi_id.clone()),
                    lat: Some(p.location.lat),
                    lon: Some(p.location.lon),
                })
                .collect(),
            cap: None,
            replica: None,
        }
    }
}

impl EventSeries for DayRecord {
    fn raw_events(&self) -> Vec<RawEvent<'_>> {
        self.events
            .iter()
            .map(|e| RawEvent {
                window: e.window().map_err(|err| err.to_string()),
                label: Cow::Borrowed(e.intention.as_str()),
            })
            .collect()
    }

    fn cap(&self) -> Option<usize> {
        self.cap
    }
}

/// Reads one JSON value per non-blank line, reporting the 1-based line of the first failure.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IoError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut buf = String::new();
    for item in items {
        buf.push_str(&serde_json::to_string(item).expect("record serialization is infallible"));
        buf.push('\n');
    }
    buf
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    write_atomic(path, to_jsonl(items).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_sequence;

    #[test]
    fn record_validation_reports_bad_time_and_label() {
        let rec: DayRecord = serde_json::from_str(
            r#"{"persona_id":"p","day":0,"events":[{"start":"08:70","end":"09:00","intention":"eat"},{"start":"10:00","end":"11:00","intention":"commute"}]}"#,
        )
        .unwrap();
        let v = validate_sequence(&rec).unwrap_err();
        assert_eq!(v.len(), 2);
        assert!(rec.to_sequence().is_err());
    }

    #[test]
    fn trajectory_record_conversion() {
        let line = r#"{"persona_id":"p","day":2,"events":[{"start":"00:00","end":"08:33","intention":"sleep","poi_id":"h","lat":39.9,"lon":116.4}]}"#;
        let rec: DayRecord = serde_json::from_str(line).unwrap();
        let t = rec.to_trajectory().unwrap();
        assert_eq!(t.points[0].intention, IntentionType::Sleep);
        assert_eq!(serde_json::to_string(&DayRecord::from(&t)).unwrap(), line);
        let intention_only: DayRecord = serde_json::from_str(
            r#"{"persona_id":"p","day":2,"events":[{"start":"00:00","end":"08:33","intention":"sleep"}]}"#,
        )
        .unwrap();
        assert!(intention_only.to_trajectory().is_err());
        assert_eq!(intention_only.to_sequence().unwrap().events.len(), 1);
    }

    #[test]
    fn jsonl_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        std::fs::write(&path, "{\"a\":1}\n\n{bad\n").unwrap();
        match read_jsonl::<serde_json::Value>(&path) {
            Err(IoError::Line { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
