//! Domain types shared by every stage: geometry, time windows, the intention vocabulary,
//! sequences, trajectories, personas and the planned-behaviour context.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Mean Earth radius used for every distance in the crate.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Last minute of the day, `23:59`.
pub const LAST_MINUTE: u16 = 1439;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("malformed time window {text:?}: expected \"(HH:MM, HH:MM)\"")]
    WindowShape { text: String },
    #[error("invalid clock token {token:?}")]
    Clock { token: String },
    #[error("time window {text:?} ends before it starts")]
    Backward { text: String },
    #[error("unknown intention label {label:?}")]
    UnknownIntention { label: String },
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    Coordinate { lat: f64, lon: f64 },
}

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeoPoint")]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeoPoint> for GeoPoint {
    type Error = ParseError;

    fn try_from(raw: RawGeoPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, ParseError> {
        if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
            Ok(Self { lat, lon })
        } else {
            Err(ParseError::Coordinate { lat, lon })
        }
    }
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// A closed interval of minutes within one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeWindow {
    start: u16,
    end: u16,
}

impl TimeWindow {
    pub fn new(start: u16, end: u16) -> Option<Self> {
        (start <= end && end <= LAST_MINUTE).then_some(Self { start, end })
    }

    pub fn start(&self) -> u16 {
        self.start
    }

    pub fn end(&self) -> u16 {
        self.end
    }

    pub fn duration_minutes(&self) -> u16 {
        self.end - self.start
    }

    /// Builds a window from two clock readings, clipping an overnight span at `23:59`.
    ///
    /// Returns the part that falls on the current day and whether clipping happened.
    pub fn clip_overnight(start: u16, end: u16) -> Option<(Self, bool)> {
        if start > LAST_MINUTE || end > LAST_MINUTE {
            return None;
        }
        if end < start {
            Some((Self { start, end: LAST_MINUTE }, true))
        } else {
            Some((Self { start, end }, false))
        }
    }
}

/// Parses `HH:MM` into minutes of day.
pub fn parse_clock(token: &str) -> Result<u16, ParseError> {
    let bad = || ParseError::Clock { token: token.to_string() };
    let (h, m) = token.trim().split_once(':').ok_or_else(bad)?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return Err(bad());
    }
    let h: u16 = h.parse().map_err(|_| bad())?;
    let m: u16 = m.parse().map_err(|_| bad())?;
    if h > 23 || m > 59 {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

pub fn format_clock(minutes: u16) -> String {
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

/// Parses `"(HH:MM, HH:MM)"`, tolerating arbitrary whitespace.
pub fn parse_time_window(text: &str) -> Result<TimeWindow, ParseError> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let inner = compact
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| ParseError::WindowShape { text: text.to_string() })?;
    let mut parts = inner.split(',');
    let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(ParseError::WindowShape { text: text.to_string() });
    };
    let start = parse_clock(a)?;
    let end = parse_clock(b)?;
    TimeWindow::new(start, end).ok_or_else(|| ParseError::Backward { text: text.to_string() })
}

pub fn format_time_window(w: &TimeWindow) -> String {
    w.to_string()
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", format_clock(self.start), format_clock(self.end))
    }
}

impl FromStr for TimeWindow {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_time_window(s)
    }
}

/// The closed vocabulary of daily intentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntentionType {
    GoToWork,
    GoHome,
    Eat,
    DoShopping,
    DoSports,
    Excursion,
    LeisureOrEntertainment,
    Sleep,
    MedicalTreatment,
    HandleTrivialities,
}

impl IntentionType {
    pub const ALL: [IntentionType; 10] = [
        IntentionType::GoToWork,
        IntentionType::GoHome,
        IntentionType::Eat,
        IntentionType::DoShopping,
        IntentionType::DoSports,
        IntentionType::Excursion,
        IntentionType::LeisureOrEntertainment,
        IntentionType::Sleep,
        IntentionType::MedicalTreatment,
        IntentionType::HandleTrivialities,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IntentionType::GoToWork => "go to work",
            IntentionType::GoHome => "go home",
            IntentionType::Eat => "eat",
            IntentionType::DoShopping => "do shopping",
            IntentionType::DoSports => "do sports",
            IntentionType::Excursion => "excursion",
            IntentionType::LeisureOrEntertainment => "leisure or entertainment",
            IntentionType::Sleep => "sleep",
            IntentionType::MedicalTreatment => "medical treatment",
            IntentionType::HandleTrivialities => "handle the trivialities of life",
        }
    }

    /// Position in [`IntentionType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Matches a label after lowercasing, trimming and collapsing whitespace.
    ///
    /// `"go to sleep"` is accepted as a spelling of `sleep`; nothing else is fuzzy.
    pub fn parse_label(text: &str) -> Result<Self, ParseError> {
        let norm = normalize_label(text);
        let lookup = if norm == "go to sleep" { "sleep" } else { norm.as_str() };
        IntentionType::ALL
            .into_iter()
            .find(|i| i.label() == lookup)
            .ok_or(ParseError::UnknownIntention { label: text.to_string() })
    }
}

pub fn normalize_label(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl fmt::Display for IntentionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IntentionType {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IntentionType::parse_label(s)
    }
}

impl Serialize for IntentionType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for IntentionType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = Cow::<str>::deserialize(deserializer)?;
        IntentionType::parse_label(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntentionEvent {
    pub window: TimeWindow,
    pub intention: IntentionType,
}

/// One persona-day of timed intentions, before spatial grounding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntentionSequence {
    pub persona_id: String,
    pub day_index: u32,
    pub events: Vec<IntentionEvent>,
    /// Upper limit on the event count sampled before generation; unknown for loaded data.
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub window: TimeWindow,
    pub poi_id: String,
    pub location: GeoPoint,
    pub intention: IntentionType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub persona_id: String,
    pub day_index: u32,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn intentions(&self) -> IntentionSequence {
        IntentionSequence {
            persona_id: self.persona_id.clone(),
            day_index: self.day_index,
            events: self
                .points
                .iter()
                .map(|p| IntentionEvent { window: p.window, intention: p.intention })
                .collect(),
            cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub id: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    pub home: GeoPoint,
    pub home_region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work: Option<GeoPoint>,
}

impl Persona {
    /// Attribute values in key order, used for profile-group matching.
    pub fn attribute_key(&self) -> Vec<(String, String)> {
        self.attributes.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

/// Attitude, routine and perceived behavioural control threaded through one generation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TpbContext {
    pub attitude: Vec<String>,
    pub routine: Vec<String>,
    pub pbc: BTreeMap<IntentionType, f64>,
}

impl TpbContext {
    pub fn new(attitude: Vec<String>, routine: Vec<String>) -> Self {
        Self { attitude, routine, pbc: BTreeMap::new() }
    }

    /// Replaces the perceived-control map, clamping every likelihood into `[0, 1]`.
    pub fn update_pbc(&mut self, pbc: BTreeMap<IntentionType, f64>) {
        self.pbc = pbc.into_iter().map(|(k, v)| (k, v.clamp(0.0, 1.0))).collect();
    }
}

/// One event as seen by the validator: the window may have failed to parse and the label is
/// not yet checked against the vocabulary.
#[derive(Debug, Clone)]
pub struct RawEvent<'a> {
    pub window: Result<TimeWindow, String>,
    pub label: Cow<'a, str>,
}

/// Anything that can be checked with [`validate_sequence`].
pub trait EventSeries {
    fn raw_events(&self) -> Vec<RawEvent<'_>>;
    fn cap(&self) -> Option<usize> {
        None
    }
}

impl EventSeries for IntentionSequence {
    fn raw_events(&self) -> Vec<RawEvent<'_>> {
        self.events
            .iter()
            .map(|e| RawEvent { window: Ok(e.window), label: Cow::Borrowed(e.intention.label()) })
            .collect()
    }

    fn cap(&self) -> Option<usize> {
        self.cap
    }
}

impl EventSeries for Trajectory {
    fn raw_events(&self) -> Vec<RawEvent<'_>> {
        self.points
            .iter()
            .map(|p| RawEvent { window: Ok(p.window), label: Cow::Borrowed(p.intention.label()) })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    #[error("event {index}: malformed time ({detail})")]
    MalformedTime { index: usize, detail: String },
    #[error("event {index}: unknown intention label {label:?}")]
    UnknownLabel { index: usize, label: String },
    #[error("event {index} starts before event {previous}")]
    Disorder { index: usize, previous: usize },
    #[error("event {index} overlaps event {previous}")]
    Overlap { index: usize, previous: usize },
    #[error("{len} events exceed the cap of {cap}")]
    CapExceeded { len: usize, cap: usize },
}

/// Collects every invariant violation of a sequence; `Ok` iff there are none.
///
/// Consecutive windows may touch (`next.start == prev.end`) but not overlap. Gaps are allowed.
pub fn validate_sequence<S: EventSeries + ?Sized>(seq: &S) -> Result<(), Vec<Violation>> {
    let events = seq.raw_events();
    let mut violations = Vec::new();
    let mut previous: Option<(usize, TimeWindow)> = None;
    for (index, ev) in events.iter().enumerate() {
        if IntentionType::parse_label(&ev.label).is_err() {
            violations.push(Violation::UnknownLabel { index, label: ev.label.to_string() });
        }
        let window = match &ev.window {
            Ok(w) => *w,
            Err(detail) => {
                violations.push(Violation::MalformedTime { index, detail: detail.clone() });
                continue;
            }
        };
        if let Some((prev_index, prev)) = previous {
            if window.start < prev.start {
                violations.push(Violation::Disorder { index, previous: prev_index });
            } else if window.start < prev.end {
                violations.push(Violation::Overlap { index, previous: prev_index });
            }
        }
        previous = Some((index, window));
    }
    if let Some(cap) = seq.cap() {
        if events.len() > cap {
            violations.push(Violation::CapExceeded { len: events.len(), cap });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
