//! Synthetic daily human mobility generation.
//!
//! The crate is organised the way a run flows:
//!
//! - [`model`]: shared domain types (time windows, intentions, sequences, trajectories, personas)
//!   and the JSON Lines record formats.
//! - [`llm`]: chat-completion backends (live HTTP, scripted transcripts) with retry and token
//!   accounting.
//! - [`workflow`]: the planned-behaviour chain that elicits attitude, routine and perceived
//!   control from a model and decides a day's intentions one step at a time.
//! - [`gravity`]: POI index, ring-density gravity weights and destination sampling that turn
//!   intention sequences into trajectories without further model calls.
//! - [`metrics`]: statistical, semantic and aggregate comparisons between generated and
//!   reference corpora.
//! - [`dataset`]: fine-tuning dataset assembly from logged dialogues.
//! - [`pipeline`]: the command implementations behind the `copb` binary.

// Negated comparisons are how NaN is rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod gravity;
pub mod io;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod workflow;

pub use model::{
    haversine_km, validate_sequence, GeoPoint, IntentionEvent, IntentionSequence, IntentionType, Persona,
    TimeWindow, TpbContext, Trajectory, TrajectoryPoint, Violation,
};
