#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Temporal interaction graphs and transmission threat scoring for fixed
//! camera scenes.
//!
//! The crate consumes per-frame person, face and handshake detections (the
//! output of upstream detectors and trackers), projects people onto a
//! calibrated floor plane, discovers social groups through spectral
//! clustering with temporal persistence, encodes everything in a time-varying
//! graph and scores each frame with a pairwise threat function.
//!
//! Pipeline order: [`ingest`] → [`tracking`] → [`geometry`] → [`grouping`] →
//! [`graph`] → [`threat`] → [`eval`]. [`pipeline`] wires the stages together
//! and writes the run artifacts; [`synth`] generates scripted test scenes.

pub mod bbox;
pub mod config;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod grouping;
pub mod ingest;
pub mod linalg;
pub mod par;
pub mod pipeline;
pub mod render;
pub mod synth;
pub mod threat;
pub mod tracking;

pub use config::RunConfig;
pub use geometry::{FloorCalibration, FloorPoint, TransformMode};
pub use graph::{FrameGraph, TemporalGraph};
pub use ingest::{DetectionRecord, FrameBundle, Kind, StreamConfig};
pub use par::Execution;
pub use threat::{ThreatParams, ThreatReport};

/// Person (track) identifier.
pub type PersonId = u64;

/// Frame index within a stream.
pub type Frame = u64;

/// Unordered pair of person ids, stored with the smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct Pair(PersonId, PersonId);

impl Pair {
    /// Returns `None` for self-pairs.
    pub fn new(a: PersonId, b: PersonId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Pair(a, b)),
            std::cmp::Ordering::Greater => Some(Pair(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> PersonId {
        self.0
    }

    pub fn hi(&self) -> PersonId {
        self.1
    }

    pub fn contains(&self, id: PersonId) -> bool {
        self.0 == id || self.1 == id
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}
