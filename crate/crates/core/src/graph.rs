//! Time-varying interaction graph `G(t) = (V(t), E(t))` and its file format.
//!
//! File layout (see `docs/graph-format.md`):
//!
//! ```text
//! threatgraph-v1\t{"stream_id":..,"fps":..,"confirmed_groups":[..]}
//! {"frame":0,"vertices":[..],"edges":[..]}
//! {"frame":1,"vertices":[..],"edges":[..]}
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::FloorPoint;
use crate::grouping::ClusterAssignment;
use crate::tracking::{MaskState, PairEvent};
use crate::{Frame, Pair, PersonId};

pub const SCHEMA_VERSION: &str = "threatgraph-v1";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema mismatch: expected `{SCHEMA_VERSION}`, found `{0}`")]
    SchemaMismatch(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexAttributes {
    pub location: FloorPoint,
    pub mask: MaskState,
    pub group_label: Option<usize>,
}

impl VertexAttributes {
    pub fn person_id(&self) -> PersonId {
        self.location.person_id
    }
}

/// Edge payload. `present` is always 1 for stored edges; absent pairs have no
/// entry at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub present: u8,
    pub confidence: f64,
}

impl Edge {
    /// 0/1 interaction indicator, thresholding confidence at 0.5.
    pub fn binary(&self) -> u8 {
        (self.present == 1 && self.confidence >= 0.5) as u8
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameGraph {
    pub frame: Frame,
    /// Sorted by person id.
    pub vertices: Vec<VertexAttributes>,
    pub edges: BTreeMap<Pair, Edge>,
}

impl FrameGraph {
    pub fn empty(frame: Frame) -> Self {
        Self {
            frame,
            vertices: Vec::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn vertex(&self, id: PersonId) -> Option<&VertexAttributes> {
        self.vertices
            .binary_search_by_key(&id, |v| v.person_id())
            .ok()
            .map(|i| &self.vertices[i])
    }

    pub fn ids(&self) -> Vec<PersonId> {
        self.vertices.iter().map(|v| v.person_id()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraph {
    pub stream_id: String,
    pub fps: f64,
    pub frames: BTreeMap<Frame, FrameGraph>,
    /// Confirmed pair → frame of confirmation.
    pub confirmed_groups: BTreeMap<Pair, Frame>,
}

impl TemporalGraph {
    pub fn new(stream_id: impl Into<String>, fps: f64) -> Self {
        Self {
            stream_id: stream_id.into(),
            fps,
            frames: BTreeMap::new(),
            confirmed_groups: BTreeMap::new(),
        }
    }

    /// Group indicator for a pair as of `frame`.
    pub fn same_group(&self, a: PersonId, b: PersonId, frame: Frame) -> bool {
        Pair::new(a, b)
            .and_then(|p| self.confirmed_groups.get(&p))
            .is_some_and(|&since| since <= frame)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildStats {
    pub dangling_edges: usize,
}

/// Assembles one frame: a vertex per located person, an edge per pair event.
/// Events naming a person absent from `persons` are dropped and counted.
pub fn build_frame_graph(
    frame: Frame,
    persons: &[FloorPoint],
    masks: &BTreeMap<PersonId, MaskState>,
    events: &[PairEvent],
    clusters: &ClusterAssignment,
) -> (FrameGraph, BuildStats) {
    let mut vertices: Vec<VertexAttributes> = persons
        .iter()
        .map(|p| VertexAttributes {
            location: *p,
            mask: masks.get(&p.person_id).copied().unwrap_or(MaskState::Unknown),
            group_label: clusters.labels.get(&p.person_id).copied(),
        })
        .collect();
    vertices.sort_by_key(|v| v.person_id());

    let mut g = FrameGraph {
        frame,
        vertices,
        edges: BTreeMap::new(),
    };
    let mut stats = BuildStats::default();
    for ev in events {
        if g.vertex(ev.pair.lo()).is_none() || g.vertex(ev.pair.hi()).is_none() {
            stats.dangling_edges += 1;
            continue;
        }
        let e = g.edges.entry(ev.pair).or_insert(Edge {
            present: 1,
            confidence: ev.confidence,
        });
        e.confidence = e.confidence.max(ev.confidence);
    }
    if stats.dangling_edges > 0 {
        log::warn!(
            "frame {frame}: {} edge(s) reference untracked persons",
            stats.dangling_edges
        );
    }
    (g, stats)
}

// Wire structs; field order here is the on-disk order.

#[derive(Serialize, Deserialize)]
struct WireHeader {
    stream_id: String,
    fps: f64,
    confirmed_groups: Vec<WireGroup>,
}

#[derive(Serialize, Deserialize)]
struct WireGroup {
    a: PersonId,
    b: PersonId,
    since: Frame,
}

#[derive(Serialize, Deserialize)]
struct WireFrame {
    frame: Frame,
    vertices: Vec<WireVertex>,
    edges: Vec<WireEdge>,
}

#[derive(Serialize, Deserialize)]
struct WireVertex {
    id: PersonId,
    x: f64,
    y: f64,
    mask: Option<[f64; 2]>,
    group: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct WireEdge {
    a: PersonId,
    b: PersonId,
    present: u8,
    confidence: f64,
}

fn to_wire(g: &FrameGraph) -> WireFrame {
    WireFrame {
        frame: g.frame,
        vertices: g
            .vertices
            .iter()
            .map(|v| WireVertex {
                id: v.person_id(),
                x: v.location.x,
                y: v.location.y,
                mask: match v.mask {
                    MaskState::Known { c_mask, c_nomask } => Some([c_mask, c_nomask]),
                    MaskState::Unknown => None,
                },
                group: v.group_label,
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|(p, e)| WireEdge {
                a: p.lo(),
                b: p.hi(),
                present: e.present,
                confidence: e.confidence,
            })
            .collect(),
    }
}

fn from_wire(w: WireFrame, line: usize) -> Result<FrameGraph, GraphError> {
    let malformed = |reason: String| GraphError::Malformed { line, reason };
    let mut vertices: Vec<VertexAttributes> = w
        .vertices
        .into_iter()
        .map(|v| VertexAttributes {
            location: FloorPoint {
                x: v.x,
                y: v.y,
                person_id: v.id,
                frame: w.frame,
            },
            mask: match v.mask {
                Some([c_mask, c_nomask]) => MaskState::Known { c_mask, c_nomask },
                None => MaskState::Unknown,
            },
            group_label: v.group,
        })
        .collect();
    vertices.sort_by_key(|v| v.person_id());
    let mut g = FrameGraph {
        frame: w.frame,
        vertices,
        edges: BTreeMap::new(),
    };
    for e in w.edges {
        let pair = Pair::new(e.a, e.b).ok_or_else(|| malformed(format!("self-loop on {}", e.a)))?;
        if g.vertex(e.a).is_none() || g.vertex(e.b).is_none() {
            return Err(malformed(format!("edge {pair} references a missing vertex")));
        }
        g.edges.insert(
            pair,
            Edge {
                present: e.present,
                confidence: e.confidence,
            },
        );
    }
    Ok(g)
}

pub fn write_graph<W: Write>(g: &TemporalGraph, mut out: W) -> std::io::Result<()> {
    let header = WireHeader {
        stream_id: g.stream_id.clone(),
        fps: g.fps,
        confirmed_groups: g
            .confirmed_groups
            .iter()
            .map(|(p, &since)| WireGroup {
                a: p.lo(),
                b: p.hi(),
                since,
            })
            .collect(),
    };
    writeln!(out, "{SCHEMA_VERSION}\t{}", serde_json::to_string(&header)?)?;
    for f in g.frames.values() {
        writeln!(out, "{}", serde_json::to_string(&to_wire(f))?)?;
    }
    Ok(())
}

pub fn read_graph<R: BufRead>(input: R) -> Result<TemporalGraph, GraphError> {
    let mut lines = input.lines().enumerate();
    let io = |source| GraphError::Io {
        path: PathBuf::from("<reader>"),
        source,
    };
    let (_, first) = lines.next().ok_or_else(|| GraphError::SchemaMismatch(String::new()))?;
    let first = first.map_err(io)?;
    let (version, meta) = first.split_once('\t').unwrap_or((first.as_str(), ""));
    if version != SCHEMA_VERSION {
        return Err(GraphError::SchemaMismatch(version.to_string()));
    }
    let header: WireHeader = serde_json::from_str(meta).map_err(|e| GraphError::Malformed {
        line: 1,
        reason: e.to_string(),
    })?;
    let mut g = TemporalGraph::new(header.stream_id, header.fps);
    for wg in header.confirmed_groups {
        let pair = Pair::new(wg.a, wg.b).ok_or_else(|| GraphError::Malformed {
            line: 1,
            reason: format!("group self-pair on {}", wg.a),
        })?;
        g.confirmed_groups.insert(pair, wg.since);
    }
    let mut last: Option<Frame> = None;
    for (idx, line) in lines {
        let line = line.map_err(io)?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireFrame = serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        if last.is_some_and(|l| wire.frame <= l) {
            return Err(GraphError::Malformed {
                line: line_no,
                reason: format!("frame {} is not after frame {}", wire.frame, last.unwrap_or(0)),
            });
        }
        last = Some(wire.frame);
        let fg = from_wire(wire, line_no)?;
        g.frames.insert(fg.frame, fg);
    }
    Ok(g)
}

pub fn serialize_graph(g: &TemporalGraph, path: &Path) -> Result<(), GraphError> {
    let io = |source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    write_graph(g, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

pub fn deserialize_graph(path: &Path) -> Result<TemporalGraph, GraphError> {
    let file = std::fs::File::open(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_graph(BufReader::new(file))
}
