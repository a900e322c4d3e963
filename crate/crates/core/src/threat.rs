//! Pairwise and per-frame transmission threat.
//!
//! For a pair of people the threat is the sum of the primary probabilities
//! (handshake `p_h`, proximity `p_d`) times `Π (ε_j - q_j)` over the
//! secondary modifiers (mask `q_m`, same group `q_g`):
//!
//! ```text
//! T_pair = (p_h + p_d) · (ε_m - q_m) · (ε_g - q_g)
//! T(t)   = Σ_pairs T_pair
//! ```
//!
//! With `ε_m = 2`, `ε_g = 1` a same-group pair contributes nothing and each
//! pair lies in `[0, 4]`. Only relative changes of `T(t)` carry meaning.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{FrameGraph, TemporalGraph};
use crate::linalg::SquareMatrix;
use crate::par::Execution;
use crate::tracking::MaskState;
use crate::{Frame, Pair, PersonId};

#[derive(Debug, Error, PartialEq)]
#[error("invalid threat parameters: {0}")]
pub struct InvalidParams(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownMaskPolicy {
    /// Unknown masks count as unmasked (`q = 0`).
    #[default]
    WorstCase,
    /// Unknown masks count as `q = 0.5`.
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskAggregation {
    #[default]
    Min,
    Mean,
}

impl std::str::FromStr for UnknownMaskPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "worst_case" => Ok(Self::WorstCase),
            "neutral" => Ok(Self::Neutral),
            _ => Err(format!("unknown mask policy `{s}`")),
        }
    }
}

impl std::str::FromStr for MaskAggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min" => Ok(Self::Min),
            "mean" => Ok(Self::Mean),
            _ => Err(format!("unknown mask aggregation `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatParams {
    pub epsilon_m: f64,
    pub epsilon_g: f64,
    /// `d₀`, meters.
    pub proximity_threshold: f64,
    /// Tail decay beyond `d₀`, 1/m.
    pub beta: f64,
    pub unknown_mask_policy: UnknownMaskPolicy,
    pub mask_aggregation: MaskAggregation,
}

impl Default for ThreatParams {
    fn default() -> Self {
        Self {
            epsilon_m: 2.0,
            epsilon_g: 1.0,
            proximity_threshold: 1.0,
            beta: 1.0,
            unknown_mask_policy: UnknownMaskPolicy::WorstCase,
            mask_aggregation: MaskAggregation::Min,
        }
    }
}

impl ThreatParams {
    pub fn validate(&self) -> Result<(), InvalidParams> {
        if !(self.epsilon_m >= 1.0) || !(self.epsilon_g >= 1.0) {
            return Err(InvalidParams("epsilon values must be >= 1".into()));
        }
        if !(self.proximity_threshold > 0.0) {
            return Err(InvalidParams("proximity_threshold must be positive".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(InvalidParams("beta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub p_d: f64,
    pub p_h: f64,
    pub q_m: f64,
    pub q_g: f64,
}

/// 1 inside `d₀`, exponential decay `exp(-β (d - d₀))` beyond it.
pub fn proximity_probability(distance: f64, params: &ThreatParams) -> f64 {
    let excess = distance - params.proximity_threshold;
    if excess <= 0.0 {
        1.0
    } else {
        (-params.beta * excess).exp()
    }
}

fn mask_value(m: &MaskState, policy: UnknownMaskPolicy) -> f64 {
    match (m, policy) {
        (MaskState::Known { c_mask, .. }, _) => *c_mask,
        (MaskState::Unknown, UnknownMaskPolicy::WorstCase) => 0.0,
        (MaskState::Unknown, UnknownMaskPolicy::Neutral) => 0.5,
    }
}

/// Features for persons `a` and `b` of `graph`. `groups` maps confirmed
/// pairs to their confirmation frame; a pair counts as grouped from that
/// frame on. Returns `None` if either person is not in the frame.
pub fn pair_features(
    graph: &FrameGraph,
    groups: &BTreeMap<Pair, Frame>,
    params: &ThreatParams,
    a: PersonId,
    b: PersonId,
) -> Option<PairFeatures> {
    let va = graph.vertex(a)?;
    let vb = graph.vertex(b)?;
    let pair = Pair::new(a, b)?;
    let distance = va.location.distance(&vb.location);
    let p_h = graph.edges.get(&pair).map_or(0.0, |e| e.confidence);
    let (ma, mb) = (
        mask_value(&va.mask, params.unknown_mask_policy),
        mask_value(&vb.mask, params.unknown_mask_policy),
    );
    let q_m = match params.mask_aggregation {
        MaskAggregation::Min => ma.min(mb),
        MaskAggregation::Mean => 0.5 * (ma + mb),
    };
    let q_g = match groups.get(&pair) {
        Some(&since) if since <= graph.frame => 1.0,
        _ => 0.0,
    };
    Some(PairFeatures {
        p_d: proximity_probability(distance, params),
        p_h,
        q_m,
        q_g,
    })
}

/// `Σ primary · Π (ε_j - q_j)` for arbitrary parameter sets; `secondary`
/// holds `(q_j, ε_j)` pairs.
pub fn generic_pair_threat(primary: &[f64], secondary: &[(f64, f64)]) -> f64 {
    let p: f64 = primary.iter().sum();
    secondary.iter().fold(p, |acc, (q, eps)| acc * (eps - q))
}

pub fn pair_threat(f: &PairFeatures, params: &ThreatParams) -> f64 {
    generic_pair_threat(&[f.p_h, f.p_d], &[(f.q_m, params.epsilon_m), (f.q_g, params.epsilon_g)])
}

/// Per-frame threat with the activity matrices behind it. Matrix rows and
/// columns follow `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreatReport {
    pub frame: Frame,
    pub ids: Vec<PersonId>,
    /// Pairs with nonzero threat.
    pub pair_threat: BTreeMap<Pair, f64>,
    pub total: f64,
    pub n_edges: usize,
    pub distance: SquareMatrix,
    pub group: SquareMatrix,
    pub interaction: SquareMatrix,
    pub threat: SquareMatrix,
}

impl ThreatReport {
    pub fn n_people(&self) -> usize {
        self.ids.len()
    }
}

pub fn frame_threat(graph: &FrameGraph, groups: &BTreeMap<Pair, Frame>, params: &ThreatParams) -> ThreatReport {
    let ids = graph.ids();
    let n = ids.len();
    let mut distance = SquareMatrix::zeros(n);
    let mut group = SquareMatrix::zeros(n);
    let mut interaction = SquareMatrix::zeros(n);
    let mut threat = SquareMatrix::zeros(n);
    let mut pair_threat_map = BTreeMap::new();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (ids[i], ids[j]);
            let f = pair_features(graph, groups, params, a, b).expect("both vertices exist");
            let t = pair_threat(&f, params);
            let d = graph.vertices[i].location.distance(&graph.vertices[j].location);
            let pair = Pair::new(a, b).expect("distinct ids");
            let inter = graph.edges.get(&pair).map_or(0.0, |e| e.binary() as f64);
            for (m, v) in [
                (&mut distance, d),
                (&mut group, f.q_g),
                (&mut interaction, inter),
                (&mut threat, t),
            ] {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            if t != 0.0 {
                pair_threat_map.insert(pair, t);
            }
            total += t;
        }
    }
    ThreatReport {
        frame: graph.frame,
        ids,
        pair_threat: pair_threat_map,
        total,
        n_edges: graph.edges.len(),
        distance,
        group,
        interaction,
        threat,
    }
}

pub fn threat_series(g: &TemporalGraph, params: &ThreatParams) -> Vec<ThreatReport> {
    threat_series_with(g, params, Execution::default())
}

/// Frames are independent, so they may be scored in parallel; the output
/// keeps frame order.
pub fn threat_series_with(g: &TemporalGraph, params: &ThreatParams, exec: Execution) -> Vec<ThreatReport> {
    let frames: Vec<&FrameGraph> = g.frames.values().collect();
    exec.map(&frames, |f| frame_threat(f, &g.confirmed_groups, params))
}

pub const THREAT_CSV_HEADER: &str = "frame,total_threat,n_people,n_edges";

pub fn threat_csv(reports: &[ThreatReport]) -> String {
    let mut out = String::from(THREAT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{},{},{},{}", r.frame, r.total, r.n_people(), r.n_edges);
    }
    out
}

/// Reads `frame → total_threat` back from [`threat_csv`] output.
pub fn parse_threat_csv(text: &str) -> Result<BTreeMap<Frame, f64>, String> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("frame")) {
            continue;
        }
        let mut cols = line.split(',');
        let bad = || format!("line {}: expected `{THREAT_CSV_HEADER}`", idx + 1);
        let frame: Frame = cols.next().and_then(|c| c.trim().parse().ok()).ok_or_else(bad)?;
        let total: f64 = cols.next().and_then(|c| c.trim().parse().ok()).ok_or_else(bad)?;
        out.insert(frame, total);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivityMatrix {
    Distance,
    Group,
    Interaction,
    Threat,
}

impl ActivityMatrix {
    pub const ALL: [ActivityMatrix; 4] = [Self::Distance, Self::Group, Self::Interaction, Self::Threat];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Distance => "distance",
            Self::Group => "group",
            Self::Interaction => "interaction",
            Self::Threat => "threat",
        }
    }

    pub fn of<'a>(&self, r: &'a ThreatReport) -> &'a SquareMatrix {
        match self {
            Self::Distance => &r.distance,
            Self::Group => &r.group,
            Self::Interaction => &r.interaction,
            Self::Threat => &r.threat,
        }
    }
}

/// Per-frame CSV blocks: a `frame,<t>,ids,<id;id;..>` line followed by one
/// comma-separated row per person. Frames without people are skipped.
pub fn matrix_blocks_csv(reports: &[ThreatReport], which: ActivityMatrix) -> String {
    let mut out = String::new();
    for r in reports.iter().filter(|r| !r.ids.is_empty()) {
        let ids: Vec<String> = r.ids.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "frame,{},ids,{}", r.frame, ids.join(";"));
        let m = which.of(r);
        for i in 0..m.dim() {
            let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
    }
    out
}
