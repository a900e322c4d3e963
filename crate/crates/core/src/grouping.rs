//! Social group discovery: distance → affinity, per-frame spectral
//! clustering, and temporal persistence of co-membership.
//!
//! A pair becomes a confirmed group once it has been co-clustered for
//! `round(tau_seconds * fps)` consecutive frames. Frames with at most
//! `naive_mode_max_people` people instead confirm a pair once it has been
//! co-visible for that same window and spent at least
//! `naive_threshold_fraction` of its co-visible frames within
//! `proximity_radius`. Confirmation is permanent for the stream.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::DistanceMatrix;
use crate::linalg::{jacobi_eigen, SquareMatrix};
use crate::{Frame, Pair, PersonId};

pub const MAX_AUTO_CLUSTERS: usize = 8;
const KMEANS_MAX_ITER: usize = 100;
const KMEANS_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GroupingError {
    #[error("frame {got} arrived after frame {last}")]
    OutOfOrderFrame { got: Frame, last: Frame },
    #[error("invalid grouping configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClusterCount {
    #[default]
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for ClusterCount {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Self::Fixed(k)),
            _ => Err(format!("cluster_count must be `auto` or a positive integer, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingConfig {
    /// Affinity scale, 1/m.
    pub alpha: f64,
    pub tau_seconds: f64,
    pub naive_threshold_fraction: f64,
    pub naive_mode_max_people: usize,
    /// Meters.
    pub proximity_radius: f64,
    pub cluster_count: ClusterCount,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            tau_seconds: 10.0,
            naive_threshold_fraction: 0.20,
            naive_mode_max_people: 6,
            proximity_radius: 1.0,
            cluster_count: ClusterCount::Auto,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<(), GroupingError> {
        let bad = |m: &str| Err(GroupingError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.tau_seconds > 0.0) {
            return bad("tau_seconds must be positive");
        }
        if !(0.0..=1.0).contains(&self.naive_threshold_fraction) {
            return bad("naive_threshold_fraction must be in [0, 1]");
        }
        if !(self.proximity_radius > 0.0) {
            return bad("proximity_radius must be positive");
        }
        Ok(())
    }

    /// Consecutive frames a pair must persist, at least one.
    pub fn persistence_frames(&self, fps: f64) -> u64 {
        let f = (self.tau_seconds * fps).round();
        if f >= u64::MAX as f64 {
            u64::MAX
        } else {
            (f as u64).max(1)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub ids: Vec<PersonId>,
    pub a: SquareMatrix,
}

/// Elementwise `exp(-alpha * d)` with an exact unit diagonal.
pub fn affinity_from_distance(dm: &DistanceMatrix, alpha: f64) -> AffinityMatrix {
    let n = dm.len();
    let a = SquareMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { (-alpha * dm.d[(i, j)]).exp() });
    AffinityMatrix { ids: dm.ids.clone(), a }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub frame: Frame,
    /// Person id → cluster id; cluster ids are contiguous from 0 and numbered
    /// in order of first appearance along the affinity matrix rows.
    pub labels: BTreeMap<PersonId, usize>,
}

impl ClusterAssignment {
    pub fn same_cluster(&self, a: PersonId, b: PersonId) -> bool {
        matches!((self.labels.get(&a), self.labels.get(&b)), (Some(x), Some(y)) if x == y)
    }

    pub fn cluster_count(&self) -> usize {
        self.labels.values().max().map_or(0, |m| m + 1)
    }
}

/// Normalized-Laplacian spectral clustering with deterministic k-means.
pub fn spectral_cluster(aff: &AffinityMatrix, k: ClusterCount, frame: Frame) -> ClusterAssignment {
    let labels = spectral_labels(&aff.a, k);
    ClusterAssignment {
        frame,
        labels: aff.ids.iter().copied().zip(labels).collect(),
    }
}

/// Cluster labels for the rows of a symmetric affinity matrix.
pub fn spectral_labels(a: &SquareMatrix, k: ClusterCount) -> Vec<usize> {
    let n = a.dim();
    if n <= 1 {
        return vec![0; n];
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let lap = SquareMatrix::from_fn(n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt_deg[i] * a[(i, j)] * inv_sqrt_deg[j]
    });
    let eig = jacobi_eigen(&lap);

    let k = match k {
        ClusterCount::Fixed(k) => k.clamp(1, n),
        ClusterCount::Auto => eigengap_k(&eig.values),
    };
    if k == 1 {
        return vec![0; n];
    }

    let mut embedding: Vec<Vec<f64>> = (0..n).map(|i| (0..k).map(|c| eig.vectors[(i, c)]).collect()).collect();
    for row in &mut embedding {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    relabel_by_first_appearance(&kmeans(&embedding, k))
}

/// Number of clusters maximizing the gap `λ_{k+1} - λ_k` (eigenvalues
/// ascending, 1-based) over `k ∈ [1, min(n, 8)]`. For `k = n` the missing
/// `λ_{n+1}` is taken as 1, the nonzero eigenvalue of a fully connected
/// cluster.
pub fn eigengap_k(values: &[f64]) -> usize {
    let n = values.len();
    let kmax = n.min(MAX_AUTO_CLUSTERS);
    let mut best = (1, f64::NEG_INFINITY);
    for k in 1..=kmax {
        let next = if k < n { values[k] } else { 1.0 };
        let gap = next - values[k - 1];
        if gap > best.1 {
            best = (k, gap);
        }
    }
    best.0
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Lloyd iterations from farthest-point seeding starting at row 0. Ties go
/// to the lowest index everywhere.
fn kmeans(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut centers = vec![points[0].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[0])).collect();
    while centers.len() < k {
        let (idx, _) = min_d.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &d)| if d > best.1 { (i, d) } else { best },
        );
        centers.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(p, &points[idx]));
        }
    }

    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut moved: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            moved = moved.max(sq_dist(&new, &centers[c]).sqrt());
            centers[c] = new;
        }
        labels = points.iter().map(|p| nearest(p, &centers)).collect();
        if moved < KMEANS_TOL {
            break;
        }
    }
    labels
}

fn relabel_by_first_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Temporal group bookkeeping for one stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupState {
    pub run_lengths: BTreeMap<Pair, u64>,
    /// Confirmed pair → frame at which it was confirmed.
    pub confirmed: BTreeMap<Pair, Frame>,
    pub proximity_counts: BTreeMap<Pair, u64>,
    pub frames_observed: BTreeMap<Pair, u64>,
    pub last_frame: Option<Frame>,
}

impl GroupState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds in one frame's clustering and distances.
    pub fn update(
        &mut self,
        assignment: &ClusterAssignment,
        dm: &DistanceMatrix,
        config: &GroupingConfig,
        fps: f64,
    ) -> Result<(), GroupingError> {
        let frame = assignment.frame;
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(GroupingError::OutOfOrderFrame { got: frame, last });
            }
        }
        self.last_frame = Some(frame);

        let required = config.persistence_frames(fps);
        let naive = dm.len() <= config.naive_mode_max_people;
        let mut runs = BTreeMap::new();
        for i in 0..dm.len() {
            for j in i + 1..dm.len() {
                let Some(pair) = Pair::new(dm.ids[i], dm.ids[j]) else {
                    continue;
                };
                let run = if assignment.same_cluster(dm.ids[i], dm.ids[j]) {
                    self.run_lengths.get(&pair).copied().unwrap_or(0) + 1
                } else {
                    0
                };
                runs.insert(pair, run);

                let observed = self.frames_observed.entry(pair).or_insert(0);
                *observed += 1;
                let observed = *observed;
                let close = self.proximity_counts.entry(pair).or_insert(0);
                if dm.d[(i, j)] <= config.proximity_radius {
                    *close += 1;
                }
                let close = *close;

                if self.confirmed.contains_key(&pair) {
                    continue;
                }
                let confirm = if naive {
                    observed >= required && close as f64 / observed as f64 >= config.naive_threshold_fraction
                } else {
                    run >= required
                };
                if confirm {
                    self.confirmed.insert(pair, frame);
                }
            }
        }
        // pairs not co-visible this frame lose their run
        self.run_lengths = runs;
        Ok(())
    }

    /// `q_g`: 1 when the pair has been confirmed as a group, else 0.
    pub fn group_indicator(&self, a: PersonId, b: PersonId) -> u8 {
        Pair::new(a, b).map_or(0, |p| self.confirmed.contains_key(&p) as u8)
    }
}
