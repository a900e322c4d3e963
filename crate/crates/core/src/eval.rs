//! Evaluation harness: average precision for ingested detections and the
//! frame-pair threat-direction protocol against expert votes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::bbox::BoxGeom;
use crate::ingest::{self, DetectionRecord, IngestError, Kind, StreamConfig};
use crate::threat::ThreatReport;
use crate::Frame;

pub const DEFAULT_MAJORITY: f64 = 0.70;
pub const LABEL_CSV_HEADER: &str = "t1,t2,votes_increase,votes_decrease";
pub const GROUND_TRUTH_HEADER: &str = "frame,kind,u,v,r,h,conf_a,conf_b,track_id,class";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth is empty, AP is undefined")]
    EmptyGroundTruth,
    #[error("no class has a defined AP")]
    NoDefinedClasses,
    #[error("frame {0} is not in the threat series")]
    MissingFrame(Frame),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// A detection with the score used for ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub frame: Frame,
    pub geom: BoxGeom,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub frame: Frame,
    pub geom: BoxGeom,
}

/// All-point interpolated AP. Detections are ranked by descending score
/// (stable for ties) and each is matched to the unmatched ground-truth box
/// of its frame with the highest IoU, if that IoU reaches `iou_threshold`.
pub fn compute_ap(detections: &[ScoredBox], ground_truth: &[GtBox], iou_threshold: f64) -> Result<f64, EvalError> {
    if ground_truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let mut gt_by_frame: BTreeMap<Frame, Vec<(BoxGeom, bool)>> = BTreeMap::new();
    for g in ground_truth {
        gt_by_frame.entry(g.frame).or_default().push((g.geom, false));
    }
    let mut order: Vec<&ScoredBox> = detections.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let total_gt = ground_truth.len() as f64;
    let mut tp = 0usize;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(order.len()); // (recall, precision)
    for (rank, det) in order.iter().enumerate() {
        if let Some(cands) = gt_by_frame.get_mut(&det.frame) {
            let best = cands
                .iter()
                .enumerate()
                .filter(|(_, (_, used))| !used)
                .map(|(i, (g, _))| (i, g.iou(&det.geom)))
                .fold(None, |best: Option<(usize, f64)>, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            if let Some((i, iou)) = best {
                if iou >= iou_threshold && iou > 0.0 {
                    cands[i].1 = true;
                    tp += 1;
                }
            }
        }
        points.push((tp as f64 / total_gt, tp as f64 / (rank + 1) as f64));
    }

    // precision envelope, right to left
    let mut envelope = vec![0.0; points.len()];
    let mut running: f64 = 0.0;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].1);
        envelope[i] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, (recall, _)) in points.iter().enumerate() {
        ap += (recall - prev_recall) * envelope[i];
        prev_recall = *recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanAp {
    pub map: f64,
    pub undefined_classes: Vec<String>,
}

/// Arithmetic mean over classes whose AP is defined.
pub fn compute_map(per_class: &BTreeMap<String, Option<f64>>) -> Result<MeanAp, EvalError> {
    let defined: Vec<f64> = per_class.values().flatten().copied().collect();
    if defined.is_empty() {
        return Err(EvalError::NoDefinedClasses);
    }
    let undefined_classes: Vec<String> = per_class
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| k.clone())
        .collect();
    if !undefined_classes.is_empty() {
        log::warn!(
            "AP undefined for {:?}; averaging the remaining classes",
            undefined_classes
        );
    }
    Ok(MeanAp {
        map: defined.iter().sum::<f64>() / defined.len() as f64,
        undefined_classes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    pub record: DetectionRecord,
    pub class: String,
}

pub fn parse_ground_truth(path: &Path, cfg: &StreamConfig) -> Result<Vec<GroundTruthRecord>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ground_truth_str(&text, cfg)
}

/// Detection CSV plus a trailing `class` column. An empty class defaults to
/// the record kind.
pub fn parse_ground_truth_str(text: &str, cfg: &StreamConfig) -> Result<Vec<GroundTruthRecord>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (idx, result) in reader.records().enumerate() {
        let record = result.map_err(|e| IngestError::MalformedLine {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        if idx == 0 && record.get(0) == Some("frame") {
            continue;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let rec = ingest::parse_record(&record, line, 10)?;
        rec.validate(cfg, line)?;
        let class = match record.get(9).unwrap_or("") {
            "" => rec.kind.as_str().to_string(),
            c => c.to_string(),
        };
        out.push(GroundTruthRecord { record: rec, class });
    }
    Ok(out)
}

/// Class a detection votes for: faces by the larger mask confidence (ties
/// to `masked`), everything else by kind.
pub fn detection_class(rec: &DetectionRecord) -> (&'static str, f64) {
    match rec.kind {
        Kind::Face => {
            let nomask = rec.conf_b.unwrap_or(0.0);
            if rec.conf_a >= nomask {
                ("masked", rec.conf_a)
            } else {
                ("unmasked", nomask)
            }
        }
        k => (k.as_str(), rec.conf_a),
    }
}

/// AP per ground-truth class (`None` where undefined) and their mean.
pub fn per_class_ap<'a>(
    detections: impl IntoIterator<Item = &'a DetectionRecord>,
    ground_truth: &[GroundTruthRecord],
    iou_threshold: f64,
) -> BTreeMap<String, Option<f64>> {
    let mut dets: BTreeMap<String, Vec<ScoredBox>> = BTreeMap::new();
    for d in detections {
        let (class, score) = detection_class(d);
        dets.entry(class.to_string()).or_default().push(ScoredBox {
            frame: d.frame,
            geom: d.geom(),
            score,
        });
    }
    let mut gts: BTreeMap<String, Vec<GtBox>> = BTreeMap::new();
    for g in ground_truth {
        gts.entry(g.class.clone()).or_default().push(GtBox {
            frame: g.record.frame,
            geom: g.record.geom(),
        });
    }
    let classes: std::collections::BTreeSet<&String> = gts.keys().chain(dets.keys()).collect();
    classes
        .into_iter()
        .map(|c| {
            let ap = compute_ap(
                dets.get(c).map(Vec::as_slice).unwrap_or(&[]),
                gts.get(c).map(Vec::as_slice).unwrap_or(&[]),
                iou_threshold,
            )
            .ok();
            (c.clone(), ap)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increase,
    Decrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePairLabel {
    pub t1: Frame,
    pub t2: Frame,
    pub votes_increase: u32,
    pub votes_decrease: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeptLabel {
    pub t1: Frame,
    pub t2: Frame,
    pub direction: Direction,
}

pub fn parse_labels(path: &Path) -> Result<Vec<FramePairLabel>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_labels_str(&text)
}

/// `t1,t2,votes_increase,votes_decrease`, header optional.
pub fn parse_labels_str(text: &str) -> Result<Vec<FramePairLabel>, EvalError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("t1")) {
            continue;
        }
        let malformed = |reason: &str| IngestError::MalformedLine {
            line: idx as u64 + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(malformed("expected `t1,t2,votes_increase,votes_decrease`").into());
        }
        let frame = |s: &str| s.parse::<Frame>().map_err(|_| malformed("bad frame index"));
        let votes = |s: &str| s.parse::<u32>().map_err(|_| malformed("bad vote count"));
        let label = FramePairLabel {
            t1: frame(f[0])?,
            t2: frame(f[1])?,
            votes_increase: votes(f[2])?,
            votes_decrease: votes(f[3])?,
        };
        if label.votes_increase + label.votes_decrease == 0 {
            return Err(malformed("a frame pair needs at least one vote").into());
        }
        out.push(label);
    }
    Ok(out)
}

/// Keeps pairs whose majority share reaches `threshold` (inclusive). Exact
/// vote ties have no majority direction and are always excluded.
pub fn filter_by_majority(labels: &[FramePairLabel], threshold: f64) -> (Vec<KeptLabel>, usize) {
    let mut kept = Vec::new();
    let mut excluded = 0;
    for l in labels {
        let total = (l.votes_increase + l.votes_decrease) as f64;
        let top = l.votes_increase.max(l.votes_decrease) as f64;
        if l.votes_increase != l.votes_decrease && top / total >= threshold {
            kept.push(KeptLabel {
                t1: l.t1,
                t2: l.t2,
                direction: if l.votes_increase > l.votes_decrease {
                    Direction::Increase
                } else {
                    Direction::Decrease
                },
            });
        } else {
            excluded += 1;
        }
    }
    (kept, excluded)
}

/// Confusion counts with "increase" as the positive class. Ratios whose
/// denominator is zero are `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// Pairs whose threat did not change; already counted as FP or FN.
    pub zero_diff: usize,
    pub excluded_pairs: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl EvalReport {
    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.tp + self.tn + self.fp + self.fn_)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn to_key_value(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| x.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "tp={}", self.tp);
        let _ = writeln!(s, "fp={}", self.fp);
        let _ = writeln!(s, "tn={}", self.tn);
        let _ = writeln!(s, "fn={}", self.fn_);
        let _ = writeln!(s, "zero_diff={}", self.zero_diff);
        let _ = writeln!(s, "excluded_pairs={}", self.excluded_pairs);
        let _ = writeln!(s, "accuracy={}", fmt(self.accuracy()));
        let _ = writeln!(s, "precision={}", fmt(self.precision()));
        let _ = writeln!(s, "recall={}", fmt(self.recall()));
        s
    }
}

pub fn compare_directions(reports: &[ThreatReport], labels: &[KeptLabel]) -> Result<EvalReport, EvalError> {
    let totals: BTreeMap<Frame, f64> = reports.iter().map(|r| (r.frame, r.total)).collect();
    compare_direction_totals(&totals, labels)
}

/// Predicted direction is the sign of `T(t2) - T(t1)`. A zero difference
/// disagrees with either label and is tallied in `zero_diff`.
pub fn compare_direction_totals(totals: &BTreeMap<Frame, f64>, labels: &[KeptLabel]) -> Result<EvalReport, EvalError> {
    let mut r = EvalReport::default();
    for l in labels {
        let t1 = *totals.get(&l.t1).ok_or(EvalError::MissingFrame(l.t1))?;
        let t2 = *totals.get(&l.t2).ok_or(EvalError::MissingFrame(l.t2))?;
        let diff = t2 - t1;
        if diff == 0.0 {
            r.zero_diff += 1;
        }
        let predicted = if diff > 0.0 {
            Some(Direction::Increase)
        } else if diff < 0.0 {
            Some(Direction::Decrease)
        } else {
            None
        };
        match (predicted, l.direction) {
            (Some(Direction::Increase), Direction::Increase) => r.tp += 1,
            (Some(Direction::Increase), Direction::Decrease) => r.fp += 1,
            (Some(Direction::Decrease), Direction::Decrease) => r.tn += 1,
            (Some(Direction::Decrease), Direction::Increase) => r.fn_ += 1,
            (None, Direction::Increase) => r.fn_ += 1,
            (None, Direction::Decrease) => r.fp += 1,
        }
    }
    Ok(r)
}

/// Majority filter followed by [`compare_direction_totals`]; the report
/// records how many labelled pairs the filter dropped.
pub fn evaluate_directions(
    totals: &BTreeMap<Frame, f64>,
    labels: &[FramePairLabel],
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    let (kept, excluded) = filter_by_majority(labels, threshold);
    let mut report = compare_direction_totals(totals, &kept)?;
    report.excluded_pairs = excluded;
    Ok(report)
}

/// `ap.<class>=<value|undefined>` lines followed by `map=<value>`.
pub fn map_key_value(per_class: &BTreeMap<String, Option<f64>>) -> Result<String, EvalError> {
    let mean = compute_map(per_class)?;
    let mut s = String::new();
    for (class, ap) in per_class {
        let _ = writeln!(
            s,
            "ap.{class}={}",
            ap.map_or("undefined".to_string(), |v| v.to_string())
        );
    }
    let _ = writeln!(s, "map={}", mean.map);
    Ok(s)
}
