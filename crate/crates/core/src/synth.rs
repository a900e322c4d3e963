//! Scripted scenes: floor-plane waypoints projected back into image space,
//! emitted as a noise-free detection stream plus ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BoxGeom;
use crate::eval::{GroundTruthRecord, GROUND_TRUTH_HEADER};
use crate::geometry::{FloorCalibration, GeometryError, TransformMode};
use crate::ingest::{self, CalibrationPoints, DetectionRecord, FrameBundle, StreamConfig};
use crate::{Frame, Pair, PersonId};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("person {person} at frame {frame}: floor point ({x}, {y}) is outside the calibrated region")]
    OutsideCalibratedRegion {
        person: PersonId,
        frame: Frame,
        x: f64,
        y: f64,
    },
    #[error("person {person} at frame {frame}: box center falls outside the image")]
    OutOfFrame { person: PersonId, frame: Frame },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("cannot read scenario {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: Frame,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScript {
    #[default]
    Masked,
    Unmasked,
    /// No face detection is emitted.
    Unknown,
}

impl MaskScript {
    /// `(c_mask, c_nomask)` of the emitted face, if any.
    pub fn confidences(&self) -> Option<(f64, f64)> {
        match self {
            MaskScript::Masked => Some((0.9, 0.1)),
            MaskScript::Unmasked => Some((0.1, 0.9)),
            MaskScript::Unknown => None,
        }
    }
}

/// Visible from the first to the last waypoint, moving linearly between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedPerson {
    pub id: PersonId,
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub mask: MaskScript,
}

/// Inclusive frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedHandshake {
    pub a: PersonId,
    pub b: PersonId,
    pub start: Frame,
    pub end: Frame,
    #[serde(default = "default_handshake_conf")]
    pub confidence: f64,
}

fn default_handshake_conf() -> f64 {
    0.9
}

fn default_stream_id() -> String {
    "synthetic".to_string()
}

fn default_height() -> f64 {
    120.0
}

fn default_aspect() -> f64 {
    0.4
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    #[serde(default = "default_stream_id")]
    pub stream_id: String,
    pub fps: f64,
    /// Scene length; frames run `0..frames`.
    pub frames: u64,
    pub frame_width: f64,
    pub frame_height: f64,
    pub calibration: CalibrationPoints,
    /// Person box height in pixels, constant over the image.
    #[serde(default = "default_height")]
    pub person_height_px: f64,
    #[serde(default = "default_aspect")]
    pub person_aspect: f64,
    pub persons: Vec<ScriptedPerson>,
    /// Ground-truth social groups; every pair within a group is a group pair.
    #[serde(default)]
    pub groups: Vec<Vec<PersonId>>,
    #[serde(default)]
    pub handshakes: Vec<ScriptedHandshake>,
    /// Emit the scripted ids in the `track_id` column.
    #[serde(default = "yes")]
    pub emit_track_ids: bool,
}

/// Trapezoid seen by a raised camera, mapped onto a 10 m × 10 m floor.
pub fn default_calibration() -> CalibrationPoints {
    CalibrationPoints {
        image_points: [[400.0, 300.0], [1520.0, 300.0], [1820.0, 1000.0], [100.0, 1000.0]],
        floor_points: [[0.0, 10.0], [10.0, 10.0], [10.0, 0.0], [0.0, 0.0]],
    }
}

fn wp(frame: Frame, x: f64, y: f64) -> Waypoint {
    Waypoint { frame, x, y }
}

fn person(id: PersonId, mask: MaskScript, waypoints: Vec<Waypoint>) -> ScriptedPerson {
    ScriptedPerson { id, waypoints, mask }
}

pub const PRESETS: [&str; 3] = ["approach", "phases", "uop"];

impl SyntheticScenario {
    fn base(fps: f64, frames: u64) -> Self {
        Self {
            stream_id: default_stream_id(),
            fps,
            frames,
            frame_width: 1920.0,
            frame_height: 1080.0,
            calibration: default_calibration(),
            person_height_px: default_height(),
            person_aspect: default_aspect(),
            persons: Vec::new(),
            groups: Vec::new(),
            handshakes: Vec::new(),
            emit_track_ids: true,
        }
    }

    /// Built-in scenes:
    /// - `approach`: two persons closing from 5 m to 0.5 m over 3 frames.
    /// - `phases`: 4 persons, 30 frames; persons 1 and 2 stand 5 m apart,
    ///   then 1.6 m, then 1 m while shaking hands (frames 20–29).
    /// - `uop`: 60 s at 25 fps; persons 1 and 2 walk together, 3 and 4 meet
    ///   and shake hands for 2 s, person 5 is unmasked.
    pub fn preset(name: &str) -> Option<Self> {
        use MaskScript::*;
        match name {
            "approach" => {
                let mut s = Self::base(25.0, 3);
                s.persons = vec![
                    person(1, Masked, vec![wp(0, 3.0, 5.0), wp(2, 3.0, 5.0)]),
                    person(2, Masked, vec![wp(0, 8.0, 5.0), wp(2, 3.5, 5.0)]),
                ];
                Some(s)
            }
            "phases" => {
                let mut s = Self::base(25.0, 30);
                s.persons = vec![
                    person(1, Masked, vec![wp(0, 3.0, 5.0), wp(29, 3.0, 5.0)]),
                    person(
                        2,
                        Masked,
                        vec![
                            wp(0, 8.0, 5.0),
                            wp(9, 8.0, 5.0),
                            wp(10, 4.6, 5.0),
                            wp(19, 4.6, 5.0),
                            wp(20, 4.0, 5.0),
                            wp(29, 4.0, 5.0),
                        ],
                    ),
                    person(3, Masked, vec![wp(0, 1.0, 1.0), wp(29, 1.0, 1.0)]),
                    person(4, Masked, vec![wp(0, 9.0, 9.0), wp(29, 9.0, 9.0)]),
                ];
                s.handshakes = vec![ScriptedHandshake {
                    a: 1,
                    b: 2,
                    start: 20,
                    end: 29,
                    confidence: 0.9,
                }];
                Some(s)
            }
            "uop" => {
                let mut s = Self::base(25.0, 1500);
                s.stream_id = "uop-synthetic".to_string();
                s.persons = vec![
                    person(1, Masked, vec![wp(0, 1.5, 2.0), wp(1499, 1.5, 8.0)]),
                    person(2, Masked, vec![wp(0, 2.3, 2.0), wp(1499, 2.3, 8.0)]),
                    person(
                        3,
                        Masked,
                        vec![
                            wp(0, 6.0, 1.0),
                            wp(700, 6.5, 4.5),
                            wp(800, 6.5, 4.5),
                            wp(1499, 6.0, 9.0),
                        ],
                    ),
                    person(
                        4,
                        Masked,
                        vec![
                            wp(0, 9.0, 8.0),
                            wp(700, 7.4, 4.5),
                            wp(800, 7.4, 4.5),
                            wp(1499, 9.0, 1.0),
                        ],
                    ),
                    person(5, Unmasked, vec![wp(0, 4.2, 9.5), wp(1499, 4.2, 0.5)]),
                ];
                s.groups = vec![vec![1, 2]];
                s.handshakes = vec![ScriptedHandshake {
                    a: 3,
                    b: 4,
                    start: 725,
                    end: 775,
                    confidence: 0.9,
                }];
                Some(s)
            }
            _ => None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::Invalid(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        let read_err = |reason: String| SynthError::Read {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn stream_config(&self) -> StreamConfig {
        StreamConfig {
            frame_width: self.frame_width,
            frame_height: self.frame_height,
            fps: self.fps,
            stream_id: self.stream_id.clone(),
        }
    }

    /// Scripted floor position of `p` at `frame`, if visible.
    pub fn position(p: &ScriptedPerson, frame: Frame) -> Option<[f64; 2]> {
        let first = p.waypoints.first()?;
        let last = p.waypoints.last()?;
        if frame < first.frame || frame > last.frame {
            return None;
        }
        let i = p.waypoints.partition_point(|w| w.frame <= frame);
        let a = &p.waypoints[i - 1];
        if a.frame == frame || i == p.waypoints.len() {
            return Some([a.x, a.y]);
        }
        let b = &p.waypoints[i];
        let s = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
        Some([a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s])
    }

    /// Ground-truth group pairs.
    pub fn group_pairs(&self) -> BTreeSet<Pair> {
        let mut out = BTreeSet::new();
        for g in &self.groups {
            for (i, &a) in g.iter().enumerate() {
                for &b in &g[i + 1..] {
                    out.extend(Pair::new(a, b));
                }
            }
        }
        out
    }

    /// Structural checks that do not need the calibration.
    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::Invalid(m));
        self.stream_config()
            .validate()
            .map_err(|e| SynthError::Invalid(e.to_string()))?;
        if !(self.person_height_px > 0.0 && self.person_aspect > 0.0) {
            return invalid("person box size must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for p in &self.persons {
            if !ids.insert(p.id) {
                return invalid(format!("duplicate person id {}", p.id));
            }
            if p.waypoints.is_empty() {
                return invalid(format!("person {} has no waypoints", p.id));
            }
            if p.waypoints.windows(2).any(|w| w[1].frame <= w[0].frame) {
                return invalid(format!("person {} waypoints must have increasing frames", p.id));
            }
            if p.waypoints.last().is_some_and(|w| w.frame >= self.frames) {
                return invalid(format!("person {} waypoint beyond the scene", p.id));
            }
        }
        for g in &self.groups {
            if let Some(id) = g.iter().find(|id| !ids.contains(id)) {
                return invalid(format!("group names unknown person {id}"));
            }
        }
        for h in &self.handshakes {
            if !ids.contains(&h.a) || !ids.contains(&h.b) || h.a == h.b {
                return invalid(format!("handshake {}-{} needs two distinct scripted persons", h.a, h.b));
            }
            if h.start > h.end || h.end >= self.frames {
                return invalid(format!("handshake interval {}..={} outside the scene", h.start, h.end));
            }
            if !(0.0..=1.0).contains(&h.confidence) {
                return invalid("handshake confidence outside [0, 1]".into());
            }
        }
        Ok(())
    }

    /// Projects the script into image space. Every emitted person box has
    /// its bottom-center exactly on the inverse projection of the waypoint.
    pub fn generate(&self) -> Result<SyntheticOutput, SynthError> {
        self.validate()?;
        let calib = FloorCalibration::fit(&self.calibration, TransformMode::Projective)?;
        let cfg = self.stream_config();
        let h = self.person_height_px;
        let w = h * self.person_aspect;
        let mut persons: Vec<&ScriptedPerson> = self.persons.iter().collect();
        persons.sort_by_key(|p| p.id);

        let mut bundles = Vec::new();
        let mut ground_truth = Vec::new();
        for frame in 0..self.frames {
            let mut bundle = FrameBundle::empty(frame);
            let mut centers: BTreeMap<PersonId, BoxGeom> = BTreeMap::new();
            for p in &persons {
                let Some([x, y]) = Self::position(p, frame) else {
                    continue;
                };
                if !calib.floor_region_contains([x, y]) {
                    return Err(SynthError::OutsideCalibratedRegion {
                        person: p.id,
                        frame,
                        x,
                        y,
                    });
                }
                let foot = calib.unmap([x, y])?;
                let geom = BoxGeom::new(foot[0], foot[1] - h / 2.0, self.person_aspect, h);
                let rec = DetectionRecord::person(frame, geom, 0.95, self.emit_track_ids.then_some(p.id));
                rec.validate(&cfg, 0)
                    .map_err(|_| SynthError::OutOfFrame { person: p.id, frame })?;
                ground_truth.push(gt(&rec, "person"));
                bundle.push(rec);
                centers.insert(p.id, geom);
            }
            for p in &persons {
                let (Some(g), Some((cm, cn))) = (centers.get(&p.id), p.mask.confidences()) else {
                    continue;
                };
                let face = BoxGeom::new(g.u, g.v - 0.35 * h, 1.0, 0.15 * h);
                let rec = DetectionRecord::face(frame, face, cm, cn);
                ground_truth.push(gt(&rec, if cm >= cn { "masked" } else { "unmasked" }));
                bundle.push(rec);
            }
            for hs in &self.handshakes {
                if frame < hs.start || frame > hs.end {
                    continue;
                }
                let (Some(a), Some(b)) = (centers.get(&hs.a), centers.get(&hs.b)) else {
                    continue;
                };
                let bh = 0.3 * h;
                let bw = (a.u - b.u).abs() + w / 2.0;
                let geom = BoxGeom::new((a.u + b.u) / 2.0, (a.v + b.v) / 2.0, bw / bh, bh);
                let rec = DetectionRecord::handshake(frame, geom, hs.confidence);
                ground_truth.push(gt(&rec, "handshake"));
                bundle.push(rec);
            }
            if !bundle.is_empty() {
                bundles.push(bundle);
            }
        }
        Ok(SyntheticOutput {
            stream: cfg,
            calibration: self.calibration.clone(),
            bundles,
            ground_truth,
            group_pairs: self.group_pairs(),
            handshakes: self.handshakes.clone(),
        })
    }
}

fn gt(rec: &DetectionRecord, class: &str) -> GroundTruthRecord {
    GroundTruthRecord {
        record: rec.clone(),
        class: class.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOutput {
    pub stream: StreamConfig,
    pub calibration: CalibrationPoints,
    pub bundles: Vec<FrameBundle>,
    pub ground_truth: Vec<GroundTruthRecord>,
    pub group_pairs: BTreeSet<Pair>,
    pub handshakes: Vec<ScriptedHandshake>,
}

pub const GROUPS_HEADER: &str = "a,b";
pub const HANDSHAKES_HEADER: &str = "a,b,start,end";

impl SyntheticOutput {
    pub fn detections_csv(&self) -> String {
        ingest::serialize_detections(&self.bundles)
    }

    pub fn ground_truth_csv(&self) -> String {
        let mut out = format!("{GROUND_TRUTH_HEADER}\n");
        for g in &self.ground_truth {
            let mut line = String::new();
            ingest::format_detection_line(&g.record, &mut line);
            out.push_str(line.trim_end());
            out.push(',');
            out.push_str(&g.class);
            out.push('\n');
        }
        out
    }

    pub fn groups_csv(&self) -> String {
        let mut out = format!("{GROUPS_HEADER}\n");
        for p in &self.group_pairs {
            out.push_str(&format!("{},{}\n", p.lo(), p.hi()));
        }
        out
    }

    pub fn handshakes_csv(&self) -> String {
        let mut out = format!("{HANDSHAKES_HEADER}\n");
        for h in &self.handshakes {
            out.push_str(&format!("{},{},{},{}\n", h.a, h.b, h.start, h.end));
        }
        out
    }

    /// `key=value` config carrying the stream geometry.
    pub fn config_text(&self) -> String {
        format!(
            "W={}\nH={}\nfps={}\nstream_id={}\n",
            self.stream.frame_width, self.stream.frame_height, self.stream.fps, self.stream.stream_id
        )
    }

    /// Writes `detections.csv`, `calibration.csv`, `config.txt`,
    /// `ground_truth.csv`, `groups.csv` and `handshakes.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: PathBuf| move |source| SynthError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let files = [
            ("detections.csv", self.detections_csv()),
            ("calibration.csv", ingest::format_calibration(&self.calibration)),
            ("config.txt", self.config_text()),
            ("ground_truth.csv", self.ground_truth_csv()),
            ("groups.csv", self.groups_csv()),
            ("handshakes.csv", self.handshakes_csv()),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(io(path.clone()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::standing_location;
    use crate::ingest::Kind;

    fn one_person(waypoints: Vec<Waypoint>, frames: u64) -> SyntheticScenario {
        let mut s = SyntheticScenario::base(10.0, frames);
        s.persons = vec![person(7, MaskScript::Masked, waypoints)];
        s
    }

    #[test]
    fn stationary_person_repeats() {
        let s = one_person(vec![wp(0, 5.0, 5.0), wp(9, 5.0, 5.0)], 10);
        let out = s.generate().unwrap();
        assert_eq!(out.bundles.len(), 10);
        let first = &out.bundles[0].persons[0];
        for b in &out.bundles {
            assert_eq!(b.persons.len(), 1);
            let p = &b.persons[0];
            assert_eq!(
                (p.u, p.v, p.r, p.h, p.track_id),
                (first.u, first.v, first.r, first.h, Some(7))
            );
        }
    }

    #[test]
    fn boxes_project_back_onto_waypoints() {
        let s = one_person(vec![wp(0, 0.5, 0.5), wp(20, 9.5, 9.0)], 21);
        let calib = FloorCalibration::fit(&s.calibration, TransformMode::Projective).unwrap();
        let out = s.generate().unwrap();
        for b in &out.bundles {
            let want = SyntheticScenario::position(&s.persons[0], b.frame).unwrap();
            let got = calib.map(standing_location(&b.persons[0].geom())).unwrap();
            assert!((got[0] - want[0]).abs() < 1e-6 && (got[1] - want[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn group_file_marks_pair() {
        let mut s = one_person(vec![wp(0, 2.0, 2.0), wp(4, 2.0, 2.0)], 5);
        s.persons
            .push(person(3, MaskScript::Masked, vec![wp(0, 2.8, 2.0), wp(4, 2.8, 2.0)]));
        s.groups = vec![vec![7, 3]];
        let out = s.generate().unwrap();
        assert_eq!(out.groups_csv(), "a,b\n3,7\n");
    }

    #[test]
    fn handshake_frames_exact() {
        let mut s = one_person(vec![wp(0, 3.0, 5.0), wp(99, 3.0, 5.0)], 100);
        s.persons
            .push(person(8, MaskScript::Unknown, vec![wp(0, 3.9, 5.0), wp(99, 3.9, 5.0)]));
        s.handshakes = vec![ScriptedHandshake {
            a: 7,
            b: 8,
            start: 40,
            end: 50,
            confidence: 0.8,
        }];
        let out = s.generate().unwrap();
        let frames: Vec<Frame> = out
            .bundles
            .iter()
            .filter(|b| !b.handshakes.is_empty())
            .map(|b| b.frame)
            .collect();
        assert_eq!(frames, (40..=50).collect::<Vec<_>>());
        // unknown mask → no face for person 8
        assert!(out.bundles.iter().all(|b| b.faces.len() == 1));
        assert!(out
            .ground_truth
            .iter()
            .any(|g| g.record.kind == Kind::Handshake && g.class == "handshake"));
    }

    #[test]
    fn rejects_points_off_the_floor() {
        let s = one_person(vec![wp(0, 5.0, 5.0), wp(3, 12.0, 5.0)], 4);
        assert!(matches!(
            s.generate(),
            Err(SynthError::OutsideCalibratedRegion { person: 7, .. })
        ));
        let s = one_person(vec![wp(0, 5.0, 5.0), wp(30, 5.0, 5.0)], 10);
        assert!(matches!(s.generate(), Err(SynthError::Invalid(_))));
    }

    #[test]
    fn presets_generate_and_round_trip_json() {
        for name in PRESETS {
            let s = SyntheticScenario::preset(name).unwrap();
            s.generate().unwrap();
            assert_eq!(SyntheticScenario::from_json_str(&s.to_json()).unwrap(), s);
        }
        assert!(SyntheticScenario::preset("nope").is_none());
    }

    #[test]
    fn emitted_csv_parses_back() {
        let out = SyntheticScenario::preset("phases").unwrap().generate().unwrap();
        let parsed = ingest::parse_detection_str(&out.detections_csv(), &out.stream).unwrap();
        assert_eq!(parsed, out.bundles);
        let gt = crate::eval::parse_ground_truth_str(&out.ground_truth_csv(), &out.stream).unwrap();
        assert_eq!(gt, out.ground_truth);
    }
}
