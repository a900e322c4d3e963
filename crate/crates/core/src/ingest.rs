//! Detection stream and calibration file parsing.
//!
//! Detection CSV columns are exactly
//! `frame,kind,u,v,r,h,conf_a,conf_b,track_id`; `conf_b` and `track_id` may
//! be empty and a header line is optional. Calibration files carry four
//! `img_x,img_y,floor_x,floor_y` lines with floor coordinates in meters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BoxGeom;
use crate::{Frame, PersonId};

pub const DETECTION_HEADER: &str = "frame,kind,u,v,r,h,conf_a,conf_b,track_id";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: u64, reason: String },
    #[error("line {line}: coordinate outside the {width}x{height} frame")]
    OutOfBounds { line: u64, width: f64, height: f64 },
    #[error("line {line}: unknown kind `{token}`")]
    BadKind { line: u64, token: String },
    #[error("calibration needs exactly 4 correspondences, found {0}")]
    WrongPointCount(usize),
    #[error("calibration image points {0:?} are collinear")]
    DegenerateQuad([usize; 3]),
    #[error("invalid stream configuration: {0}")]
    InvalidConfig(String),
}

/// Frame geometry and rate of the source camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub frame_width: f64,
    pub frame_height: f64,
    pub fps: f64,
    pub stream_id: String,
}

impl StreamConfig {
    pub fn new(
        frame_width: f64,
        frame_height: f64,
        fps: f64,
        stream_id: impl Into<String>,
    ) -> Result<Self, IngestError> {
        let cfg = Self {
            frame_width,
            frame_height,
            fps,
            stream_id: stream_id.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.frame_width) || !positive(self.frame_height) {
            return Err(IngestError::InvalidConfig(format!(
                "frame size must be positive, got {}x{}",
                self.frame_width, self.frame_height
            )));
        }
        if !positive(self.fps) {
            return Err(IngestError::InvalidConfig(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        Ok(())
    }
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            frame_width: 1920.0,
            frame_height: 1080.0,
            fps: 25.0,
            stream_id: "stream".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Person,
    Face,
    Handshake,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Person => "person",
            Kind::Face => "face",
            Kind::Handshake => "handshake",
        }
    }
}

impl std::str::FromStr for Kind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "person" => Ok(Kind::Person),
            "face" => Ok(Kind::Face),
            "handshake" => Ok(Kind::Handshake),
            _ => Err(()),
        }
    }
}

/// One detector output. For faces `(conf_a, conf_b)` is `(c_mask, c_nomask)`;
/// for persons and handshakes `conf_a` is the detection confidence and
/// `conf_b` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: Frame,
    pub kind: Kind,
    pub u: f64,
    pub v: f64,
    pub r: f64,
    pub h: f64,
    pub conf_a: f64,
    pub conf_b: Option<f64>,
    pub track_id: Option<PersonId>,
}

impl DetectionRecord {
    pub fn person(frame: Frame, geom: BoxGeom, conf: f64, track_id: Option<PersonId>) -> Self {
        Self {
            frame,
            kind: Kind::Person,
            u: geom.u,
            v: geom.v,
            r: geom.r,
            h: geom.h,
            conf_a: conf,
            conf_b: None,
            track_id,
        }
    }

    pub fn face(frame: Frame, geom: BoxGeom, c_mask: f64, c_nomask: f64) -> Self {
        Self {
            frame,
            kind: Kind::Face,
            u: geom.u,
            v: geom.v,
            r: geom.r,
            h: geom.h,
            conf_a: c_mask,
            conf_b: Some(c_nomask),
            track_id: None,
        }
    }

    pub fn handshake(frame: Frame, geom: BoxGeom, conf: f64) -> Self {
        Self {
            frame,
            kind: Kind::Handshake,
            u: geom.u,
            v: geom.v,
            r: geom.r,
            h: geom.h,
            conf_a: conf,
            conf_b: None,
            track_id: None,
        }
    }

    pub fn geom(&self) -> BoxGeom {
        BoxGeom::new(self.u, self.v, self.r, self.h)
    }

    /// Checks every record invariant against the stream geometry. The error
    /// carries `line` so callers can report file positions.
    pub fn validate(&self, cfg: &StreamConfig, line: u64) -> Result<(), IngestError> {
        let malformed = |reason: &str| IngestError::MalformedLine {
            line,
            reason: reason.to_string(),
        };
        let finite = [self.u, self.v, self.r, self.h, self.conf_a];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(malformed("non-finite value"));
        }
        if !(0.0..cfg.frame_width).contains(&self.u) || !(0.0..cfg.frame_height).contains(&self.v) {
            return Err(IngestError::OutOfBounds {
                line,
                width: cfg.frame_width,
                height: cfg.frame_height,
            });
        }
        if self.r <= 0.0 {
            return Err(malformed("aspect ratio must be positive"));
        }
        if self.h <= 0.0 {
            return Err(malformed("height must be positive"));
        }
        let unit = |c: f64| (0.0..=1.0).contains(&c);
        if !unit(self.conf_a) {
            return Err(malformed("conf_a outside [0, 1]"));
        }
        match (self.kind, self.conf_b) {
            (Kind::Face, Some(b)) if unit(b) => {}
            (Kind::Face, Some(_)) => return Err(malformed("conf_b outside [0, 1]")),
            (Kind::Face, None) => return Err(malformed("face records need conf_b")),
            (_, Some(_)) => return Err(malformed("conf_b is only allowed on face records")),
            (_, None) => {}
        }
        Ok(())
    }
}

/// All detections of one frame, partitioned by kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameBundle {
    pub frame: Frame,
    pub persons: Vec<DetectionRecord>,
    pub faces: Vec<DetectionRecord>,
    pub handshakes: Vec<DetectionRecord>,
}

impl FrameBundle {
    pub fn empty(frame: Frame) -> Self {
        Self {
            frame,
            ..Default::default()
        }
    }

    pub fn push(&mut self, rec: DetectionRecord) {
        debug_assert_eq!(rec.frame, self.frame);
        match rec.kind {
            Kind::Person => self.persons.push(rec),
            Kind::Face => self.faces.push(rec),
            Kind::Handshake => self.handshakes.push(rec),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.persons.is_empty() && self.faces.is_empty() && self.handshakes.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &DetectionRecord> {
        self.persons.iter().chain(&self.faces).chain(&self.handshakes)
    }
}

fn read_to_string(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_detection_stream(path: &Path, cfg: &StreamConfig) -> Result<Vec<FrameBundle>, IngestError> {
    parse_detection_str(&read_to_string(path)?, cfg)
}

/// Parses detection CSV text into bundles sorted by frame.
pub fn parse_detection_str(text: &str, cfg: &StreamConfig) -> Result<Vec<FrameBundle>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut by_frame: BTreeMap<Frame, FrameBundle> = BTreeMap::new();
    let mut first = true;
    for result in reader.records() {
        let record = result.map_err(|e| IngestError::MalformedLine {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if first {
            first = false;
            if record.get(0) == Some("frame") {
                continue;
            }
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let rec = parse_record(&record, line, 9)?;
        rec.validate(cfg, line)?;
        by_frame
            .entry(rec.frame)
            .or_insert_with(|| FrameBundle::empty(rec.frame))
            .push(rec);
    }
    Ok(by_frame.into_values().collect())
}

/// Parses the first nine detection columns of a record that must have
/// exactly `columns` fields.
pub(crate) fn parse_record(
    record: &csv::StringRecord,
    line: u64,
    columns: usize,
) -> Result<DetectionRecord, IngestError> {
    if record.len() != columns {
        return Err(IngestError::MalformedLine {
            line,
            reason: format!("expected {columns} columns, found {}", record.len()),
        });
    }
    let field = |i: usize| record.get(i).unwrap_or("");
    let num = |i: usize, name: &str| -> Result<f64, IngestError> {
        field(i).parse::<f64>().map_err(|_| IngestError::MalformedLine {
            line,
            reason: format!("`{}` is not a number for {name}", field(i)),
        })
    };
    let frame = field(0).parse::<Frame>().map_err(|_| IngestError::MalformedLine {
        line,
        reason: format!("`{}` is not a frame index", field(0)),
    })?;
    let kind = field(1).parse::<Kind>().map_err(|_| IngestError::BadKind {
        line,
        token: field(1).to_string(),
    })?;
    let conf_b = match field(7) {
        "" => None,
        _ => Some(num(7, "conf_b")?),
    };
    let track_id = match field(8) {
        "" => None,
        s => Some(s.parse::<PersonId>().map_err(|_| IngestError::MalformedLine {
            line,
            reason: format!("`{s}` is not a track id"),
        })?),
    };
    Ok(DetectionRecord {
        frame,
        kind,
        u: num(2, "u")?,
        v: num(3, "v")?,
        r: num(4, "r")?,
        h: num(5, "h")?,
        conf_a: num(6, "conf_a")?,
        conf_b,
        track_id,
    })
}

pub fn format_detection_line(rec: &DetectionRecord, out: &mut String) {
    let _ = write!(
        out,
        "{},{},{},{},{},{},{},",
        rec.frame,
        rec.kind.as_str(),
        rec.u,
        rec.v,
        rec.r,
        rec.h,
        rec.conf_a
    );
    if let Some(b) = rec.conf_b {
        let _ = write!(out, "{b}");
    }
    out.push(',');
    if let Some(id) = rec.track_id {
        let _ = write!(out, "{id}");
    }
    out.push('\n');
}

/// Serializes bundles in the detection CSV format, header included. Floats
/// use the shortest representation that parses back to the same value.
pub fn serialize_detections(bundles: &[FrameBundle]) -> String {
    let mut out = String::new();
    out.push_str(DETECTION_HEADER);
    out.push('\n');
    for b in bundles {
        for rec in b.records() {
            format_detection_line(rec, &mut out);
        }
    }
    out
}

/// Four image/floor correspondences in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoints {
    pub image_points: [[f64; 2]; 4],
    pub floor_points: [[f64; 2]; 4],
}

pub fn parse_calibration(path: &Path) -> Result<CalibrationPoints, IngestError> {
    parse_calibration_str(&read_to_string(path)?)
}

/// Blank lines and `#` comments are skipped.
pub fn parse_calibration_str(text: &str) -> Result<CalibrationPoints, IngestError> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == 4 && v.iter().all(|x| x.is_finite()) => rows.push([v[0], v[1], v[2], v[3]]),
            _ => {
                return Err(IngestError::MalformedLine {
                    line: idx as u64 + 1,
                    reason: "expected `img_x,img_y,floor_x,floor_y`".to_string(),
                })
            }
        }
    }
    if rows.len() != 4 {
        return Err(IngestError::WrongPointCount(rows.len()));
    }
    let image_points = [0, 1, 2, 3].map(|i| [rows[i][0], rows[i][1]]);
    let floor_points = [0, 1, 2, 3].map(|i| [rows[i][2], rows[i][3]]);
    check_quad(&image_points)?;
    Ok(CalibrationPoints {
        image_points,
        floor_points,
    })
}

/// Inverse of [`parse_calibration_str`].
pub fn format_calibration(points: &CalibrationPoints) -> String {
    let mut out = String::from("# img_x,img_y,floor_x,floor_y\n");
    for (i, f) in points.image_points.iter().zip(&points.floor_points) {
        out.push_str(&format!("{},{},{},{}\n", i[0], i[1], f[0], f[1]));
    }
    out
}

pub const COLLINEAR_TOL: f64 = 1e-9;

/// Rejects quads where any three points are collinear (normalized cross
/// product below [`COLLINEAR_TOL`]) or coincident.
pub fn check_quad(points: &[[f64; 2]; 4]) -> Result<(), IngestError> {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    for t in TRIPLES {
        let [a, b, c] = t.map(|i| points[i]);
        let (e1, e2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
        let n1 = e1[0].hypot(e1[1]);
        let n2 = e2[0].hypot(e2[1]);
        if n1 == 0.0 || n2 == 0.0 {
            return Err(IngestError::DegenerateQuad(t));
        }
        let cross = (e1[0] * e2[1] - e1[1] * e2[0]) / (n1 * n2);
        if cross.abs() < COLLINEAR_TOL {
            return Err(IngestError::DegenerateQuad(t));
        }
    }
    Ok(())
}
