//! `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are an error so
//! typos do not silently fall back to defaults.
//!
//! | key | default |
//! |-----|---------|
//! | `frame_width` (`W`), `frame_height` (`H`) | 1920, 1080 |
//! | `fps` | 25 |
//! | `stream_id` | `stream` |
//! | `iou_gate` | 0.3 |
//! | `max_gap` | `fps` rounded (frames) |
//! | `transform_mode` | `projective` (or `paper_linear`) |
//! | `alpha`, `tau_seconds` | 0.25, 10 |
//! | `naive_threshold_fraction`, `naive_mode_max_people` | 0.20, 6 |
//! | `proximity_radius` | 1.0 |
//! | `cluster_count` | `auto` |
//! | `epsilon_m`, `epsilon_g` | 2.0, 1.0 |
//! | `proximity_threshold`, `beta` | 1.0, 1.0 |
//! | `unknown_mask_policy` | `worst_case` (or `neutral`) |
//! | `mask_aggregation` | `min` (or `mean`) |
//! | `majority_threshold` | 0.70 |
//! | `ap_iou_threshold` | 0.5 |

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::TransformMode;
use crate::grouping::GroupingConfig;
use crate::ingest::StreamConfig;
use crate::threat::ThreatParams;
use crate::tracking::DEFAULT_IOU_GATE;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key=value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stream: StreamConfig,
    pub iou_gate: f64,
    /// Frames; `None` means one second of frames.
    pub max_gap: Option<u64>,
    pub transform_mode: TransformMode,
    pub grouping: GroupingConfig,
    pub threat: ThreatParams,
    pub majority_threshold: f64,
    pub ap_iou_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stream: StreamConfig::default(),
            iou_gate: DEFAULT_IOU_GATE,
            max_gap: None,
            transform_mode: TransformMode::Projective,
            grouping: GroupingConfig::default(),
            threat: ThreatParams::default(),
            majority_threshold: crate::eval::DEFAULT_MAJORITY,
            ap_iou_threshold: 0.5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override such as `--set alpha=0.5`.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "frame_width" | "W" => self.stream.frame_width = parse(key, value)?,
            "frame_height" | "H" => self.stream.frame_height = parse(key, value)?,
            "fps" => self.stream.fps = parse(key, value)?,
            "stream_id" => self.stream.stream_id = value.to_string(),
            "iou_gate" => self.iou_gate = parse(key, value)?,
            "max_gap" => self.max_gap = Some(parse(key, value)?),
            "transform_mode" => self.transform_mode = parse(key, value)?,
            "alpha" => self.grouping.alpha = parse(key, value)?,
            "tau_seconds" => self.grouping.tau_seconds = parse(key, value)?,
            "naive_threshold_fraction" => self.grouping.naive_threshold_fraction = parse(key, value)?,
            "naive_mode_max_people" => self.grouping.naive_mode_max_people = parse(key, value)?,
            "proximity_radius" => self.grouping.proximity_radius = parse(key, value)?,
            "cluster_count" => self.grouping.cluster_count = parse(key, value)?,
            "epsilon_m" => self.threat.epsilon_m = parse(key, value)?,
            "epsilon_g" => self.threat.epsilon_g = parse(key, value)?,
            "proximity_threshold" => self.threat.proximity_threshold = parse(key, value)?,
            "beta" => self.threat.beta = parse(key, value)?,
            "unknown_mask_policy" => self.threat.unknown_mask_policy = parse(key, value)?,
            "mask_aggregation" => self.threat.mask_aggregation = parse(key, value)?,
            "majority_threshold" => self.majority_threshold = parse(key, value)?,
            "ap_iou_threshold" => self.ap_iou_threshold = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn max_gap_frames(&self) -> u64 {
        self.max_gap.unwrap_or_else(|| self.stream.fps.round().max(0.0) as u64)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.stream.validate().map_err(|e| invalid(e.to_string()))?;
        self.grouping.validate().map_err(|e| invalid(e.to_string()))?;
        self.threat.validate().map_err(|e| invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return Err(invalid("iou_gate must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.majority_threshold) {
            return Err(invalid("majority_threshold must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.ap_iou_threshold) {
            return Err(invalid("ap_iou_threshold must be in [0, 1]".into()));
        }
        Ok(())
    }
}
