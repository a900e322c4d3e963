//! End-to-end run: detections → tracks → floor points → groups → graph →
//! threat, plus the artifacts written for a run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bbox::BoxGeom;
use crate::config::{ConfigError, RunConfig};
use crate::geometry::{distance_matrix, DistanceMatrix, FloorCalibration, FloorPoint, GeometryError};
use crate::graph::{build_frame_graph, serialize_graph, GraphError, TemporalGraph};
use crate::grouping::{affinity_from_distance, spectral_cluster, ClusterAssignment, GroupState};
use crate::ingest::{self, FrameBundle, IngestError};
use crate::par::Execution;
use crate::render::{self, RenderError};
use crate::threat::{matrix_blocks_csv, threat_csv, threat_series_with, ActivityMatrix, ThreatReport};
use crate::tracking::{
    associate_faces, associate_handshakes, interpolate_gaps, FaceAssociation, HandshakeAssociation, TrackerState,
    TrackingError,
};
use crate::{Frame, PersonId};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input file {0} does not exist")]
    MissingInput(PathBuf),
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("{path}: {source}")]
    Calibration {
        path: PathBuf,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl PipelineError {
    /// 2 for internal invariant violations, 1 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Invariant(_) => 2,
            _ => 1,
        }
    }
}

/// Everything needed to launch a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub detections: PathBuf,
    pub calibration: PathBuf,
    pub config: Option<PathBuf>,
    /// `key=value` overrides applied after the config file.
    pub overrides: Vec<String>,
    pub out_dir: PathBuf,
    pub execution: Execution,
}

impl RunManifest {
    pub fn check_inputs(&self) -> Result<(), PipelineError> {
        let paths = [Some(&self.detections), Some(&self.calibration), self.config.as_ref()];
        for p in paths.into_iter().flatten() {
            if !p.is_file() {
                return Err(PipelineError::MissingInput(p.clone()));
            }
        }
        Ok(())
    }

    pub fn load_config(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            cfg.apply_override(kv)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Counts surfaced in `summary.txt`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub frames: usize,
    pub person_tracks: usize,
    pub interpolated_boxes: usize,
    pub unprojectable_persons: usize,
    pub faces_dropped: usize,
    pub handshakes_dropped: usize,
    pub dangling_edges: usize,
    pub edges: usize,
    pub confirmed_groups: usize,
    pub peak_frame: Option<Frame>,
    pub peak_threat: f64,
}

impl RunSummary {
    pub fn warnings(&self) -> usize {
        self.unprojectable_persons + self.faces_dropped + self.handshakes_dropped + self.dangling_edges
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let peak = self.peak_frame.map_or_else(|| "none".to_string(), |f| f.to_string());
        let _ = writeln!(out, "frames={}", self.frames);
        let _ = writeln!(out, "person_tracks={}", self.person_tracks);
        let _ = writeln!(out, "interpolated_boxes={}", self.interpolated_boxes);
        let _ = writeln!(out, "unprojectable_persons={}", self.unprojectable_persons);
        let _ = writeln!(out, "faces_dropped={}", self.faces_dropped);
        let _ = writeln!(out, "handshakes_dropped={}", self.handshakes_dropped);
        let _ = writeln!(out, "dangling_edges={}", self.dangling_edges);
        let _ = writeln!(out, "edges={}", self.edges);
        let _ = writeln!(out, "confirmed_groups={}", self.confirmed_groups);
        let _ = writeln!(out, "peak_frame={peak}");
        let _ = writeln!(out, "peak_threat={}", self.peak_threat);
        let _ = writeln!(out, "warnings={}", self.warnings());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub graph: TemporalGraph,
    pub reports: Vec<ThreatReport>,
    pub summary: RunSummary,
}

/// Stateless per-frame work, safe to run out of order.
struct FrameWork {
    frame: Frame,
    points: Vec<FloorPoint>,
    dm: DistanceMatrix,
    clusters: ClusterAssignment,
    faces: FaceAssociation,
    handshakes: HandshakeAssociation,
    unprojectable: usize,
}

fn frame_work(
    frame: Frame,
    persons: &[(PersonId, BoxGeom)],
    bundle: Option<&FrameBundle>,
    calib: &FloorCalibration,
    cfg: &RunConfig,
) -> FrameWork {
    let mut points = Vec::with_capacity(persons.len());
    let mut located = Vec::with_capacity(persons.len());
    let mut unprojectable = 0;
    for &(id, g) in persons {
        match calib.project_to_floor(crate::geometry::standing_location(&g), id, frame) {
            Ok(p) => {
                points.push(p);
                located.push((id, g));
            }
            Err(e) => {
                log::warn!("frame {frame}: person {id} not projectable: {e}");
                unprojectable += 1;
            }
        }
    }
    let dm = distance_matrix(&points);
    let clusters = spectral_cluster(
        &affinity_from_distance(&dm, cfg.grouping.alpha),
        cfg.grouping.cluster_count,
        frame,
    );
    let (faces, handshakes) = match bundle {
        Some(b) => (
            associate_faces(&located, &b.faces, frame),
            associate_handshakes(&located, &b.handshakes, frame, &points, calib),
        ),
        None => Default::default(),
    };
    FrameWork {
        frame,
        points,
        dm,
        clusters,
        faces,
        handshakes,
        unprojectable,
    }
}

/// Runs every stage on parsed inputs. Output is identical for either
/// [`Execution`] mode.
pub fn run(
    bundles: &[FrameBundle],
    calib: &FloorCalibration,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<PipelineOutput, PipelineError> {
    let max_gap = cfg.max_gap_frames();
    let mut tracker = TrackerState::new();
    for b in bundles {
        tracker.associate(b, cfg.iou_gate, max_gap)?;
    }
    let tracks: Vec<_> = tracker
        .into_tracks()
        .iter()
        .map(|t| interpolate_gaps(t, max_gap))
        .collect();

    let mut summary = RunSummary {
        person_tracks: tracks.len(),
        ..Default::default()
    };
    let mut persons_at: BTreeMap<Frame, Vec<(PersonId, BoxGeom)>> = BTreeMap::new();
    for t in &tracks {
        for (&f, b) in &t.boxes {
            persons_at.entry(f).or_default().push((t.id, b.geom));
            summary.interpolated_boxes += b.interpolated as usize;
        }
    }
    let bundle_at: BTreeMap<Frame, &FrameBundle> = bundles.iter().map(|b| (b.frame, b)).collect();
    let frames: Vec<Frame> = persons_at
        .keys()
        .chain(bundle_at.keys())
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let work = exec.map(&frames, |&f| {
        let persons = persons_at.get(&f).map(Vec::as_slice).unwrap_or(&[]);
        frame_work(f, persons, bundle_at.get(&f).copied(), calib, cfg)
    });

    let mut groups = GroupState::new();
    let mut graph = TemporalGraph::new(cfg.stream.stream_id.clone(), cfg.stream.fps);
    for w in work {
        groups
            .update(&w.clusters, &w.dm, &cfg.grouping, cfg.stream.fps)
            .map_err(|e| PipelineError::Invariant(e.to_string()))?;
        let (fg, stats) = build_frame_graph(w.frame, &w.points, &w.faces.masks, &w.handshakes.events, &w.clusters);
        summary.unprojectable_persons += w.unprojectable;
        summary.faces_dropped += w.faces.dropped;
        summary.handshakes_dropped += w.handshakes.fewer_than_two_persons + w.handshakes.unprojectable;
        summary.dangling_edges += stats.dangling_edges;
        summary.edges += fg.edges.len();
        graph.frames.insert(w.frame, fg);
    }
    graph.confirmed_groups = groups.confirmed;

    let reports = threat_series_with(&graph, &cfg.threat, exec);
    summary.frames = reports.len();
    summary.confirmed_groups = graph.confirmed_groups.len();
    if let Some(peak) = reports
        .iter()
        .filter(|r| r.n_people() > 0)
        .max_by(|a, b| a.total.total_cmp(&b.total).then(b.frame.cmp(&a.frame)))
    {
        summary.peak_frame = Some(peak.frame);
        summary.peak_threat = peak.total;
    }
    Ok(PipelineOutput {
        graph,
        reports,
        summary,
    })
}

pub const THREAT_FILE: &str = "threat.csv";
pub const GRAPH_FILE: &str = "graph.tg";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const PLOT_FILE: &str = "threat_plot.pgm";

/// Heatmap value range and orientation for a matrix kind.
pub fn heatmap_style(which: ActivityMatrix, m: &crate::linalg::SquareMatrix) -> ((f64, f64), bool) {
    let max = (0..m.dim()).flat_map(|i| m.row(i).to_vec()).fold(0.0, f64::max);
    match which {
        // closer is brighter
        ActivityMatrix::Distance => ((0.0, max), true),
        ActivityMatrix::Group | ActivityMatrix::Interaction => ((0.0, 1.0), false),
        ActivityMatrix::Threat => ((0.0, max), false),
    }
}

/// Writes the threat CSV, graph, per-kind matrix CSVs, peak-frame heatmaps,
/// the threat plot and the summary into `dir`.
pub fn write_artifacts(out: &PipelineOutput, dir: &Path) -> Result<(), PipelineError> {
    let write = |name: &str, text: &str| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| PipelineError::Output { path, source })
    };
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Output {
        path: dir.to_path_buf(),
        source,
    })?;
    write(THREAT_FILE, &threat_csv(&out.reports))?;
    serialize_graph(&out.graph, &dir.join(GRAPH_FILE))?;
    for which in ActivityMatrix::ALL {
        write(
            &format!("matrix_{}.csv", which.name()),
            &matrix_blocks_csv(&out.reports, which),
        )?;
    }
    if let Some(peak) = out.summary.peak_frame {
        let report = out
            .reports
            .iter()
            .find(|r| r.frame == peak)
            .ok_or_else(|| PipelineError::Invariant(format!("peak frame {peak} has no report")))?;
        for which in ActivityMatrix::ALL {
            let m = which.of(report);
            let (range, invert) = heatmap_style(which, m);
            render::render_heatmap(m, range, invert, &dir.join(format!("heatmap_{}.pgm", which.name())))?;
        }
    }
    let totals: Vec<f64> = out.reports.iter().map(|r| r.total).collect();
    write(PLOT_FILE, &render::series_plot_pgm(&totals, 1000, 100))?;
    write(SUMMARY_FILE, &out.summary.to_key_value())
}

/// Reads the manifest inputs, runs every stage and writes the artifacts.
pub fn run_pipeline(manifest: &RunManifest) -> Result<PipelineOutput, PipelineError> {
    manifest.check_inputs()?;
    let cfg = manifest.load_config()?;
    fn input(path: &Path) -> impl FnOnce(IngestError) -> PipelineError + '_ {
        move |source| PipelineError::Input {
            path: path.to_path_buf(),
            source,
        }
    }
    let points = ingest::parse_calibration(&manifest.calibration).map_err(input(&manifest.calibration))?;
    let calib = FloorCalibration::fit(&points, cfg.transform_mode).map_err(|source| PipelineError::Calibration {
        path: manifest.calibration.clone(),
        source,
    })?;
    let bundles =
        ingest::parse_detection_stream(&manifest.detections, &cfg.stream).map_err(input(&manifest.detections))?;
    log::info!("{} frame(s) with detections", bundles.len());
    let out = run(&bundles, &calib, &cfg, manifest.execution)?;
    write_artifacts(&out, &manifest.out_dir)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SyntheticScenario;
    use crate::TransformMode;

    fn run_preset(name: &str, exec: Execution) -> PipelineOutput {
        let s = SyntheticScenario::preset(name).unwrap();
        let out = s.generate().unwrap();
        let calib = FloorCalibration::fit(&out.calibration, TransformMode::Projective).unwrap();
        let cfg = RunConfig {
            stream: out.stream.clone(),
            ..RunConfig::default()
        };
        run(&out.bundles, &calib, &cfg, exec).unwrap()
    }

    #[test]
    fn approach_scene_increases() {
        let out = run_preset("approach", Execution::Sequential);
        let totals: Vec<f64> = out.reports.iter().map(|r| r.total).collect();
        assert_eq!(totals.len(), 3);
        assert!(totals.windows(2).all(|w| w[1] > w[0]), "{totals:?}");
    }

    #[test]
    fn empty_input_gives_empty_series() {
        let calib = FloorCalibration::fit(&crate::synth::default_calibration(), TransformMode::Projective).unwrap();
        let out = run(&[], &calib, &RunConfig::default(), Execution::Sequential).unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(out.summary.peak_frame, None);
    }

    #[test]
    fn execution_modes_agree() {
        assert_eq!(
            run_preset("phases", Execution::Sequential),
            run_preset("phases", Execution::Parallel)
        );
    }

    #[test]
    fn missing_inputs_name_the_path() {
        let m = RunManifest {
            detections: "/nonexistent/d.csv".into(),
            calibration: "/nonexistent/c.csv".into(),
            config: None,
            overrides: vec![],
            out_dir: "/tmp".into(),
            execution: Execution::Sequential,
        };
        let err = run_pipeline(&m).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("/nonexistent/d.csv"));
    }
}
