use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use threatgraph::eval::{self, EvalError};
use threatgraph::pipeline::{self, PipelineError, RunManifest};
use threatgraph::render;
use threatgraph::synth::{SyntheticScenario, PRESETS};
use threatgraph::threat::parse_threat_csv;
use threatgraph::{ingest, Execution, RunConfig};

/// Temporal interaction graphs and per-frame transmission threat scores
/// from person, face and handshake detections.
#[derive(Parser)]
#[command(name = "threatgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write threat, graph and matrix artifacts.
    Run(RunArgs),
    /// Score threat directions against expert labels and/or detections against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scene (detections, calibration, ground truth).
    Synth(SynthArgs),
    /// Render a square matrix CSV as a plain graymap.
    Render(RenderArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// `key=value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        if let Some(p) = &self.config {
            if !p.is_file() {
                return Err(PipelineError::MissingInput(p.clone()).into());
            }
        }
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

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Expert direction labels; writes `eval.txt`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Ground-truth boxes; writes `map.txt`.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Process frames on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, requires = "threat")]
    labels: Option<PathBuf>,
    /// Threat CSV written by `run`.
    #[arg(long)]
    threat: Option<PathBuf>,
    #[arg(long, requires = "detections")]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, value_parser = PRESETS)]
    preset: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Square matrix, one comma-separated row per line.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Value range `LO,HI`; defaults to the matrix min and max.
    #[arg(long, value_parser = parse_range)]
    range: Option<(f64, f64)>,
    /// Map the low end of the range to white.
    #[arg(long)]
    invert: bool,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err("range must be finite with LO <= HI".into());
    }
    Ok((lo, hi))
}

fn read(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(PipelineError::MissingInput(path.to_path_buf()).into());
    }
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn direction_report(totals: &BTreeMap<u64, f64>, labels: &Path, cfg: &RunConfig) -> Result<String> {
    let labels = eval::parse_labels(labels).with_context(|| labels.display().to_string())?;
    Ok(eval::evaluate_directions(totals, &labels, cfg.majority_threshold)?.to_key_value())
}

fn map_report(detections: &Path, ground_truth: &Path, cfg: &RunConfig) -> Result<String> {
    let bundles =
        ingest::parse_detection_stream(detections, &cfg.stream).with_context(|| detections.display().to_string())?;
    let gt = eval::parse_ground_truth(ground_truth, &cfg.stream).with_context(|| ground_truth.display().to_string())?;
    if gt.is_empty() {
        return Err(EvalError::EmptyGroundTruth.into());
    }
    let per_class = eval::per_class_ap(bundles.iter().flat_map(|b| b.records()), &gt, cfg.ap_iou_threshold);
    Ok(eval::map_key_value(&per_class)?)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let manifest = RunManifest {
        detections: args.detections,
        calibration: args.calibration,
        config: args.config.config.clone(),
        overrides: args.config.overrides.clone(),
        out_dir: args.out,
        execution: if args.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
    };
    for p in [&args.labels, &args.ground_truth].into_iter().flatten() {
        if !p.is_file() {
            return Err(PipelineError::MissingInput(p.clone()).into());
        }
    }
    let out = pipeline::run_pipeline(&manifest)?;
    let cfg = manifest.load_config()?;
    if let Some(labels) = &args.labels {
        let totals = out.reports.iter().map(|r| (r.frame, r.total)).collect();
        write(
            &manifest.out_dir.join("eval.txt"),
            &direction_report(&totals, labels, &cfg)?,
        )?;
    }
    if let Some(gt) = &args.ground_truth {
        write(
            &manifest.out_dir.join("map.txt"),
            &map_report(&manifest.detections, gt, &cfg)?,
        )?;
    }
    print!("{}", out.summary.to_key_value());
    info!("artifacts written to {}", manifest.out_dir.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let mut report = String::new();
    if let (Some(labels), Some(threat)) = (&args.labels, &args.threat) {
        let totals = parse_threat_csv(&read(threat)?).map_err(|e| anyhow::anyhow!("{}: {e}", threat.display()))?;
        report.push_str(&direction_report(&totals, labels, &cfg)?);
    }
    if let (Some(gt), Some(det)) = (&args.ground_truth, &args.detections) {
        if !gt.is_file() {
            return Err(PipelineError::MissingInput(gt.clone()).into());
        }
        report.push_str(&map_report(det, gt, &cfg)?);
    }
    if report.is_empty() {
        bail!("nothing to evaluate: pass --labels with --threat, or --ground-truth with --detections");
    }
    print!("{report}");
    if let Some(out) = &args.out {
        write(out, &report)?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let scenario = match (&args.scenario, &args.preset) {
        (Some(p), _) => SyntheticScenario::from_file(p)?,
        (None, Some(name)) => SyntheticScenario::preset(name).expect("clap restricts preset names"),
        (None, None) => unreachable!("clap requires one of --scenario, --preset"),
    };
    let out = scenario.generate()?;
    out.write_to(&args.out)?;
    write(&args.out.join("scenario.json"), &scenario.to_json())?;
    info!("{} frame(s) written to {}", out.bundles.len(), args.out.display());
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let m = render::parse_matrix_csv(&read(&args.matrix)?)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.matrix.display()))?;
    let range = args.range.unwrap_or_else(|| {
        let vals = (0..m.dim()).flat_map(|i| m.row(i).to_vec());
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    });
    render::render_heatmap(&m, range, args.invert, &args.out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors are input errors (exit 1), not clap's default 2
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<PipelineError>().map_or(1, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
