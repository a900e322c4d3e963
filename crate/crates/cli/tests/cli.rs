use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_threatgraph"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, preset: &str) {
    let out = run(&["synth", "--preset", preset, "--out", p(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn run_scene(scene: &Path, out: &Path, extra: &[&str]) -> Output {
    let file = |name: &str| scene.join(name).to_str().unwrap().to_owned();
    let mut cmd = bin();
    cmd.args(["run", "--detections", &file("detections.csv")])
        .args(["--calibration", &file("calibration.csv")])
        .args(["--config", &file("config.txt")])
        .args(["--out", p(out)])
        .args(extra);
    cmd.output().expect("binary runs")
}

fn totals(dir: &Path) -> Vec<f64> {
    std::fs::read_to_string(dir.join("threat.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn approach_scene_threat_increases() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "approach");
    let out = run_scene(&scene, &tmp.path().join("out"), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t = totals(&tmp.path().join("out"));
    assert_eq!(t.len(), 3);
    assert!(t.windows(2).all(|w| w[1] > w[0]), "{t:?}");
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("person_tracks=2"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "phases");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_scene(&scene, &a, &[]).status.success());
    assert!(run_scene(&scene, &b, &["--sequential"]).status.success());
    for name in [
        "threat.csv",
        "graph.tg",
        "matrix_distance.csv",
        "matrix_threat.csv",
        "heatmap_threat.pgm",
        "summary.txt",
    ] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn empty_detections_exit_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "approach");
    std::fs::write(
        scene.join("detections.csv"),
        "frame,kind,u,v,r,h,conf_a,conf_b,track_id\n",
    )
    .unwrap();
    let out = run_scene(&scene, &tmp.path().join("out"), &[]);
    assert!(out.status.success());
    assert!(totals(&tmp.path().join("out")).iter().all(|&t| t == 0.0));
}

#[test]
fn missing_calibration_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "approach");
    std::fs::remove_file(scene.join("calibration.csv")).unwrap();
    let out = run_scene(&scene, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibration.csv"));
}

#[test]
fn input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "approach");
    let out = run_scene(&scene, &tmp.path().join("out"), &["--set", "alhpa=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alhpa"));

    std::fs::write(
        scene.join("detections.csv"),
        "0,person,10,10,0.4,50,0.9,,1\n0,elephant,1,1,1,1,1,,\n",
    )
    .unwrap();
    let out = run_scene(&scene, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("detections.csv"));

    assert_eq!(run(&["run", "--detections"]).status.code(), Some(1));
}

#[test]
fn render_distance_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("d.csv");
    std::fs::write(&m, "0,5\n5,0\n").unwrap();
    let img = tmp.path().join("d.pgm");
    let out = run(&[
        "render",
        "--matrix",
        p(&m),
        "--out",
        p(&img),
        "--range",
        "0,10",
        "--invert",
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(&img).unwrap(),
        "P2\n2 2\n255\n255 128\n128 255\n"
    );
}

#[test]
fn eval_directions_and_map() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, "phases");
    let out_dir = tmp.path().join("out");
    let labels = tmp.path().join("labels.csv");
    std::fs::write(
        &labels,
        "t1,t2,votes_increase,votes_decrease\n0,15,7,3\n15,25,9,1\n25,5,2,8\n0,25,6,4\n",
    )
    .unwrap();
    let out = run_scene(
        &scene,
        &out_dir,
        &[
            "--labels",
            p(&labels),
            "--ground-truth",
            p(&scene.join("ground_truth.csv")),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval = std::fs::read_to_string(out_dir.join("eval.txt")).unwrap();
    assert!(
        eval.contains("tp=2\n") && eval.contains("tn=1\n") && eval.contains("excluded_pairs=1\n"),
        "{eval}"
    );
    assert!(std::fs::read_to_string(out_dir.join("map.txt"))
        .unwrap()
        .contains("map=1\n"));

    let out = run(&[
        "eval",
        "--labels",
        p(&labels),
        "--threat",
        p(&out_dir.join("threat.csv")),
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), eval);
}
