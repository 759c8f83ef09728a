use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_splat2twin"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--preset", "box_on_table", "--seed", "42", "--out", s(dir)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn corrupted_scene(dir: &Path) {
    synth(dir, &["--floaters", "0.1", "--ghosts", "0.1", "--needles", "0.05"]);
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    corrupted_scene(a.path());
    corrupted_scene(b.path());
    let fa = files(a.path());
    assert_eq!(fa, files(b.path()));
    for f in &fa {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{}",
            f.display()
        );
    }
    assert!(!a.path().join(".partial").exists());
}

#[test]
fn clean_synth_scene_layout() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &[]);
    let roles = std::fs::read_to_string(d.path().join("roles.json")).unwrap();
    for bad in ["floater", "ghost", "needle"] {
        assert!(!roles.to_lowercase().contains(bad), "{bad} in a clean scene");
    }
    let cams = json(&d.path().join("cameras.json"));
    let n = cams.as_array().or_else(|| cams["views"].as_array()).unwrap().len();
    assert_eq!(n, 15);
    let masks = std::fs::read_dir(d.path().join("masks"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains("__box"))
        .count();
    assert_eq!(masks, 15);
    assert!(d.path().join("pipeline.json").is_file());
    assert!(d.path().join("manifest.json").is_file());
}

#[test]
fn pipeline_end_to_end_and_eval() {
    let d = tempfile::tempdir().unwrap();
    corrupted_scene(d.path());
    let cfg = d.path().join("pipeline.json");
    let o = run(&["pipeline", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = d.path().join("out");
    for f in [
        "box.obj",
        "background.obj",
        "box.ply",
        "labels.json",
        "pipeline_report.json",
        "metrics.json",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join(".partial").exists());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("box")));

    // a second run into another directory gives the same manifest
    let o = run(&["pipeline", "--config", s(&cfg), "--set", "paths.out_dir=out2"]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(out.join("manifest.json")).unwrap(),
        std::fs::read(d.path().join("out2/manifest.json")).unwrap()
    );

    // ground truth scored against itself
    let o = run(&[
        "eval",
        "--pred",
        s(d.path()),
        "--gt",
        s(d.path()),
        "--out",
        s(&d.path().join("self.json")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("self.json"));
    for row in r["geometry"].as_array().unwrap() {
        assert_eq!(row["chamfer"].as_f64().unwrap(), 0.0, "{row}");
        assert_eq!(row["f1"].as_f64().unwrap(), 1.0, "{row}");
    }
    assert_eq!(r["miou"].as_f64().unwrap(), 1.0);
}

#[test]
fn missing_masks_dir_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &[]);
    std::fs::remove_dir_all(d.path().join("masks")).unwrap();
    let o = run(&["pipeline", "--config", s(&d.path().join("pipeline.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("masks"), "{err}");
}

#[test]
fn invalid_divisor_fails_before_any_work() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &[]);
    let o = run(&[
        "pipeline",
        "--config",
        s(&d.path().join("pipeline.json")),
        "--set",
        "vote.threshold_divisor=0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("out/labels.json").exists());
    assert!(!d.path().join("out/manifest.json").exists());
}

#[test]
fn eval_names_missing_ground_truth() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &[]);
    let o = run(&[
        "pipeline",
        "--config",
        s(&d.path().join("pipeline.json")),
        "--set",
        "eval.enabled=false",
    ]);
    assert!(o.status.success());
    let empty = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--pred", s(&d.path().join("out")), "--gt", s(empty.path())]);
    assert_ne!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(".ply"), "{err}");
}

#[test]
fn ablation_and_sweep_tables() {
    let d = tempfile::tempdir().unwrap();
    corrupted_scene(d.path());
    let o = run(&[
        "eval",
        "--pred",
        s(d.path()),
        "--gt",
        s(d.path()),
        "--ablation",
        "--out",
        s(&d.path().join("a.json")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("a.json"));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let chamfer = |i: usize| rows[i]["chamfer"].as_f64().unwrap();
    assert!(chamfer(3) < chamfer(2) && chamfer(2) < chamfer(0), "{r}");

    let o = run(&[
        "eval",
        "--pred",
        s(d.path()),
        "--gt",
        s(d.path()),
        "--sweep",
        "--out",
        s(&d.path().join("s.json")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("s.json"));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let frac: Vec<f64> = rows
        .iter()
        .map(|r| r["consistent_fraction"].as_f64().unwrap())
        .collect();
    assert!(frac.windows(2).all(|w| w[1] >= w[0]), "{frac:?}");
}

#[test]
fn stage_failure_leaves_partial_marker_and_error_record() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), &[]);
    let ply = d.path().join("splats.ply");
    let bytes = std::fs::read(&ply).unwrap();
    std::fs::write(&ply, &bytes[..bytes.len() / 2]).unwrap();
    let o = run(&["pipeline", "--config", s(&d.path().join("pipeline.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let out = d.path().join("out");
    assert!(out.join(".partial").exists());
    let e = json(&out.join("error.json"));
    assert_eq!(e["kind"], "stage");
    assert_eq!(e["stage"], "load");
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn clean_and_mesh_commands() {
    let d = tempfile::tempdir().unwrap();
    corrupted_scene(d.path());
    let o = run(&[
        "segment",
        "--splats",
        s(&d.path().join("splats.ply")),
        "--cameras",
        s(&d.path().join("cameras.json")),
        "--masks",
        s(&d.path().join("masks")),
        "--out",
        s(&d.path().join("seg")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let box_ply = d.path().join("seg/box.ply");
    let clean = d.path().join("c/box.ply");
    let o = run(&["clean", "--input", s(&box_ply), "--output", s(&clean)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("c/box.clean.json").is_file());
    let stl = d.path().join("c/box.stl");
    let o = run(&[
        "mesh",
        "--input",
        s(&clean),
        "--output",
        s(&stl),
        "--target-faces",
        "200",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::metadata(&stl).unwrap().len() > 84);
    let o = run(&["mesh", "--input", s(&clean), "--output", s(&stl), "--alpha", "wide"]);
    assert_eq!(o.status.code(), Some(2));
}
