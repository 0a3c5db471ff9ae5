use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dlga_core::experiment::{ExperimentConfig, NetSpec, Report};
use dlga_core::surrogate::{Activation, GridAxis, MetaGridSpec};

fn dlga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlga")).args(args).output().expect("spawn dlga")
}

fn axis(start: f64, end: f64, count: usize) -> GridAxis {
    GridAxis {
        start,
        end,
        count,
        include_end: true,
    }
}

/// Wave configuration small enough for a debug-speed test.
fn tiny_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::preset("wave-desk").unwrap();
    cfg.name = "tiny-wave".into();
    cfg.samples = 500;
    cfg.net = NetSpec::uniform(2, 10, Activation::Sin);
    cfg.train.max_epochs = 20;
    cfg.train.patience = 20;
    cfg.meta = MetaGridSpec::new(axis(0.0, 2.0, 10), axis(0.0, 5.0, 6));
    cfg.ga.population_size = 12;
    cfg.ga.max_generations = 2;
    let path = dir.join("tiny.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

fn read_report(dir: &Path) -> Report {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn lists_presets() {
    let out = dlga(&["presets"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().any(|l| l == "chaffee-infante-desk"));
}

#[test]
fn report_writes_text_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out_dir = tmp.path().join("run");
    let out = dlga(&["report", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "3"]);
    ok(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("equation     u_t"));
    let report = read_report(&out_dir);
    assert_eq!(report.seed, 3);
    assert_eq!(report.trace.len(), 3);
    assert!(out_dir.join("report.txt").exists());
    let written = ExperimentConfig::load(&out_dir.join("config.json")).unwrap();
    assert_eq!(written.seed, 3);
}

#[test]
fn staged_commands_match_full_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let staged = tmp.path().join("staged");
    let full = tmp.path().join("full");
    for cmd in ["solve", "train", "discover"] {
        ok(&dlga(&[cmd, "--config", cfg, "--out", staged.to_str().unwrap()]));
    }
    assert!(staged.join("field.csv").exists());
    ok(&dlga(&["report", "--config", cfg, "--out", full.to_str().unwrap()]));
    let mut a = read_report(&staged);
    let mut b = read_report(&full);
    a.timings = Default::default();
    b.timings = Default::default();
    assert_eq!(a, b);
}

#[test]
fn sweep_prints_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out_dir = tmp.path().join("sweep");
    let out = dlga(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--axis",
        "noise",
        "--values",
        "0,0.05",
    ]);
    ok(&out);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("noise\t"));
    assert!(out_dir.join("sweep.json").exists());
    assert!(out_dir.join("row-1").join("report.json").exists());
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = dlga(&["report"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config or --preset"));

    let out = dlga(&["report", "--preset", "heat-desk"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = dlga(&["baseline", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no baseline"));

    let out = dlga(&["sweep", "--preset", "wave-desk", "--axis", "width", "--values", "1"]);
    assert!(!out.status.success());
}
