use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sgdg_app::{Config, ScenarioId};

fn sgdg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgdg")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn lists_every_scenario() {
    let out = sgdg(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ScenarioId::ALL {
        assert!(text.lines().any(|l| l.starts_with(id.name())), "{} missing", id.name());
    }
}

#[test]
fn run_writes_outputs_and_a_manifest_that_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario = wb2d\nmesh = 4\nt_end = 0.01\n");
    let out_dir = dir.path().join("out");
    let out = sgdg(&["run", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.txt", "errors.csv", "energy.csv", "cells.vtk", "subcells.vtk"] {
        assert!(out_dir.join(f).is_file(), "{f} not written");
    }
    let manifest = Config::from_file(&out_dir.join("manifest.txt")).unwrap();
    let mut expected = Config::parse("scenario = wb2d\nmesh = 4\nt_end = 0.01\n").unwrap();
    expected.output_dir = out_dir.clone();
    assert_eq!(manifest, expected);
}

#[test]
fn convergence_prints_an_error_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario = manufactured_poisson\nmeshes = 4, 8\ndegree = 1\n");
    let out = sgdg(&["convergence", &cfg, "--output-dir", dir.path().join("out").to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("phi,8,")), "{text}");
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for text in
        ["scenario = wb2d\ncolour = blue\n", "scenario = nowhere\n", "mesh = 4\n", "scenario = wb2d\ndegree = -1\n"]
    {
        let cfg = write_config(dir.path(), text);
        let out = sgdg(&["run", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{text}");
        assert!(!out.stderr.is_empty());
    }
    let missing = dir.path().join("absent.cfg");
    assert_eq!(sgdg(&["run", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // Far beyond the stable time step and no limiter to rescue it.
    let cfg = write_config(dir.path(), "scenario = blast2d\nmesh = 6\nt_end = 0.05\ncfl = 1\noe = false\npp = false\n");
    let out = sgdg(&["run", &cfg, "--output-dir", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
