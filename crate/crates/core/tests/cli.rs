//! The `trimin` binary: exit codes, output placement and determinism.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn trimin(args: &[&str], out_dir: Option<&PathBuf>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trimin"));
    cmd.args(args).env_remove("TRIMIN_OUT_DIR");
    if let Some(dir) = out_dir {
        cmd.env("TRIMIN_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("trimin-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        vec!["sweep", "--pair", "1,4", "--unknown"],
        vec!["sweep", "--pair", "1,4", "--lambda", "0:1"],
        vec!["sweep", "--pair", "1,9"],
        vec!["impurity", "--site", "4", "--alpha=-2"],
        vec!["frobnicate"],
    ] {
        let out = trimin(&args, Some(&scratch("usage")));
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
    let help = trimin(&["--help"], None);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("reproduce"));
}

#[test]
fn env_var_sets_output_directory_and_runs_are_byte_identical() {
    let dir = scratch("env");
    let args = ["sweep", "--pair", "1,4", "--pair", "1,2", "--lambda", "0:3:0.25", "--gap", "-o", "s.csv"];
    let first = trimin(&args, Some(&dir));
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let a = fs::read(dir.join("s.csv")).unwrap();
    assert_eq!(trimin(&args, Some(&dir)).status.code(), Some(0));
    assert_eq!(a, fs::read(dir.join("s.csv")).unwrap());

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,site_i,site_j,concurrence,eof,gap,dC_dlambda,alpha,converged"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 26);
    assert_eq!(&rows[0][..4], ["0", "1", "2", "0"]);
    assert_eq!(&rows[1][..4], ["0", "1", "4", "0"]);
    assert!(rows.iter().all(|r| r.len() == 9 && r[8] == "true" && !r[5].is_empty()));
    assert!(text.ends_with('\n'));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn flag_overrides_env_and_plot_script_is_written() {
    let env_dir = scratch("env2");
    let flag_dir = scratch("flag");
    let out = trimin(
        &["--out-dir", flag_dir.to_str().unwrap(), "derivative", "--pair", "1,4", "--lambda", "1.5:1.8:0.01", "--plot"],
        Some(&env_dir),
    );
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max |dC/dlambda|"), "{stdout}");
    assert!(flag_dir.join("derivative.csv").exists());
    let script = fs::read_to_string(flag_dir.join("derivative.gp")).unwrap();
    assert!(script.contains("with points"));
    assert!(!env_dir.join("derivative.csv").exists());
    fs::remove_dir_all(&env_dir).unwrap();
    fs::remove_dir_all(&flag_dir).unwrap();
}

#[test]
fn unconverged_points_exit_with_two() {
    let dir = scratch("unconv");
    let out = trimin(&["--max-outer", "2", "sweep", "--pair", "1,4", "--lambda", "1:1.2:0.1"], Some(&dir));
    assert_eq!(out.status.code(), Some(2));
    let text = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",false")));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unwritable_output_fails_cleanly() {
    let dir = scratch("ro");
    let blocker = dir.join("file");
    fs::write(&blocker, "x").unwrap();
    let target = blocker.join("out.csv");
    let out = trimin(&["gap", "--lambda", "1", "-o", target.to_str().unwrap()], None);
    assert_ne!(out.status.code(), Some(0));
    assert!(!target.exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn lattice_summary() {
    let out = trimin(&["lattice", "--shell", "1"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 12);
}
