//! Black-box tests of the `cylmimo` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cylmimo::io::{read_echo, read_image};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_cylmimo");

const BENCHMARK_ARRAY: &str = "
[array]
radius = 1.5
tx_arc_count = 5
tx_arc_spacing = 0.099
tx_z_count = 5
tx_z_spacing = 0.1
rx_arc_count = 41
rx_arc_spacing = 0.0099
rx_z_count = 41
rx_z_spacing = 0.01

[frequency]
start_hz = 31e9
stop_hz = 39e9
steps = 15
";

/// Small X-band layout with a 12³ grid; reconstructs in about a second.
const SMALL: &str = "
version = 1

[array]
radius = 0.5
tx_arc_count = 5
tx_arc_spacing = 0.024
tx_z_count = 5
tx_z_spacing = 0.024
rx_arc_count = 9
rx_arc_spacing = 0.012
rx_z_count = 9
rx_z_spacing = 0.012

[frequency]
start_hz = 8e9
stop_hz = 12e9
steps = 9

[scene]
file = \"targets.scene\"
target_extent = 0.3

[reconstruction]
kernel_phase = \"debye\"

[grid]
n = [12, 12, 12]
center = [0.03, -0.02, 0.01]

[output]
dir = \"out\"
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn cylmimo")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_case() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    fs::write(dir.path().join("targets.scene"), "0.04,-0.03,0.02,1,0\n").unwrap();
    dir
}

fn listing(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).map(|r| r.map(|e| e.unwrap().path()).collect()).unwrap_or_default();
    v.sort();
    v
}

#[test]
fn benchmark_echo_has_expected_shape() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("version = 1\n{BENCHMARK_ARRAY}\n[scene]\nfile = \"p.scene\"\n");
    fs::write(dir.path().join("b.toml"), cfg).unwrap();
    fs::write(dir.path().join("p.scene"), "# one target\n0,0,0,1,0\n").unwrap();
    let o = run(dir.path(), &["simulate", "--config", "b.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (e, hash) = read_echo(&dir.path().join("echo.txt")).unwrap();
    assert_eq!(e.shape().as_array(), [15, 5, 41, 5, 41]);
    assert_eq!(hash.len(), 64);
    // single-precision payload
    assert!(e.data().iter().all(|v| (v.norm() - 1.0).abs() < 1e-6));
}

#[test]
fn empty_scene_gives_zero_echo() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("b.toml"), format!("version = 1\n{BENCHMARK_ARRAY}")).unwrap();
    let o = run(dir.path(), &["simulate", "--config", "b.toml", "--out", "e/echo.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (e, _) = read_echo(&dir.path().join("e/echo.txt")).unwrap();
    assert!(e.data().iter().all(|v| v.norm() == 0.0));
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let mut runs = Vec::new();
    for workers in ["1", "3"] {
        let dir = small_case();
        for args in [
            vec!["--workers", workers, "simulate", "--config", "small.toml"],
            vec!["--workers", workers, "reconstruct", "--config", "small.toml"],
            vec!["--workers", workers, "reconstruct", "--config", "small.toml", "--method", "bp"],
        ] {
            let o = run(dir.path(), &args);
            assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        }
        let files: Vec<(String, Vec<u8>)> = listing(&dir.path().join("out"))
            .into_iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        runs.push((dir, files));
    }
    let names: Vec<&str> = runs[0].1.iter().map(|(n, _)| n.as_str()).collect();
    for want in ["echo.txt", "echo.bin", "image_rma.txt", "image_rma.bin", "image_rma_mip.pgm", "image_rma_profiles.csv", "image_bp.txt", "image_bp.bin"] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    assert_eq!(runs[0].1, runs[1].1);

    // The two methods agree on where the target is.
    let out = runs[0].0.path().join("out");
    let rma = read_image(&out.join("image_rma.txt")).unwrap();
    let bp = read_image(&out.join("image_bp.txt")).unwrap();
    let (a, b) = (rma.peak_index(), bp.peak_index());
    assert!(a.iter().zip(&b).all(|(u, v)| u.abs_diff(*v) <= 1), "rma {a:?} bp {b:?}");
    assert_eq!(rma.config_hash(), bp.config_hash());
}

#[test]
fn corrupt_echo_is_rejected_without_outputs() {
    let dir = small_case();
    assert_eq!(code(&run(dir.path(), &["simulate", "--config", "small.toml"])), 0);
    let out = dir.path().join("out");
    let bin = out.join("echo.bin");
    let mut bytes = fs::read(&bin).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&bin, bytes).unwrap();
    let before = listing(&out);
    let o = run(dir.path(), &["reconstruct", "--config", "small.toml"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(!stderr(&o).is_empty());
    assert_eq!(listing(&out), before);

    fs::write(out.join("echo.txt"), "format = \"something else\"\n").unwrap();
    let o = run(dir.path(), &["reconstruct", "--config", "small.toml"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert_eq!(listing(&out), before);
}

#[test]
fn echo_from_another_layout_is_rejected() {
    let dir = small_case();
    fs::write(dir.path().join("b.toml"), format!("version = 1\n{BENCHMARK_ARRAY}")).unwrap();
    assert_eq!(code(&run(dir.path(), &["simulate", "--config", "b.toml"])), 0);
    let o = run(dir.path(), &["reconstruct", "--config", "small.toml", "--echo", "echo.txt"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(listing(&dir.path().join("out")).is_empty());
}

#[test]
fn invalid_configs_name_the_violated_criterion() {
    let dir = small_case();
    let bad = SMALL.replace("tx_z_spacing = 0.024", "tx_z_spacing = 0.03");
    fs::write(dir.path().join("bad.toml"), bad).unwrap();
    let o = run(dir.path(), &["simulate", "--config", "bad.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not an integer"), "{}", stderr(&o));

    let coarse = SMALL.replace("rx_z_spacing = 0.012", "rx_z_spacing = 0.036").replace("tx_z_spacing = 0.024", "tx_z_spacing = 0.072");
    fs::write(dir.path().join("coarse.toml"), coarse).unwrap();
    let o = run(dir.path(), &["simulate", "--config", "coarse.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("vertical Nyquist"), "{}", stderr(&o));

    fs::write(dir.path().join("targets.scene"), "0.9,0,0,1,0\n").unwrap();
    let o = run(dir.path(), &["simulate", "--config", "small.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("outside the cylinder"), "{}", stderr(&o));

    let o = run(dir.path(), &["simulate", "--config", "missing.toml"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn design_reports_sampling_limits() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["design", "--freq-hz", "13.4e9", "--r0", "1.5", "--length", "0.4", "--target-extent", "0.26"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<(&str, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k, v.parse().unwrap())
        })
        .collect();
    let get = |k: &str| rows.iter().find(|r| r.0 == k).map(|r| r.1).unwrap();
    assert!((get("wavelength_m") - 0.022372).abs() < 1e-5);
    let (w, r0) = (0.66f64, 1.5f64);
    let nyquist = get("wavelength_m") * (r0 * r0 + w * w / 4.0).sqrt() / w;
    assert!((get("nyquist_spacing_m") / nyquist - 1.0).abs() < 1e-6);
    assert!(get("angular_interval_max_rad") > 0.0);
    assert!(text.starts_with("quantity,value\n"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    for args in [vec!["design", "--r0", "1.5"], vec!["frobnicate"], vec!["--workers", "0", "compare"], vec!["metrics"]] {
        let o = run(dir.path(), &args);
        assert_eq!(code(&o), 2, "{args:?}");
    }
}

#[test]
fn compare_lists_every_scenario() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["compare", "--out", "t/compare.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("t/compare.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "row,scenario,resolution_m,pslr_db,grating_lobe_offset_m");
    assert_eq!(lines.len(), 10);
    assert!(lines[1].starts_with("1,full_bp,"));
    assert!(lines[9].starts_with("9,monostatic_rma,"));
}

#[test]
fn beampattern_and_metrics_round_trip() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["beampattern", "--scenario", "mimo_bp", "--out", "p.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(dir.path(), &["metrics", "--profile", "p.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 2, "{text}");
}
