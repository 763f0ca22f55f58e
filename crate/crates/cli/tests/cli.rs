//! End-to-end checks of the binary: artifact contracts, manifest round
//! trips, and exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn mfsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfsim"))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const TINY_SIMULATE: &str = "\
mode = simulate
seed = 99

[labels]
atoms = 2

[field]
name = linear
a = 0.2
b = 0.1
c = 0.1
d = 0.3
e = 0.1
f = 0.05

[sim]
n = 5
dt = 0.1
t = 1.0
sigma = 0.02
theta = 0.2

[init]
x = uniform -0.3 0.3
lambda = jitter 0.1
";

#[test]
fn trajectory_csv_row_count_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    write(&cfg, TINY_SIMULATE);
    let out = dir.path().join("artifacts");
    let status = mfsim().arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows = text.lines().count() - 1;
    assert_eq!(rows, 5 * (10 + 1), "N * (T/dt + 1) rows");
}

#[test]
fn manifest_round_trip_reproduces_artifacts_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    write(&cfg, TINY_SIMULATE);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    assert!(mfsim()
        .arg(&cfg)
        .arg("--out")
        .arg(&out1)
        .status()
        .unwrap()
        .success());
    assert!(mfsim()
        .arg(out1.join("manifest.txt"))
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap()
        .success());
    for name in ["trajectory.csv", "noise.csv"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs after a manifest re-run");
    }
}

#[test]
fn csv_rows_parse_back_losslessly() {
    // write -> read -> write fixpoint on the label columns
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    write(&cfg, TINY_SIMULATE);
    let out = dir.path().join("artifacts");
    assert!(mfsim()
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let space = mfsim_core::measures::LabelSpace::line_segment(2).unwrap();
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let lambda_row = fields[3..5].join(",");
        let parsed =
            mfsim_core::measures::LabelMeasure::from_csv_row(space.clone(), &lambda_row).unwrap();
        assert_eq!(parsed.to_csv_row(), lambda_row);
        let x: f64 = fields[2].parse().unwrap();
        assert_eq!(format!("{x}"), fields[2]);
    }
}

#[test]
fn spiking_mode_emits_raster_and_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    write(
        &cfg,
        "\
mode = spiking
seed = 5

[labels]
atoms = 2

[field]
name = const
v = 0.3

[sim]
n = 3
dt = 0.01
t = 10.0
theta = 0.1

[init]
x = fixed 0.0

[spike]
x_f = 0.7
x_r = 0.0
bin = 2.5
",
    );
    let out = dir.path().join("artifacts");
    let status = mfsim().arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let raster = fs::read_to_string(out.join("raster.csv")).unwrap();
    assert!(raster.lines().count() > 1, "raster should be nonempty");
    assert!(raster.starts_with("agent,t\n"));
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(rates.starts_with("bin_start,rate\n"));

    // same run with the shared label-noise channel enabled
    let cfg2 = dir.path().join("run_het.conf");
    let text = fs::read_to_string(&cfg).unwrap() + "\n[het]\norder = 1\na0 = 0.05\n";
    write(
        &cfg2,
        &text.replace(
            "name = const\nv = 0.3",
            "name = linear\na = 0.0\nb = 0.1\nc = 0.0\nd = 0.2\ne = 0.1\nf = 0.0",
        ),
    );
    let out2 = dir.path().join("artifacts_het");
    let status = mfsim().arg(&cfg2).arg("--out").arg(&out2).status().unwrap();
    assert!(status.success());
    let manifest = fs::read_to_string(out2.join("manifest.txt")).unwrap();
    assert!(manifest.contains("[het]"));
}

#[test]
fn invalid_threshold_pair_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    write(
        &cfg,
        &(TINY_SIMULATE.replace("mode = simulate", "mode = spiking")
            + "\n[spike]\nx_f = 0.1\nx_r = 0.5\n"),
    );
    let output = mfsim().arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("x_r"), "{stderr}");
    assert!(stderr.contains("below threshold"), "{stderr}");
}

#[test]
fn missing_config_file_exits_with_usage_error() {
    let output = mfsim().arg("/nonexistent/path.conf").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn seed_override_changes_results_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    write(&cfg, TINY_SIMULATE);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    assert!(mfsim()
        .arg(&cfg)
        .arg("--out")
        .arg(&out1)
        .status()
        .unwrap()
        .success());
    assert!(mfsim()
        .arg(&cfg)
        .arg("--out")
        .arg(&out2)
        .arg("--seed")
        .arg("123")
        .status()
        .unwrap()
        .success());
    let a = fs::read(out1.join("trajectory.csv")).unwrap();
    let b = fs::read(out2.join("trajectory.csv")).unwrap();
    assert_ne!(a, b);
    let manifest = fs::read_to_string(out2.join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 123"));
}

#[test]
fn emit_svg_produces_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    write(&cfg, TINY_SIMULATE);
    let out = dir.path().join("artifacts");
    assert!(mfsim()
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--emit-svg")
        .status()
        .unwrap()
        .success());
    let svg = fs::read_to_string(out.join("trajectory.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
}

#[test]
fn picard_mode_reports_decay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    write(
        &cfg,
        &(TINY_SIMULATE
            .replace("mode = simulate", "mode = picard")
            .replace("n = 5", "n = 10")
            .replace("dt = 0.1", "dt = 0.005")
            .replace("t = 1.0", "t = 0.5")
            .replace("theta = 0.2", "theta = 0.25")
            + "\n[experiment]\nn_iters = 8\n"),
    );
    let out = dir.path().join("artifacts");
    let output = mfsim().arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(
        stdout.contains("[PASS] picard-super-geometric-decay"),
        "{stdout}"
    );
    let csv = fs::read_to_string(out.join("picard.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9, "header + one row per iteration");
}
