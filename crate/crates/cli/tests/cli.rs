use std::path::{Path, PathBuf};
use std::process::{Command as Process, Output};

use gw_cli::commands::{Command, ProteinArgs, SampleArgs, TestArgs, TestMode};
use gw_cli::io::{format_gaussian, format_samples_csv, format_site_bundle};
use gw_cli::{run, Report};
use gw_core::inference::Site;
use gw_core::rng::seeded;
use gw_core::symmat::sample_gaussian;
use gw_core::{gw2, GaussianMeasure, Vector};
use tempfile::TempDir;

fn gw(args: &[&str], dir: &Path) -> Output {
    Process::new(env!("CARGO_BIN_EXE_gw"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn pair() -> (GaussianMeasure, GaussianMeasure) {
    (
        GaussianMeasure::standard(2),
        GaussianMeasure::from_slices(&[1.0, 0.0], &[2.0, 0.0, 0.0, 0.5]).unwrap(),
    )
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    let (p, q) = pair();
    write(dir.path(), "p.txt", &format_gaussian(&p));
    write(dir.path(), "q.txt", &format_gaussian(&q));
    let mut rng = seeded(1);
    write(
        dir.path(),
        "x.csv",
        &format_samples_csv(&sample_gaussian(&p, 400, &mut rng)),
    );
    write(
        dir.path(),
        "y.csv",
        &format_samples_csv(&sample_gaussian(&q, 300, &mut rng)),
    );
    dir
}

#[test]
fn dist_reports_closed_form() {
    let dir = setup();
    let out = gw(&["dist", "--p", "p.txt", "--q", "q.txt", "--json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = Report::from_json(&stdout(&out)).unwrap();
    let (p, q) = pair();
    assert_eq!(report.results["gw2"].as_f64().unwrap(), gw2(&p, &q).unwrap());
    assert_eq!(report.command, "dist");
}

#[test]
fn table_output_is_human_readable() {
    let dir = setup();
    let out = gw(&["estimate", "--input", "x.csv", "--input2", "y.csv"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("gw estimate"));
    assert!(text.contains("estimate"));
}

#[test]
fn report_file_round_trips() {
    let dir = setup();
    let out = gw(
        &["ci", "--input", "x.csv", "--ref", "q.txt", "--out", "r.json"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    let report = Report::from_json(&text).unwrap();
    assert_eq!(report.to_json().unwrap(), text);
    let lower = report.results["lower"].as_f64().unwrap();
    let upper = report.results["upper"].as_f64().unwrap();
    assert!(lower < upper);
}

#[test]
fn fixed_seed_runs_are_byte_identical() {
    let dir = setup();
    let args = [
        "test",
        "--input",
        "x.csv",
        "--input2",
        "y.csv",
        "--seed",
        "9",
        "--null-draws",
        "5000",
        "--json",
    ];
    let a = gw(&args, dir.path());
    let b = gw(&args, dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let args = [
        "mc-clt",
        "--seed",
        "4",
        "--reps",
        "50",
        "--n",
        "100",
        "--oracle-draws",
        "10000",
        "--cross-n",
        "1000",
        "--json",
    ];
    let a = gw(&args, dir.path());
    let b = gw(&args, dir.path());
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn unset_seed_is_announced_and_recorded() {
    let dir = setup();
    let out = gw(
        &[
            "bootstrap",
            "--input",
            "x.csv",
            "--ref",
            "q.txt",
            "--b-reps",
            "50",
            "--json",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    let seed: u64 = err.split_whitespace().nth(1).unwrap().parse().unwrap();
    let report = Report::from_json(&stdout(&out)).unwrap();
    assert_eq!(report.config["seed"].as_u64(), Some(seed));
}

#[test]
fn exit_codes() {
    let dir = setup();
    assert_eq!(gw(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(gw(&["dist", "--p", "p.txt"], dir.path()).status.code(), Some(1));
    assert_eq!(gw(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        gw(&["dist", "--p", "missing.txt", "--q", "q.txt"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        gw(
            &["ci", "--input", "x.csv", "--ref", "q.txt", "--alpha", "2"],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        gw(
            &["test", "--input", "x.csv", "--ref", "q.txt", "--mode", "neighborhood"],
            dir.path()
        )
        .status
        .code(),
        Some(1)
    );
    write(dir.path(), "bad.csv", "x1,x2\n1,2\n3\n");
    let out = gw(&["estimate", "--input", "bad.csv", "--ref", "q.txt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3"));

    // fitted measure equals the reference exactly: first-order variance vanishes
    write(dir.path(), "flat.csv", "x1\n-1\n0\n1\n");
    write(dir.path(), "unit.txt", "dim 1\nmean 0\ncov 1\n");
    let out = gw(&["ci", "--input", "flat.csv", "--ref", "unit.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // too few observations for a covariance
    write(dir.path(), "short.csv", "x1,x2\n1,2\n3,4\n");
    assert_eq!(
        gw(&["estimate", "--input", "short.csv", "--ref", "q.txt"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn dimension_mismatch_is_an_error_everywhere() {
    let dir = setup();
    write(dir.path(), "one.txt", "dim 1\nmean 0\ncov 1\n");
    write(dir.path(), "z.csv", "x1\n0.1\n-0.4\n0.9\n1.3\n-2\n");
    let runs: [&[&str]; 7] = [
        &["dist", "--p", "p.txt", "--q", "one.txt"],
        &["estimate", "--input", "x.csv", "--ref", "one.txt"],
        &["estimate", "--input", "x.csv", "--input2", "z.csv"],
        &["ci", "--input", "x.csv", "--ref", "one.txt"],
        &["test", "--input", "x.csv", "--input2", "z.csv", "--seed", "1"],
        &[
            "bootstrap",
            "--input",
            "z.csv",
            "--ref",
            "q.txt",
            "--seed",
            "1",
            "--b-reps",
            "20",
        ],
        &[
            "test",
            "--input",
            "x.csv",
            "--ref",
            "one.txt",
            "--mode",
            "neighborhood",
            "--delta",
            "1",
            "--seed",
            "1",
        ],
    ];
    for args in runs {
        let out = gw(args, dir.path());
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {err}");
        assert!(err.contains("dimension"), "{args:?}: {err}");
        assert!(!err.contains("panicked"), "{args:?}: {err}");
    }
}

#[test]
fn failed_checks_exit_nonzero() {
    let dir = setup();
    let out = gw(
        &[
            "mc-clt",
            "--seed",
            "1",
            "--reps",
            "30",
            "--n",
            "50",
            "--ks-tol",
            "0.0001",
            "--oracle-draws",
            "10000",
            "--cross-n",
            "0",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("[FAIL]"));
}

#[test]
fn equality_command_is_calibrated() {
    let dir = TempDir::new().unwrap();
    let q = GaussianMeasure::from_slices(&[0.0, 1.0], &[1.0, 0.3, 0.3, 2.0]).unwrap();
    let reference = write(dir.path(), "q.txt", &format_gaussian(&q));
    let mut rng = seeded(2);
    let reps = 400;
    let mut rejected = 0;
    for k in 0..reps {
        let input = write(
            dir.path(),
            "s.csv",
            &format_samples_csv(&sample_gaussian(&q, 500, &mut rng)),
        );
        let cmd = Command::Test(TestArgs {
            samples: SampleArgs {
                input,
                reference: Some(reference.clone()),
                input2: None,
            },
            mode: TestMode::Equality,
            alpha: 0.05,
            delta: None,
            null_draws: 20_000,
            seed: Some(k),
        });
        let report = run(&cmd).unwrap();
        if report.results["decision"] == "reject" {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / reps as f64;
    let band = 4.0 * (0.05f64 * 0.95 / reps as f64).sqrt();
    assert!((rate - 0.05).abs() <= band, "rejection rate {rate}");
}

#[test]
fn protein_command_reports_every_site() {
    let dir = TempDir::new().unwrap();
    let mut rng = seeded(3);
    let mut sites = Vec::new();
    for k in 0..76 {
        let sigma2 = 0.3 + 0.01 * k as f64;
        let mean = [k as f64, 0.0, -1.0];
        let shift = if k < 3 { 10.0 * sigma2.sqrt() } else { 0.0 };
        let truth = GaussianMeasure::spherical(&[mean[0] + shift, mean[1], mean[2]], sigma2).unwrap();
        let n = if k == 75 { 3 } else { 10 };
        sites.push(Site {
            name: format!("res{k}"),
            samples: sample_gaussian(&truth, n, &mut rng),
            ref_mean: Vector::from_column_slice(&mean),
            b_factor: sigma2,
        });
    }
    let (obs, refs) = format_site_bundle(&sites);
    let input = write(dir.path(), "obs.csv", &obs);
    let reference = write(dir.path(), "refs.csv", &refs);
    let cmd = Command::Protein(ProteinArgs {
        input,
        reference,
        alpha: 0.05,
        null_draws: 20_000,
        seed: Some(5),
    });
    let report = run(&cmd).unwrap();
    let rows = report.results["sites"].as_array().unwrap();
    assert_eq!(rows.len(), 76);
    for row in &rows[..3] {
        assert_eq!(row["result"]["decision"], "reject", "{row}");
    }
    assert_eq!(rows[75]["result"]["status"], "skipped");
    let rejected = report.results["rejected"].as_u64().unwrap();
    assert!((3..=15).contains(&rejected), "{rejected} rejections");
}
