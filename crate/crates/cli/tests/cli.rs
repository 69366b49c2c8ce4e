use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solver-forge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_schedule(dir: &Path, name: &str, deltas: &str, coeffs: &str) -> String {
    let path = dir.join(name);
    fs::write(
        &path,
        format!(
            "format_version = 1\nscheduler = \"rf\"\nmodel_tag = \"test\"\nnfe = 3\ndeltas = {deltas}\ncoeffs = {coeffs}\n\n[provenance]\nkind = \"searched\"\n"
        ),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn corrupted_deltas_fail_validation_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_schedule(dir.path(), "bad.toml", "[0.3, 0.3, 0.3]", "[[], [-1.0], [0.5, -1.0]]");
    let out = cli(&["validate", "--file", &bad]);
    assert_eq!(code(&out), 1);
    let msg = text(&out.stdout) + &text(&out.stderr);
    assert!(msg.contains("FAIL") && msg.contains("bad.toml") && msg.contains("deltas"), "{msg}");
}

#[test]
fn valid_file_and_paper_tables_pass() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_schedule(dir.path(), "good.toml", "[0.2, 0.3, 0.5]", "[[], [-1.0], [0.5, -1.0]]");
    let out = cli(&["validate", "--file", &good, "--paper-tables"]);
    assert_eq!(code(&out), 0, "{}", text(&out.stdout));
    assert!(text(&out.stdout).contains("19/19 pass"));
}

#[test]
fn single_step_file_validates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.toml");
    fs::write(
        &path,
        "format_version = 1\nscheduler = \"rf\"\nmodel_tag = \"t\"\nnfe = 1\ndeltas = [1.0]\ncoeffs = [[]]\n\n[provenance]\nkind = \"searched\"\n",
    )
    .unwrap();
    assert_eq!(code(&cli(&["validate", "--file", path.to_str().unwrap()])), 0);
}

#[test]
fn validation_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.csv");
    let out = cli(&["validate", "--paper-tables", "--report", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 19);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&cli(&["bench", "--nfe-range", "7-3"])), 2);
    assert_eq!(code(&cli(&["search", "--nfe", "0", "--out", "/dev/null"])), 2);
    assert_eq!(code(&cli(&["frobnicate"])), 2);
    assert_eq!(code(&cli(&["bench", "--problem", "vp-gaussian", "--solvers", "heun"])), 2);
    assert_eq!(code(&cli(&["sample", "--solver", "/nonexistent.toml"])), 2);
}

#[test]
fn runaway_learning_rate_exits_three_and_keeps_a_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("s.toml");
    let out = cli(&[
        "search", "--nfe", "5", "--iters", "5", "--batch", "16", "--lr", "1e100", "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(text(&out.stderr).contains("diverged") || text(&out.stdout).contains("diverged"));
    assert_eq!(code(&cli(&["validate", "--file", out_path.to_str().unwrap()])), 0);
}

#[test]
fn zero_iterations_reports_unit_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("s.toml");
    let out = cli(&["search", "--nfe", "4", "--iters", "0", "--batch", "8", "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(text(&out.stdout).contains("improvement factor vs euler: 1.000000"));
    assert_eq!(fs::read_to_string(dir.path().join("s.loss.csv")).unwrap().lines().count(), 1);
}

#[test]
fn searched_schedule_loads_into_sample_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.toml");
    let sched = sched.to_str().unwrap();
    assert_eq!(code(&cli(&["search", "--nfe", "4", "--iters", "10", "--batch", "32", "--out", sched])), 0);
    let out = cli(&["sample", "--solver", sched, "--nfe", "4", "--samples", "3"]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let csv = text(&out.stdout);
    // 3 samples × 5 states plus header
    assert_eq!(csv.lines().count(), 16);
    let bench = dir.path().join("b.csv");
    let out = cli(&[
        "bench", "--solvers", &format!("euler,{sched}"), "--nfe-range", "4", "--oracle-steps", "2000", "--samples", "16",
        "--out", bench.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let rows = fs::read_to_string(&bench).unwrap();
    assert!(rows.starts_with("problem,scheduler,solver,nfe,seed,endpoint_rmse,trajectory_rmse,wall_time"));
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn bound_check_holds_on_published_schedule() {
    let out = cli(&["bound-check", "--eta", "0.01", "--trials", "20"]);
    assert_eq!(code(&out), 0, "{}", text(&out.stdout));
}

#[test]
fn respace_prints_grid() {
    let out = cli(&["respace", "--family", "reflow", "--nfe", "1"]);
    assert_eq!(code(&out), 0);
    let vals: Vec<f64> = text(&out.stdout).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(vals, vec![0.0, 1.0]);
}
