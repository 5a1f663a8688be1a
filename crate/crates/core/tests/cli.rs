use std::path::Path;
use std::process::{Command, Output};

use gridsens::cases;

fn gridsens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridsens")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn solve_prints_one_record_per_bus() {
    let out = gridsens(&["--case", "builtin:case33bw", "solve"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["bus"].as_array().unwrap().len(), 33);
    let csv = gridsens(&["--case", "builtin:case33bw", "--format", "csv", "solve"]);
    assert_eq!(stdout(&csv).lines().count(), 34);
}

#[test]
fn case_file_on_disk_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("five.m");
    std::fs::write(&path, cases::FIVE_BUS).unwrap();
    assert_eq!(code(&gridsens(&["--case", p(&path), "solve"])), 0);
    let missing = dir.path().join("nope.m");
    assert_eq!(code(&gridsens(&["--case", p(&missing), "solve"])), 3);
    assert_eq!(code(&gridsens(&["--case", "builtin:nope", "solve"])), 3);
    assert_eq!(code(&gridsens(&["solve"])), 3);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&gridsens(&["--case", "builtin:five_bus", "frobnicate"])), 3);
    assert_eq!(code(&gridsens(&["--case", "builtin:five_bus", "sens", "--wrt", "nothing"])), 3);
    assert_eq!(code(&gridsens(&["--help"])), 0);
}

#[test]
fn islanded_case_exits_two() {
    // Opening 3-4 leaves bus 4 with no path to the source.
    let text: String = cases::FIVE_BUS
        .lines()
        .map(|l| if l.starts_with("\t3\t4\t") { l.replace("\t1\t-360", "\t0\t-360") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("islanded.m");
    std::fs::write(&path, text).unwrap();
    assert_eq!(code(&gridsens(&["--case", p(&path), "solve"])), 2);
}

#[test]
fn solver_limits_reach_the_solver() {
    assert_eq!(code(&gridsens(&["--case", "builtin:case33bw", "--max-iter", "1", "solve"])), 2);
    assert_eq!(code(&gridsens(&["--case", "builtin:case33bw", "--tol", "1e-4", "--max-iter", "10", "solve"])), 0);
}

#[test]
fn sens_writes_one_file_per_block() {
    let dir = tempfile::tempdir().unwrap();
    let two = dir.path().join("two.m");
    std::fs::write(
        &two,
        "mpc.baseMVA = 10;\nmpc.bus = [1 3 0 0 0 0 1; 2 1 3 1.5 0 0 1];\nmpc.gen = [1 0 0 1];\n\
         mpc.branch = [1 2 0.02 0.04 0 0 1];\n",
    )
    .unwrap();
    let adm = dir.path().join("adm");
    let out = gridsens(&["--case", p(&two), "--out", p(&adm), "sens"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&adm).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["va_b.csv", "va_g.csv", "vm_b.csv", "vm_g.csv"]);

    let both = dir.path().join("both");
    let out = gridsens(&["--case", "builtin:five_bus", "--out", p(&both), "sens", "--wrt", "both"]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read_dir(&both).unwrap().count(), 12);
    // sens needs an output directory.
    assert_eq!(code(&gridsens(&["--case", "builtin:five_bus", "sens"])), 3);
}

#[test]
fn sens_with_fd_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridsens(&["--case", "builtin:five_bus", "--out", p(dir.path()), "sens", "--fdcheck", "--samples", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("fdcheck.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn predict_powerset_of_three_lines() {
    let out = gridsens(&["--case", "builtin:case33bw", "predict", "--powerset", "--lines", "8-21,9-15,12-22"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let ids: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.len(), 8);
    assert_eq!(text.lines().count(), 1 + 8 * (33 + 37));
}

#[test]
fn empty_scenario_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sc.json");
    std::fs::write(&path, "[]").unwrap();
    assert_eq!(code(&gridsens(&["--case", "builtin:case33bw", "predict", "--scenarios", p(&path)])), 3);
    assert_eq!(code(&gridsens(&["--case", "builtin:case33bw", "predict"])), 3);
}

#[test]
fn sweep_is_reproducible_across_thread_counts() {
    let args = |jobs: &'static str| {
        vec!["--case", "builtin:case33bw", "--jobs", jobs, "sweep", "--powerset", "--lines", "8-21,9-15,12-22", "--linearize-at", "none,midpoint"]
    };
    let a = gridsens(&args("1"));
    let b = gridsens(&args("1"));
    let c = gridsens(&args("2"));
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert!(String::from_utf8_lossy(&a.stderr).contains("midpoint: beats none in 8/8"));
    assert_eq!(code(&gridsens(&["--case", "builtin:case33bw", "--jobs", "0", "solve"])), 3);
}

#[test]
fn vreg_without_line_control_is_its_own_baseline() {
    let out = gridsens(&["--case", "builtin:case33bw", "vreg", "--gamma-pct", "0", "--iters", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["baseline_mw"], json["objective_mw"]);
    assert_eq!(json["increase_pct"].as_f64(), Some(0.0));
    assert!(json["feasible"].as_bool().unwrap());
    assert!(json["gamma_star"].as_array().unwrap().iter().all(|g| g.as_f64() == Some(1.0)));
}

#[test]
fn switch_with_zero_budget() {
    let out = gridsens(&["--case", "builtin:case33bw", "switch", "--budget", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(json["z_star"].as_array().unwrap().iter().all(|z| z.as_bool() == Some(false)));
}

#[test]
fn fdcheck_enumeration_csv() {
    let out = gridsens(&["--case", "builtin:five_bus", "fdcheck", "--enumerate", "3-4,4-5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("index,3-4,4-5,islanded"));
    assert_eq!(text.lines().count(), 5);
}
