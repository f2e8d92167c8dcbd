use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auction-levelk")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const FP: &[&str] = &["--format", "first_price", "--n", "2", "--x", "40", "--p", "1/2"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run_owned(args: &[String]) -> Output {
    run(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn solve_writes_strategy_and_jumps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run_owned(&with(&["solve"], &[FP, &["--out", out]].concat()));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("strategy.csv")).unwrap();
    assert!(csv.starts_with("value,bid,probability\n"));
    let jumps: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("jumps.json")).unwrap()).unwrap();
    assert_eq!(jumps["verified"], true);
    assert!(!jumps["jumps"].as_array().unwrap().is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("resolved spec"));
}

#[test]
fn solved_strategy_verifies_with_zero_regret() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(run_owned(&with(&["solve"], &[FP, &["--out", out]].concat())).status.success());
    let path = dir.path().join("strategy.csv");
    let o = run_owned(&with(&["verify"], &[FP, &["--strategy", path.to_str().unwrap(), "--output-format", "json"]].concat()));
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["max_regret"], "0");
    assert_eq!(v["is_equilibrium"], true);
}

#[test]
fn optimize_p_reports_an_optimum() {
    let o = run(&["optimize-p", "--n", "3", "--x", "100"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let p = v["p_star"].as_f64().unwrap();
    assert!(p >= 1.0 / 3.0 && p < 1.0, "{p}");
}

#[test]
fn spec_file_matches_inline_flags() {
    let dir = tempfile::tempdir().unwrap();
    let inline = run_owned(&with(&["solve", "--output-format", "json"], FP));
    let stderr = String::from_utf8_lossy(&inline.stderr).to_string();
    let json = stderr.lines().find_map(|l| l.strip_prefix("resolved spec: ")).unwrap();
    let path = dir.path().join("spec.json");
    fs::write(&path, json).unwrap();
    let from_file = run(&["solve", "--output-format", "json", "--spec", path.to_str().unwrap()]);
    assert!(from_file.status.success());
    assert_eq!(inline.stdout, from_file.stdout);
}

#[test]
fn spec_file_conflicts_with_inline_flags() {
    let o = run(&["solve", "--spec", "x.json", "--n", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn off_grid_bid_is_a_line_numbered_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bids.csv");
    fs::write(
        &path,
        "subject_id,round,treatment,format,value,bid\ns1,1,T1,first_price,10,4\ns1,1,T1,first_price,12,4.5\n",
    )
    .unwrap();
    let o = run_owned(&with(&["estimate"], &[FP, &["--data", path.to_str().unwrap()]].concat()));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("error:") && err.contains("bids.csv:3"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(run(&["solve", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--format", "dutch"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_one() {
    let o = run(&["solve", "--format", "first_price", "--n", "2", "--x", "10", "--p", "3/2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    let o = run(&["distance", "--n", "2", "--p", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_and_estimate_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sim = with(
        &["simulate"],
        &[FP, &["--types", "eq,l1", "--shares", "0.6,0.4", "--sigmas", "3,3", "--subjects", "12", "--seed", "11"]].concat(),
    );
    let a = run_owned(&sim);
    let b = run_owned(&sim);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let path = dir.path().join("bids.csv");
    fs::write(&path, &a.stdout).unwrap();
    let est = with(&["estimate"], &[FP, &["--data", path.to_str().unwrap(), "--types", "eq,l1", "--starts", "3", "--seed", "5"]].concat());
    let f1 = run_owned(&est);
    let f2 = run_owned(&est);
    assert!(f1.status.success(), "{}", String::from_utf8_lossy(&f1.stderr));
    assert_eq!(f1.stdout, f2.stdout);
    let fit: serde_json::Value = serde_json::from_str(&stdout(&f1)).unwrap();
    let shares: f64 = fit["shares"].as_array().unwrap().iter().map(|s| s.as_f64().unwrap()).sum();
    assert!((shares - 1.0).abs() < 1e-9);
}

#[test]
fn cycle_csv_lists_every_level() {
    let o = run(&["cycle", "--format", "all_pay", "--x", "100", "--k-max", "60", "--output-format", "csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 61);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cycle: period"));
}

#[test]
fn levelk_csv_has_one_row_per_level_and_value() {
    let o = run_owned(&with(&["levelk", "--k-max", "3"], FP));
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1 + 3 * 41);
}
