use std::fs;
use std::path::Path;
use std::process::Command;

fn gifteq(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gifteq"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exited"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn scenario(file: &str) -> String {
    format!("{}/../core/scenarios/{file}", env!("CARGO_MANIFEST_DIR"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn run_writes_trajectory_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let (code, stdout, _) = gifteq(&["run", &scenario("alternating.scn"), "--steps", "40", "--out", &out]);
    assert_eq!(code, 0);
    assert!(stdout.contains("status = \"converged\""));
    assert!(stdout.contains("k = 2"));

    let csv = fs::read_to_string(dir.path().join("alternating_P_Q.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step_index,phase,balance,p_yield,q_yield");
    assert_eq!(lines.len(), 41);
    // first step from 0: P gives 2
    assert_eq!(lines[1], "1,0,2.0,2.0,0.0");
    let last: Vec<f64> = lines[40].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[1], 1.0);
    assert!((last[2] - 0.8).abs() < 1e-8);

    let report = fs::read_to_string(dir.path().join("alternating_report.toml")).unwrap();
    assert_eq!(report, stdout);
}

#[test]
fn run_options_override_the_file() {
    let (code, stdout, _) = gifteq(&["run", &scenario("simultaneous.scn"), "--x0", "-3.5", "--pair", "Q,P"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("x0 = -3.5"));
    assert!(stdout.contains("p = \"Q\""));
    // the balance of Q with respect to P is the negation
    let u: f64 = stdout
        .lines()
        .find(|l| l.starts_with("u = "))
        .and_then(|l| l.trim_start_matches("u = [").trim_end_matches(']').parse().ok())
        .unwrap();
    assert!((u + 4.0 / 3.0).abs() < 1e-8);
}

#[test]
fn idle_pair_converges_at_once() {
    let (code, stdout, _) = gifteq(&["run", &scenario("idle.scn")]);
    assert_eq!(code, 0);
    assert!(stdout.contains("u = [1.5, 1.5]"));
    assert!(stdout.contains("iterations = 2"));
}

#[test]
fn divergence_exit_status() {
    let (code, stdout, _) = gifteq(&["run", &scenario("constant_yield.scn")]);
    assert_eq!(code, 2);
    assert!(stdout.contains("[pairs.divergence]"));
}

#[test]
fn validation_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.scn",
        r#"
version = 1
entities = ["P", "Q"]
goods = ["a"]
schedule = [[{ giver = "P", receiver = "Z", good = "a" }]]
"#,
    );
    let (code, _, stderr) = gifteq(&["run", &bad]);
    assert_eq!(code, 3);
    assert!(stderr.contains("unknown entity"), "{stderr}");
}

#[test]
fn io_and_usage_errors_exit_1() {
    let (code, _, stderr) = gifteq(&["run", "/nonexistent/file.scn"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("/nonexistent/file.scn"));
    let (code, _, _) = gifteq(&["verify", "--suite", "no-such-suite"]);
    assert_eq!(code, 1);
    let (code, _, _) = gifteq(&["sweep", &scenario("alternating.scn"), "--starts", "1:2"]);
    assert_eq!(code, 1);
    let (code, _, _) = gifteq(&["frobnicate"]);
    assert_eq!(code, 1);
}

#[test]
fn max_iterations_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("alternating.scn"))
        .unwrap()
        .replace("x0 = 0.0", "x0 = 0.0\nmax_iter = 3");
    let f = write(dir.path(), "short.scn", &text);
    let (code, stdout, _) = gifteq(&["run", &f]);
    assert_eq!(code, 5, "{stdout}");
    assert!(stdout.contains("max-iterations"));
}

#[test]
fn conditions_report() {
    let (code, stdout, _) = gifteq(&["conditions", &scenario("alternating.scn")]);
    assert_eq!(code, 0);
    for key in [
        "interval_closed_under_operators = true",
        "all_curves_nonincreasing_nonexpanding = true",
        "exists_uniformly_monotonous_step = true",
        "exists_contraction_step = true",
        "theorem_applies = true",
        "cycle_rate_bound = 0.375",
    ] {
        assert!(stdout.contains(key), "missing {key}");
    }
}

#[test]
fn sweep_reports_zero_spread() {
    let (code, stdout, _) = gifteq(&["sweep", &scenario("two_then_one.scn"), "--starts", "-20:20:9"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("converged = 9"));
    let spread: f64 = stdout
        .lines()
        .find(|l| l.starts_with("spread = "))
        .and_then(|l| l["spread = ".len()..].parse().ok())
        .unwrap();
    assert!(spread < 1e-8);
}

#[test]
fn verify_scenario_file() {
    let (code, stdout, _) = gifteq(&["verify", &scenario("both_both_one.scn"), "--seed", "3"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("passed = true"));
    assert!(stdout.contains("seed = 3"));
    // the seed falls back to the scenario's own
    let (_, stdout, _) = gifteq(&["verify", &scenario("both_both_one.scn")]);
    assert!(stdout.contains("seed = 7"));
}

#[test]
fn verify_flags_a_failed_check() {
    // the only contraction step makes the lemma checks applicable; a
    // max_iter of 1 makes the solver stop short, so "equilibrium found" fails
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("alternating.scn"))
        .unwrap()
        .replace("x0 = 0.0", "x0 = 0.0\nmax_iter = 1");
    let f = write(dir.path(), "short.scn", &text);
    let (code, stdout, _) = gifteq(&["verify", &f]);
    assert_eq!(code, 4);
    assert!(stdout.contains("passed = false"));
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = d.path().display().to_string();
        let (code, _, _) = gifteq(&["run", &scenario("both_both_one.scn"), "--out", &out]);
        assert_eq!(code, 0);
    }
    let read = |d: &tempfile::TempDir, name: &str| fs::read_to_string(d.path().join(name)).unwrap();
    let csv = "both-both-one_P_R.csv";
    assert!(!read(&a, csv).is_empty());
    assert_eq!(read(&a, csv), read(&b, csv));
    // reports differ only in the trajectory path
    let strip = |text: String| -> String {
        text.lines()
            .filter(|l| !l.starts_with("trajectory = "))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let report = "both-both-one_report.toml";
    assert_eq!(strip(read(&a, report)), strip(read(&b, report)));
}

#[test]
fn emitted_scenario_round_trips() {
    let text = fs::read_to_string(scenario("alternating.scn")).unwrap();
    let s = gifteq_core::scenario::parse_scenario(&text, "a").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "again.scn", &s.emit());
    let (code, a, _) = gifteq(&["run", &f]);
    let (_, b, _) = gifteq(&["run", &scenario("alternating.scn")]);
    assert_eq!(code, 0);
    assert_eq!(a, b);
}
