use std::process::{Command, Output};

use mpec_core::driver::{verify_trace, AlgorithmTrace};
use mpec_core::jm::CoefficientTable;
use mpec_core::problem::load_bundled;

fn mpec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpec")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(out: &str, key: &str) -> f64 {
    let line = out
        .lines()
        .map(str::trim)
        .find(|l| l.starts_with(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{out}"));
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

/// Coefficient printed on the table line for the given exponents.
fn coefficient(out: &str, exponents: &str) -> f64 {
    out.lines()
        .find(|l| l.starts_with(&format!("{exponents} ")))
        .and_then(|l| l.rsplit(' ').next())
        .unwrap_or_else(|| panic!("no `{exponents}` row in\n{out}"))
        .parse()
        .unwrap()
}

#[test]
fn approx_p1_constant_term() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("j3.txt");
    let o = mpec(&["approx", "p1_mpec", "--k", "3", "--grid", "21", "--table", table.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(field(&out, "lower_bound_violation") <= 1e-6);
    let constant = coefficient(&out, "0 0");
    assert!((constant + 0.3338).abs() <= 0.02, "{constant}");
    let parsed = CoefficientTable::from_text(&std::fs::read_to_string(&table).unwrap()).unwrap();
    assert_eq!(parsed.vars, ["x", "y"]);
}

#[test]
fn approx_below_minimum_order_exits_4() {
    assert_eq!(mpec(&["approx", "p1_mpec", "--k", "1"]).status.code(), Some(4));
}

#[test]
fn approx_p3_recovers_the_value_function() {
    let o = mpec(&["approx", "p3_sip", "--k", "2", "--grid", "0"]);
    let out = stdout(&o);
    let coef = |e: &str| coefficient(&out, e);
    assert!((coef("0 1") - 1.0).abs() <= 1e-4);
    assert!((coef("2 0") + 1.0).abs() <= 1e-4);
    assert!((coef("4 0") + 1.0).abs() <= 1e-4);
    assert!(coef("0 0").abs() <= 1e-4);
}

#[test]
fn solve_p1_and_round_trip_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("run.json");
    let csv = dir.path().join("run.csv");
    let o = mpec(&[
        "solve",
        "p1_mpec",
        "--eps",
        "5e-4",
        "--k",
        "3..3",
        "--output",
        report.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((field(&stdout(&o), "final_value") - 0.9843).abs() <= 1e-3);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let trace: AlgorithmTrace = serde_json::from_value(json["traces"][0].clone()).unwrap();
    let problem = load_bundled("p1_mpec").unwrap();
    assert!(verify_trace(&trace, &problem).is_empty());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2);
}

#[test]
fn solve_rejects_nonpositive_epsilon() {
    assert_eq!(mpec(&["solve", "p1_mpec", "--eps", "-1"]).status.code(), Some(4));
    assert_eq!(mpec(&["solve", "p1_mpec", "--eps", "0"]).status.code(), Some(4));
}

#[test]
fn solve_reports_an_empty_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    std::fs::write(
        &path,
        r#"
name = "empty"
objective = "x + y"
A = ["-1 - x^2"]
B = ["1-x^2", "1-y^2"]
phi = "x*v^2/2 - v^3/3 - (x*y^2/2 - y^3/3)"
M = 1.0

[variables]
x = ["x"]
y = ["y"]
"#,
    )
    .unwrap();
    let o = mpec(&["solve", path.to_str().unwrap(), "--eps", "1e-3", "--k", "2..3"]);
    assert_eq!(o.status.code(), Some(5), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unreadable_instance_exits_2() {
    assert_eq!(mpec(&["validate", "no_such_instance"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "this is = = not toml").unwrap();
    assert_eq!(mpec(&["validate", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn oracle_queries() {
    let o = mpec(&["oracle", "p1_mpec", "--J", "0.8", "0.5"]);
    assert!(stdout(&o).contains("value -0.058333"), "{}", stdout(&o));

    let o = mpec(&["oracle", "p1_mpec", "--J", "-0.5", "-0.25"]);
    let expected = -0.25 - 1.0 / 3.0 + 0.5 * 0.0625 / 2.0 - 0.015625 / 3.0;
    assert!((field(&stdout(&o), "value") - expected).abs() <= 1e-6);

    let o = mpec(&["oracle", "p1_mpec", "--Peps", "0"]);
    let out = stdout(&o);
    assert!((field(&out, "value") - 1.0).abs() <= 5e-3);
    let point: Vec<f64> = out
        .lines()
        .find(|l| l.starts_with("point"))
        .unwrap()
        .split_whitespace()
        .skip(1)
        .map(|s| s.parse().unwrap())
        .collect();
    assert!(point[0].abs() <= 5e-3 && (point[1] - 1.0).abs() <= 5e-3);

    let o = mpec(&["oracle", "p3_sip", "--Peps", "0"]);
    assert!(field(&stdout(&o), "value").abs() <= 5e-3);

    assert_eq!(mpec(&["oracle", "p1_mpec", "--J", "0.1"]).status.code(), Some(4));
}

#[test]
fn fit_eps() {
    assert_eq!(
        mpec(&["fit-eps", "p1_mpec", "--eps", "1e-3,1e-2", "--fstar", "1"]).status.code(),
        Some(4)
    );

    // 1 - 2 eps^0.5 exactly.
    let o = mpec(&[
        "fit-eps",
        "p1_mpec",
        "--eps",
        "1e-4,1e-3,1e-2",
        "--fstar",
        "1",
        "--values",
        "0.98,0.936754610,0.8",
    ]);
    let out = stdout(&o);
    assert!((field(&out, "c") + 2.0).abs() <= 1e-4, "{out}");
    assert!((field(&out, "q") - 0.5).abs() <= 1e-4, "{out}");

    let o = mpec(&["fit-eps", "p1_mpec", "--eps", "1e-3,1e-2,1e-1", "--fstar", "1", "--values", "1,1,1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(field(&out, "c").abs() <= 1e-12);
    assert!(out.contains("q undefined"));
}

#[test]
fn validate_bundled() {
    let o = mpec(&["validate", "p2_bilevel"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("k_min 2"));
    assert!(out.contains("b_inside_box true"));
}
