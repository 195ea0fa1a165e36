use mpec_core::driver::{
    check_upper_bound, run_algorithm1, run_epsilon_ladder, AlgoConfig, AlgorithmTrace, SkStatus, TerminationReason,
};
use mpec_core::jm::compute_jk;
use mpec_core::oracle::{solve_p_eps_reference, JOracle, OracleConfig};
use mpec_core::problem::{load_bundled, load_problem};
use mpec_core::{MpecProblem, SolverOptions};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn check_trace(problem: &MpecProblem, trace: &AlgorithmTrace) {
    let eps = trace.config.epsilon;
    assert!(trace.running_min_is_monotone());
    assert_eq!(trace.final_value, trace.records.iter().rev().find_map(|r| r.v_eps_k));
    let oracle = JOracle::new(problem, OracleConfig::default()).unwrap();
    for p in &trace.final_points {
        assert!(problem.in_a(p, eps + 1e-6), "{p:?}");
        assert!(problem.in_b(p, eps + 1e-6), "{p:?}");
        assert!(oracle.at_least(p, -eps - 5e-3), "{p:?}");
    }
    let reference = solve_p_eps_reference(problem, eps, &OracleConfig::default()).unwrap().value().unwrap();
    for r in trace.records.iter().filter(|r| r.flat) {
        assert!(r.val_pk_eps.unwrap() >= reference - 5e-3, "k={} {:?} vs {reference}", r.k, r.val_pk_eps);
    }
    let json = serde_json::to_string(trace).unwrap();
    let back: AlgorithmTrace = serde_json::from_str(&json).unwrap();
    assert_eq!(&back, trace);
}

#[test]
fn p1_run() {
    let p = load_bundled("p1_mpec").unwrap();
    let start = std::time::Instant::now();
    let trace = run_algorithm1(&p, &AlgoConfig::new(0.0005, 3, 5)).unwrap();
    assert!(start.elapsed().as_secs_f64() <= 120.0);
    let v = trace.final_value.unwrap();
    assert!((v - 0.9843).abs() <= 0.02, "{v}");
    assert!(trace.final_points.iter().any(|pt| dist(pt, &[0.0, 1.0]) <= 0.1));
    assert!(check_upper_bound(&trace, 1.0, 0.0005));
    check_trace(&p, &trace);
}

#[test]
fn p1_order4_set_is_really_empty() {
    // The emptiness certificate at k = 4 is corroborated on a grid over the
    // only region where the relaxed complementarity constraint can hold.
    let p = load_bundled("p1_mpec").unwrap();
    let eps = 0.0005;
    let trace = run_algorithm1(&p, &AlgoConfig::new(eps, 4, 4)).unwrap();
    assert_eq!(trace.records[0].sk_status, SkStatus::EmptyCertified);
    let j4 = compute_jk(&p, 4, &SolverOptions::default()).unwrap();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=400 {
        let x = -0.05 + 0.1 * i as f64 / 400.0;
        for l in 0..=400 {
            let pt = [x, -1.0 + 2.0 * l as f64 / 400.0];
            let worst = p
                .constraints_g
                .iter()
                .chain(&p.constraints_h)
                .map(|g| g.eval(&pt))
                .chain([j4.eval(&pt)])
                .fold(f64::INFINITY, f64::min);
            best = best.max(worst);
        }
    }
    assert!(best < -eps, "{best}");
}

#[test]
fn p2_run_matches_the_perturbed_reference() {
    let p = load_bundled("p2_bilevel").unwrap();
    let trace = run_algorithm1(&p, &AlgoConfig::new(0.001, 3, 5)).unwrap();
    let v = trace.final_value.unwrap();
    let reference = solve_p_eps_reference(&p, 0.001, &OracleConfig::default()).unwrap().value().unwrap();
    assert!((v - reference).abs() <= 5e-3, "{v} vs {reference}");
    assert!(check_upper_bound(&trace, 2.0, 0.001));
    check_trace(&p, &trace);
}

#[test]
fn p3_run() {
    let p = load_bundled("p3_sip").unwrap();
    let trace = run_algorithm1(&p, &AlgoConfig::new(0.0001, 2, 4)).unwrap();
    let v = trace.final_value.unwrap();
    assert!(v.abs() <= 0.01, "{v}");
    assert!(trace.final_points.iter().any(|pt| dist(pt, &[0.0, 0.0]) <= 0.05));
    assert!(check_upper_bound(&trace, 0.0, 0.0001));
    assert_eq!(trace.termination_reason, TerminationReason::Converged);
    check_trace(&p, &trace);
}

#[test]
fn smaller_epsilon_never_lowers_the_value() {
    for (name, k0) in [("p1_mpec", 3), ("p3_sip", 2)] {
        let p = load_bundled(name).unwrap();
        let mut cfg = AlgoConfig::new(0.01, k0, k0 + 1);
        cfg.epsilon_ladder = Some(vec![0.001, 0.0001]);
        let traces = run_epsilon_ladder(&p, &cfg).unwrap();
        assert_eq!(traces.len(), 3);
        assert!(traces[0].final_value.is_some());
        for w in traces.windows(2) {
            assert!(w[1].config.epsilon < w[0].config.epsilon);
            // An empty perturbed set has value +inf.
            let (a, b) = (
                w[0].final_value.unwrap_or(f64::INFINITY),
                w[1].final_value.unwrap_or(f64::INFINITY),
            );
            assert!(b >= a - 1e-6, "{name}: {b} < {a}");
        }
    }
}

#[test]
fn empty_problem_reports_all_empty() {
    let p = load_problem(
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
    let trace = run_algorithm1(&p, &AlgoConfig::new(0.01, 2, 3)).unwrap();
    assert_eq!(trace.termination_reason, TerminationReason::AllEmpty);
    assert!(trace.final_value.is_none());
    assert!(trace.records.iter().all(|r| r.sk_status == SkStatus::EmptyCertified));
}

#[test]
fn invalid_configurations() {
    let p = load_bundled("p1_mpec").unwrap();
    assert!(run_algorithm1(&p, &AlgoConfig::new(-1.0, 3, 5)).is_err());
    assert!(run_algorithm1(&p, &AlgoConfig::new(0.001, 1, 5)).is_err());
    assert!(run_algorithm1(&p, &AlgoConfig::new(0.001, 4, 3)).is_err());
    let mut cfg = AlgoConfig::new(0.001, 3, 3);
    cfg.epsilon_ladder = Some(vec![0.01]);
    assert!(run_algorithm1(&p, &cfg).is_err());
}
