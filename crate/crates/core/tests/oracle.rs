use mpec_core::oracle::{solve_p_eps_ladder, solve_p_eps_reference, JOracle, JValue, OracleConfig, PEpsReference};
use mpec_core::problem::{load_bundled, BUNDLED};

fn reference(name: &str, eps: f64) -> (f64, Vec<f64>) {
    let p = load_bundled(name).unwrap();
    match solve_p_eps_reference(&p, eps, &OracleConfig::default()).unwrap() {
        PEpsReference::Feasible { value, point } => (value, point),
        PEpsReference::Infeasible => panic!("{name} infeasible at {eps}"),
    }
}

#[test]
fn unperturbed_references() {
    for (name, value, point) in [("p1_mpec", 1.0, [0.0, 1.0]), ("p2_bilevel", 2.0, [0.0, 2.0]), ("p3_sip", 0.0, [0.0, 0.0])] {
        let (v, p) = reference(name, 0.0);
        assert!((v - value).abs() <= 5e-3, "{name}: {v}");
        assert!((p[0] - point[0]).abs() <= 5e-3 && (p[1] - point[1]).abs() <= 5e-3, "{name}: {p:?}");
    }
}

#[test]
fn references_do_not_increase_with_epsilon() {
    let ladder = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];
    for name in BUNDLED {
        let p = load_bundled(name).unwrap();
        let refs = solve_p_eps_ladder(&p, &ladder, &OracleConfig::default()).unwrap();
        let vals: Vec<f64> = refs.iter().map(|(_, r)| r.value().unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{name}: {vals:?}");
        }
    }
}

#[test]
fn doubling_the_inner_grid_is_stable() {
    for name in BUNDLED {
        let p = load_bundled(name).unwrap();
        let base = JOracle::new(&p, OracleConfig::default()).unwrap();
        let fine = JOracle::new(
            &p,
            OracleConfig {
                inner_grid: Some(2 * OracleConfig::default().inner_points(p.m()) - 1),
                ..OracleConfig::default()
            },
        )
        .unwrap();
        let half = p.omega.halfwidths();
        for i in 0..=10 {
            for j in 0..=10 {
                let xy = [half[0] * (i as f64 / 5.0 - 1.0), half[1] * (j as f64 / 5.0 - 1.0)];
                match (base.eval_point(&xy), fine.eval_point(&xy)) {
                    (JValue::Value(a), JValue::Value(b)) => assert!((a - b).abs() <= 1e-3, "{name} {xy:?}"),
                    (a, b) => assert_eq!(a, b),
                }
            }
        }
    }
}

#[test]
fn parallel_schedule_does_not_matter() {
    let a = reference("p2_bilevel", 1e-3);
    let b = reference("p2_bilevel", 1e-3);
    assert_eq!(a, b);
}
