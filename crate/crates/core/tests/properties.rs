use std::sync::OnceLock;

use mpec_core::jm::{compute_jk, ValueFunctionApprox};
use mpec_core::oracle::{JOracle, JValue, OracleConfig};
use mpec_core::problem::load_bundled;
use mpec_core::sos::{build_moment_relaxation, solve_relaxation, RelaxationOutcome};
use mpec_core::{MpecProblem, Polynomial, SolverOptions};
use proptest::prelude::*;

fn p1() -> &'static (MpecProblem, ValueFunctionApprox) {
    static CELL: OnceLock<(MpecProblem, ValueFunctionApprox)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = load_bundled("p1_mpec").unwrap();
        let j = compute_jk(&p, 3, &SolverOptions::default()).unwrap();
        (p, j)
    })
}

fn p1_exact(x: f64, y: f64) -> f64 {
    let tail = -x * y * y / 2.0 + y.powi(3) / 3.0;
    if x >= 2.0 / 3.0 {
        tail
    } else {
        x / 2.0 - 1.0 / 3.0 + tail
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn approximation_stays_below_the_value_function(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let (_, j) = p1();
        prop_assert!(j.eval(&[x, y]) <= p1_exact(x, y) + 1e-6);
    }

    #[test]
    fn oracle_is_sound_and_sharp(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let (p, _) = p1();
        let oracle = JOracle::new(p, OracleConfig::default()).unwrap();
        let (value, argmin) = oracle.eval_with_argmin(&[x], &[y]);
        let JValue::Value(v) = value else { panic!("B(x) is never empty here") };
        let mut full = vec![x, y];
        full.extend(argmin.unwrap());
        prop_assert!(v <= p.phi.eval(&full) + 1e-9);
        prop_assert!(v >= p1_exact(x, y) - 1e-9);
        prop_assert!(v <= p1_exact(x, y) + 1e-6);
    }

    #[test]
    fn relaxation_bounds_the_grid_minimum(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        // min a x + b x^2 + c x^3 on [-1, 1]: every relaxation order is a
        // lower bound and the bound never decreases with the order.
        let vars = vec!["x".to_string()];
        let f = Polynomial::from_terms(&vars, vec![(vec![1], a), (vec![2], b), (vec![3], c)]);
        let g = Polynomial::from_terms(&vars, vec![(vec![0], 1.0), (vec![2], -1.0)]);
        let grid_min = (0..=20000).map(|i| f.eval(&[-1.0 + i as f64 / 10000.0])).fold(f64::INFINITY, f64::min);
        let mut prev = f64::NEG_INFINITY;
        for t in 2..=3 {
            let (relax, sdp) = build_moment_relaxation(&f, std::slice::from_ref(&g), t).unwrap();
            let RelaxationOutcome::Solved(sol) = solve_relaxation(&relax, &sdp, &SolverOptions::default()).unwrap() else {
                panic!("interval is nonempty");
            };
            prop_assert!(sol.bound <= grid_min + 1e-6);
            prop_assert!(sol.bound >= prev - 1e-7);
            prev = sol.bound;
        }
        // Univariate on an interval: exact at order 2 already.
        prop_assert!((prev - grid_min).abs() <= 1e-5);
    }
}
