//! Randomized instances with a planted optimum or a planted certificate.

mod common;

use common::{planted, planted_infeasible, random_sym, sym_entries, Planted};
use mpec_core::sdp::{dual_ray_residual, primal_ray_residual, solve, Block, BlockKind, SdpProblem, SdpStatus, SolverOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn planted_optima_match() {
    let opts = SolverOptions::default();
    let start = std::time::Instant::now();
    for seed in 0..50 {
        let Planted { problem, optimum } = planted(seed);
        let sol = solve(&problem, &opts).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal, "seed {seed}");
        let rel = (sol.primal_objective - optimum).abs() / (1.0 + optimum.abs());
        assert!(rel <= 1e-7, "seed {seed}: got {} want {optimum} rel {rel}", sol.primal_objective);
        assert!(sol.residuals.primal <= opts.feas_tol);
        assert!(sol.residuals.dual <= opts.feas_tol);
        assert!(sol.gap <= opts.gap_tol);
    }
    assert!(start.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn complementarity_shrinks_steadily() {
    for seed in 0..10 {
        let sol = solve(&planted(seed).problem, &SolverOptions::default()).unwrap();
        let mu = &sol.mu_history;
        for k in 5..mu.len() {
            assert!(mu[k] <= 0.5 * mu[k - 5], "seed {seed} iteration {k}: {:?}", &mu[k - 5..=k]);
        }
    }
}

#[test]
fn planted_primal_infeasibility() {
    for seed in 0..10u64 {
        let p = planted_infeasible(seed);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::PrimalInfeasible, "seed {seed}");
        let ray = sol.dual_ray.unwrap();
        let by: f64 = ray.iter().zip(&p.constraints).map(|(y, c)| y * c.rhs).sum();
        assert!((by - 1.0).abs() < 1e-9);
        assert!(dual_ray_residual(&p, &ray) <= 1e-8, "seed {seed}");
    }
}

#[test]
fn planted_dual_infeasibility() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let n = rng.random_range(2..=12);
        let mut p = SdpProblem::new(vec![Block {
            kind: BlockKind::Psd,
            size: n,
        }]);
        // A recession direction D >= 0 orthogonal to every constraint, with
        // objective -I so that <C, D> < 0.
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let d = &g * g.transpose();
        let dd = d.dot(&d);
        let x0 = DMatrix::<f64>::identity(n, n);
        for _ in 0..rng.random_range(1..=n) {
            let a = random_sym(n, &mut rng);
            let a = &a - &d * (a.dot(&d) / dd);
            p.add_constraint(sym_entries(0, &a), a.dot(&x0));
        }
        p.objective = sym_entries(0, &(-DMatrix::<f64>::identity(n, n)));
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::DualInfeasible, "seed {seed}");
        let ray = sol.primal_ray.unwrap();
        assert!(primal_ray_residual(&p, &ray) <= 1e-8, "seed {seed}");
    }
}
