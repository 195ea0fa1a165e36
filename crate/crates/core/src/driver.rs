//! The outer loop: for increasing `k`, approximate the value function, test
//! whether the perturbed feasible set is empty, solve the perturbed
//! polynomial problem by moment relaxations, and keep the running minimum.
//! Also the power-law fit of the perturbed optimal value against epsilon.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jm::{compute_jk, JmError, ValueFunctionApprox};
use crate::poly::Polynomial;
use crate::problem::MpecProblem;
use crate::sdp::SolverOptions;
use crate::sos::{
    box_generators, build_moment_relaxation, certify_feasibility, min_order, solve_relaxation, Feasibility,
    RelaxationOutcome,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("epsilon fit needs at least 3 usable samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample value {value} lies above the reference {f_star}")]
    AboveReference { value: f64, f_star: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub epsilon: f64,
    pub k_start: u32,
    pub k_max: u32,
    /// Relaxation orders tried per iteration: the minimal one plus this many.
    pub extra_orders: u32,
    pub stop_tol: f64,
    pub stall_iterations: usize,
    /// Further decreasing epsilons swept after `epsilon`, reusing the
    /// value-function approximations.
    pub epsilon_ladder: Option<Vec<f64>>,
    pub solver: SolverOptions,
}

impl AlgoConfig {
    pub fn new(epsilon: f64, k_start: u32, k_max: u32) -> Self {
        Self {
            epsilon,
            k_start,
            k_max,
            extra_orders: 2,
            stop_tol: 1e-6,
            stall_iterations: 2,
            epsilon_ladder: None,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self, problem: &MpecProblem) -> Result<(), DriverError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(DriverError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let k_min = problem.k_min();
        if self.k_start < k_min {
            return Err(DriverError::Config(format!(
                "k_start {} below the admissible minimum {k_min}",
                self.k_start
            )));
        }
        if self.k_max < self.k_start {
            return Err(DriverError::Config(format!("k_max {} < k_start {}", self.k_max, self.k_start)));
        }
        if self.stall_iterations == 0 {
            return Err(DriverError::Config("stall_iterations must be at least 1".into()));
        }
        if let Some(ladder) = &self.epsilon_ladder {
            let mut prev = self.epsilon;
            for &e in ladder {
                if !(e > 0.0 && e < prev) {
                    return Err(DriverError::Config("epsilon ladder must be positive and decreasing".into()));
                }
                prev = e;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkStatus {
    Nonempty,
    EmptyCertified,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u32,
    pub jk: Option<ValueFunctionApprox>,
    pub sk_status: SkStatus,
    /// Point found while testing the set for emptiness.
    pub sk_witness: Option<Vec<f64>>,
    /// Optimal value of the perturbed problem at this `k`, set only when a
    /// relaxation was flat and its minimizers were extracted.
    pub val_pk_eps: Option<f64>,
    /// Best lower bound from the relaxations tried.
    pub relaxation_bound: Option<f64>,
    /// Last relaxation order solved.
    pub relaxation_order: Option<u32>,
    pub flat: bool,
    pub points: Vec<Vec<f64>>,
    /// Running minimum of `val_pk_eps` over this and earlier iterations.
    pub v_eps_k: Option<f64>,
    /// Set when a solver failure made the iteration unusable.
    pub failure: Option<String>,
    pub seconds: f64,
}

impl IterationRecord {
    pub fn succeeded(&self) -> bool {
        self.val_pk_eps.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    Converged,
    KMax,
    AllEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmTrace {
    pub problem: String,
    pub config: AlgoConfig,
    pub records: Vec<IterationRecord>,
    pub final_value: Option<f64>,
    pub final_points: Vec<Vec<f64>>,
    pub termination_reason: TerminationReason,
    pub total_seconds: f64,
}

impl AlgorithmTrace {
    /// `k,v_eps_k` rows for successful iterations.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,v_eps_k\n");
        for r in &self.records {
            if let Some(v) = r.v_eps_k {
                out.push_str(&format!("{},{v:e}\n", r.k));
            }
        }
        out
    }

    /// `true` if the running minimum never increases.
    pub fn running_min_is_monotone(&self) -> bool {
        let vals: Vec<f64> = self.records.iter().filter_map(|r| r.v_eps_k).collect();
        vals.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `p(c_1 z_1, ..., c_n z_n)`: the polynomial in coordinates where the box
/// becomes `[-1, 1]^n`.
pub fn to_unit_box(p: &Polynomial, halfwidths: &[f64]) -> Polynomial {
    let vars = p.vars().to_vec();
    let map: Vec<(&str, Polynomial)> = vars
        .iter()
        .zip(halfwidths)
        .map(|(v, &c)| (v.as_str(), Polynomial::variable(&vars, v).expect("declared").scale(c)))
        .collect();
    p.substitute(&map).expect("same variables")
}

/// Generators of `S_k` over `(x, y)`: every constraint relaxed by `eps`,
/// plus the box.
pub fn perturbed_generators(problem: &MpecProblem, jk: &Polynomial, eps: f64) -> Vec<Polynomial> {
    let vars = problem.outer_vars();
    let shift = Polynomial::constant(&vars, eps);
    let mut gens: Vec<Polynomial> = problem
        .constraints_g
        .iter()
        .chain(&problem.constraints_h)
        .chain(std::iter::once(jk))
        .map(|g| g.add(&shift).expect("same variables"))
        .collect();
    gens.extend(box_generators(&vars, problem.omega.bounds()));
    gens
}

type Cache = BTreeMap<u32, Result<ValueFunctionApprox, JmError>>;

fn approximation<'c>(cache: &'c mut Cache, problem: &MpecProblem, k: u32, options: &SolverOptions) -> &'c Result<ValueFunctionApprox, JmError> {
    cache.entry(k).or_insert_with(|| compute_jk(problem, k, options))
}

fn iterate(problem: &MpecProblem, config: &AlgoConfig, eps: f64, k: u32, cache: &mut Cache) -> IterationRecord {
    let start = Instant::now();
    let mut rec = IterationRecord {
        k,
        jk: None,
        sk_status: SkStatus::Unknown,
        sk_witness: None,
        val_pk_eps: None,
        relaxation_bound: None,
        relaxation_order: None,
        flat: false,
        points: Vec::new(),
        v_eps_k: None,
        failure: None,
        seconds: 0.0,
    };
    let jk = match approximation(cache, problem, k, &config.solver) {
        Ok(j) => j.clone(),
        Err(e) => {
            rec.failure = Some(format!("value-function program: {e}"));
            rec.seconds = start.elapsed().as_secs_f64();
            return rec;
        }
    };
    let vars = problem.outer_vars();
    let half = problem.omega.halfwidths();
    // Relaxations are posed on the unit box for conditioning.
    let gens: Vec<Polynomial> = perturbed_generators(problem, &jk.polynomial(), eps)
        .iter()
        .map(|g| to_unit_box(g, &half))
        .collect();
    let objective = to_unit_box(&problem.objective, &half);
    let unscale = |z: Vec<f64>| -> Vec<f64> { z.iter().zip(&half).map(|(a, c)| a * c).collect() };
    rec.jk = Some(jk);
    let t0 = min_order(&objective, &gens);

    match certify_feasibility(&vars, &gens, t0, &config.solver) {
        Ok(Feasibility::EmptyCertified) => {
            rec.sk_status = SkStatus::EmptyCertified;
            rec.seconds = start.elapsed().as_secs_f64();
            return rec;
        }
        Ok(Feasibility::Nonempty(w)) => {
            rec.sk_status = SkStatus::Nonempty;
            rec.sk_witness = Some(unscale(w));
        }
        Ok(Feasibility::Unknown) => {}
        Err(e) => rec.failure = Some(format!("emptiness test: {e}")),
    }

    let mut last_failure = None;
    for t in t0..=t0 + config.extra_orders {
        let outcome = build_moment_relaxation(&objective, &gens, t)
            .and_then(|(relax, sdp)| solve_relaxation(&relax, &sdp, &config.solver));
        match outcome {
            Ok(RelaxationOutcome::Solved(sol)) => {
                rec.relaxation_bound = Some(rec.relaxation_bound.map_or(sol.bound, |b: f64| b.max(sol.bound)));
                rec.relaxation_order = Some(t);
                if sol.flat {
                    rec.val_pk_eps = Some(sol.bound);
                    rec.flat = true;
                    rec.points = sol.atoms.into_iter().map(unscale).collect();
                    rec.failure = None;
                    break;
                }
                last_failure = Some(format!("relaxation order {t}: not flat"));
            }
            Ok(RelaxationOutcome::Empty { .. }) => {
                rec.sk_status = SkStatus::EmptyCertified;
                rec.failure = None;
                break;
            }
            Ok(RelaxationOutcome::Failed(status)) => last_failure = Some(format!("relaxation order {t}: {status:?}")),
            Err(e) => last_failure = Some(format!("relaxation order {t}: {e}")),
        }
    }
    if !rec.flat && rec.sk_status != SkStatus::EmptyCertified {
        rec.failure = last_failure.or(rec.failure.take());
    }
    rec.seconds = start.elapsed().as_secs_f64();
    rec
}

fn run_with_cache(problem: &MpecProblem, config: &AlgoConfig, eps: f64, cache: &mut Cache) -> AlgorithmTrace {
    let start = Instant::now();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut running: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut stalls = 0;
    let mut reason = TerminationReason::KMax;
    for k in config.k_start..=config.k_max {
        let mut rec = iterate(problem, config, eps, k, cache);
        if let Some(v) = rec.val_pk_eps {
            let improvement = match &running {
                Some((best, _)) => best - v,
                None => f64::INFINITY,
            };
            if running.as_ref().is_none_or(|(best, _)| v < *best) {
                running = Some((v, rec.points.clone()));
            }
            rec.v_eps_k = running.as_ref().map(|r| r.0);
            stalls = if improvement < config.stop_tol { stalls + 1 } else { 0 };
        } else {
            rec.v_eps_k = running.as_ref().map(|r| r.0);
        }
        records.push(rec);
        if stalls >= config.stall_iterations {
            reason = TerminationReason::Converged;
            break;
        }
    }
    if running.is_none() && records.iter().all(|r| r.sk_status == SkStatus::EmptyCertified) {
        reason = TerminationReason::AllEmpty;
    }
    let mut cfg = config.clone();
    cfg.epsilon = eps;
    AlgorithmTrace {
        problem: problem.name.clone(),
        config: cfg,
        records,
        final_value: running.as_ref().map(|r| r.0),
        final_points: running.map(|r| r.1).unwrap_or_default(),
        termination_reason: reason,
        total_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Run the outer loop at `config.epsilon`.
pub fn run_algorithm1(problem: &MpecProblem, config: &AlgoConfig) -> Result<AlgorithmTrace, DriverError> {
    config.validate(problem)?;
    Ok(run_with_cache(problem, config, config.epsilon, &mut Cache::new()))
}

/// Run at `config.epsilon` and then at each ladder value, computing each
/// value-function approximation once.
pub fn run_epsilon_ladder(problem: &MpecProblem, config: &AlgoConfig) -> Result<Vec<AlgorithmTrace>, DriverError> {
    config.validate(problem)?;
    let mut cache = Cache::new();
    let mut eps = vec![config.epsilon];
    eps.extend(config.epsilon_ladder.iter().flatten().copied());
    Ok(eps.into_iter().map(|e| run_with_cache(problem, config, e, &mut cache)).collect())
}

/// `true` iff the final running minimum lies below `f_star + epsilon`.
pub fn check_upper_bound(trace: &AlgorithmTrace, f_star: f64, epsilon: f64) -> bool {
    trace.final_value.is_some_and(|v| v < f_star + epsilon + 1e-6)
}

/// `true` when the final value exceeds a reference by more than `tol`.
pub fn stagnates_above(trace: &AlgorithmTrace, reference: f64, tol: f64) -> bool {
    trace.final_value.is_some_and(|v| v > reference + tol)
}

/// Re-check the invariants a trace must satisfy; returns a description of
/// each violation.
pub fn verify_trace(trace: &AlgorithmTrace, problem: &MpecProblem) -> Vec<String> {
    let mut out = Vec::new();
    let eps = trace.config.epsilon;
    if !trace.running_min_is_monotone() {
        out.push("running minimum increases".into());
    }
    let mut best: Option<f64> = None;
    for r in &trace.records {
        if let Some(v) = r.val_pk_eps {
            best = Some(best.map_or(v, |b| b.min(v)));
        }
        if r.v_eps_k != best {
            out.push(format!("k={}: running minimum {:?} differs from {:?}", r.k, r.v_eps_k, best));
        }
        if let Some(j) = &r.jk {
            if j.degree() > 2 * r.k {
                out.push(format!("k={}: approximation degree {} exceeds {}", r.k, j.degree(), 2 * r.k));
            }
        }
    }
    if trace.final_value != best {
        out.push(format!("final value {:?} differs from {:?}", trace.final_value, best));
    }
    for p in &trace.final_points {
        if !problem.in_a(p, eps + 1e-6) || !problem.in_b(p, eps + 1e-6) {
            out.push(format!("point {p:?} violates a constraint beyond {eps} + 1e-6"));
        }
        if !problem.omega.contains(p, 1e-6) {
            out.push(format!("point {p:?} outside the box"));
        }
    }
    let succeeded = trace.records.iter().any(IterationRecord::succeeded);
    let all_empty = trace.records.iter().all(|r| r.sk_status == SkStatus::EmptyCertified);
    if (trace.termination_reason == TerminationReason::AllEmpty) != (!succeeded && all_empty) {
        out.push(format!("termination {:?} inconsistent with the records", trace.termination_reason));
    }
    out
}

/// `f_star - val(eps) ~ -c eps^q`, fitted in log-log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsScalingFit {
    pub c: f64,
    /// `None` when every sample equals the reference (`c = 0`).
    pub q: Option<f64>,
    /// Sum of squared log-log residuals.
    pub residual: f64,
    pub samples: Vec<(f64, f64)>,
    pub constant: bool,
}

const GAP_FLOOR: f64 = 1e-9;

pub fn fit_eps_scaling(samples: &[(f64, f64)], f_star: f64) -> Result<EpsScalingFit, DriverError> {
    let positive: Vec<(f64, f64)> = samples.iter().copied().filter(|&(e, _)| e > 0.0).collect();
    if positive.len() < 3 {
        return Err(DriverError::TooFewSamples(positive.len()));
    }
    if let Some(&(_, value)) = positive.iter().find(|&&(_, v)| v > f_star + GAP_FLOOR) {
        return Err(DriverError::AboveReference { value, f_star });
    }
    let usable: Vec<(f64, f64)> = positive
        .iter()
        .filter(|&&(_, v)| f_star - v > GAP_FLOOR)
        .map(|&(e, v)| (e.ln(), (f_star - v).ln()))
        .collect();
    if usable.is_empty() {
        return Ok(EpsScalingFit {
            c: 0.0,
            q: None,
            residual: 0.0,
            samples: positive,
            constant: true,
        });
    }
    if usable.len() < 3 {
        return Err(DriverError::TooFewSamples(usable.len()));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(DriverError::TooFewSamples(1));
    }
    let q = sxy / sxx;
    let a = my - q * mx;
    let residual = usable.iter().map(|p| (p.1 - a - q * p.0).powi(2)).sum();
    Ok(EpsScalingFit {
        c: -a.exp(),
        q: Some(q),
        residual,
        samples: positive,
        constant: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_box_substitution() {
        let vars = vec!["x".to_string(), "y".to_string()];
        let p = Polynomial::from_terms(&vars, vec![(vec![1, 2], 0.5), (vec![0, 3], -1.0 / 3.0), (vec![0, 0], 2.0)]);
        let q = to_unit_box(&p, &[1.0, 2.0]);
        for &(u, w) in &[(0.3, -0.7), (-1.0, 1.0), (0.0, 0.5)] {
            assert!((q.eval(&[u, w]) - p.eval(&[u, 2.0 * w])).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = [1e-4, 1e-3, 1e-2, 1e-1].iter().map(|&e: &f64| (e, 1.0 - 2.0 * e.sqrt())).collect();
        let fit = fit_eps_scaling(&s, 1.0).unwrap();
        assert!((fit.c + 2.0).abs() < 1e-9, "{fit:?}");
        assert!((fit.q.unwrap() - 0.5).abs() < 1e-9);
        assert!(fit.residual <= 1e-10);
        assert!(!fit.constant);
    }

    #[test]
    fn constant_values_take_the_zero_branch() {
        let s = vec![(1e-3, 1.0), (1e-2, 1.0), (1e-1, 1.0)];
        let fit = fit_eps_scaling(&s, 1.0).unwrap();
        assert!(fit.constant);
        assert_eq!(fit.c, 0.0);
        assert_eq!(fit.q, None);
    }

    #[test]
    fn fit_preconditions() {
        assert_eq!(fit_eps_scaling(&[(0.1, 0.5), (0.2, 0.4)], 1.0), Err(DriverError::TooFewSamples(2)));
        assert!(matches!(
            fit_eps_scaling(&[(0.1, 1.5), (0.2, 0.4), (0.3, 0.3)], 1.0),
            Err(DriverError::AboveReference { .. })
        ));
    }

    #[test]
    fn upper_bound_negative_control() {
        let trace = AlgorithmTrace {
            problem: "synthetic".into(),
            config: AlgoConfig::new(0.01, 1, 1),
            records: Vec::new(),
            final_value: Some(1.0 + 2.0 * 0.01),
            final_points: Vec::new(),
            termination_reason: TerminationReason::KMax,
            total_seconds: 0.0,
        };
        assert!(!check_upper_bound(&trace, 1.0, 0.01));
        let mut ok = trace.clone();
        ok.final_value = Some(0.999);
        assert!(check_upper_bound(&ok, 1.0, 0.01));
    }
}
