//! Brute-force ground truth for small instances: the value function by inner
//! grid minimization and reference solutions of the perturbed problem by
//! outer grid search. Both use nested grid refinement around the incumbent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Polynomial;
use crate::problem::MpecProblem;

/// Largest `n + m` the oracle accepts.
pub const MAX_DIMS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle limited to {MAX_DIMS} total dimensions, problem has {0}")]
    TooManyDims(usize),
    #[error("grid counts must be at least 3")]
    GridTooSmall,
    #[error("epsilon must be nonnegative, got {0}")]
    NegativeEpsilon(f64),
    #[error("point has {got} coordinates, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Points per inner dimension; `None` picks 2001 (m = 1) or 201 (m >= 2).
    pub inner_grid: Option<usize>,
    /// Points per outer dimension; `None` picks 401 for up to two dimensions
    /// and fewer beyond.
    pub outer_grid: Option<usize>,
    /// Each round re-grids one cell around the incumbent with a 10x finer
    /// cell.
    pub refinement_rounds: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            inner_grid: None,
            outer_grid: None,
            refinement_rounds: 2,
        }
    }
}

impl OracleConfig {
    pub fn inner_points(&self, m: usize) -> usize {
        self.inner_grid.unwrap_or(if m == 1 { 2001 } else { 201 })
    }

    pub fn outer_points(&self, dims: usize) -> usize {
        self.outer_grid.unwrap_or(match dims {
            0..=2 => 401,
            3 => 61,
            _ => 21,
        })
    }

    fn check(&self, problem: &MpecProblem) -> Result<(), OracleError> {
        let dims = problem.n() + problem.m();
        if dims > MAX_DIMS {
            return Err(OracleError::TooManyDims(dims));
        }
        if self.inner_points(problem.m()) < 3 || self.outer_points(dims) < 3 {
            return Err(OracleError::GridTooSmall);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum JValue {
    Value(f64),
    /// No sampled `v` satisfies the constraints of `B(x)`.
    EmptyBx,
}

impl JValue {
    pub fn value(self) -> Option<f64> {
        match self {
            JValue::Value(v) => Some(v),
            JValue::EmptyBx => None,
        }
    }
}

/// Polynomial with some leading coordinates fixed; cheap to evaluate in the
/// remaining ones.
enum Partial {
    // Univariate: dense coefficients, Horner evaluation.
    Dense(Vec<f64>),
    // (exponents over the free coordinates, coefficient)
    Sparse(Vec<(Vec<u32>, f64)>),
}

impl Partial {
    fn new(p: &Polynomial, fixed: &[f64], free_offset: usize) -> Self {
        let mut acc: std::collections::BTreeMap<Vec<u32>, f64> = Default::default();
        for (e, c) in p.terms() {
            let ex = e.exponents();
            let mut coef = c;
            for (i, &val) in fixed.iter().enumerate() {
                if ex[i] > 0 {
                    coef *= val.powi(ex[i] as i32);
                }
            }
            *acc.entry(ex[free_offset..].to_vec()).or_insert(0.0) += coef;
        }
        if p.num_vars() == free_offset + 1 {
            let deg = acc.keys().map(|e| e[0] as usize).max().unwrap_or(0);
            let mut dense = vec![0.0; deg + 1];
            for (e, c) in acc {
                dense[e[0] as usize] += c;
            }
            return Partial::Dense(dense);
        }
        Partial::Sparse(acc.into_iter().filter(|(_, c)| *c != 0.0).collect())
    }

    fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Partial::Dense(c) => c.iter().rev().fold(0.0, |acc, &a| acc * v[0] + a),
            Partial::Sparse(terms) => terms
                .iter()
                .map(|(e, c)| {
                    e.iter()
                        .zip(v)
                        .fold(*c, |acc, (&k, &x)| if k == 0 { acc } else { acc * x.powi(k as i32) })
                })
                .sum(),
        }
    }
}

/// Points per dimension of a refinement window: the window spans one old
/// cell on each side of the incumbent and the new cell is 10x smaller.
pub const REFINE_POINTS: usize = 21;

/// Value function oracle bound to one problem.
pub struct JOracle<'a> {
    problem: &'a MpecProblem,
    config: OracleConfig,
    // h_j(x, v) with (x, y, v) ordering
    h_v: Vec<Polynomial>,
    v_half: Vec<f64>,
}

fn grid_value(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if k + 1 == n {
        hi
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

/// Tensor grid iterator: index -> point, first coordinate fastest.
fn grid_point(index: usize, lo: &[f64], hi: &[f64], n: usize, out: &mut [f64]) {
    let mut r = index;
    for d in 0..lo.len() {
        out[d] = grid_value(lo[d], hi[d], n, r % n);
        r /= n;
    }
}

impl<'a> JOracle<'a> {
    pub fn new(problem: &'a MpecProblem, config: OracleConfig) -> Result<Self, OracleError> {
        config.check(problem)?;
        let n = problem.n();
        let v_half = problem.omega.halfwidths()[n..].to_vec();
        Ok(Self {
            problem,
            config,
            h_v: problem.h_in_v(),
            v_half,
        })
    }

    /// `J(x, y)` together with the minimizing sample `v`.
    pub fn eval_with_argmin(&self, x: &[f64], y: &[f64]) -> (JValue, Option<Vec<f64>>) {
        self.scan(x, y, f64::NEG_INFINITY)
    }

    /// `true` iff the oracle value is at least `threshold`; stops at the first
    /// sample below it.
    pub fn at_least(&self, xy: &[f64], threshold: f64) -> bool {
        let n = self.problem.n();
        match self.scan(&xy[..n], &xy[n..], threshold).0 {
            JValue::Value(j) => j >= threshold,
            JValue::EmptyBx => false,
        }
    }

    fn scan(&self, x: &[f64], y: &[f64], stop_below: f64) -> (JValue, Option<Vec<f64>>) {
        let n = self.problem.n();
        let m = self.problem.m();
        let mut xy = x.to_vec();
        xy.extend_from_slice(y);
        let phi = Partial::new(&self.problem.phi, &xy, n + m);
        let hs: Vec<Partial> = self.h_v.iter().map(|h| Partial::new(h, &xy, n + m)).collect();
        let pts = self.config.inner_points(m);

        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut lo: Vec<f64> = self.v_half.iter().map(|c| -c).collect();
        let mut hi: Vec<f64> = self.v_half.clone();
        let mut v = vec![0.0; m];
        let mut cell: Vec<f64> = self.v_half.iter().map(|c| 2.0 * c / (pts - 1) as f64).collect();
        for round in 0..=self.config.refinement_rounds {
            let per_dim = if round == 0 { pts } else { REFINE_POINTS };
            let total = per_dim.pow(m as u32);
            // Coarse-to-fine visiting order so that early exits happen early;
            // every index is visited exactly once.
            let order = (0..total).step_by(64).chain(
                (0..total)
                    .step_by(8)
                    .filter(|i| i % 64 != 0)
                    .chain((0..total).filter(|i| i % 8 != 0)),
            );
            for idx in order {
                grid_point(idx, &lo, &hi, per_dim, &mut v);
                if hs.iter().any(|h| h.eval(&v) < 0.0) {
                    continue;
                }
                let val = phi.eval(&v);
                if best.as_ref().is_none_or(|(b, _)| val < *b) {
                    best = Some((val, v.clone()));
                    if val < stop_below {
                        return (JValue::Value(val), Some(v));
                    }
                }
            }
            let Some((_, center)) = &best else {
                break;
            };
            for d in 0..m {
                lo[d] = (center[d] - cell[d]).max(-self.v_half[d]);
                hi[d] = (center[d] + cell[d]).min(self.v_half[d]);
                cell[d] /= 10.0;
            }
        }
        match best {
            Some((val, v)) => (JValue::Value(val), Some(v)),
            None => (JValue::EmptyBx, None),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> JValue {
        self.eval_with_argmin(x, y).0
    }

    pub fn eval_point(&self, xy: &[f64]) -> JValue {
        let n = self.problem.n();
        self.eval(&xy[..n], &xy[n..])
    }
}

/// `J(x, y) = min { phi(x, y, v) : h_j(x, v) >= 0 }` by grid search.
pub fn eval_j(problem: &MpecProblem, x: &[f64], y: &[f64], config: &OracleConfig) -> Result<JValue, OracleError> {
    if x.len() != problem.n() {
        return Err(OracleError::Dimension {
            expected: problem.n(),
            got: x.len(),
        });
    }
    if y.len() != problem.m() {
        return Err(OracleError::Dimension {
            expected: problem.m(),
            got: y.len(),
        });
    }
    Ok(JOracle::new(problem, *config)?.eval(x, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PEpsReference {
    Feasible { value: f64, point: Vec<f64> },
    Infeasible,
}

impl PEpsReference {
    pub fn value(&self) -> Option<f64> {
        match self {
            PEpsReference::Feasible { value, .. } => Some(*value),
            PEpsReference::Infeasible => None,
        }
    }
}

const BATCH: usize = 256;

/// Best grid point of the window by objective among points passing the
/// perturbed constraints. Candidates are sorted by objective and checked in
/// order, so the value function is evaluated only where needed.
fn search_window(
    problem: &MpecProblem,
    oracle: &JOracle<'_>,
    eps: f64,
    lo: &[f64],
    hi: &[f64],
    pts: usize,
) -> Option<(f64, Vec<f64>)> {
    let dims = lo.len();
    let total = pts.pow(dims as u32);
    let mut cands: Vec<(f64, usize)> = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let mut p = vec![0.0; dims];
            grid_point(idx, lo, hi, pts, &mut p);
            (problem.in_a(&p, eps) && problem.in_b(&p, eps)).then(|| (problem.objective.eval(&p), idx))
        })
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for batch in cands.chunks(BATCH) {
        let hit = batch
            .par_iter()
            .map(|&(f, idx)| {
                let mut p = vec![0.0; dims];
                grid_point(idx, lo, hi, pts, &mut p);
                oracle.at_least(&p, -eps).then_some((f, p))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .next();
        if hit.is_some() {
            return hit;
        }
    }
    None
}

/// Reference solution of the perturbed problem by outer grid search with
/// refinement.
pub fn solve_p_eps_reference(
    problem: &MpecProblem,
    eps: f64,
    config: &OracleConfig,
) -> Result<PEpsReference, OracleError> {
    if !(eps >= 0.0) {
        return Err(OracleError::NegativeEpsilon(eps));
    }
    let oracle = JOracle::new(problem, *config)?;
    let dims = problem.n() + problem.m();
    let pts = config.outer_points(dims);
    let half = problem.omega.halfwidths();
    let lo: Vec<f64> = half.iter().map(|c| -c).collect();
    let mut best = search_window(problem, &oracle, eps, &lo, &half, pts);
    let Some((_, mut center)) = best.clone() else {
        return Ok(PEpsReference::Infeasible);
    };
    let mut cell: Vec<f64> = half.iter().map(|c| 2.0 * c / (pts - 1) as f64).collect();
    for _ in 0..config.refinement_rounds {
        let wlo: Vec<f64> = (0..dims).map(|d| (center[d] - cell[d]).max(-half[d])).collect();
        let whi: Vec<f64> = (0..dims).map(|d| (center[d] + cell[d]).min(half[d])).collect();
        cell.iter_mut().for_each(|c| *c /= 10.0);
        if let Some((f, p)) = search_window(problem, &oracle, eps, &wlo, &whi, REFINE_POINTS) {
            if best.as_ref().is_none_or(|(b, _)| f < *b) {
                best = Some((f, p.clone()));
                center = p;
            }
        }
    }
    let (value, point) = best.expect("incumbent exists");
    Ok(PEpsReference::Feasible { value, point })
}

/// References along an increasing epsilon ladder. Values are made
/// non-increasing by carrying forward the incumbent: a point feasible at a
/// smaller epsilon stays feasible at a larger one.
pub fn solve_p_eps_ladder(
    problem: &MpecProblem,
    epsilons: &[f64],
    config: &OracleConfig,
) -> Result<Vec<(f64, PEpsReference)>, OracleError> {
    let mut order: Vec<usize> = (0..epsilons.len()).collect();
    order.sort_by(|&a, &b| epsilons[a].total_cmp(&epsilons[b]));
    let mut out: Vec<Option<PEpsReference>> = vec![None; epsilons.len()];
    let mut carry: Option<(f64, Vec<f64>)> = None;
    for i in order {
        let r = solve_p_eps_reference(problem, epsilons[i], config)?;
        let merged = match (r, &carry) {
            (PEpsReference::Feasible { value, point: _ }, Some((cv, cp))) if *cv < value => PEpsReference::Feasible {
                value: *cv,
                point: cp.clone(),
            },
            (PEpsReference::Feasible { value, point }, _) => PEpsReference::Feasible { value, point },
            (PEpsReference::Infeasible, Some((cv, cp))) => PEpsReference::Feasible {
                value: *cv,
                point: cp.clone(),
            },
            (PEpsReference::Infeasible, None) => PEpsReference::Infeasible,
        };
        if let PEpsReference::Feasible { value, point } = &merged {
            carry = Some((*value, point.clone()));
        }
        out[i] = Some(merged);
    }
    Ok(epsilons.iter().copied().zip(out.into_iter().map(|r| r.expect("filled"))).collect())
}

/// Grid over the box with `per_dim` points per coordinate (midpoints of
/// equal cells when `midpoints`), first coordinate fastest.
pub fn box_grid(problem: &MpecProblem, per_dim: usize, midpoints: bool) -> Vec<Vec<f64>> {
    let half = problem.omega.halfwidths();
    let dims = half.len();
    let total = per_dim.pow(dims as u32);
    (0..total)
        .map(|idx| {
            let mut r = idx;
            (0..dims)
                .map(|d| {
                    let k = r % per_dim;
                    r /= per_dim;
                    let c = half[d];
                    if midpoints {
                        -c + 2.0 * c * (k as f64 + 0.5) / per_dim as f64
                    } else {
                        grid_value(-c, c, per_dim, k)
                    }
                })
                .collect()
        })
        .collect()
}

/// Evaluate the oracle at many points in parallel; order preserved.
pub fn eval_j_many(oracle: &JOracle<'_>, points: &[Vec<f64>]) -> Vec<JValue> {
    points.par_iter().map(|p| oracle.eval_point(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::load_bundled;

    fn cfg() -> OracleConfig {
        OracleConfig::default()
    }

    #[test]
    fn p1_closed_form_branch() {
        let p = load_bundled("p1_mpec").unwrap();
        let j = eval_j(&p, &[0.8], &[0.5], &cfg()).unwrap().value().unwrap();
        assert!((j + 0.058_333_333).abs() < 1e-4, "{j}");
    }

    #[test]
    fn p2_inner_problem_at_zero() {
        let p = load_bundled("p2_bilevel").unwrap();
        // J(0, y) + (0 - y^3/24) is the inner value at x = 0.
        let j = eval_j(&p, &[0.0], &[0.0], &cfg()).unwrap().value().unwrap();
        assert!((j + 1.0 / 3.0).abs() < 1e-4, "{j}");
    }

    #[test]
    fn p3_closed_form() {
        let p = load_bundled("p3_sip").unwrap();
        let j = eval_j(&p, &[0.5], &[1.0], &cfg()).unwrap().value().unwrap();
        assert!((j - 0.6875).abs() < 1e-4, "{j}");
    }

    #[test]
    fn argmin_is_an_upper_bound_witness() {
        let p = load_bundled("p1_mpec").unwrap();
        let o = JOracle::new(&p, cfg()).unwrap();
        for &(x, y) in &[(0.1, 0.2), (-0.7, 0.9), (0.9, -1.0)] {
            let (j, v) = o.eval_with_argmin(&[x], &[y]);
            let v = v.unwrap();
            let phi = p.phi.eval(&[x, y, v[0]]);
            assert!(j.value().unwrap() <= phi + 1e-9);
        }
    }

    #[test]
    fn empty_bx_is_reported() {
        let doc = "objective = \"x\"\nA = []\nB = [\"-1-y^2\"]\nphi = \"v\"\nM = 1.0\n[variables]\nx = [\"x\"]\ny = [\"y\"]\n";
        let p = crate::problem::load_problem(doc).unwrap();
        assert_eq!(eval_j(&p, &[0.0], &[0.0], &cfg()).unwrap(), JValue::EmptyBx);
    }

    #[test]
    fn rejects_bad_input() {
        let p = load_bundled("p1_mpec").unwrap();
        assert!(matches!(eval_j(&p, &[0.0, 1.0], &[0.0], &cfg()), Err(OracleError::Dimension { .. })));
        assert!(matches!(
            solve_p_eps_reference(&p, -1.0, &cfg()),
            Err(OracleError::NegativeEpsilon(_))
        ));
        let tiny = OracleConfig {
            inner_grid: Some(2),
            ..cfg()
        };
        assert!(matches!(eval_j(&p, &[0.0], &[0.0], &tiny), Err(OracleError::GridTooSmall)));
    }
}
