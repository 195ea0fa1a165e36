//! Polynomial under-approximations of the equilibrium value function.
//!
//! For order `k` the program
//!
//! ```text
//! max  <p, gamma>
//! s.t. phi(x, y, v) - p(x, y) = s_0 + sum_j s_j h_j(x, v) + sum_i s'_i (M_i - y_i^2)
//! ```
//!
//! is solved over polynomials `p` of degree `<= 2k` and SOS multipliers with
//! `deg(s h) <= 2k`, where `gamma` are the moments of the uniform probability
//! measure on the box. The optimal `p` is `J_k`, which satisfies
//! `J_k <= J` on the box and converges to `J` in `L_1` as `k` grows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::moment_vector_aniso;
use crate::oracle::{box_grid, eval_j_many, JOracle, JValue, OracleConfig, OracleError};
use crate::poly::{parse_polynomial, Polynomial};
use crate::problem::MpecProblem;
use crate::sdp::{self, SdpProblem, SdpStatus, SolverOptions};
use crate::sos::{build_sos_identity, SosError, SosIdentityProgram};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JmError {
    #[error("order {k} below the admissible minimum {k_min}")]
    OrderTooSmall { k: u32, k_min: u32 },
    #[error("value-function program infeasible ({0:?}); check that phi is bounded below on the box")]
    Infeasible(SdpStatus),
    #[error("value-function program failed: {0:?}")]
    Solver(SdpStatus),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("coefficient table: {0}")]
    Table(String),
}

/// Multiplier attached to one generator of the program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierInfo {
    pub generator: String,
    pub generator_degree: u32,
    pub sos_degree: u32,
}

/// One row of a coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

/// Polynomial as variable names plus `(exponents, coefficient)` rows in
/// graded-lex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub vars: Vec<String>,
    pub terms: Vec<Term>,
}

impl CoefficientTable {
    pub fn from_polynomial(p: &Polynomial) -> Self {
        let mut terms: Vec<Term> = p
            .terms()
            .map(|(e, c)| Term {
                exponents: e.exponents().to_vec(),
                coefficient: c,
            })
            .collect();
        terms.sort_by(|a, b| graded_lex(&a.exponents, &b.exponents));
        Self {
            vars: p.vars().to_vec(),
            terms,
        }
    }

    pub fn to_polynomial(&self) -> Polynomial {
        Polynomial::from_terms(
            &self.vars,
            self.terms.iter().map(|t| (t.exponents.clone(), t.coefficient)),
        )
    }

    /// Text form: a `vars` header line, then one `e_1 ... e_n coefficient`
    /// line per term. Lines starting with `#` are comments.
    pub fn to_text(&self) -> String {
        let mut out = format!("vars {}\n", self.vars.join(" "));
        for t in &self.terms {
            for e in &t.exponents {
                out.push_str(&format!("{e} "));
            }
            out.push_str(&format!("{:e}\n", t.coefficient));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, JmError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| JmError::Table("empty table".into()))?;
        let vars: Vec<String> = match header.strip_prefix("vars") {
            Some(rest) => rest.split_whitespace().map(String::from).collect(),
            None => return Err(JmError::Table("missing `vars` header".into())),
        };
        let mut terms = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != vars.len() + 1 {
                return Err(JmError::Table(format!("expected {} fields in `{line}`", vars.len() + 1)));
            }
            let exponents = fields[..vars.len()]
                .iter()
                .map(|f| f.parse::<u32>().map_err(|e| JmError::Table(format!("`{f}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let coefficient = fields[vars.len()]
                .parse::<f64>()
                .map_err(|e| JmError::Table(format!("`{}`: {e}", fields[vars.len()])))?;
            terms.push(Term { exponents, coefficient });
        }
        Ok(Self { vars, terms })
    }
}

fn graded_lex(a: &[u32], b: &[u32]) -> std::cmp::Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    da.cmp(&db).then_with(|| b.cmp(a))
}

/// Solved value-function approximation of one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionApprox {
    pub order_k: u32,
    /// `J_k` over `(x, y)`.
    pub coefficients: CoefficientTable,
    /// Optimal value `<J_k, gamma>`.
    pub rho_k: f64,
    pub achieved_gap: f64,
    /// Max-abs coefficient mismatch of the certified identity.
    pub identity_residual: f64,
    pub multipliers: Vec<MultiplierInfo>,
    pub status: SdpStatus,
    pub iterations: usize,
    pub solve_seconds: f64,
}

impl ValueFunctionApprox {
    pub fn polynomial(&self) -> Polynomial {
        self.coefficients.to_polynomial()
    }

    /// Evaluate at `(x, y)`.
    pub fn eval(&self, xy: &[f64]) -> f64 {
        self.coefficients
            .terms
            .iter()
            .map(|t| {
                t.exponents
                    .iter()
                    .zip(xy)
                    .fold(t.coefficient, |acc, (&e, &z)| acc * z.powi(e as i32))
            })
            .sum()
    }

    pub fn degree(&self) -> u32 {
        self.coefficients
            .terms
            .iter()
            .filter(|t| t.coefficient != 0.0)
            .map(|t| t.exponents.iter().sum())
            .max()
            .unwrap_or(0)
    }
}

/// Generators and SOS degrees for order `k`: the constraints of `B(x)` in
/// the inner variables, then `M_i - y_i^2` per outer `y` coordinate. The
/// `x`-box is left out.
pub fn jm_multipliers(problem: &MpecProblem, k: u32) -> Vec<(Polynomial, u32)> {
    let all = problem.all_vars();
    let mut out = Vec::new();
    for h in problem.h_in_v() {
        let d = h.degree();
        if d <= 2 * k {
            out.push((h, 2 * ((2 * k - d) / 2)));
        }
    }
    let n = problem.n();
    for (i, y) in problem.y_vars.iter().enumerate() {
        let yv = Polynomial::variable(&all, y).expect("declared");
        let g = Polynomial::constant(&all, problem.omega.bound(n + i))
            .sub(&yv.pow(2))
            .expect("same variables");
        out.push((g, 2 * k - 2));
    }
    out
}

pub fn build_jm_program(problem: &MpecProblem, k: u32) -> Result<(SosIdentityProgram, SdpProblem), JmError> {
    let k_min = problem.k_min();
    if k < k_min {
        return Err(JmError::OrderTooSmall { k, k_min });
    }
    let gamma = moment_vector_aniso(2 * k, &problem.omega.halfwidths());
    let mults = jm_multipliers(problem, k);
    Ok(build_sos_identity(&problem.phi, &problem.outer_vars(), 2 * k, &mults, &gamma)?)
}

/// Solve the order-`k` program and assemble `J_k`.
pub fn compute_jk(problem: &MpecProblem, k: u32, options: &SolverOptions) -> Result<ValueFunctionApprox, JmError> {
    let (program, sdp) = build_jm_program(problem, k)?;
    let start = std::time::Instant::now();
    let sol = sdp::solve(&sdp, options).map_err(SosError::from)?;
    let solve_seconds = start.elapsed().as_secs_f64();
    match sol.status {
        _ if sol.is_usable() => {}
        SdpStatus::PrimalInfeasible | SdpStatus::DualInfeasible => return Err(JmError::Infeasible(sol.status)),
        other => return Err(JmError::Solver(other)),
    }
    let cert = program.decode(&sol);
    let identity_residual = program.identity_residual(&cert);
    let poly = cert.free_poly;
    Ok(ValueFunctionApprox {
        order_k: k,
        coefficients: CoefficientTable::from_polynomial(&poly),
        rho_k: cert.objective,
        achieved_gap: sol.gap,
        identity_residual,
        multipliers: program
            .multipliers
            .iter()
            .map(|m| MultiplierInfo {
                generator: m.generator.render(),
                generator_degree: m.generator.degree(),
                sos_degree: m.sos_degree,
            })
            .collect(),
        status: sol.status,
        iterations: sol.iterations,
        solve_seconds,
    })
}

/// Result of comparing a polynomial against the oracle on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    /// Max of `J_k - J` over evaluated points (lower-bound violation).
    pub max_violation: f64,
    /// Mean of `|J_k - J|` over evaluated points.
    pub mean_abs: f64,
    pub evaluated: usize,
    /// Points where `B(x)` was sampled empty.
    pub skipped: usize,
}

fn compare(
    approx: &dyn Fn(&[f64]) -> f64,
    problem: &MpecProblem,
    per_dim: usize,
    midpoints: bool,
    config: &OracleConfig,
) -> Result<GridComparison, JmError> {
    let oracle = JOracle::new(problem, *config)?;
    let points = box_grid(problem, per_dim, midpoints);
    let values = eval_j_many(&oracle, &points);
    let mut max_violation = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for (p, j) in points.iter().zip(values) {
        match j {
            JValue::Value(j) => {
                let d = approx(p) - j;
                max_violation = max_violation.max(d);
                sum += d.abs();
                evaluated += 1;
            }
            JValue::EmptyBx => skipped += 1,
        }
    }
    Ok(GridComparison {
        max_violation,
        mean_abs: if evaluated > 0 { sum / evaluated as f64 } else { f64::NAN },
        evaluated,
        skipped,
    })
}

/// Max over the closed grid of `J_k - J_oracle`.
pub fn lower_bound_check(
    approx: &ValueFunctionApprox,
    problem: &MpecProblem,
    grid_points_per_dim: usize,
    config: &OracleConfig,
) -> Result<GridComparison, JmError> {
    compare(&|p| approx.eval(p), problem, grid_points_per_dim, false, config)
}

/// Midpoint-rule estimate of `int |J_k - J| d mu` for the uniform
/// probability measure on the box.
pub fn l1_distance_estimate(
    approx: &ValueFunctionApprox,
    problem: &MpecProblem,
    grid_points_per_dim: usize,
    config: &OracleConfig,
) -> Result<f64, JmError> {
    Ok(compare(&|p| approx.eval(p), problem, grid_points_per_dim, true, config)?.mean_abs)
}

/// Midpoint-rule estimate of `int J d mu`.
pub fn oracle_integral(problem: &MpecProblem, grid_points_per_dim: usize, config: &OracleConfig) -> Result<f64, JmError> {
    let oracle = JOracle::new(problem, *config)?;
    let points = box_grid(problem, grid_points_per_dim, true);
    let vals: Vec<f64> = eval_j_many(&oracle, &points).into_iter().filter_map(JValue::value).collect();
    Ok(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
}

/// Max-abs difference of two polynomials over the closed box grid.
pub fn grid_deviation(a: &Polynomial, b: &Polynomial, problem: &MpecProblem, per_dim: usize) -> f64 {
    box_grid(problem, per_dim, false)
        .iter()
        .map(|p| (a.eval(p) - b.eval(p)).abs())
        .fold(0.0, f64::max)
}

/// Parse a polynomial written over `(x, y)` of `problem`.
pub fn parse_outer(problem: &MpecProblem, text: &str) -> Result<Polynomial, JmError> {
    parse_polynomial(text, &problem.outer_vars()).map_err(|e| JmError::Table(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::load_bundled;

    #[test]
    fn p1_program_shape() {
        let p = load_bundled("p1_mpec").unwrap();
        let (prog, _) = build_jm_program(&p, 3).unwrap();
        assert_eq!(prog.free_basis.len(), 28);
        // 1 - x^2, 1 - v^2, and the y-box.
        assert_eq!(prog.multipliers.len(), 3);
        assert!(prog.multipliers.iter().all(|m| m.sos_degree == 4));
    }

    #[test]
    fn order_below_minimum() {
        let p = load_bundled("p1_mpec").unwrap();
        assert!(matches!(build_jm_program(&p, 1), Err(JmError::OrderTooSmall { k: 1, k_min: 2 })));
    }

    #[test]
    fn table_text_round_trip() {
        let p = load_bundled("p3_sip").unwrap();
        let poly = parse_outer(&p, "y - x^2 - 0.25*x^4 + 3").unwrap();
        let t = CoefficientTable::from_polynomial(&poly);
        assert_eq!(t.terms[0].exponents, vec![0, 0]);
        assert_eq!(t.terms.last().unwrap().exponents, vec![4, 0]);
        let back = CoefficientTable::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert!(CoefficientTable::from_text("1 2 3").is_err());
    }
}
