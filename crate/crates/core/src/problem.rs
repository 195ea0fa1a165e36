//! MPEC instances: variable partition, data polynomials and the enclosing box.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::poly::{parse_polynomial, PolyError, Polynomial};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("missing section `{0}`")]
    MissingSection(&'static str),
    #[error("malformed document: {0}")]
    Format(String),
    #[error("cannot parse `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: PolyError,
    },
    #[error("phi references undeclared variable: {0}")]
    PhiUndeclared(String),
    #[error("box bound M must be positive, got {0}")]
    NonPositiveBound(f64),
    #[error("invalid variables: {0}")]
    Variables(String),
    #[error("invalid box override: {0}")]
    BoxOverride(String),
    #[error("unknown bundled instance `{0}`")]
    UnknownInstance(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box `prod_i [-c_i, c_i]` over `(x, y)` with `c_i^2 = M_i`.
///
/// By default every coordinate uses the global bound `M`; individual
/// coordinates may be narrowed in the instance document.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaBox {
    bounds: Vec<f64>,
}

impl OmegaBox {
    pub fn uniform(dimension: usize, m: f64) -> Self {
        Self {
            bounds: vec![m; dimension],
        }
    }

    pub fn from_bounds(bounds: Vec<f64>) -> Self {
        assert!(bounds.iter().all(|&b| b > 0.0), "box bounds must be positive");
        Self { bounds }
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    /// `M_i` for coordinate `i`.
    pub fn bound(&self, i: usize) -> f64 {
        self.bounds[i]
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// `sqrt(M_i)`.
    pub fn halfwidth(&self, i: usize) -> f64 {
        self.bounds[i].sqrt()
    }

    pub fn halfwidths(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.sqrt()).collect()
    }

    pub fn is_uniform(&self) -> bool {
        self.bounds.windows(2).all(|w| w[0] == w[1])
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        point
            .iter()
            .zip(self.halfwidths())
            .all(|(p, c)| p.abs() <= c + tol)
    }
}

#[derive(Debug, Clone)]
pub struct MpecProblem {
    pub name: String,
    pub x_vars: Vec<String>,
    pub y_vars: Vec<String>,
    /// Inner variables mirroring `y_vars`.
    pub v_vars: Vec<String>,
    /// `f(x, y)`, over `(x, y)`.
    pub objective: Polynomial,
    /// `g_i(x, y) >= 0`, over `(x, y)`.
    pub constraints_g: Vec<Polynomial>,
    /// `h_j(x, y) >= 0`, over `(x, y)`.
    pub constraints_h: Vec<Polynomial>,
    /// `phi(x, y, v)`, over `(x, y, v)`.
    pub phi: Polynomial,
    pub box_bound_m: f64,
    pub omega: OmegaBox,
}

impl MpecProblem {
    pub fn n(&self) -> usize {
        self.x_vars.len()
    }

    pub fn m(&self) -> usize {
        self.y_vars.len()
    }

    /// `(x, y)` in order.
    pub fn outer_vars(&self) -> Vec<String> {
        self.x_vars.iter().chain(&self.y_vars).cloned().collect()
    }

    /// `(x, y, v)` in order.
    pub fn all_vars(&self) -> Vec<String> {
        self.x_vars
            .iter()
            .chain(&self.y_vars)
            .chain(&self.v_vars)
            .cloned()
            .collect()
    }

    /// `h_j(x, v)` over `(x, y, v)`, i.e. the constraints describing `B(x)`.
    pub fn h_in_v(&self) -> Vec<Polynomial> {
        let all = self.all_vars();
        let map: Vec<(&str, Polynomial)> = self
            .y_vars
            .iter()
            .zip(&self.v_vars)
            .map(|(y, v)| (y.as_str(), Polynomial::variable(&all, v).expect("declared")))
            .collect();
        let xs: Vec<(&str, Polynomial)> = self
            .x_vars
            .iter()
            .map(|x| (x.as_str(), Polynomial::variable(&all, x).expect("declared")))
            .collect();
        self.constraints_h
            .iter()
            .map(|h| {
                let mut full = map.clone();
                full.extend(xs.iter().cloned());
                h.substitute(&full).expect("consistent variables")
            })
            .collect()
    }

    /// Smallest admissible relaxation order for the value-function program.
    pub fn k_min(&self) -> u32 {
        let hv = self
            .constraints_h
            .iter()
            .map(|h| h.degree().div_ceil(2))
            .max()
            .unwrap_or(0);
        self.phi.degree().div_ceil(2).max(hv).max(1)
    }

    pub fn degrees(&self) -> DegreeReport {
        DegreeReport {
            objective: self.objective.degree(),
            g: self.constraints_g.iter().map(|p| p.degree()).collect(),
            h: self.constraints_h.iter().map(|p| p.degree()).collect(),
            phi: self.phi.degree(),
            k_min: self.k_min(),
        }
    }

    /// `true` if `(x, y)` satisfies every `h_j >= -tol`.
    pub fn in_b(&self, point: &[f64], tol: f64) -> bool {
        self.constraints_h.iter().all(|h| h.eval(point) >= -tol)
    }

    pub fn in_a(&self, point: &[f64], tol: f64) -> bool {
        self.constraints_g.iter().all(|g| g.eval(point) >= -tol)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DegreeReport {
    pub objective: u32,
    pub g: Vec<u32>,
    pub h: Vec<u32>,
    pub phi: u32,
    pub k_min: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariables {
    x: Option<Vec<String>>,
    y: Option<Vec<String>>,
    v: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    name: Option<String>,
    variables: Option<RawVariables>,
    objective: Option<String>,
    #[serde(rename = "A")]
    a: Option<Vec<String>>,
    #[serde(rename = "B")]
    b: Option<Vec<String>>,
    phi: Option<String>,
    #[serde(rename = "M")]
    m: Option<f64>,
    #[serde(rename = "box")]
    box_overrides: Option<BTreeMap<String, f64>>,
}

fn is_identifier(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

/// Parse an instance document (TOML).
///
/// ```toml
/// name = "example"
/// objective = "x + y"
/// A = ["-x^2*((x*y-1)^2+y^4)"]
/// B = ["1-x^2", "1-y^2"]
/// phi = "x*v^2/2 - v^3/3 - (x*y^2/2 - y^3/3)"
/// M = 1.0
///
/// [variables]
/// x = ["x"]
/// y = ["y"]
/// # v = ["v"]   optional, defaults to v (or v1..vm)
///
/// [box]         # optional per-coordinate bounds, M_i
/// x = 1.0
/// ```
///
/// Entries of `B` may be written in `y` or in the mirrored `v` names.
pub fn load_problem(document: &str) -> Result<MpecProblem, ProblemError> {
    let raw: RawDocument = toml::from_str(document).map_err(|e| ProblemError::Format(e.message().to_string()))?;
    let vars = raw.variables.ok_or(ProblemError::MissingSection("variables"))?;
    let x_vars = vars.x.ok_or(ProblemError::MissingSection("variables.x"))?;
    let y_vars = vars.y.ok_or(ProblemError::MissingSection("variables.y"))?;
    let objective = raw.objective.ok_or(ProblemError::MissingSection("objective"))?;
    let a = raw.a.ok_or(ProblemError::MissingSection("A"))?;
    let b = raw.b.ok_or(ProblemError::MissingSection("B"))?;
    let phi = raw.phi.ok_or(ProblemError::MissingSection("phi"))?;
    let m = raw.m.ok_or(ProblemError::MissingSection("M"))?;
    if x_vars.is_empty() || y_vars.is_empty() {
        return Err(ProblemError::Variables("need at least one x and one y variable".into()));
    }
    let v_vars = match vars.v {
        Some(v) => v,
        None if y_vars.len() == 1 => vec!["v".to_string()],
        None => (1..=y_vars.len()).map(|i| format!("v{i}")).collect(),
    };
    if v_vars.len() != y_vars.len() {
        return Err(ProblemError::Variables("variables.v must mirror variables.y".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for name in x_vars.iter().chain(&y_vars).chain(&v_vars) {
        if !is_identifier(name) {
            return Err(ProblemError::Variables(format!("`{name}` is not an identifier")));
        }
        if !seen.insert(name.clone()) {
            return Err(ProblemError::Variables(format!("`{name}` declared twice")));
        }
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(ProblemError::NonPositiveBound(m));
    }
    let outer: Vec<String> = x_vars.iter().chain(&y_vars).cloned().collect();
    let all: Vec<String> = outer.iter().chain(&v_vars).cloned().collect();

    let parse = |field: String, text: &str, over: &[String]| {
        parse_polynomial(text, over).map_err(|source| ProblemError::Parse { field, source })
    };
    let objective = parse("objective".into(), &objective, &outer)?;
    let constraints_g = a
        .iter()
        .enumerate()
        .map(|(i, t)| parse(format!("A[{i}]"), t, &outer))
        .collect::<Result<Vec<_>, _>>()?;
    // v -> y renaming for B entries written over the inner variables.
    let to_outer: Vec<(&str, Polynomial)> = outer
        .iter()
        .map(|n| (n.as_str(), Polynomial::variable(&outer, n).expect("declared")))
        .chain(
            v_vars
                .iter()
                .zip(&y_vars)
                .map(|(v, y)| (v.as_str(), Polynomial::variable(&outer, y).expect("declared"))),
        )
        .collect();
    let constraints_h = b
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let p = parse(format!("B[{i}]"), t, &all)?;
            let mixes = y_vars.iter().any(|y| !p.is_free_of(y)) && v_vars.iter().any(|v| !p.is_free_of(v));
            if mixes {
                return Err(ProblemError::Format(format!("B[{i}] mixes y and v variables")));
            }
            p.substitute(&to_outer).map_err(|source| ProblemError::Parse {
                field: format!("B[{i}]"),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let phi = parse_polynomial(&phi, &all).map_err(|e| match e {
        PolyError::UnknownIdentifier(name) => ProblemError::PhiUndeclared(name),
        source => ProblemError::Parse {
            field: "phi".into(),
            source,
        },
    })?;

    let mut bounds = vec![m; outer.len()];
    for (name, &value) in raw.box_overrides.iter().flatten() {
        let i = outer
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| ProblemError::BoxOverride(format!("`{name}` is not an x or y variable")))?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(ProblemError::BoxOverride(format!("bound for `{name}` must be positive")));
        }
        bounds[i] = value;
    }

    Ok(MpecProblem {
        name: raw.name.unwrap_or_else(|| "unnamed".into()),
        x_vars,
        y_vars,
        v_vars,
        objective,
        constraints_g,
        constraints_h,
        phi,
        box_bound_m: m,
        omega: OmegaBox::from_bounds(bounds),
    })
}

pub fn load_problem_file(path: &Path) -> Result<MpecProblem, ProblemError> {
    load_problem(&std::fs::read_to_string(path)?)
}

pub const BUNDLED: [&str; 3] = ["p1_mpec", "p2_bilevel", "p3_sip"];

pub fn bundled_document(name: &str) -> Option<&'static str> {
    match name {
        "p1_mpec" => Some(include_str!("../instances/p1_mpec.toml")),
        "p2_bilevel" => Some(include_str!("../instances/p2_bilevel.toml")),
        "p3_sip" => Some(include_str!("../instances/p3_sip.toml")),
        _ => None,
    }
}

pub fn load_bundled(name: &str) -> Result<MpecProblem, ProblemError> {
    let doc = bundled_document(name).ok_or_else(|| ProblemError::UnknownInstance(name.to_string()))?;
    load_problem(doc)
}

/// Sampled diagnostics for the compactness and nonemptiness assumptions.
/// The checks are heuristics, never proofs.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AssumptionReport {
    pub degrees: DegreeReport,
    /// No sampled point of `B` lies outside the box.
    pub b_inside_box: bool,
    pub b_samples_outside_box: usize,
    /// Every sampled `x` has a sampled `y` with `(x, y)` in `B`.
    pub bx_nonempty: bool,
    pub bx_empty_samples: usize,
    pub x_samples: usize,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Deterministic low-discrepancy point in `[-c_i, c_i]`.
fn halton_point(index: u64, halfwidths: &[f64]) -> Vec<f64> {
    halfwidths
        .iter()
        .enumerate()
        .map(|(d, &c)| c * (2.0 * radical_inverse(index + 1, PRIMES[d % PRIMES.len()]) - 1.0))
        .collect()
}

pub fn validate_assumptions(problem: &MpecProblem, sample_count: usize) -> AssumptionReport {
    let n = problem.n();
    let m = problem.m();
    let hw = problem.omega.halfwidths();
    let mut warnings = Vec::new();

    // (a) Sample a doubled box and look for points of B outside the box.
    let wide: Vec<f64> = hw.iter().map(|c| 2.0 * c).collect();
    let mut outside = 0;
    for i in 0..sample_count as u64 {
        let p = halton_point(i, &wide);
        if problem.in_b(&p, 0.0) && !problem.omega.contains(&p, 0.0) {
            outside += 1;
        }
    }
    if outside > 0 {
        warnings.push(format!(
            "{outside} of {sample_count} samples lie in B but outside the box; enlarge M or add bounds"
        ));
    }

    // (b) B(x) nonempty for sampled x in the projection of the box.
    let x_samples = sample_count.clamp(1, 400);
    let y_per_dim = match m {
        1 => 401,
        2 => 41,
        _ => 11,
    };
    let mut empty = 0;
    let mut point = vec![0.0; n + m];
    for i in 0..x_samples as u64 {
        let x = halton_point(i, &hw[..n]);
        point[..n].copy_from_slice(&x);
        let mut found = false;
        let total = (y_per_dim as u64).pow(m as u32);
        for idx in 0..total {
            let mut r = idx;
            for d in 0..m {
                let k = r % y_per_dim as u64;
                r /= y_per_dim as u64;
                let c = hw[n + d];
                point[n + d] = -c + 2.0 * c * k as f64 / (y_per_dim - 1) as f64;
            }
            if problem.in_b(&point, 1e-12) {
                found = true;
                break;
            }
        }
        if !found {
            empty += 1;
        }
    }
    if empty > 0 {
        warnings.push(format!("B(x) appears empty at {empty} of {x_samples} sampled x"));
    }

    let notes = vec![
        "the Archimedean property of the h-system is assumed; adding the redundant ball constraint \
         R^2 - |(x, y)|^2 >= 0 to B guarantees it when a bound R on B is known"
            .to_string(),
    ];
    AssumptionReport {
        degrees: problem.degrees(),
        b_inside_box: outside == 0,
        b_samples_outside_box: outside,
        bx_nonempty: empty == 0,
        bx_empty_samples: empty,
        x_samples,
        warnings,
        notes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_instances_load() {
        for name in BUNDLED {
            let p = load_bundled(name).unwrap();
            assert_eq!(p.name, name);
            assert_eq!((p.n(), p.m()), (1, 1));
        }
    }

    #[test]
    fn p1_shape() {
        let p = load_bundled("p1_mpec").unwrap();
        assert_eq!(p.constraints_g.len(), 1);
        assert_eq!(p.constraints_h.len(), 2);
        assert_eq!(p.phi.vars(), &["x", "y", "v"]);
        assert_eq!(p.k_min(), 2);
        assert!((p.constraints_g[0].eval(&[1.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(p.omega.halfwidths(), vec![1.0, 1.0]);
    }

    #[test]
    fn p3_b_written_in_v() {
        let p = load_bundled("p3_sip").unwrap();
        assert_eq!(p.constraints_h.len(), 1);
        assert_eq!(p.constraints_h[0].render(), "1.0 - y^2");
        let hv = p.h_in_v();
        assert_eq!(hv[0].render(), "1.0 - v^2");
        assert_eq!(p.omega.halfwidths(), vec![1.0, 2.0]);
        assert_eq!(p.k_min(), 2);
    }

    #[test]
    fn h_in_v_renames_only_y() {
        let p = load_bundled("p1_mpec").unwrap();
        let hv = p.h_in_v();
        assert_eq!(hv[0].render(), "1.0 - x^2");
        assert_eq!(hv[1].render(), "1.0 - v^2");
    }

    fn doc(m: &str) -> String {
        format!(
            "objective = \"x+y\"\nA = []\nB = [\"1-y^2\"]\nphi = \"v^2 - y^2\"\nM = {m}\n[variables]\nx = [\"x\"]\ny = [\"y\"]\n"
        )
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(load_problem(&doc("0.0")), Err(ProblemError::NonPositiveBound(_))));
        assert!(matches!(load_problem(&doc("-1.0")), Err(ProblemError::NonPositiveBound(_))));
        assert!(load_problem(&doc("1.0")).is_ok());
        let missing = doc("1.0").replace("phi = \"v^2 - y^2\"\n", "");
        assert!(matches!(load_problem(&missing), Err(ProblemError::MissingSection("phi"))));
        let bad_phi = doc("1.0").replace("v^2 - y^2", "w^2");
        assert!(matches!(load_problem(&bad_phi), Err(ProblemError::PhiUndeclared(_))));
        let syntax = doc("1.0").replace("x+y", "x+*y");
        assert!(matches!(load_problem(&syntax), Err(ProblemError::Parse { .. })));
        let bad_box = format!("{}[box]\nz = 1.0\n", doc("1.0"));
        assert!(matches!(load_problem(&bad_box), Err(ProblemError::BoxOverride(_))));
    }

    #[test]
    fn deterministic_load() {
        let a = load_bundled("p2_bilevel").unwrap();
        let b = load_bundled("p2_bilevel").unwrap();
        assert_eq!(a.phi, b.phi);
        assert_eq!(a.omega, b.omega);
    }

    #[test]
    fn assumption_checks() {
        let p1 = load_bundled("p1_mpec").unwrap();
        let r = validate_assumptions(&p1, 500);
        assert!(r.b_inside_box && r.bx_nonempty, "{:?}", r.warnings);
        let p2 = load_bundled("p2_bilevel").unwrap();
        let r = validate_assumptions(&p2, 500);
        assert!(r.b_inside_box && r.bx_nonempty, "{:?}", r.warnings);
        let empty = load_problem(&doc("1.0").replace("1-y^2", "-1-y^2")).unwrap();
        let r = validate_assumptions(&empty, 100);
        assert!(!r.bx_nonempty);
        assert!(!r.warnings.is_empty());
    }
}
