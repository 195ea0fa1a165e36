//! SOS identities and moment relaxations as block SDPs, plus rank tests and
//! atom extraction on solved moment sequences.
//!
//! A moment relaxation `min sum f_a z_a` over `z_0 = 1`, `M_t(z) >= 0`,
//! `M_{t-d_j}(g_j z) >= 0` is handed to the solver in its SOS form
//! `max lambda : f - lambda = s_0 + sum s_j g_j`; the moments are read off the
//! multipliers of the coefficient-matching rows (`z = -y`). An unbounded SOS
//! side is a Positivstellensatz certificate `-1 = s_0 + sum s_j g_j` and
//! proves the feasible set empty.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use thiserror::Error;

use crate::measure::MomentVector;
use crate::poly::{ExponentVector, MonomialBasis, Polynomial};
use crate::sdp::{self, BlockKind, BlockValue, Entry, SdpProblem, SdpSolution, SdpStatus, SolverOptions};

/// Relative eigenvalue threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-6;
/// Generators must hold at extracted atoms up to this slack.
pub const ATOM_FEAS_TOL: f64 = 1e-6;
/// Atoms must reproduce the moments up to this (scaled) error.
pub const ATOM_MOMENT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SosError {
    #[error("degree bound violated: {0}")]
    DegreeBound(String),
    #[error("relaxation order {order} too small, need at least {needed}")]
    OrderTooSmall { order: u32, needed: u32 },
    #[error("variable lists disagree: {0}")]
    Variables(String),
    #[error(transparent)]
    Sdp(#[from] sdp::SdpError),
}

/// Map from exponents (over the ambient variables) to SDP rows.
#[derive(Debug, Clone)]
pub struct RowIndex {
    pub basis: MonomialBasis,
}

impl RowIndex {
    pub fn row(&self, alpha: &ExponentVector) -> Option<usize> {
        self.basis.index_of(alpha)
    }
}

#[derive(Debug, Clone)]
pub struct GramMultiplier {
    pub generator: Polynomial,
    /// Degree bound of the SOS multiplier (even).
    pub sos_degree: u32,
    pub gram_basis: MonomialBasis,
    pub block: usize,
}

/// `target - p = s_0 + sum_j s_j h_j` with `p` free over a sub-basis,
/// maximizing `<p, gamma>`.
#[derive(Debug, Clone)]
pub struct SosIdentityProgram {
    pub vars: Vec<String>,
    pub target: Polynomial,
    /// Variables of the free polynomial `p`.
    pub free_vars: Vec<String>,
    pub free_basis: MonomialBasis,
    /// Position of each free-basis variable inside `vars`.
    free_positions: Vec<usize>,
    pub sigma0_basis: MonomialBasis,
    pub multipliers: Vec<GramMultiplier>,
    pub objective_moments: MomentVector,
    pub rows: RowIndex,
    pub free_block: usize,
}

/// Decoded solution of an SOS identity program.
#[derive(Debug, Clone)]
pub struct SosCertificate {
    /// Coefficients of `p` in `free_basis` order.
    pub free_coeffs: Vec<f64>,
    pub free_poly: Polynomial,
    pub objective: f64,
    pub sigma0_gram: DMatrix<f64>,
    pub multiplier_grams: Vec<DMatrix<f64>>,
    pub status: SdpStatus,
}

fn embed_exponent(beta: &ExponentVector, positions: &[usize], len: usize) -> ExponentVector {
    let mut e = vec![0u32; len];
    for (k, &p) in positions.iter().enumerate() {
        e[p] = beta.exponents()[k];
    }
    ExponentVector::new(e)
}

/// Add `coef * G[a, b]` contributions of a Gram block to the coefficient rows.
fn push_gram_block(
    rows: &mut [Vec<Entry>],
    index: &RowIndex,
    block: usize,
    gram: &MonomialBasis,
    generator: &Polynomial,
) -> Result<(), SosError> {
    let terms: Vec<(&ExponentVector, f64)> = generator.terms().collect();
    for b in 0..gram.len() {
        for a in 0..=b {
            let ab = gram.get(a).add(gram.get(b));
            for &(g, c) in &terms {
                let alpha = ab.add(g);
                let r = index.row(&alpha).ok_or_else(|| {
                    SosError::DegreeBound(format!("monomial of degree {} exceeds the row basis", alpha.total_degree()))
                })?;
                // Symmetric entry: off-diagonal (a, b) also stands for (b, a).
                rows[r].push(Entry::new(block, a, b, c));
            }
        }
    }
    Ok(())
}

fn merge_entries(entries: Vec<Entry>) -> Vec<Entry> {
    let mut map: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut order = Vec::new();
    for e in entries {
        let key = (e.block, e.row.min(e.col), e.row.max(e.col));
        match map.get_mut(&key) {
            Some(v) => *v += e.value,
            None => {
                map.insert(key, e.value);
                order.push(key);
            }
        }
    }
    order
        .into_iter()
        .filter_map(|k| {
            let v = map[&k];
            (v != 0.0).then(|| Entry::new(k.0, k.1, k.2, v))
        })
        .collect()
}

/// Build the SDP for `target - p = s_0 + sum_j s_j h_j`, maximize `<p, gamma>`.
///
/// The identity is matched on all monomials of degree `<= 2k`, where `2k` is
/// `free_basis_degree` (raised to the target degree if needed) and `s_0` has
/// degree `2k`. `multipliers` lists `(h_j, deg s_j)`; each `deg s_j` must be
/// even with `deg s_j + deg h_j <= 2k`. `target` and every `h_j` share
/// one variable list; `free_vars` is a subset of it and `gamma` is indexed
/// by the monomials of degree `<= free_basis_degree` over `free_vars`.
pub fn build_sos_identity(
    target: &Polynomial,
    free_vars: &[String],
    free_basis_degree: u32,
    multipliers: &[(Polynomial, u32)],
    gamma: &MomentVector,
) -> Result<(SosIdentityProgram, SdpProblem), SosError> {
    let vars = target.vars().to_vec();
    if !free_basis_degree.is_multiple_of(2) {
        return Err(SosError::DegreeBound("free basis degree must be even".into()));
    }
    let two_k = free_basis_degree.max(2 * half_degree(target));
    let free_positions: Vec<usize> = free_vars
        .iter()
        .map(|v| {
            vars.iter()
                .position(|w| w == v)
                .ok_or_else(|| SosError::Variables(format!("free variable `{v}` not ambient")))
        })
        .collect::<Result<_, _>>()?;
    let free_basis = MonomialBasis::new(free_vars.len(), free_basis_degree);
    if gamma.basis.len() != free_basis.len() || gamma.basis.num_vars() != free_vars.len() {
        return Err(SosError::Variables("moment vector does not match the free basis".into()));
    }
    for (h, d) in multipliers {
        if h.vars() != vars.as_slice() {
            return Err(SosError::Variables("multiplier over different variables".into()));
        }
        if d % 2 != 0 || d + h.degree() > two_k {
            return Err(SosError::DegreeBound(format!(
                "multiplier degree {d} with generator degree {} exceeds {two_k}",
                h.degree()
            )));
        }
    }

    let rows = RowIndex {
        basis: MonomialBasis::new(vars.len(), two_k),
    };
    let sigma0_basis = MonomialBasis::new(vars.len(), two_k / 2);
    let mut problem = SdpProblem::new(Vec::new());
    let b0 = problem.add_block(BlockKind::Psd, sigma0_basis.len());
    let mut row_entries: Vec<Vec<Entry>> = vec![Vec::new(); rows.basis.len()];
    let one = Polynomial::constant(&vars, 1.0);
    push_gram_block(&mut row_entries, &rows, b0, &sigma0_basis, &one)?;
    let mut mults = Vec::new();
    for (h, d) in multipliers {
        let gram_basis = MonomialBasis::new(vars.len(), d / 2);
        let blk = problem.add_block(BlockKind::Psd, gram_basis.len());
        push_gram_block(&mut row_entries, &rows, blk, &gram_basis, h)?;
        mults.push(GramMultiplier {
            generator: h.clone(),
            sos_degree: *d,
            gram_basis,
            block: blk,
        });
    }
    let free_block = problem.add_block(BlockKind::Free, free_basis.len());
    for (i, beta) in free_basis.monomials().iter().enumerate() {
        let alpha = embed_exponent(beta, &free_positions, vars.len());
        let r = rows.row(&alpha).expect("free monomial within row degree");
        row_entries[r].push(Entry::new(free_block, i, i, 1.0));
        let g = gamma.values[i];
        if g != 0.0 {
            problem.objective.push(Entry::new(free_block, i, i, -g));
        }
    }
    for (r, entries) in row_entries.into_iter().enumerate() {
        let alpha = rows.basis.get(r);
        problem.add_constraint(merge_entries(entries), target.coeff(alpha.exponents()));
    }
    let program = SosIdentityProgram {
        vars,
        target: target.clone(),
        free_vars: free_vars.to_vec(),
        free_basis,
        free_positions,
        sigma0_basis,
        multipliers: mults,
        objective_moments: gamma.clone(),
        rows,
        free_block,
    };
    Ok((program, problem))
}

fn gram_poly(vars: &[String], basis: &MonomialBasis, g: &DMatrix<f64>) -> Polynomial {
    let mut terms = Vec::new();
    for a in 0..basis.len() {
        for b in 0..basis.len() {
            terms.push((basis.get(a).add(basis.get(b)).exponents().to_vec(), g[(a, b)]));
        }
    }
    Polynomial::from_terms(vars, terms)
}

impl SosIdentityProgram {
    pub fn decode(&self, sol: &SdpSolution) -> SosCertificate {
        let free_coeffs: Vec<f64> = sol.primal[self.free_block].as_vector().iter().copied().collect();
        let terms = self
            .free_basis
            .monomials()
            .iter()
            .zip(&free_coeffs)
            .map(|(b, &c)| (b.exponents().to_vec(), c));
        let free_poly = Polynomial::from_terms(&self.free_vars, terms);
        let objective = self.objective_moments.pair(&free_coeffs);
        SosCertificate {
            free_coeffs,
            free_poly,
            objective,
            sigma0_gram: sol.primal[0].as_matrix().clone(),
            multiplier_grams: self
                .multipliers
                .iter()
                .map(|m| sol.primal[m.block].as_matrix().clone())
                .collect(),
            status: sol.status,
        }
    }

    /// Max-abs coefficient of `target - p - s_0 - sum s_j h_j`.
    pub fn identity_residual(&self, cert: &SosCertificate) -> f64 {
        let p = Polynomial::from_terms(
            &self.vars,
            self.free_basis
                .monomials()
                .iter()
                .zip(&cert.free_coeffs)
                .map(|(b, &c)| (embed_exponent(b, &self.free_positions, self.vars.len()).exponents().to_vec(), c)),
        );
        let mut rest = self.target.sub(&p).expect("same variables");
        rest = rest
            .sub(&gram_poly(&self.vars, &self.sigma0_basis, &cert.sigma0_gram))
            .expect("same variables");
        for (m, g) in self.multipliers.iter().zip(&cert.multiplier_grams) {
            let s = gram_poly(&self.vars, &m.gram_basis, g);
            rest = rest.sub(&s.mul(&m.generator).expect("same variables")).expect("same variables");
        }
        rest.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Moment relaxations

#[derive(Debug, Clone)]
pub struct MomentRelaxation {
    pub vars: Vec<String>,
    pub objective: Polynomial,
    pub generators: Vec<Polynomial>,
    pub order: u32,
    /// Monomials of degree `<= 2t`, indexing the moments.
    pub moment_basis: MonomialBasis,
    /// Rows/columns of `M_t`.
    pub moment_matrix_basis: MonomialBasis,
    /// Localizing order `t - ceil(deg g_j / 2)` per generator.
    pub localizing_orders: Vec<u32>,
    /// Largest `ceil(deg g_j / 2)` (at least 1).
    pub generator_half_degree: u32,
    lambda_block: usize,
}

#[derive(Debug, Clone)]
pub struct MomentSolution {
    /// `z_a` per monomial of `moment_basis`, `z_0 = 1`.
    pub moments: Vec<f64>,
    /// Lower bound on the polynomial problem.
    pub bound: f64,
    /// Numerical rank of `M_s` for `s = 0..=t`.
    pub ranks: Vec<usize>,
    pub rank_tol: f64,
    pub flat: bool,
    /// Order at which flatness was detected.
    pub flat_order: Option<u32>,
    pub atoms: Vec<Vec<f64>>,
    pub status: SdpStatus,
}

#[derive(Debug, Clone)]
pub enum RelaxationOutcome {
    Solved(MomentSolution),
    /// The relaxation is infeasible: the semialgebraic set is empty.
    Empty { certificate_residual: f64 },
    Failed(SdpStatus),
}

pub fn half_degree(p: &Polynomial) -> u32 {
    p.degree().div_ceil(2)
}

/// Minimal admissible order for `f` and the generators.
pub fn min_order(f: &Polynomial, generators: &[Polynomial]) -> u32 {
    generators
        .iter()
        .map(half_degree)
        .chain(std::iter::once(half_degree(f)))
        .max()
        .unwrap_or(0)
        .max(1)
}

/// `M - x_i^2 >= 0` for every variable, with per-variable bounds.
pub fn box_generators(vars: &[String], bounds: &[f64]) -> Vec<Polynomial> {
    vars.iter()
        .zip(bounds)
        .map(|(v, &m)| {
            let x = Polynomial::variable(vars, v).expect("declared");
            Polynomial::constant(vars, m).sub(&x.pow(2)).expect("same variables")
        })
        .collect()
}

pub fn build_moment_relaxation(
    f: &Polynomial,
    generators: &[Polynomial],
    order: u32,
) -> Result<(MomentRelaxation, SdpProblem), SosError> {
    let vars = f.vars().to_vec();
    for g in generators {
        if g.vars() != vars.as_slice() {
            return Err(SosError::Variables("generator over different variables".into()));
        }
    }
    let needed = min_order(f, generators);
    if order < needed {
        return Err(SosError::OrderTooSmall { order, needed });
    }
    let rows = RowIndex {
        basis: MonomialBasis::new(vars.len(), 2 * order),
    };
    let mm_basis = MonomialBasis::new(vars.len(), order);
    let mut problem = SdpProblem::new(Vec::new());
    let b0 = problem.add_block(BlockKind::Psd, mm_basis.len());
    let mut row_entries: Vec<Vec<Entry>> = vec![Vec::new(); rows.basis.len()];
    let one = Polynomial::constant(&vars, 1.0);
    push_gram_block(&mut row_entries, &rows, b0, &mm_basis, &one)?;
    let mut localizing_orders = Vec::new();
    for g in generators {
        let lo = order - half_degree(g);
        localizing_orders.push(lo);
        let gb = MonomialBasis::new(vars.len(), lo);
        let blk = problem.add_block(BlockKind::Psd, gb.len());
        push_gram_block(&mut row_entries, &rows, blk, &gb, g)?;
    }
    let lambda_block = problem.add_block(BlockKind::Free, 1);
    row_entries[0].push(Entry::new(lambda_block, 0, 0, 1.0));
    problem.objective.push(Entry::new(lambda_block, 0, 0, -1.0));
    for (r, entries) in row_entries.into_iter().enumerate() {
        let alpha = rows.basis.get(r);
        problem.add_constraint(merge_entries(entries), f.coeff(alpha.exponents()));
    }
    let relax = MomentRelaxation {
        vars,
        objective: f.clone(),
        generators: generators.to_vec(),
        order,
        moment_basis: rows.basis,
        moment_matrix_basis: mm_basis,
        localizing_orders,
        generator_half_degree: generators.iter().map(half_degree).max().unwrap_or(1).max(1),
        lambda_block,
    };
    Ok((relax, problem))
}

impl MomentRelaxation {
    /// Moment matrix of order `s <= t` built from a moment vector.
    pub fn moment_matrix(&self, moments: &[f64], s: u32) -> DMatrix<f64> {
        let n = self.moment_matrix_basis.prefix_len(s);
        DMatrix::from_fn(n, n, |a, b| {
            let alpha = self.moment_matrix_basis.get(a).add(self.moment_matrix_basis.get(b));
            moments[self.moment_basis.index_of(&alpha).expect("within 2t")]
        })
    }

    pub fn lambda_block(&self) -> usize {
        self.lambda_block
    }
}

pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let max = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    eig.eigenvalues.iter().filter(|&&v| v > tol * max).count()
}

/// Ranks of `M_0..M_t` and the smallest order `s >= v` with
/// `rank M_s = rank M_{s-v}`, where `v` is the largest generator half degree.
pub fn check_flatness(moments: &[f64], relax: &MomentRelaxation) -> (bool, Vec<usize>, Option<u32>) {
    let ranks: Vec<usize> = (0..=relax.order)
        .map(|s| numerical_rank(&relax.moment_matrix(moments, s), RANK_TOL))
        .collect();
    let v = relax.generator_half_degree;
    let flat_order = (v..=relax.order).find(|&s| ranks[s as usize] == ranks[(s - v) as usize] && ranks[s as usize] > 0);
    (flat_order.is_some(), ranks, flat_order)
}

// Reduced column echelon form of `w` (N x r): returns `U` (N x r) and the
// pivot rows, with `U[pivots[j], :] = e_j`.
fn column_echelon(w: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, Vec<usize>) {
    let mut a = w.transpose(); // r x N, row-reduce
    let (r, n) = a.shape();
    let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == r {
            break;
        }
        let (best, val) = (row..r)
            .map(|i| (i, a[(i, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol * scale {
            for i in row..r {
                a[(i, col)] = 0.0;
            }
            continue;
        }
        a.swap_rows(row, best);
        let p = a[(row, col)];
        for j in 0..n {
            a[(row, j)] /= p;
        }
        for i in 0..r {
            if i != row {
                let f = a[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        a[(i, j)] -= f * a[(row, j)];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let u = a.rows(0, pivots.len()).transpose();
    (u, pivots)
}

fn mixing_weights(n: usize) -> Vec<f64> {
    // Fixed, generic combination (deterministic extraction).
    let raw: Vec<f64> = (0..n)
        .map(|i| 0.3 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

/// Henrion–Lasserre extraction from the moment matrix of order `s`. Returns
/// `None` when the multiplication structure is inconsistent.
pub fn extract_atoms_at(moments: &[f64], relax: &MomentRelaxation, s: u32) -> Option<Vec<Vec<f64>>> {
    let nvars = relax.vars.len();
    let m = relax.moment_matrix(moments, s);
    let rank = numerical_rank(&m, RANK_TOL);
    if rank == 0 {
        return None;
    }
    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let nrows = m.nrows();
    let mut w = DMatrix::zeros(nrows, rank);
    for (k, &i) in idx.iter().take(rank).enumerate() {
        let l = eig.eigenvalues[i].max(0.0).sqrt();
        for r in 0..nrows {
            w[(r, k)] = eig.eigenvectors[(r, i)] * l;
        }
    }
    let (u, pivots) = column_echelon(&w, 1e-8);
    if pivots.len() != rank {
        return None;
    }
    let basis = &relax.moment_matrix_basis;
    let mut mults = Vec::with_capacity(nvars);
    for v in 0..nvars {
        let mut nmat = DMatrix::zeros(rank, rank);
        for (j, &p) in pivots.iter().enumerate() {
            let shifted = basis.get(p).add(&ExponentVector::unit(nvars, v));
            let row = basis.index_of(&shifted)?;
            if row >= nrows {
                return None;
            }
            for c in 0..rank {
                nmat[(j, c)] = u[(row, c)];
            }
        }
        mults.push(nmat);
    }
    let weights = mixing_weights(nvars);
    let mut combo = DMatrix::zeros(rank, rank);
    for (nm, wgt) in mults.iter().zip(&weights) {
        combo += nm * *wgt;
    }
    let (q, _t) = Schur::try_new(combo, f64::EPSILON, 10_000)?.unpack();
    let atoms: Vec<Vec<f64>> = (0..rank)
        .map(|j| {
            let qj = q.column(j);
            mults.iter().map(|nm| qj.dot(&(nm * qj))).collect()
        })
        .collect();
    if atoms.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    Some(atoms)
}

/// Nonnegative weights reproducing moments of degree `<= 2s` from atoms, and
/// the worst scaled moment mismatch.
pub fn atom_weights(moments: &[f64], relax: &MomentRelaxation, atoms: &[Vec<f64>], s: u32) -> (Vec<f64>, f64) {
    let nrow = relax.moment_basis.prefix_len(2 * s);
    let a = DMatrix::from_fn(nrow, atoms.len(), |r, c| relax.moment_basis.get(r).eval(&atoms[c]));
    let b = DVector::from_fn(nrow, |r, _| moments[r]);
    let svd = a.clone().svd(true, true);
    let w = svd
        .solve(&b, 1e-12)
        .unwrap_or_else(|_| DVector::from_element(atoms.len(), 1.0 / atoms.len() as f64));
    let rebuilt = &a * &w;
    let err = (0..nrow)
        .map(|r| (rebuilt[r] - b[r]).abs() / (1.0 + b[r].abs()))
        .fold(0.0, f64::max);
    (w.iter().copied().collect(), err)
}

/// Extract atoms at the detected flat order and validate them: each atom must
/// satisfy every generator up to [`ATOM_FEAS_TOL`] and the mixture must
/// reproduce the moments up to [`ATOM_MOMENT_TOL`].
pub fn extract_atoms(moments: &[f64], relax: &MomentRelaxation) -> Option<Vec<Vec<f64>>> {
    let (flat, _, s) = check_flatness(moments, relax);
    if !flat {
        return None;
    }
    let s = s?;
    let atoms = extract_atoms_at(moments, relax, s)?;
    let feasible = atoms
        .iter()
        .all(|a| relax.generators.iter().all(|g| g.eval(a) >= -ATOM_FEAS_TOL));
    let (_, err) = atom_weights(moments, relax, &atoms, s);
    (feasible && err <= ATOM_MOMENT_TOL).then_some(atoms)
}

/// Solve a relaxation and post-process: bound, ranks, flatness, atoms.
pub fn solve_relaxation(
    relax: &MomentRelaxation,
    problem: &SdpProblem,
    options: &SolverOptions,
) -> Result<RelaxationOutcome, SosError> {
    let sol = sdp::solve(problem, options)?;
    Ok(interpret(relax, &sol))
}

pub fn interpret(relax: &MomentRelaxation, sol: &SdpSolution) -> RelaxationOutcome {
    match sol.status {
        SdpStatus::DualInfeasible => RelaxationOutcome::Empty {
            certificate_residual: sol.certificate_residual.unwrap_or(f64::NAN),
        },
        _ if sol.is_usable() => {
            let moments: Vec<f64> = sol.dual.iter().map(|y| -y).collect();
            let bound = match &sol.primal[relax.lambda_block] {
                BlockValue::Vector(v) => v[0],
                BlockValue::Matrix(_) => unreachable!(),
            };
            let (flat, ranks, flat_order) = check_flatness(&moments, relax);
            let atoms = if flat { extract_atoms(&moments, relax).unwrap_or_default() } else { Vec::new() };
            RelaxationOutcome::Solved(MomentSolution {
                moments,
                bound,
                ranks,
                rank_tol: RANK_TOL,
                flat: flat && !atoms.is_empty(),
                flat_order,
                atoms,
                status: sol.status,
            })
        }
        other => RelaxationOutcome::Failed(other),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Nonempty(Vec<f64>),
    EmptyCertified,
    Unknown,
}

/// One-sided emptiness test at order `t`. Minimizes `sum_i x_i^2` over the
/// set so that a unique minimum-norm point typically yields a flat solution
/// and hence a witness.
pub fn certify_feasibility(
    vars: &[String],
    generators: &[Polynomial],
    order: u32,
    options: &SolverOptions,
) -> Result<Feasibility, SosError> {
    let mut norm = Polynomial::zero(vars);
    for v in vars {
        let x = Polynomial::variable(vars, v).expect("declared");
        norm = norm.add(&x.pow(2)).expect("same variables");
    }
    let (relax, sdp) = build_moment_relaxation(&norm, generators, order)?;
    Ok(match solve_relaxation(&relax, &sdp, options)? {
        RelaxationOutcome::Empty { .. } => Feasibility::EmptyCertified,
        RelaxationOutcome::Solved(sol) if sol.flat => Feasibility::Nonempty(sol.atoms[0].clone()),
        _ => Feasibility::Unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::moment_vector;
    use crate::poly::{parse_polynomial, var_names};

    fn p(text: &str, vars: &[&str]) -> Polynomial {
        parse_polynomial(text, &var_names(vars)).unwrap()
    }

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    fn solve_moment(f: &str, gens: &[&str], vars: &[&str], t: u32) -> MomentSolution {
        let f = p(f, vars);
        let g: Vec<Polynomial> = gens.iter().map(|s| p(s, vars)).collect();
        let (relax, sdp) = build_moment_relaxation(&f, &g, t).unwrap();
        match solve_relaxation(&relax, &sdp, &opts()).unwrap() {
            RelaxationOutcome::Solved(s) => s,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sos_square_is_its_own_certificate() {
        let target = p("v^2", &["v"]);
        let gamma = moment_vector(0, 0, 1.0);
        let (prog, sdp) = build_sos_identity(&target, &[], 0, &[], &gamma).unwrap();
        let sol = sdp::solve(&sdp, &opts()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let cert = prog.decode(&sol);
        assert!(cert.objective.abs() < 1e-7);
        assert!(prog.identity_residual(&cert) < 1e-6);
    }

    #[test]
    fn linear_target_on_interval() {
        let target = p("v", &["v"]);
        let h = p("1 - v^2", &["v"]);
        let (prog, sdp) = build_sos_identity(&target, &[], 2, &[(h, 0)], &moment_vector(0, 2, 1.0)).unwrap();
        let sol = sdp::solve(&sdp, &opts()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let cert = prog.decode(&sol);
        assert!((cert.objective + 1.0).abs() < 1e-6, "{}", cert.objective);
        assert!(prog.identity_residual(&cert) < 1e-6);
    }

    #[test]
    fn degree_bound_violation() {
        let target = p("v", &["v"]);
        let h = p("1 - v^2", &["v"]);
        let r = build_sos_identity(&target, &[], 2, &[(h, 2)], &moment_vector(0, 2, 1.0));
        assert!(matches!(r, Err(SosError::DegreeBound(_))));
    }

    #[test]
    fn square_on_interval() {
        let s = solve_moment("x^2", &["1 - x^2"], &["x"], 1);
        assert!(s.bound.abs() < 1e-6);
        assert!((s.moments[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn linear_on_interval() {
        let s = solve_moment("x", &["1 - x^2"], &["x"], 1);
        assert!((s.bound + 1.0).abs() < 1e-6);
        assert!(s.flat);
        assert!((s.atoms[0][0] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn linear_on_disc() {
        let s = solve_moment("x1 + x2", &["1 - x1^2 - x2^2"], &["x1", "x2"], 2);
        assert!((s.bound + 2f64.sqrt()).abs() < 1e-6, "{}", s.bound);
        assert!(s.flat, "{:?}", s.ranks);
        assert_eq!(s.atoms.len(), 1);
        for c in &s.atoms[0] {
            assert!((c + 0.5f64.sqrt()).abs() < 1e-4);
        }
    }

    #[test]
    fn order_too_small() {
        let f = p("x^4", &["x"]);
        assert!(matches!(
            build_moment_relaxation(&f, &[], 1),
            Err(SosError::OrderTooSmall { needed: 2, .. })
        ));
    }

    fn relax_1d(t: u32) -> MomentRelaxation {
        let f = p("x", &["x"]);
        build_moment_relaxation(&f, &[p("1 - x^2", &["x"])], t).unwrap().0
    }

    #[test]
    fn dirac_is_flat() {
        let r = relax_1d(2);
        let moments: Vec<f64> = (0..=4).map(|a| 0.5f64.powi(a)).collect();
        let (flat, ranks, _) = check_flatness(&moments, &r);
        assert!(flat);
        assert_eq!(ranks[2], 1);
        let atoms = extract_atoms(&moments, &r).unwrap();
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0][0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn uniform_is_not_flat() {
        let r = relax_1d(2);
        let moments: Vec<f64> = (0..=4u32)
            .map(|a| if a % 2 == 0 { 1.0 / (a as f64 + 1.0) } else { 0.0 })
            .collect();
        let (flat, ranks, _) = check_flatness(&moments, &r);
        assert!(!flat);
        assert_eq!((ranks[2], ranks[1]), (3, 2));
    }

    #[test]
    fn two_diracs_are_flat() {
        let r = relax_1d(2);
        let moments: Vec<f64> = (0..=4).map(|a| if a % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let (flat, ranks, _) = check_flatness(&moments, &r);
        assert!(flat);
        assert_eq!(ranks[2], 2);
        let mut atoms: Vec<f64> = extract_atoms(&moments, &r).unwrap().into_iter().map(|a| a[0]).collect();
        atoms.sort_by(f64::total_cmp);
        assert!((atoms[0] + 1.0).abs() < 1e-8 && (atoms[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn feasibility_verdicts() {
        let vars = var_names(&["x"]);
        let empty = certify_feasibility(&vars, &[p("x", &["x"]), p("-x - 1", &["x"])], 1, &opts()).unwrap();
        assert_eq!(empty, Feasibility::EmptyCertified);
        match certify_feasibility(&vars, &[p("1 - x^2", &["x"])], 1, &opts()).unwrap() {
            Feasibility::Nonempty(w) => assert!(w[0].abs() <= 1.0 + 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hierarchy_is_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for t in 3..=5 {
            let s = solve_moment("x^4*y^2 + x^2*y^4 - 3*x^2*y^2", &["4 - x^2", "4 - y^2"], &["x", "y"], t);
            assert!(s.bound >= prev - 1e-8);
            assert!(s.bound <= -1.0 + 1e-6);
            prev = s.bound;
        }
    }
}
