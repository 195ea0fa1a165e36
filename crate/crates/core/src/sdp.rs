//! Primal-dual interior-point solver for block-structured semidefinite
//! programs.
//!
//! Primal:  minimize `<C, X>`  s.t. `<A_i, X> = b_i`, `X` in `K`
//! Dual:    maximize `b^T y`   s.t. `C - sum_i y_i A_i = S`, `S` in `K*`
//!
//! `K` is a product of PSD cones, nonnegative orthants and free (unrestricted)
//! blocks; the dual slack of a free block is identically zero. The solver runs
//! on the homogeneous self-dual embedding, so it returns either an optimal
//! pair or a Farkas-type certificate of primal or dual infeasibility. Search
//! directions are HKM with Mehrotra predictor-corrector; the Schur complement
//! is dense and factored with Cholesky, and free variables are eliminated
//! through a second (small) Schur complement rather than split.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, LU};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    Psd,
    Nonnegative,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    pub size: usize,
}

/// One coefficient of a block matrix (or vector, with `col == row`).
///
/// PSD entries are symmetric: `(row, col)` also sets `(col, row)`. Repeated
/// entries add up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(block: usize, row: usize, col: usize, value: f64) -> Self {
        Self {
            block,
            row,
            col,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub entries: Vec<Entry>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub blocks: Vec<Block>,
    pub objective: Vec<Entry>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("problem has no constraints")]
    NoConstraints,
    #[error("constraint {0} touches no block")]
    EmptyConstraint(usize),
    #[error("entry refers to block {block} but only {count} blocks exist")]
    BadBlock { block: usize, count: usize },
    #[error("entry ({row}, {col}) outside block {block} of size {size}")]
    BadIndex {
        block: usize,
        row: usize,
        col: usize,
        size: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed sparse text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl SdpProblem {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self {
            blocks,
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_block(&mut self, kind: BlockKind, size: usize) -> usize {
        self.blocks.push(Block { kind, size });
        self.blocks.len() - 1
    }

    pub fn add_constraint(&mut self, entries: Vec<Entry>, rhs: f64) -> usize {
        self.constraints.push(Constraint { entries, rhs });
        self.constraints.len() - 1
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.constraints.is_empty() {
            return Err(SdpError::NoConstraints);
        }
        let check = |e: &Entry| -> Result<(), SdpError> {
            let b = self.blocks.get(e.block).ok_or(SdpError::BadBlock {
                block: e.block,
                count: self.blocks.len(),
            })?;
            let bad = match b.kind {
                BlockKind::Psd => e.row >= b.size || e.col >= b.size,
                _ => e.row >= b.size || e.col != e.row,
            };
            if bad {
                return Err(SdpError::BadIndex {
                    block: e.block,
                    row: e.row,
                    col: e.col,
                    size: b.size,
                });
            }
            Ok(())
        };
        for e in &self.objective {
            check(e)?;
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.entries.iter().all(|e| e.value == 0.0) {
                return Err(SdpError::EmptyConstraint(i));
            }
            for e in &c.entries {
                check(e)?;
            }
        }
        Ok(())
    }

    /// Sparse text dump, one coefficient per line, for differential testing
    /// against external solvers. Indices are 1-based; constraint index 0 is
    /// the objective. See [`SdpProblem::from_sparse_text`].
    ///
    /// ```text
    /// # sdp sparse v1
    /// <num constraints>
    /// <num blocks>
    /// <kind:size per block, kind in P|N|F>
    /// <b_1 ... b_m>
    /// <constraint> <block> <row> <col> <value>
    /// ```
    pub fn to_sparse_text(&self) -> String {
        let mut s = String::from("# sdp sparse v1\n");
        let _ = writeln!(s, "{}", self.constraints.len());
        let _ = writeln!(s, "{}", self.blocks.len());
        let kinds: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                let k = match b.kind {
                    BlockKind::Psd => 'P',
                    BlockKind::Nonnegative => 'N',
                    BlockKind::Free => 'F',
                };
                format!("{k}:{}", b.size)
            })
            .collect();
        let _ = writeln!(s, "{}", kinds.join(" "));
        let rhs: Vec<String> = self.constraints.iter().map(|c| format!("{:?}", c.rhs)).collect();
        let _ = writeln!(s, "{}", rhs.join(" "));
        let mut line = |i: usize, e: &Entry| {
            let _ = writeln!(s, "{} {} {} {} {:?}", i, e.block + 1, e.row + 1, e.col + 1, e.value);
        };
        for e in &self.objective {
            line(0, e);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            for e in &c.entries {
                line(i + 1, e);
            }
        }
        s
    }

    pub fn from_sparse_text(text: &str) -> Result<Self, SdpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines.next().ok_or(SdpError::Parse {
                line: 0,
                msg: format!("missing {what}"),
            })
        };
        let perr = |line: usize, msg: &str| SdpError::Parse {
            line,
            msg: msg.to_string(),
        };
        let (ln, l) = next("constraint count")?;
        let m: usize = l.parse().map_err(|_| perr(ln, "bad constraint count"))?;
        let (ln, l) = next("block count")?;
        let nb: usize = l.parse().map_err(|_| perr(ln, "bad block count"))?;
        let (ln, l) = next("block kinds")?;
        let mut blocks = Vec::with_capacity(nb);
        for tok in l.split_whitespace() {
            let (k, n) = tok.split_once(':').ok_or_else(|| perr(ln, "bad block spec"))?;
            let kind = match k {
                "P" => BlockKind::Psd,
                "N" => BlockKind::Nonnegative,
                "F" => BlockKind::Free,
                _ => return Err(perr(ln, "bad block kind")),
            };
            let size = n.parse().map_err(|_| perr(ln, "bad block size"))?;
            blocks.push(Block { kind, size });
        }
        if blocks.len() != nb {
            return Err(perr(ln, "block count mismatch"));
        }
        let (ln, l) = next("right-hand side")?;
        let rhs: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(ln, "bad rhs value")))
            .collect::<Result<_, _>>()?;
        if rhs.len() != m {
            return Err(perr(ln, "rhs length mismatch"));
        }
        let mut p = SdpProblem::new(blocks);
        p.constraints = rhs
            .into_iter()
            .map(|rhs| Constraint {
                entries: Vec::new(),
                rhs,
            })
            .collect();
        for (ln, l) in lines {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t.len() != 5 {
                return Err(perr(ln, "expected 5 fields"));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| perr(ln, "bad index"));
            let (i, b, r, c) = (idx(t[0])?, idx(t[1])?, idx(t[2])?, idx(t[3])?);
            if b == 0 || r == 0 || c == 0 || i > m {
                return Err(perr(ln, "index out of range"));
            }
            let value: f64 = t[4].parse().map_err(|_| perr(ln, "bad value"))?;
            let e = Entry::new(b - 1, r - 1, c - 1, value);
            if i == 0 {
                p.objective.push(e);
            } else {
                p.constraints[i - 1].entries.push(e);
            }
        }
        Ok(p)
    }
}

/// Value of one block: a symmetric matrix (PSD) or a vector.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Matrix(DMatrix<f64>),
    Vector(DVector<f64>),
}

impl BlockValue {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        match self {
            BlockValue::Matrix(m) => m,
            BlockValue::Vector(_) => panic!("block is a vector"),
        }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        match self {
            BlockValue::Vector(v) => v,
            BlockValue::Matrix(_) => panic!("block is a matrix"),
        }
    }

    fn zeros_like(block: &Block) -> Self {
        match block.kind {
            BlockKind::Psd => BlockValue::Matrix(DMatrix::zeros(block.size, block.size)),
            _ => BlockValue::Vector(DVector::zeros(block.size)),
        }
    }

    fn dot(&self, other: &Self) -> f64 {
        match (self, other) {
            (BlockValue::Matrix(a), BlockValue::Matrix(b)) => a.dot(b),
            (BlockValue::Vector(a), BlockValue::Vector(b)) => a.dot(b),
            _ => panic!("block kind mismatch"),
        }
    }

    fn norm_sq(&self) -> f64 {
        self.dot(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalTrouble,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iterations: usize,
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iterations: 200,
            step_fraction: 0.98,
        }
    }
}

impl SolverOptions {
    fn check(&self) -> Result<(), SdpError> {
        if !(self.gap_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(SdpError::Dimension("tolerances must be positive".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(SdpError::Dimension("step_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Conic residuals of a candidate, each scale-normalized by `1 + data norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal values per block (`X`).
    pub primal: Vec<BlockValue>,
    /// Dual multipliers `y`, one per constraint.
    pub dual: Vec<f64>,
    /// Dual slack per block (`S`); zero on free blocks.
    pub slack: Vec<BlockValue>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Complementarity measure at the start of each iteration.
    pub mu_history: Vec<f64>,
    /// For `PrimalInfeasible`: `y` with `b^T y = 1`, `-A^T y` in `K*`.
    pub dual_ray: Option<Vec<f64>>,
    /// For `DualInfeasible`: `X` in `K` with `A X = 0`, `<C, X> = -1`.
    pub primal_ray: Option<Vec<BlockValue>>,
    /// Cone/equality violation of the attached ray.
    pub certificate_residual: Option<f64>,
}

/// Residuals and gap below which a stalled solve is still a usable optimum.
pub const USABLE_TOL: f64 = 1e-6;

impl SdpSolution {
    /// Optimal, or stopped early with residuals and gap within `USABLE_TOL`.
    pub fn is_usable(&self) -> bool {
        match self.status {
            SdpStatus::Optimal => true,
            SdpStatus::NumericalTrouble | SdpStatus::IterationLimit => {
                self.residuals.primal <= USABLE_TOL && self.residuals.dual <= USABLE_TOL && self.gap <= USABLE_TOL
            }
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Internal dense/sparse data

#[derive(Debug, Clone)]
struct SymEntries {
    // Full (both triangles) coordinate list.
    coo: Vec<(usize, usize, f64)>,
    dense: Option<DMatrix<f64>>,
}

impl SymEntries {
    fn dot(&self, m: &DMatrix<f64>) -> f64 {
        self.coo.iter().map(|&(r, c, v)| v * m[(r, c)]).sum()
    }
}

struct Data {
    blocks: Vec<Block>,
    m: usize,
    b: DVector<f64>,
    c: Vec<BlockValue>,
    // For each block, the constraints touching it: PSD as symmetric entries.
    psd: Vec<Vec<(usize, SymEntries)>>,
    // Dense column-major (m x size) for vector blocks.
    vec_a: Vec<DMatrix<f64>>,
    row_scale: Vec<f64>,
    nu: f64,
}

fn expand(block: &Block, entries: &[&Entry]) -> SymEntries {
    let n = block.size;
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for e in entries {
        if e.row == e.col {
            dense[(e.row, e.col)] += e.value;
        } else {
            dense[(e.row, e.col)] += e.value;
            dense[(e.col, e.row)] += e.value;
        }
    }
    let mut coo = Vec::new();
    for c in 0..n {
        for r in 0..n {
            let v = dense[(r, c)];
            if v != 0.0 {
                coo.push((r, c, v));
            }
        }
    }
    let keep_dense = coo.len() > 2 * n;
    SymEntries {
        coo,
        dense: keep_dense.then_some(dense),
    }
}

fn block_value_from_entries(block: &Block, entries: &[&Entry]) -> BlockValue {
    match block.kind {
        BlockKind::Psd => {
            let s = expand(block, entries);
            let mut m = DMatrix::zeros(block.size, block.size);
            for (r, c, v) in s.coo {
                m[(r, c)] = v;
            }
            BlockValue::Matrix(m)
        }
        _ => {
            let mut v = DVector::zeros(block.size);
            for e in entries {
                v[e.row] += e.value;
            }
            BlockValue::Vector(v)
        }
    }
}

impl Data {
    fn build(p: &SdpProblem, scale_rows: bool) -> Self {
        let m = p.constraints.len();
        let nblocks = p.blocks.len();
        let row_scale: Vec<f64> = p
            .constraints
            .iter()
            .map(|c| {
                if !scale_rows {
                    return 1.0;
                }
                // Frobenius norm of the full (symmetric) coefficient.
                let mut per_block: Vec<Vec<&Entry>> = vec![Vec::new(); nblocks];
                for e in &c.entries {
                    per_block[e.block].push(e);
                }
                let mut sq = 0.0;
                for (j, es) in per_block.iter().enumerate() {
                    if es.is_empty() {
                        continue;
                    }
                    sq += block_value_from_entries(&p.blocks[j], es).norm_sq();
                }
                let n = sq.sqrt();
                if n > 0.0 {
                    n
                } else {
                    1.0
                }
            })
            .collect();
        let b = DVector::from_iterator(m, p.constraints.iter().zip(&row_scale).map(|(c, s)| c.rhs / s));
        let c = (0..nblocks)
            .map(|j| {
                let es: Vec<&Entry> = p.objective.iter().filter(|e| e.block == j).collect();
                block_value_from_entries(&p.blocks[j], &es)
            })
            .collect();
        let mut psd = vec![Vec::new(); nblocks];
        let mut vec_a: Vec<DMatrix<f64>> = p
            .blocks
            .iter()
            .map(|b| match b.kind {
                BlockKind::Psd => DMatrix::zeros(0, 0),
                _ => DMatrix::zeros(m, b.size),
            })
            .collect();
        for (i, con) in p.constraints.iter().enumerate() {
            let mut per_block: Vec<Vec<Entry>> = vec![Vec::new(); nblocks];
            for e in &con.entries {
                let mut e = *e;
                e.value /= row_scale[i];
                per_block[e.block].push(e);
            }
            for (j, es) in per_block.iter().enumerate() {
                if es.is_empty() {
                    continue;
                }
                match p.blocks[j].kind {
                    BlockKind::Psd => {
                        let refs: Vec<&Entry> = es.iter().collect();
                        let s = expand(&p.blocks[j], &refs);
                        if !s.coo.is_empty() {
                            psd[j].push((i, s));
                        }
                    }
                    _ => {
                        for e in es {
                            vec_a[j][(i, e.row)] += e.value;
                        }
                    }
                }
            }
        }
        let nu = p
            .blocks
            .iter()
            .map(|b| match b.kind {
                BlockKind::Free => 0.0,
                _ => b.size as f64,
            })
            .sum();
        Self {
            blocks: p.blocks.clone(),
            m,
            b,
            c,
            psd,
            vec_a,
            row_scale,
            nu,
        }
    }

    /// `A(V)`: one value per constraint.
    fn apply_a(&self, v: &[BlockValue]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for (j, blk) in self.blocks.iter().enumerate() {
            match blk.kind {
                BlockKind::Psd => {
                    let vm = v[j].as_matrix();
                    for (i, s) in &self.psd[j] {
                        out[*i] += s.dot(vm);
                    }
                }
                _ => out += &self.vec_a[j] * v[j].as_vector(),
            }
        }
        out
    }

    /// `A^T y = sum_i y_i A_i` per block.
    fn apply_at(&self, y: &DVector<f64>) -> Vec<BlockValue> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(j, blk)| match blk.kind {
                BlockKind::Psd => {
                    let mut m = DMatrix::zeros(blk.size, blk.size);
                    for (i, s) in &self.psd[j] {
                        let yi = y[*i];
                        if yi != 0.0 {
                            for &(r, c, v) in &s.coo {
                                m[(r, c)] += yi * v;
                            }
                        }
                    }
                    BlockValue::Matrix(m)
                }
                _ => BlockValue::Vector(self.vec_a[j].transpose() * y),
            })
            .collect()
    }

    fn cone_blocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind != BlockKind::Free)
            .map(|(j, _)| j)
    }
}

fn dot_blocks(a: &[BlockValue], b: &[BlockValue]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(sym(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest `alpha` with `X + alpha dX` PSD (infinite if unbounded).
fn psd_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let Some(ch) = Cholesky::new(sym(x)) else {
        return 0.0;
    };
    let l = ch.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .unwrap_or_else(|| DMatrix::identity(n, n));
    let t = &linv * dx * linv.transpose();
    let lmin = min_eigenvalue(&t);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn vec_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&xi, &d)| -xi / d)
        .fold(f64::INFINITY, f64::min)
}

// Per-iteration scaling data: for PSD blocks `X` and `S^{-1}`; for
// nonnegative blocks `x / s`.
enum Scaling {
    Psd { x: DMatrix<f64>, sinv: DMatrix<f64> },
    Lp { ratio: DVector<f64> },
    Free,
}

impl Scaling {
    /// HKM operator `W(V) = sym(X V S^{-1})`.
    fn apply(&self, v: &BlockValue) -> BlockValue {
        match (self, v) {
            (Scaling::Psd { x, sinv }, BlockValue::Matrix(vm)) => BlockValue::Matrix(sym(&(x * vm * sinv))),
            (Scaling::Lp { ratio }, BlockValue::Vector(vv)) => BlockValue::Vector(ratio.component_mul(vv)),
            (Scaling::Free, BlockValue::Vector(vv)) => BlockValue::Vector(DVector::zeros(vv.len())),
            _ => panic!("scaling kind mismatch"),
        }
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<BlockValue>,
    s: Vec<BlockValue>,
    y: DVector<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<BlockValue>,
    ds: Vec<BlockValue>,
    dy: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

// Factored reduced system: Cholesky of the Schur matrix plus the free-block
// complement `F = A_f^T M^{-1} A_f`.
struct Reduced {
    mm: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    af: DMatrix<f64>,
    minv_af: DMatrix<f64>,
    f_lu: Option<LU<f64, Dyn, Dyn>>,
}

impl Reduced {
    /// Solve `[M A_f; A_f^T 0] [u; w] = [r; t]` with two steps of iterative
    /// refinement against the unregularized `M`.
    fn solve(&self, r: &DVector<f64>, t: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut u, mut w) = self.solve_once(r, t);
        for _ in 0..2 {
            let mut ru = r - &self.mm * &u;
            if !w.is_empty() {
                ru -= &self.af * &w;
            }
            let rw = t - self.af.transpose() * &u;
            let (du, dw) = self.solve_once(&ru, &rw);
            u += du;
            w += dw;
        }
        (u, w)
    }

    fn solve_once(&self, r: &DVector<f64>, t: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let minv_r = self.chol.solve(r);
        match &self.f_lu {
            None => (minv_r, DVector::zeros(0)),
            Some(lu) => {
                let rhs = self.af.transpose() * &minv_r - t;
                let w = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(rhs.len()));
                let u = minv_r - &self.minv_af * &w;
                (u, w)
            }
        }
    }
}

struct Engine<'a> {
    d: &'a Data,
    free_blocks: Vec<usize>,
    nfree: usize,
}

impl<'a> Engine<'a> {
    fn new(d: &'a Data) -> Self {
        let free_blocks: Vec<usize> = d
            .blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BlockKind::Free)
            .map(|(j, _)| j)
            .collect();
        let nfree = free_blocks.iter().map(|&j| d.blocks[j].size).sum();
        Self { d, free_blocks, nfree }
    }

    fn free_matrix(&self) -> DMatrix<f64> {
        let mut af = DMatrix::zeros(self.d.m, self.nfree);
        let mut col = 0;
        for &j in &self.free_blocks {
            let a = &self.d.vec_a[j];
            af.columns_mut(col, a.ncols()).copy_from(a);
            col += a.ncols();
        }
        af
    }

    fn free_vec(&self, v: &[BlockValue]) -> DVector<f64> {
        let mut out = DVector::zeros(self.nfree);
        let mut k = 0;
        for &j in &self.free_blocks {
            for &x in v[j].as_vector().iter() {
                out[k] = x;
                k += 1;
            }
        }
        out
    }

    fn scatter_free(&self, w: &DVector<f64>, into: &mut [BlockValue]) {
        let mut k = 0;
        for &j in &self.free_blocks {
            let n = self.d.blocks[j].size;
            into[j] = BlockValue::Vector(w.rows(k, n).into_owned());
            k += n;
        }
    }

    fn scalings(&self, it: &Iterate) -> Option<Vec<Scaling>> {
        self.d
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| match b.kind {
                BlockKind::Psd => {
                    let s = sym(it.s[j].as_matrix());
                    let sinv = Cholesky::new(s)?.inverse();
                    Some(Scaling::Psd {
                        x: it.x[j].as_matrix().clone(),
                        sinv: sym(&sinv),
                    })
                }
                BlockKind::Nonnegative => Some(Scaling::Lp {
                    ratio: it.x[j].as_vector().component_div(it.s[j].as_vector()),
                }),
                BlockKind::Free => Some(Scaling::Free),
            })
            .collect()
    }

    fn schur(&self, w: &[Scaling]) -> DMatrix<f64> {
        let m = self.d.m;
        let mut mm = DMatrix::<f64>::zeros(m, m);
        for (j, blk) in self.d.blocks.iter().enumerate() {
            match (&w[j], blk.kind) {
                (Scaling::Psd { x, sinv }, BlockKind::Psd) => {
                    let list = &self.d.psd[j];
                    let n = blk.size;
                    for (a, (i, ai)) in list.iter().enumerate() {
                        // G = X A_i S^{-1}
                        let g = match &ai.dense {
                            Some(dense) => x * dense * sinv,
                            None => {
                                let mut g = DMatrix::<f64>::zeros(n, n);
                                for &(p, q, v) in &ai.coo {
                                    // g += v * X[:, p] * Sinv[q, :]
                                    for c in 0..n {
                                        let s = v * sinv[(q, c)];
                                        if s != 0.0 {
                                            for r in 0..n {
                                                g[(r, c)] += x[(r, p)] * s;
                                            }
                                        }
                                    }
                                }
                                g
                            }
                        };
                        for (k, ak) in &list[a..] {
                            // <A_k, G> with A_k symmetric: sum v * G[s, r]
                            let val: f64 = ak.coo.iter().map(|&(r, s, v)| v * g[(s, r)]).sum();
                            mm[(*i, *k)] += val;
                            if *i != *k {
                                mm[(*k, *i)] += val;
                            }
                        }
                    }
                }
                (Scaling::Lp { ratio }, BlockKind::Nonnegative) => {
                    let a = &self.d.vec_a[j];
                    let ad = a * DMatrix::from_diagonal(ratio);
                    mm += ad * a.transpose();
                }
                _ => {}
            }
        }
        sym(&mm)
    }

    fn factor(&self, mm: DMatrix<f64>) -> Option<Reduced> {
        let m = mm.nrows();
        let maxdiag = (0..m).map(|i| mm[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut chol = Cholesky::new(mm.clone());
        let mut reg = 1e-14;
        while chol.is_none() && reg < 1e-4 {
            let mut r = mm.clone();
            for i in 0..m {
                r[(i, i)] += reg * maxdiag;
            }
            chol = Cholesky::new(r);
            reg *= 100.0;
        }
        let chol = chol?;
        let af = self.free_matrix();
        if self.nfree == 0 {
            return Some(Reduced {
                mm,
                chol,
                af,
                minv_af: DMatrix::zeros(m, 0),
                f_lu: None,
            });
        }
        let minv_af = chol.solve(&af);
        let f = sym(&(af.transpose() * &minv_af));
        let lu = LU::new(f);
        if !lu.is_invertible() {
            return None;
        }
        Some(Reduced {
            mm,
            chol,
            af,
            minv_af,
            f_lu: Some(lu),
        })
    }

    /// Solve the linearized HSD system for a given complementarity target.
    ///
    /// `rc[j]` is the right side of the cone linearization written as
    /// `dX_j + W(dS_j) = rc_j`; `rtk` of `kappa dtau + tau dkappa = rtk`;
    /// `eta` scales the feasibility residuals.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        w: &[Scaling],
        red: &Reduced,
        res: &HsdResiduals,
        eta: f64,
        rc: &[BlockValue],
        rtk: f64,
        pre: &Shared,
    ) -> Direction {
        let d = self.d;
        // Target residuals: rho = -eta * r.
        let rho_p = &res.rp * (-eta);
        let rho_d: Vec<BlockValue> = res
            .rd
            .iter()
            .map(|v| match v {
                BlockValue::Matrix(m) => BlockValue::Matrix(m * (-eta)),
                BlockValue::Vector(x) => BlockValue::Vector(x * (-eta)),
            })
            .collect();
        let rho_g = eta * res.rg;

        // T = R + W(rho_d) on cone blocks (zero on free blocks).
        let t: Vec<BlockValue> = d
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| match b.kind {
                BlockKind::Free => BlockValue::zeros_like(b),
                _ => {
                    let wr = w[j].apply(&rho_d[j]);
                    match (&rc[j], wr) {
                        (BlockValue::Matrix(a), BlockValue::Matrix(b)) => BlockValue::Matrix(a + b),
                        (BlockValue::Vector(a), BlockValue::Vector(b)) => BlockValue::Vector(a + b),
                        _ => unreachable!(),
                    }
                }
            })
            .collect();
        let r1 = &rho_p - d.apply_a(&t);
        let rho_df = self.free_vec(&rho_d);
        let (u, wv) = red.solve(&r1, &(-&rho_df));
        let rhs3 = rho_g + dot_blocks(&d.c, &t) + rtk / it.tau;
        let num = rhs3 - pre.e.dot(&u) + pre.cf.dot(&wv);
        let den = pre.e.dot(&pre.u1) - pre.cf.dot(&pre.w1) + pre.cwc + it.kappa / it.tau;
        let dtau = num / den;
        let dy = &u + &pre.u1 * dtau;
        let dxf = &wv + &pre.w1 * dtau;

        // dS = -A^T dy + c dtau - rho_d (cone blocks)
        let aty = d.apply_at(&dy);
        let mut ds = Vec::with_capacity(d.blocks.len());
        let mut dx = Vec::with_capacity(d.blocks.len());
        for (j, b) in d.blocks.iter().enumerate() {
            match b.kind {
                BlockKind::Free => {
                    ds.push(BlockValue::zeros_like(b));
                    dx.push(BlockValue::zeros_like(b));
                }
                BlockKind::Psd => {
                    let s = -aty[j].as_matrix() + d.c[j].as_matrix() * dtau - rho_d[j].as_matrix();
                    let s = sym(&s);
                    let wds = w[j].apply(&BlockValue::Matrix(s.clone()));
                    let x = rc[j].as_matrix() - wds.as_matrix();
                    ds.push(BlockValue::Matrix(s));
                    dx.push(BlockValue::Matrix(x));
                }
                BlockKind::Nonnegative => {
                    let s = -aty[j].as_vector() + d.c[j].as_vector() * dtau - rho_d[j].as_vector();
                    let wds = w[j].apply(&BlockValue::Vector(s.clone()));
                    let x = rc[j].as_vector() - wds.as_vector();
                    ds.push(BlockValue::Vector(s));
                    dx.push(BlockValue::Vector(x));
                }
            }
        }
        self.scatter_free(&dxf, &mut dx);
        let dkappa = (rtk - it.kappa * dtau) / it.tau;
        Direction {
            dx,
            ds,
            dy,
            dtau,
            dkappa,
        }
    }

    fn max_step(&self, it: &Iterate, dir: &Direction) -> f64 {
        let mut a = f64::INFINITY;
        for j in self.d.cone_blocks() {
            let (sx, ss) = match self.d.blocks[j].kind {
                BlockKind::Psd => (
                    psd_step(it.x[j].as_matrix(), dir.dx[j].as_matrix()),
                    psd_step(it.s[j].as_matrix(), dir.ds[j].as_matrix()),
                ),
                _ => (
                    vec_step(it.x[j].as_vector(), dir.dx[j].as_vector()),
                    vec_step(it.s[j].as_vector(), dir.ds[j].as_vector()),
                ),
            };
            a = a.min(sx).min(ss);
        }
        if dir.dtau < 0.0 {
            a = a.min(-it.tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            a = a.min(-it.kappa / dir.dkappa);
        }
        a
    }
}

// Solution of the reduced system against the `tau` column, reused by the
// predictor and the corrector.
struct Shared {
    e: DVector<f64>,
    cf: DVector<f64>,
    u1: DVector<f64>,
    w1: DVector<f64>,
    cwc: f64,
}

struct HsdResiduals {
    rp: DVector<f64>,
    rd: Vec<BlockValue>,
    rg: f64,
}

fn hsd_residuals(d: &Data, it: &Iterate) -> HsdResiduals {
    // rp = A x - b tau ; rd = c tau - A^T y - s ; rg = kappa + c^T x - b^T y
    let rp = d.apply_a(&it.x) - &d.b * it.tau;
    let aty = d.apply_at(&it.y);
    let rd = d
        .blocks
        .iter()
        .enumerate()
        .map(|(j, b)| match b.kind {
            BlockKind::Psd => {
                BlockValue::Matrix(d.c[j].as_matrix() * it.tau - aty[j].as_matrix() - it.s[j].as_matrix())
            }
            _ => BlockValue::Vector(d.c[j].as_vector() * it.tau - aty[j].as_vector() - it.s[j].as_vector()),
        })
        .collect();
    let rg = it.kappa + dot_blocks(&d.c, &it.x) - d.b.dot(&it.y);
    HsdResiduals { rp, rd, rg }
}

fn complementarity(d: &Data, it: &Iterate) -> f64 {
    let xs: f64 = d.cone_blocks().map(|j| it.x[j].dot(&it.s[j])).sum();
    (xs + it.tau * it.kappa) / (d.nu + 1.0)
}

fn axpy_blocks(x: &[BlockValue], a: f64, dx: &[BlockValue]) -> Vec<BlockValue> {
    x.iter()
        .zip(dx)
        .map(|(x, d)| match (x, d) {
            (BlockValue::Matrix(x), BlockValue::Matrix(d)) => BlockValue::Matrix(sym(&(x + d * a))),
            (BlockValue::Vector(x), BlockValue::Vector(d)) => BlockValue::Vector(x + d * a),
            _ => unreachable!(),
        })
        .collect()
}

/// Residuals of a candidate `(X, y, S)` against the original problem.
///
/// * primal: `||A(X) - b|| / (1 + ||b||)`
/// * dual: `||C - A^T y - S|| / (1 + ||C||)` with `S` taken as zero on free
///   blocks
/// * gap: `|<C, X> - b^T y| / (1 + |<C, X>| + |b^T y|)`
pub fn residuals(
    problem: &SdpProblem,
    x: &[BlockValue],
    y: &[f64],
    s: &[BlockValue],
) -> Result<Residuals, SdpError> {
    check_shapes(problem, x)?;
    check_shapes(problem, s)?;
    if y.len() != problem.constraints.len() {
        return Err(SdpError::Dimension(format!(
            "{} multipliers for {} constraints",
            y.len(),
            problem.constraints.len()
        )));
    }
    Ok(residuals_prebuilt(&Data::build(problem, false), x, y, s))
}

fn check_shapes(problem: &SdpProblem, v: &[BlockValue]) -> Result<(), SdpError> {
    if v.len() != problem.blocks.len() {
        return Err(SdpError::Dimension(format!(
            "{} block values for {} blocks",
            v.len(),
            problem.blocks.len()
        )));
    }
    for (b, val) in problem.blocks.iter().zip(v) {
        let ok = match (b.kind, val) {
            (BlockKind::Psd, BlockValue::Matrix(m)) => m.nrows() == b.size && m.ncols() == b.size,
            (BlockKind::Psd, _) => false,
            (_, BlockValue::Vector(x)) => x.len() == b.size,
            _ => false,
        };
        if !ok {
            return Err(SdpError::Dimension("block shape mismatch".into()));
        }
    }
    Ok(())
}

/// Violation of the primal-infeasibility certificate `y`: the largest of the
/// cone violations of `-A^T y` and `||A_f^T y||_inf` on free blocks. The ray
/// is expected to be normalized to `b^T y = 1`.
pub fn dual_ray_residual(problem: &SdpProblem, y: &[f64]) -> f64 {
    dual_ray_residual_prebuilt(&Data::build(problem, false), y)
}

/// Violation of the dual-infeasibility certificate `X`: `||A(X)||_inf` and
/// cone violation of `X`. Expected normalized to `<C, X> = -1`.
pub fn primal_ray_residual(problem: &SdpProblem, x: &[BlockValue]) -> f64 {
    primal_ray_residual_prebuilt(&Data::build(problem, false), x)
}

fn unscale_dual(d: &Data, y: &DVector<f64>) -> Vec<f64> {
    y.iter().zip(&d.row_scale).map(|(v, s)| v / s).collect()
}

fn scale_blocks(v: &[BlockValue], a: f64) -> Vec<BlockValue> {
    v.iter()
        .map(|b| match b {
            BlockValue::Matrix(m) => BlockValue::Matrix(m * a),
            BlockValue::Vector(x) => BlockValue::Vector(x * a),
        })
        .collect()
}

/// Solve an SDP. Deterministic for identical inputs.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    options.check()?;
    let d = Data::build(problem, true);
    let eng = Engine::new(&d);
    let orig = Data::build(problem, false);

    let mut it = Iterate {
        x: d
            .blocks
            .iter()
            .map(|b| match b.kind {
                BlockKind::Psd => BlockValue::Matrix(DMatrix::identity(b.size, b.size)),
                BlockKind::Nonnegative => BlockValue::Vector(DVector::from_element(b.size, 1.0)),
                BlockKind::Free => BlockValue::Vector(DVector::zeros(b.size)),
            })
            .collect(),
        s: d
            .blocks
            .iter()
            .map(|b| match b.kind {
                BlockKind::Psd => BlockValue::Matrix(DMatrix::identity(b.size, b.size)),
                BlockKind::Nonnegative => BlockValue::Vector(DVector::from_element(b.size, 1.0)),
                BlockKind::Free => BlockValue::Vector(DVector::zeros(b.size)),
            })
            .collect(),
        y: DVector::zeros(d.m),
        tau: 1.0,
        kappa: 1.0,
    };

    let mut mu_history = Vec::new();
    let mut status = SdpStatus::IterationLimit;
    let mut iterations = 0;
    let mut best: Option<(f64, Iterate)> = None;
    let mut stalls = 0;

    let finish = |it: &Iterate, status: SdpStatus, iterations: usize, mu_history: Vec<f64>| {
        build_solution(&d, &orig, it, status, iterations, mu_history)
    };

    for iter in 0..=options.max_iterations {
        iterations = iter;
        let mu = complementarity(&d, &it);
        mu_history.push(mu);

        // Termination tests on the unscaled problem.
        let verdict = assess(&d, &orig, &it, options);
        match verdict {
            Verdict::Done(st) => {
                status = st;
                return Ok(finish(&it, status, iterations, mu_history));
            }
            Verdict::Continue(score) => {
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((score, it.clone()));
                }
            }
        }
        if iter == options.max_iterations {
            break;
        }
        if !mu.is_finite() {
            status = SdpStatus::NumericalTrouble;
            break;
        }

        let Some(w) = eng.scalings(&it) else {
            status = SdpStatus::NumericalTrouble;
            break;
        };
        let mm = eng.schur(&w);
        let Some(red) = eng.factor(mm) else {
            status = SdpStatus::NumericalTrouble;
            break;
        };
        let res = hsd_residuals(&d, &it);

        // Quantities shared by predictor and corrector.
        let wc: Vec<BlockValue> = d
            .blocks
            .iter()
            .enumerate()
            .map(|(j, _)| w[j].apply(&d.c[j]))
            .collect();
        let awc = d.apply_a(&wc);
        let dvec = &d.b + &awc;
        let e = &d.b - &awc;
        let cwc = dot_blocks(&d.c, &wc);
        let cf = eng.free_vec(&d.c);
        let (u1, w1) = red.solve(&dvec, &cf);
        let pre = Shared { e, cf, u1, w1, cwc };

        // Predictor.
        let rc_aff: Vec<BlockValue> = d
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| match b.kind {
                BlockKind::Free => BlockValue::zeros_like(b),
                BlockKind::Psd => BlockValue::Matrix(-it.x[j].as_matrix()),
                BlockKind::Nonnegative => BlockValue::Vector(-it.x[j].as_vector()),
            })
            .collect();
        let aff = eng.direction(&it, &w, &red, &res, 1.0, &rc_aff, -it.tau * it.kappa, &pre);
        let alpha_aff = eng.max_step(&it, &aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(1e-6, 1.0);

        // Corrector.
        let target = sigma * mu;
        let rc: Vec<BlockValue> = d
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| match (&w[j], b.kind) {
                (Scaling::Psd { x, sinv }, BlockKind::Psd) => {
                    let corr = aff.dx[j].as_matrix() * aff.ds[j].as_matrix() * sinv;
                    BlockValue::Matrix(sinv * target - x - sym(&corr))
                }
                (Scaling::Lp { .. }, BlockKind::Nonnegative) => {
                    let x = it.x[j].as_vector();
                    let s = it.s[j].as_vector();
                    let corr = aff.dx[j].as_vector().component_mul(aff.ds[j].as_vector());
                    let v = DVector::from_iterator(
                        x.len(),
                        (0..x.len()).map(|i| (target - corr[i]) / s[i] - x[i]),
                    );
                    BlockValue::Vector(v)
                }
                _ => BlockValue::zeros_like(b),
            })
            .collect();
        let rtk = target - it.tau * it.kappa - aff.dtau * aff.dkappa;
        let dir = eng.direction(&it, &w, &red, &res, 1.0 - sigma, &rc, rtk, &pre);
        let amax = eng.max_step(&it, &dir);
        let alpha = (options.step_fraction * amax).min(1.0);
        if !alpha.is_finite() || alpha < 1e-12 {
            stalls += 1;
            if stalls > 3 {
                status = SdpStatus::NumericalTrouble;
                break;
            }
            continue;
        }

        let next = Iterate {
            x: axpy_blocks(&it.x, alpha, &dir.dx),
            s: axpy_blocks(&it.s, alpha, &dir.ds),
            y: &it.y + &dir.dy * alpha,
            tau: it.tau + alpha * dir.dtau,
            kappa: it.kappa + alpha * dir.dkappa,
        };
        if next.tau <= 0.0 || next.kappa <= 0.0 || !next.tau.is_finite() {
            status = SdpStatus::NumericalTrouble;
            break;
        }
        it = next;
    }

    // Fall back to the best iterate seen for the returned point.
    let it = best.map(|(_, it)| it).unwrap_or(it);
    Ok(finish(&it, status, iterations, mu_history))
}

enum Verdict {
    Done(SdpStatus),
    // Merit of the iterate for picking a fallback point.
    Continue(f64),
}

fn assess(d: &Data, orig: &Data, it: &Iterate, opt: &SolverOptions) -> Verdict {
    let (x, y, s) = unscaled(d, it);
    let yv: Vec<f64> = y.iter().copied().collect();
    let r = residuals_prebuilt(orig, &x, &yv, &s);
    if r.primal <= opt.feas_tol && r.dual <= opt.feas_tol && r.gap <= opt.gap_tol {
        return Verdict::Done(SdpStatus::Optimal);
    }
    // Infeasibility certificates, checked on the raw homogeneous iterate.
    let yraw = DVector::from_vec(unscale_dual(d, &it.y));
    let by = orig.b.dot(&yraw);
    if by > 0.0 {
        let ray: Vec<f64> = yraw.iter().map(|v| v / by).collect();
        if dual_ray_residual_prebuilt(orig, &ray) <= opt.feas_tol {
            return Verdict::Done(SdpStatus::PrimalInfeasible);
        }
    }
    let cx = dot_blocks(&orig.c, &it.x);
    if cx < 0.0 {
        let ray = scale_blocks(&it.x, -1.0 / cx);
        if primal_ray_residual_prebuilt(orig, &ray) <= opt.feas_tol {
            return Verdict::Done(SdpStatus::DualInfeasible);
        }
    }
    Verdict::Continue(r.primal.max(r.dual).max(r.gap))
}

fn unscaled(d: &Data, it: &Iterate) -> (Vec<BlockValue>, DVector<f64>, Vec<BlockValue>) {
    let inv = 1.0 / it.tau;
    let x = scale_blocks(&it.x, inv);
    let s = scale_blocks(&it.s, inv);
    let y = DVector::from_vec(unscale_dual(d, &it.y)) * inv;
    (x, y, s)
}

fn residuals_prebuilt(d: &Data, x: &[BlockValue], y: &[f64], s: &[BlockValue]) -> Residuals {
    let yv = DVector::from_column_slice(y);
    let bnorm = d.b.norm();
    let cnorm = d.c.iter().map(|v| v.norm_sq()).sum::<f64>().sqrt();
    let primal = (d.apply_a(x) - &d.b).norm() / (1.0 + bnorm);
    let aty = d.apply_at(&yv);
    let mut dsq = 0.0;
    for (j, b) in d.blocks.iter().enumerate() {
        dsq += match b.kind {
            BlockKind::Psd => (d.c[j].as_matrix() - aty[j].as_matrix() - s[j].as_matrix()).norm_squared(),
            BlockKind::Nonnegative => (d.c[j].as_vector() - aty[j].as_vector() - s[j].as_vector()).norm_squared(),
            BlockKind::Free => (d.c[j].as_vector() - aty[j].as_vector()).norm_squared(),
        };
    }
    let dual = dsq.sqrt() / (1.0 + cnorm);
    let pobj = dot_blocks(&d.c, x);
    let dobj = d.b.dot(&yv);
    let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    Residuals { primal, dual, gap }
}

fn dual_ray_residual_prebuilt(d: &Data, y: &[f64]) -> f64 {
    let aty = d.apply_at(&DVector::from_column_slice(y));
    let mut worst: f64 = 0.0;
    for (j, b) in d.blocks.iter().enumerate() {
        let v = match b.kind {
            BlockKind::Psd => (-min_eigenvalue(&(-aty[j].as_matrix()))).max(0.0),
            BlockKind::Nonnegative => aty[j].as_vector().iter().fold(0.0f64, |m, &a| m.max(a)),
            BlockKind::Free => aty[j].as_vector().amax(),
        };
        worst = worst.max(v);
    }
    worst
}

fn primal_ray_residual_prebuilt(d: &Data, x: &[BlockValue]) -> f64 {
    let mut worst = d.apply_a(x).amax();
    for (j, b) in d.blocks.iter().enumerate() {
        let v = match b.kind {
            BlockKind::Psd => (-min_eigenvalue(x[j].as_matrix())).max(0.0),
            BlockKind::Nonnegative => x[j].as_vector().iter().fold(0.0f64, |m, &a| m.max(-a)),
            BlockKind::Free => 0.0,
        };
        worst = worst.max(v);
    }
    worst
}

fn build_solution(
    d: &Data,
    orig: &Data,
    it: &Iterate,
    status: SdpStatus,
    iterations: usize,
    mu_history: Vec<f64>,
) -> SdpSolution {
    let (x, y, s) = unscaled(d, it);
    let yv: Vec<f64> = y.iter().copied().collect();
    let residuals = residuals_prebuilt(orig, &x, &yv, &s);
    let primal_objective = dot_blocks(&orig.c, &x);
    let dual_objective = orig.b.dot(&y);
    let mut sol = SdpSolution {
        status,
        primal: x,
        dual: yv,
        slack: s,
        primal_objective,
        dual_objective,
        gap: residuals.gap,
        residuals,
        iterations,
        mu_history,
        dual_ray: None,
        primal_ray: None,
        certificate_residual: None,
    };
    match status {
        SdpStatus::PrimalInfeasible => {
            let yraw = DVector::from_vec(unscale_dual(d, &it.y));
            let by = orig.b.dot(&yraw);
            let ray: Vec<f64> = yraw.iter().map(|v| v / by).collect();
            sol.certificate_residual = Some(dual_ray_residual_prebuilt(orig, &ray));
            sol.dual_ray = Some(ray);
        }
        SdpStatus::DualInfeasible => {
            let cx = dot_blocks(&orig.c, &it.x);
            let ray = scale_blocks(&it.x, -1.0 / cx);
            sol.certificate_residual = Some(primal_ray_residual_prebuilt(orig, &ray));
            sol.primal_ray = Some(ray);
        }
        _ => {}
    }
    sol
}
