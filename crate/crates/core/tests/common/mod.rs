//! Random SDP instances with a planted optimum or a planted infeasibility.

#![allow(dead_code)]

use mpec_core::sdp::{Block, BlockKind, Entry, SdpProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    g.qr().q()
}

pub fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&g + g.transpose()) * 0.5
}

pub fn sym_entries(block: usize, m: &DMatrix<f64>) -> Vec<Entry> {
    let mut out = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..=c {
            if m[(r, c)] != 0.0 {
                out.push(Entry::new(block, r, c, m[(r, c)]));
            }
        }
    }
    out
}

pub fn vec_entries(block: usize, v: &DVector<f64>) -> Vec<Entry> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0)
        .map(|(i, x)| Entry::new(block, i, i, *x))
        .collect()
}

pub struct Planted {
    pub problem: SdpProblem,
    pub optimum: f64,
}

// Complementary primal/dual pair with strict complementarity; C and b are
// then defined so that the pair is optimal.
pub fn planted(seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let npsd = rng.random_range(1..=2);
    let psd_sizes: Vec<usize> = (0..npsd).map(|_| rng.random_range(2..=30)).collect();
    let nlp = rng.random_range(0..=6);
    let nfree = rng.random_range(0..=3);
    let mut blocks: Vec<Block> = psd_sizes
        .iter()
        .map(|&n| Block {
            kind: BlockKind::Psd,
            size: n,
        })
        .collect();
    if nlp > 0 {
        blocks.push(Block {
            kind: BlockKind::Nonnegative,
            size: nlp,
        });
    }
    if nfree > 0 {
        blocks.push(Block {
            kind: BlockKind::Free,
            size: nfree,
        });
    }
    let m = rng.random_range((nfree + 2).max(4)..=30);

    let mut xs = Vec::new();
    let mut ss = Vec::new();
    for &n in &psd_sizes {
        let q = random_orthogonal(n, &mut rng);
        let r = rng.random_range(1..n);
        let lx = DVector::from_fn(n, |i, _| if i < r { rng.random_range(0.5..2.0) } else { 0.0 });
        let ls = DVector::from_fn(n, |i, _| if i >= r { rng.random_range(0.5..2.0) } else { 0.0 });
        xs.push(&q * DMatrix::from_diagonal(&lx) * q.transpose());
        ss.push(&q * DMatrix::from_diagonal(&ls) * q.transpose());
    }
    let xlp = DVector::from_fn(nlp, |i, _| if i % 2 == 0 { rng.random_range(0.5..2.0) } else { 0.0 });
    let slp = DVector::from_fn(nlp, |i, _| if i % 2 == 1 { rng.random_range(0.5..2.0) } else { 0.0 });
    let xf = DVector::from_fn(nfree, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));

    let mut c_psd: Vec<DMatrix<f64>> = ss.clone();
    let mut c_lp = slp.clone();
    let mut c_f = DVector::zeros(nfree);
    let mut problem = SdpProblem::new(blocks.clone());
    for i in 0..m {
        let mut entries = Vec::new();
        let mut rhs = 0.0;
        for (j, &n) in psd_sizes.iter().enumerate() {
            let a = random_sym(n, &mut rng);
            rhs += a.dot(&xs[j]);
            c_psd[j] += &a * y[i];
            entries.extend(sym_entries(j, &a));
        }
        if nlp > 0 {
            let a = DVector::from_fn(nlp, |_, _| rng.random_range(-1.0..1.0));
            rhs += a.dot(&xlp);
            c_lp += &a * y[i];
            entries.extend(vec_entries(npsd, &a));
        }
        if nfree > 0 {
            let a = DVector::from_fn(nfree, |_, _| rng.random_range(-1.0..1.0));
            rhs += a.dot(&xf);
            c_f += &a * y[i];
            entries.extend(vec_entries(blocks.len() - 1, &a));
        }
        problem.add_constraint(entries, rhs);
    }
    let mut optimum = 0.0;
    for (j, c) in c_psd.iter().enumerate() {
        optimum += c.dot(&xs[j]);
        problem.objective.extend(sym_entries(j, c));
    }
    if nlp > 0 {
        optimum += c_lp.dot(&xlp);
        problem.objective.extend(vec_entries(npsd, &c_lp));
    }
    if nfree > 0 {
        optimum += c_f.dot(&xf);
        problem.objective.extend(vec_entries(blocks.len() - 1, &c_f));
    }
    Planted { problem, optimum }
}


/// `<A_1, X> + a^T x = -1` with `A_1` positive definite and `a > 0`, plus
/// random extra rows.
pub fn planted_infeasible(seed: u64) -> SdpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let n = rng.random_range(2..=12);
    let mut p = SdpProblem::new(vec![
        Block {
            kind: BlockKind::Psd,
            size: n,
        },
        Block {
            kind: BlockKind::Nonnegative,
            size: 3,
        },
    ]);
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let a1 = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
    let mut e = sym_entries(0, &a1);
    e.extend(vec_entries(1, &DVector::from_fn(3, |_, _| rng.random_range(0.1..1.0))));
    p.add_constraint(e, -1.0);
    for _ in 0..rng.random_range(1..5) {
        let a = random_sym(n, &mut rng);
        p.add_constraint(sym_entries(0, &a), rng.random_range(-1.0..1.0));
    }
    p.objective = sym_entries(0, &random_sym(n, &mut rng));
    p
}
