//! Sparse multivariate polynomials over named variables.
//!
//! Terms are kept in a `BTreeMap` keyed by [`ExponentVector`], whose ordering
//! is graded lexicographic. Every basis, index map and rendering in the crate
//! inherits that order, so output is reproducible across runs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

/// Coefficients with magnitude below this are dropped after arithmetic.
pub const COEFF_CLEANUP: f64 = 1e-14;

/// Largest exponent accepted by the parser.
pub const MAX_EXPONENT: u32 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("exponent too large at position {0}")]
    ExponentOverflow(usize),
    #[error("variable lists differ: {0:?} vs {1:?}")]
    VariableMismatch(Vec<String>, Vec<String>),
    #[error("point has {got} coordinates, polynomial has {expected} variables")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable `{0}` is missing from the target variable list")]
    MissingVariable(String),
    #[error("division by a non-constant or zero polynomial")]
    BadDivision,
}

/// Multi-index `alpha` of a monomial `z^alpha`.
///
/// Ordered graded lexicographically: lower total degree first, then by
/// descending exponent of the first variable, second variable and so on.
/// In two variables the degree-2 order is `x^2, x*y, y^2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExponentVector {
    exponents: Vec<u32>,
    total_degree: u32,
}

impl ExponentVector {
    pub fn new(exponents: Vec<u32>) -> Self {
        let total_degree = exponents.iter().sum();
        Self {
            exponents,
            total_degree,
        }
    }

    pub fn zero(num_vars: usize) -> Self {
        Self::new(vec![0; num_vars])
    }

    /// Unit vector `e_i`.
    pub fn unit(num_vars: usize, i: usize) -> Self {
        let mut e = vec![0; num_vars];
        e[i] = 1;
        Self::new(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn total_degree(&self) -> u32 {
        self.total_degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.total_degree == 0
    }

    /// `self + other`, the exponent of the product monomial.
    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self::new(
            self.exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// True if every exponent is even.
    pub fn is_even(&self) -> bool {
        self.exponents.iter().all(|e| e % 2 == 0)
    }

    /// `z^alpha` at a point.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(point)
            .fold(1.0, |acc, (&e, &z)| if e == 0 { acc } else { acc * z.powi(e as i32) })
    }
}

impl Ord for ExponentVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_degree
            .cmp(&other.total_degree)
            .then_with(|| other.exponents.cmp(&self.exponents))
    }
}

impl PartialOrd for ExponentVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All monomials of total degree `<= max_degree` in `num_vars` variables,
/// graded lexicographic.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    num_vars: usize,
    max_degree: u32,
    monomials: Vec<ExponentVector>,
    index: HashMap<ExponentVector, usize>,
}

impl MonomialBasis {
    pub fn new(num_vars: usize, max_degree: u32) -> Self {
        let mut monomials = Vec::with_capacity(binomial(num_vars + max_degree as usize, num_vars));
        for d in 0..=max_degree {
            let mut current = vec![0u32; num_vars];
            push_compositions(d, 0, &mut current, &mut monomials);
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Self {
            num_vars,
            max_degree,
            monomials,
            index,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[ExponentVector] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &ExponentVector {
        &self.monomials[i]
    }

    pub fn index_of(&self, alpha: &ExponentVector) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    /// Number of monomials of degree `<= d`, i.e. the length of the leading
    /// block of this basis that forms the degree-`d` basis.
    pub fn prefix_len(&self, d: u32) -> usize {
        binomial(self.num_vars + d as usize, self.num_vars)
    }
}

/// Convenience wrapper matching [`MonomialBasis::new`].
pub fn monomial_basis(num_vars: usize, max_degree: u32) -> MonomialBasis {
    MonomialBasis::new(num_vars, max_degree)
}

// Exponent tuples of total degree `remaining` over variables `pos..`, in
// descending lexicographic order.
fn push_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<ExponentVector>) {
    let n = current.len();
    if n == 0 {
        if remaining == 0 {
            out.push(ExponentVector::new(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        current[pos] = remaining;
        out.push(ExponentVector::new(current.clone()));
        current[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        push_compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Sparse polynomial with `f64` coefficients over an ordered variable list.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    vars: Vec<String>,
    terms: BTreeMap<ExponentVector, f64>,
}

impl Polynomial {
    pub fn zero(vars: &[String]) -> Self {
        Self {
            vars: vars.to_vec(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &[String], c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(ExponentVector::zero(vars.len()), c);
        p.cleanup();
        p
    }

    /// The polynomial consisting of the single variable `name`.
    pub fn variable(vars: &[String], name: &str) -> Result<Self, PolyError> {
        let i = vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| PolyError::UnknownIdentifier(name.to_string()))?;
        let mut p = Self::zero(vars);
        p.add_term(ExponentVector::unit(vars.len(), i), 1.0);
        Ok(p)
    }

    /// Build from `(exponents, coefficient)` pairs; repeated exponents add up.
    pub fn from_terms<I>(vars: &[String], terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Self::zero(vars);
        for (e, c) in terms {
            assert_eq!(e.len(), vars.len(), "exponent length must match variable count");
            p.add_term(ExponentVector::new(e), c);
        }
        p.cleanup();
        p
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&ExponentVector, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of `z^alpha` (zero if absent).
    pub fn coeff(&self, exponents: &[u32]) -> f64 {
        self.terms
            .get(&ExponentVector::new(exponents.to_vec()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.total_degree()).max().unwrap_or(0)
    }

    /// `ceil(deg / 2)`.
    pub fn half_degree(&self) -> u32 {
        self.degree().div_ceil(2)
    }

    /// True if the polynomial does not depend on variable `name`.
    pub fn is_free_of(&self, name: &str) -> bool {
        match self.vars.iter().position(|v| v == name) {
            None => true,
            Some(i) => self.terms.keys().all(|e| e.exponents()[i] == 0),
        }
    }

    fn add_term(&mut self, e: ExponentVector, c: f64) {
        *self.terms.entry(e).or_insert(0.0) += c;
    }

    fn cleanup(&mut self) {
        self.terms.retain(|_, c| c.abs() >= COEFF_CLEANUP);
    }

    fn check_vars(&self, other: &Self) -> Result<(), PolyError> {
        if self.vars == other.vars {
            Ok(())
        } else {
            Err(PolyError::VariableMismatch(self.vars.clone(), other.vars.clone()))
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e.clone(), c);
        }
        out.cleanup();
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_vars(other)?;
        let mut out = Self::zero(&self.vars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                out.add_term(ea.add(eb), ca * cb);
            }
        }
        out.cleanup();
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self {
            vars: self.vars.clone(),
            terms: self.terms.iter().map(|(e, &c)| (e.clone(), c * s)).collect(),
        };
        out.cleanup();
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::constant(&self.vars, 1.0);
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base).expect("same variables");
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base).expect("same variables");
            }
        }
        acc
    }

    /// Plain monomial sum `sum_alpha p_alpha z^alpha`.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.vars.len() {
            return Err(PolyError::DimensionMismatch {
                expected: self.vars.len(),
                got: point.len(),
            });
        }
        Ok(self.eval(point))
    }

    /// Unchecked evaluation for hot loops. Panics in debug builds on a
    /// length mismatch.
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.vars.len());
        self.terms.iter().map(|(e, &c)| c * e.eval(point)).sum()
    }

    /// Re-express over a superset (or reordering) of the current variables.
    pub fn embed(&self, vars: &[String]) -> Result<Self, PolyError> {
        let map: Vec<usize> = self
            .vars
            .iter()
            .map(|v| {
                vars.iter()
                    .position(|w| w == v)
                    .ok_or_else(|| PolyError::MissingVariable(v.clone()))
            })
            .collect::<Result<_, _>>()?;
        let mut out = Self::zero(vars);
        for (e, &c) in &self.terms {
            let mut ne = vec![0u32; vars.len()];
            for (i, &x) in e.exponents().iter().enumerate() {
                ne[map[i]] = x;
            }
            out.add_term(ExponentVector::new(ne), c);
        }
        Ok(out)
    }

    /// Drop variables the polynomial does not depend on, keeping `vars` order.
    pub fn restrict(&self, vars: &[String]) -> Result<Self, PolyError> {
        for (i, v) in self.vars.iter().enumerate() {
            if !vars.contains(v) && self.terms.keys().any(|e| e.exponents()[i] != 0) {
                return Err(PolyError::MissingVariable(v.clone()));
            }
        }
        let map: Vec<Option<usize>> = vars
            .iter()
            .map(|v| self.vars.iter().position(|w| w == v))
            .collect();
        let mut out = Self::zero(vars);
        for (e, &c) in &self.terms {
            let ne = map
                .iter()
                .map(|m| m.map_or(0, |i| e.exponents()[i]))
                .collect();
            out.add_term(ExponentVector::new(ne), c);
        }
        Ok(out)
    }

    /// Replace variables by polynomials. All replacements must share one
    /// variable list, which becomes the variable list of the result; unmapped
    /// variables of `self` must appear in it. An empty mapping returns `self`.
    pub fn substitute(&self, mapping: &[(&str, Polynomial)]) -> Result<Self, PolyError> {
        let Some((_, first)) = mapping.first() else {
            return Ok(self.clone());
        };
        let target = first.vars().to_vec();
        for (_, q) in mapping {
            if q.vars() != target.as_slice() {
                return Err(PolyError::VariableMismatch(target.clone(), q.vars().to_vec()));
            }
        }
        let replacements: Vec<Polynomial> = self
            .vars
            .iter()
            .map(|v| match mapping.iter().find(|(name, _)| *name == v.as_str()) {
                Some((_, q)) => Ok(q.clone()),
                None => Polynomial::variable(&target, v)
                    .map_err(|_| PolyError::MissingVariable(v.clone())),
            })
            .collect::<Result<_, _>>()?;
        // Powers are cached per variable so that each term costs only products.
        let mut cache: Vec<Vec<Polynomial>> = replacements
            .iter()
            .map(|q| vec![Polynomial::constant(&target, 1.0), q.clone()])
            .collect();
        let mut out = Polynomial::zero(&target);
        for (e, &c) in &self.terms {
            let mut term = Polynomial::constant(&target, c);
            for (i, &k) in e.exponents().iter().enumerate() {
                if k == 0 {
                    continue;
                }
                while cache[i].len() <= k as usize {
                    let next = cache[i].last().unwrap().mul(&replacements[i])?;
                    cache[i].push(next);
                }
                term = term.mul(&cache[i][k as usize])?;
            }
            for (te, tc) in term.terms {
                out.add_term(te, tc);
            }
        }
        out.cleanup();
        Ok(out)
    }

    /// Canonical text: graded-lex term order, shortest round-trip decimals.
    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut s = String::new();
        for (i, (e, &c)) in self.terms.iter().enumerate() {
            let mono = render_monomial(&self.vars, e);
            let mag = c.abs();
            if i == 0 {
                if c < 0.0 {
                    s.push('-');
                }
            } else if c < 0.0 {
                s.push_str(" - ");
            } else {
                s.push_str(" + ");
            }
            match (mono.is_empty(), mag == 1.0) {
                (true, _) => s.push_str(&format_coeff(mag)),
                (false, true) => s.push_str(&mono),
                (false, false) => {
                    s.push_str(&format_coeff(mag));
                    s.push('*');
                    s.push_str(&mono);
                }
            }
        }
        s
    }
}

fn format_coeff(c: f64) -> String {
    // `{:?}` is shortest round-trip and switches to exponent form for
    // extreme magnitudes, which the parser accepts.
    format!("{c:?}")
}

fn render_monomial(vars: &[String], e: &ExponentVector) -> String {
    let parts: Vec<String> = e
        .exponents()
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| {
            if k == 1 {
                vars[i].clone()
            } else {
                format!("{}^{}", vars[i], k)
            }
        })
        .collect();
    parts.join("*")
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Parse an expression over `vars` into expanded normal form.
///
/// Grammar: decimal literals (optional exponent part), identifiers, binary
/// `+ - * /`, unary `-`/`+`, `^` with a nonnegative integer exponent, and
/// parentheses. Division is only allowed by a nonzero constant.
pub fn parse_polynomial(text: &str, vars: &[String]) -> Result<Polynomial, PolyError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        vars,
        text_len: text.len(),
    };
    let p = parser.expr()?;
    if let Some((tok, at)) = parser.tokens.get(parser.pos) {
        return Err(PolyError::Syntax {
            pos: *at,
            msg: format!("unexpected {tok:?}"),
        });
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Int(String),
    Ident(String),
    Op(char),
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, PolyError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut integral = true;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                if bytes[i] == b'.' {
                    integral = false;
                }
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lit = &text[start..i];
            let value: f64 = lit.parse().map_err(|_| PolyError::Syntax {
                pos: start,
                msg: format!("bad number `{lit}`"),
            })?;
            let tok = if integral {
                Token::Int(lit.to_string())
            } else {
                Token::Num(value)
            };
            out.push((tok, start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Token::Ident(text[start..i].to_string()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Token::Op(c), i));
            i += 1;
        } else {
            return Err(PolyError::Syntax {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    vars: &'a [String],
    text_len: usize,
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some((Token::Op(c), _)) => Some(*c),
            _ => None,
        }
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.text_len, |(_, p)| *p)
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == '+' { acc.add(&rhs)? } else { acc.sub(&rhs)? };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            if op == '*' {
                acc = acc.mul(&rhs)?;
            } else {
                let c = match (rhs.degree(), rhs.coeff(&vec![0; rhs.num_vars()])) {
                    (0, c) if c != 0.0 => c,
                    _ => return Err(PolyError::BadDivision),
                };
                acc = acc.scale(1.0 / c);
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(self.unary()?.scale(-1.0))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let at = self.here();
            match self.tokens.get(self.pos).cloned() {
                Some((Token::Int(lit), _)) => {
                    self.pos += 1;
                    let n: u32 = lit.parse().map_err(|_| PolyError::ExponentOverflow(at))?;
                    if n > MAX_EXPONENT {
                        return Err(PolyError::ExponentOverflow(at));
                    }
                    Ok(base.pow(n))
                }
                Some((Token::Op('('), _)) => Err(PolyError::Syntax {
                    pos: at,
                    msg: "exponent must be a nonnegative integer literal".into(),
                }),
                _ => Err(PolyError::Syntax {
                    pos: at,
                    msg: "expected a nonnegative integer exponent".into(),
                }),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        let at = self.here();
        let Some((tok, _)) = self.tokens.get(self.pos).cloned() else {
            return Err(PolyError::Syntax {
                pos: at,
                msg: "unexpected end of input".into(),
            });
        };
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Polynomial::constant(self.vars, v)),
            Token::Int(lit) => {
                let v: f64 = lit.parse().map_err(|_| PolyError::Syntax {
                    pos: at,
                    msg: format!("bad number `{lit}`"),
                })?;
                Ok(Polynomial::constant(self.vars, v))
            }
            Token::Ident(name) => Polynomial::variable(self.vars, &name),
            Token::Op('(') => {
                let inner = self.expr()?;
                if self.peek_op() != Some(')') {
                    return Err(PolyError::Syntax {
                        pos: self.here(),
                        msg: "expected `)`".into(),
                    });
                }
                self.pos += 1;
                Ok(inner)
            }
            Token::Op(c) => Err(PolyError::Syntax {
                pos: at,
                msg: format!("unexpected `{c}`"),
            }),
        }
    }
}

/// Turn a list of names into owned strings.
pub fn var_names(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
