//! Core expression representation: indices, factors, terms, expressions.
//!
//! A term is an exact rational coefficient, an integer power of the
//! (symbolic) spatial dimension `dim`, and an ordered product of factors.
//! A factor is an atomic tensor symbol with a covariant-derivative prefix
//! (outermost first, all lower indices) and a list of index slots.
//! Repeated index labels (exactly twice, opposite variance) are contracted.

use std::collections::BTreeMap;

use num::rational::BigRational;
use num::{BigInt, One, Signed, Zero};

use crate::{Context, Error, Result};

/// Internal prefix for canonical dummy labels. Not parseable from the
/// surface grammar, so user-chosen free labels can never collide.
pub const DUMMY_PREFIX: &str = "#";

/// An index: variance plus label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Index {
    pub up: bool,
    pub label: String,
}

impl Index {
    pub fn up(label: &str) -> Self {
        Index {
            up: true,
            label: label.to_string(),
        }
    }
    pub fn down(label: &str) -> Self {
        Index {
            up: false,
            label: label.to_string(),
        }
    }
    pub fn flipped(&self) -> Self {
        Index {
            up: !self.up,
            label: self.label.clone(),
        }
    }
    pub fn is_dummy_label(&self) -> bool {
        self.label.starts_with(DUMMY_PREFIX)
    }
}

/// An atomic factor: symbol name, derivative prefix (outermost first, all
/// down variance), and slots.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Factor {
    pub sym: String,
    pub derivs: Vec<Index>,
    pub slots: Vec<Index>,
}

impl Factor {
    pub fn new(sym: &str, slots: Vec<Index>) -> Self {
        Factor {
            sym: sym.to_string(),
            derivs: vec![],
            slots,
        }
    }

    pub fn with_derivs(sym: &str, derivs: Vec<Index>, slots: Vec<Index>) -> Self {
        Factor {
            sym: sym.to_string(),
            derivs,
            slots,
        }
    }

    /// All indices of the factor: derivative prefix first, then slots.
    pub fn indices(&self) -> impl Iterator<Item = &Index> {
        self.derivs.iter().chain(self.slots.iter())
    }

    pub fn indices_mut(&mut self) -> impl Iterator<Item = &mut Index> {
        self.derivs.iter_mut().chain(self.slots.iter_mut())
    }
}

/// One additive term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub coeff: BigRational,
    /// Exponent of the symbolic spatial dimension `dim` carried by the
    /// coefficient (from `delta[_a ^a]` traces).
    pub dimpow: i32,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn new(coeff: BigRational, factors: Vec<Factor>) -> Self {
        Term {
            coeff,
            dimpow: 0,
            factors,
        }
    }

    pub fn from_factors(factors: Vec<Factor>) -> Self {
        Term::new(BigRational::one(), factors)
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    /// Map of index label -> occurrence count.
    pub fn label_counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for f in &self.factors {
            for i in f.indices() {
                *m.entry(i.label.as_str()).or_insert(0) += 1;
            }
        }
        m
    }

    /// Free indices of the term (each occurring once), sorted by label.
    pub fn free_indices(&self) -> Vec<Index> {
        let counts = self.label_counts();
        let mut frees: Vec<Index> = vec![];
        for f in &self.factors {
            for i in f.indices() {
                if counts[i.label.as_str()] == 1 {
                    frees.push(i.clone());
                }
            }
        }
        frees.sort();
        frees
    }

    /// Validate index structure: every label occurs once or twice; twice
    /// implies opposite variance; slot variances match the registry.
    pub fn validate(&self, ctx: &Context) -> Result<()> {
        for f in &self.factors {
            let info = ctx.registry.get(&f.sym)?;
            if f.slots.len() != info.slots_up.len() {
                return Err(Error::Arity {
                    name: f.sym.clone(),
                    expected: info.slots_up.len(),
                    got: f.slots.len(),
                });
            }
            for (k, s) in f.slots.iter().enumerate() {
                if s.up != info.slots_up[k] {
                    return Err(Error::Variance {
                        name: f.sym.clone(),
                        slot: k,
                        up: info.slots_up[k],
                    });
                }
            }
            for d in &f.derivs {
                if d.up {
                    return Err(Error::Other(format!(
                        "derivative index `^{}` must be lowered explicitly",
                        d.label
                    )));
                }
            }
        }
        let mut seen: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
        for f in &self.factors {
            for i in f.indices() {
                seen.entry(i.label.as_str()).or_default().push(i.up);
            }
        }
        for (label, ups) in seen {
            match ups.len() {
                1 => {}
                2 => {
                    if ups[0] == ups[1] {
                        return Err(Error::SameVariance(label.to_string()));
                    }
                }
                n => {
                    return Err(Error::IndexCount {
                        label: label.to_string(),
                        count: n,
                    })
                }
            }
        }
        Ok(())
    }

    /// Momentum power: number of momentum-class factor occurrences
    /// (weighted by each symbol's declared momentum power).
    pub fn momentum_power(&self, ctx: &Context) -> u32 {
        self.factors
            .iter()
            .map(|f| ctx.registry.get(&f.sym).map(|i| i.momentum_power).unwrap_or(0))
            .sum()
    }

    /// Derivative degree: total derivative-prefix length plus 2 per
    /// curvature symbol occurrence.
    pub fn derivative_degree(&self, ctx: &Context) -> u32 {
        self.factors
            .iter()
            .map(|f| {
                f.derivs.len() as u32
                    + ctx.registry.get(&f.sym).map(|i| i.deriv_degree).unwrap_or(0)
            })
            .sum()
    }

    /// Total derivative-prefix length on smearing-class factors.
    pub fn smearing_derivs(&self, ctx: &Context) -> u32 {
        use crate::symbols::SymbolClass;
        self.factors
            .iter()
            .filter(|f| {
                ctx.registry
                    .get(&f.sym)
                    .map(|i| i.class == SymbolClass::Smearing)
                    .unwrap_or(false)
            })
            .map(|f| f.derivs.len() as u32)
            .sum()
    }

    /// Rename every occurrence of `from` to `to` (both variances).
    pub fn rename_label(&mut self, from: &str, to: &str) {
        for f in &mut self.factors {
            for i in f.indices_mut() {
                if i.label == from {
                    i.label = to.to_string();
                }
            }
        }
    }

    /// Fold the symbolic dimension power into the coefficient using a
    /// numeric binding.
    pub fn bind_dim(&mut self, dim: u32) {
        if self.dimpow != 0 {
            let d = BigRational::from(BigInt::from(dim));
            if self.dimpow > 0 {
                for _ in 0..self.dimpow {
                    self.coeff *= &d;
                }
            } else {
                for _ in 0..(-self.dimpow) {
                    self.coeff /= &d;
                }
            }
            self.dimpow = 0;
        }
    }
}

/// A sum of terms. The representation is not automatically canonical;
/// call [`crate::canon::canonicalize`] to normalize.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expression {
    pub terms: Vec<Term>,
}

impl Expression {
    pub fn zero() -> Self {
        Expression { terms: vec![] }
    }

    pub fn from_term(t: Term) -> Self {
        Expression { terms: vec![t] }
    }

    pub fn from_terms(terms: Vec<Term>) -> Self {
        Expression { terms }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn validate(&self, ctx: &Context) -> Result<()> {
        for t in &self.terms {
            t.validate(ctx)?;
        }
        // All terms must share one free-index signature.
        if let Some(first) = self.terms.first() {
            let sig: Vec<Index> = first.free_indices();
            for t in &self.terms[1..] {
                let s = t.free_indices();
                if s != sig {
                    return Err(Error::FreeMismatch(
                        sig.iter().map(|i| i.label.clone()).collect(),
                        s.iter().map(|i| i.label.clone()).collect(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn add(mut self, other: Expression) -> Expression {
        self.terms.extend(other.terms);
        self
    }

    pub fn negate(mut self) -> Expression {
        for t in &mut self.terms {
            t.coeff = -t.coeff.clone();
        }
        self
    }

    pub fn scale(mut self, c: &BigRational) -> Expression {
        for t in &mut self.terms {
            t.coeff *= c;
        }
        self
    }

    pub fn sub(self, other: Expression) -> Expression {
        self.add(other.negate())
    }

    /// Free-index signature (taken from the first term; validate() ensures
    /// consistency).
    pub fn free_indices(&self) -> Vec<Index> {
        self.terms
            .first()
            .map(|t| t.free_indices())
            .unwrap_or_default()
    }

    pub fn bind_dim(&mut self, dim: u32) {
        for t in &mut self.terms {
            t.bind_dim(dim);
        }
    }

    /// Maximum over terms of the number of factors; used as a cheap size
    /// heuristic in budget checks.
    pub fn max_factors(&self) -> usize {
        self.terms.iter().map(|t| t.factors.len()).max().unwrap_or(0)
    }
}

/// Mint a fresh dummy-label generator that avoids every label already
/// used in the given expressions.
pub struct LabelGen {
    next: usize,
}

impl LabelGen {
    pub fn avoiding(exprs: &[&Expression]) -> Self {
        let mut max = 0usize;
        for e in exprs {
            for t in &e.terms {
                for f in &t.factors {
                    for i in f.indices() {
                        if let Some(rest) = i.label.strip_prefix(DUMMY_PREFIX) {
                            if let Ok(n) = rest.parse::<usize>() {
                                max = max.max(n + 1);
                            }
                        }
                    }
                }
            }
        }
        LabelGen { next: max }
    }

    pub fn fresh(&mut self) -> String {
        let l = format!("{}{}", DUMMY_PREFIX, self.next);
        self.next += 1;
        l
    }
}

/// Multiply two expressions, renaming the dummy labels of `b` apart from
/// those of `a` so contractions never collide.
pub fn mul(a: &Expression, b: &Expression) -> Expression {
    let mut gen = LabelGen::avoiding(&[a, b]);
    let mut out = Vec::with_capacity(a.terms.len() * b.terms.len());
    for ta in &a.terms {
        for tb in &b.terms {
            let mut tb = tb.clone();
            // Rename tb's dummies fresh.
            let counts = tb.label_counts();
            let dummies: Vec<String> = counts
                .iter()
                .filter(|(_, &c)| c == 2)
                .map(|(l, _)| l.to_string())
                .collect();
            for d in dummies {
                let fresh = gen.fresh();
                tb.rename_label(&d, &fresh);
            }
            let mut factors = ta.factors.clone();
            factors.extend(tb.factors);
            out.push(Term {
                coeff: &ta.coeff * &tb.coeff,
                dimpow: ta.dimpow + tb.dimpow,
                factors,
            });
        }
    }
    Expression::from_terms(out)
}

/// Contract matching free indices of `a` and `b`: every label that appears
/// free (once) with one variance in `a` and the opposite variance in `b`
/// becomes a dummy of the product. Dummies of `b` are renamed apart first;
/// free labels are left alone so intended contractions pair up.
pub fn mul_contract(a: &Expression, b: &Expression) -> Expression {
    mul(a, b)
}

/// Helper to build a rational from an integer pair.
pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> BigRational {
    BigRational::from(BigInt::from(num))
}

/// Render a rational compactly (for logs/tests).
pub fn rat_str(r: &BigRational) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Absolute value helper.
pub fn rat_abs(r: &BigRational) -> BigRational {
    r.abs()
}
