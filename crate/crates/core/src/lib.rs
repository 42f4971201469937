//! Symbolic tensor calculus for the canonical constraint algebra of
//! general relativity.
//!
//! The engine works with abstract-index tensor expressions over a spatial
//! slice: sums of terms, each an exact rational coefficient times a product
//! of factors such as `g[_a _b]`, `pi[^a ^b]`, `Ricci[_a _b]` or
//! `D(_c, pi[^a ^b])`. On top of that sit covariant calculus (Leibniz
//! expansion, derivative commutation with exact Riemann corrections,
//! curvature identities, integration by parts), functional variation with
//! respect to the metric and momentum, Poisson brackets of smeared
//! constraint functionals, weak reduction modulo the momentum constraint,
//! closure reports with obstruction certificates, and a numeric oracle that
//! evaluates expressions on randomized charts to cross-check every symbolic
//! rule against floating-point ground truth.

pub mod bracket;
pub mod calculus;
pub mod canon;
pub mod classify;
pub mod expr;
pub mod jsonio;
pub mod oracle;
pub mod parse;
pub mod profile;
pub mod render;
pub mod symbols;
pub mod variation;

use thiserror::Error;

/// Library-level error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("symbol `{name}` expects {expected} slots, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("symbol `{name}` slot {slot} must be {}", if *.up { "up" } else { "down" })]
    Variance { name: String, slot: usize, up: bool },
    #[error("index `{label}` occurs {count} times (must be 1 or 2)")]
    IndexCount { label: String, count: usize },
    #[error("index `{0}` repeats with the same variance")]
    SameVariance(String),
    #[error("terms have mismatched free indices: {0:?} vs {1:?}")]
    FreeMismatch(Vec<String>, Vec<String>),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("term budget exceeded: {size} terms > cap {cap}")]
    TermBudget { size: usize, cap: usize },
    #[error("pass budget exceeded after {0} passes")]
    PassBudget(usize),
    #[error("canonicalization candidate budget exceeded ({0} candidates)")]
    CanonBudget(usize),
    #[error("operation requires a numeric dimension binding")]
    NeedsDimension,
    #[error("invalid chart spec: {0}")]
    Chart(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shared evaluation context: symbol registry, optional dimension binding,
/// and resource caps. All engine operations are pure functions of their
/// inputs plus this context.
#[derive(Debug, Clone)]
pub struct Context {
    pub registry: symbols::Registry,
    /// Numeric spatial dimension binding, if any. Needed for operations
    /// that fold `delta[_a ^a] = dim` into rational coefficients and for
    /// the dimension-dependent supermetric trace coefficient.
    pub dim: Option<u32>,
    /// Hard cap on expression size (number of terms) during expansion.
    pub max_terms: usize,
    /// Hard cap on fixpoint passes in rewriting loops.
    pub max_passes: usize,
    /// Hard cap on canonicalization candidates per term.
    pub max_canon_candidates: usize,
}

impl Context {
    pub fn new() -> Self {
        Context {
            registry: symbols::Registry::with_builtins(),
            dim: None,
            max_terms: 200_000,
            max_passes: 50,
            max_canon_candidates: 2_000_000,
        }
    }

    pub fn with_dim(dim: u32) -> Self {
        let mut c = Self::new();
        c.dim = Some(dim);
        c
    }

    pub fn require_dim(&self) -> Result<u32> {
        self.dim.ok_or(Error::NeedsDimension)
    }
}

impl Default for Context {
    fn default() -> Self {
        Self::new()
    }
}
