//! JSON interchange formats.
//!
//! Expression schema (stable across versions):
//! ```json
//! {"terms":[{"coeff":"1/2","dimpow":0,
//!            "factors":[{"sym":"pi","derivs":["_c"],"slots":["^a","^b"]}]}]}
//! ```
//! Index strings are `^label` (upper) or `_label` (lower). Coefficients
//! are exact decimal-free rationals `p/q` (or `p` when q = 1).

use num::rational::BigRational;
use num::BigInt;
use serde::{Deserialize, Serialize};

use crate::expr::{rat_str, Expression, Factor, Index, Term};
use crate::{Context, Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorJson {
    pub sym: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derivs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermJson {
    pub coeff: String,
    #[serde(default, skip_serializing_if = "is_zero_i32")]
    pub dimpow: i32,
    pub factors: Vec<FactorJson>,
}

fn is_zero_i32(x: &i32) -> bool {
    *x == 0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpressionJson {
    pub terms: Vec<TermJson>,
}

fn idx_to_string(i: &Index) -> String {
    format!("{}{}", if i.up { "^" } else { "_" }, i.label)
}

fn idx_from_string(s: &str) -> Result<Index> {
    let mut chars = s.chars();
    let up = match chars.next() {
        Some('^') => true,
        Some('_') => false,
        _ => {
            return Err(Error::Other(format!(
                "index `{}` must start with `^` or `_`",
                s
            )))
        }
    };
    let label: String = chars.collect();
    if label.is_empty() {
        return Err(Error::Other(format!("index `{}` has empty label", s)));
    }
    Ok(Index { up, label })
}

fn coeff_from_string(s: &str) -> Result<BigRational> {
    let parse_int = |x: &str| -> Result<BigInt> {
        x.trim()
            .parse()
            .map_err(|_| Error::Other(format!("bad rational `{}`", s)))
    };
    match s.split_once('/') {
        Some((n, d)) => {
            let d = parse_int(d)?;
            if d == BigInt::from(0) {
                return Err(Error::Other("zero denominator".into()));
            }
            Ok(BigRational::new(parse_int(n)?, d))
        }
        None => Ok(BigRational::from(parse_int(s)?)),
    }
}

pub fn expression_to_json(e: &Expression) -> ExpressionJson {
    ExpressionJson {
        terms: e
            .terms
            .iter()
            .map(|t| TermJson {
                coeff: rat_str(&t.coeff),
                dimpow: t.dimpow,
                factors: t
                    .factors
                    .iter()
                    .map(|f| FactorJson {
                        sym: f.sym.clone(),
                        derivs: f.derivs.iter().map(idx_to_string).collect(),
                        slots: f.slots.iter().map(idx_to_string).collect(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn expression_from_json(ctx: &Context, j: &ExpressionJson) -> Result<Expression> {
    let mut terms = vec![];
    for tj in &j.terms {
        let mut factors = vec![];
        for fj in &tj.factors {
            let derivs = fj
                .derivs
                .iter()
                .map(|s| idx_from_string(s))
                .collect::<Result<Vec<_>>>()?;
            let slots = fj
                .slots
                .iter()
                .map(|s| idx_from_string(s))
                .collect::<Result<Vec<_>>>()?;
            factors.push(Factor {
                sym: fj.sym.clone(),
                derivs,
                slots,
            });
        }
        terms.push(Term {
            coeff: coeff_from_string(&tj.coeff)?,
            dimpow: tj.dimpow,
            factors,
        });
    }
    let e = Expression::from_terms(terms);
    e.validate(ctx)?;
    Ok(e)
}

pub fn to_json_string(e: &Expression) -> String {
    serde_json::to_string(&expression_to_json(e)).expect("serialization cannot fail")
}

pub fn from_json_string(ctx: &Context, s: &str) -> Result<Expression> {
    let j: ExpressionJson = serde_json::from_str(s)?;
    expression_from_json(ctx, &j)
}
