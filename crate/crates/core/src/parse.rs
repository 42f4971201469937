//! Surface-syntax parser.
//!
//! Grammar (whitespace-insensitive):
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := [rational] factor ('*' factor)* | rational
//! rational := INT ('/' INT)?
//! factor   := NAME '[' index+ ']' | 'D(' index ',' factor ')' | NAME
//!           | 'dim' ('^' INT)?
//! index    := ('^' | '_') IDENT
//! ```
//! `R` (bare) is expanded at parse time to `ginv[^x ^y] * Ricci[_x _y]`
//! with fresh dummy labels; its derivative prefix lands on the Ricci
//! factor since `ginv` is covariantly constant.

use num::rational::BigRational;
use num::BigInt;
use num::One;

use crate::expr::{Expression, Factor, Index, LabelGen, Term};
use crate::{Context, Error, Result};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'\'')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .to_string())
    }

    fn integer(&mut self) -> Result<BigInt> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected integer"));
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .unwrap())
    }

    fn rational(&mut self) -> Result<BigRational> {
        let n = self.integer()?;
        if self.eat(b'/') {
            let d = self.integer()?;
            if d == BigInt::from(0) {
                return Err(self.err("zero denominator"));
            }
            Ok(BigRational::new(n, d))
        } else {
            Ok(BigRational::from(n))
        }
    }

    fn index(&mut self) -> Result<Index> {
        let up = match self.bump() {
            Some(b'^') => true,
            Some(b'_') => false,
            _ => return Err(self.err("expected `^` or `_`")),
        };
        let label = self.ident()?;
        Ok(Index { up, label })
    }

    /// Parse one factor. Returns (factor, extra dimension power).
    fn factor(&mut self) -> Result<(Option<Factor>, i32)> {
        self.skip_ws();
        // D(_i, factor) — derivative prefix.
        if self.src[self.pos..].starts_with(b"D(") {
            self.pos += 2;
            let idx = self.index()?;
            self.expect(b',')?;
            let (inner, dp) = self.factor()?;
            self.expect(b')')?;
            let mut f = inner.ok_or_else(|| self.err("cannot differentiate `dim`"))?;
            let _ = dp;
            f.derivs.insert(0, idx);
            return Ok((Some(f), 0));
        }
        let name = self.ident()?;
        if name == "dim" {
            let mut p: i32 = 1;
            if self.eat(b'^') {
                let n = self.integer()?;
                p = n.to_string().parse().map_err(|_| self.err("bad exponent"))?;
            }
            return Ok((None, p));
        }
        if self.eat(b'[') {
            let mut slots = vec![];
            loop {
                self.skip_ws();
                if self.eat(b']') {
                    break;
                }
                slots.push(self.index()?);
            }
            Ok((Some(Factor::new(&name, slots)), 0))
        } else {
            Ok((Some(Factor::new(&name, vec![])), 0))
        }
    }

    fn term(&mut self) -> Result<Term> {
        let mut coeff = BigRational::one();
        let mut factors: Vec<Factor> = vec![];
        let mut dimpow = 0i32;
        self.skip_ws();
        if self
            .peek()
            .map(|c| c.is_ascii_digit())
            .unwrap_or(false)
        {
            coeff = self.rational()?;
            if !self.eat(b'*') {
                // bare rational term
                return Ok(Term {
                    coeff,
                    dimpow,
                    factors,
                });
            }
        }
        loop {
            let (f, dp) = self.factor()?;
            dimpow += dp;
            if let Some(f) = f {
                factors.push(f);
            }
            if !self.eat(b'*') {
                break;
            }
        }
        Ok(Term {
            coeff,
            dimpow,
            factors,
        })
    }

    fn expr(&mut self) -> Result<Expression> {
        let mut terms = vec![];
        let mut sign = BigRational::one();
        if self.eat(b'-') {
            sign = -sign;
        } else {
            let _ = self.eat(b'+');
        }
        loop {
            let mut t = self.term()?;
            t.coeff *= &sign;
            terms.push(t);
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    sign = BigRational::one();
                }
                Some(b'-') => {
                    self.pos += 1;
                    sign = -BigRational::one();
                }
                None => break,
                Some(c) => {
                    return Err(self.err(&format!("unexpected `{}`", c as char)));
                }
            }
        }
        Ok(Expression::from_terms(terms))
    }
}

/// Expand bare `R` factors into `ginv^{xy} Ricci_{xy}` with fresh dummies.
fn expand_scalar_curvature(e: &mut Expression) {
    let mut gen = LabelGen::avoiding(&[&*e]);
    for t in &mut e.terms {
        // Avoid colliding with user labels too: collect all labels present.
        let used: std::collections::BTreeSet<String> = t
            .factors
            .iter()
            .flat_map(|f| f.indices().map(|i| i.label.clone()))
            .collect();
        let mut fresh = || loop {
            let l = gen.fresh();
            if !used.contains(&l) {
                return l;
            }
        };
        let mut extra: Vec<Factor> = vec![];
        for f in &mut t.factors {
            if f.sym == "R" && f.slots.is_empty() {
                let x = fresh();
                let y = fresh();
                f.sym = "Ricci".to_string();
                f.slots = vec![Index::down(&x), Index::down(&y)];
                extra.push(Factor::new("ginv", vec![Index::up(&x), Index::up(&y)]));
            }
        }
        t.factors.extend(extra);
    }
}

/// Parse an expression from surface syntax and validate it against the
/// registry.
pub fn parse(ctx: &Context, src: &str) -> Result<Expression> {
    let mut p = Parser::new(src);
    let mut e = p.expr()?;
    expand_scalar_curvature(&mut e);
    e.validate(ctx)?;
    Ok(e)
}
