//! Covariant calculus on expressions: Leibniz expansion of derivatives,
//! commutation of derivative prefixes with exact Riemann corrections,
//! curvature identities (Ricci traces, contracted Bianchi), integration by
//! parts, and a JSON-loadable rewrite-rule registry.

use serde::{Deserialize, Serialize};

use crate::canon::normalize;
use crate::expr::{rat_int, Expression, Factor, Index, LabelGen, Term};
use crate::{Context, Error, Result};

/// Apply one covariant derivative `∇_idx` to an expression, Leibniz-expanding
/// over factors. Covariantly constant symbols are skipped; if every factor of
/// a term is inert the term contributes nothing.
pub fn nabla(ctx: &Context, idx: &Index, e: &Expression) -> Result<Expression> {
    debug_assert!(!idx.up, "derivative indices must be lowered");
    let mut out = vec![];
    for t in &e.terms {
        for (k, f) in t.factors.iter().enumerate() {
            let info = ctx.registry.get(&f.sym)?;
            if info.nabla_inert {
                continue;
            }
            let mut nt = t.clone();
            nt.factors[k].derivs.insert(0, idx.clone());
            out.push(nt);
        }
    }
    Ok(Expression::from_terms(out))
}

/// Apply a derivative prefix (outermost first) to an expression.
pub fn nabla_prefix(ctx: &Context, prefix: &[Index], e: &Expression) -> Result<Expression> {
    let mut e = e.clone();
    for idx in prefix.iter().rev() {
        e = nabla(ctx, idx, &e)?;
    }
    Ok(e)
}

/// Swap adjacent derivative-prefix positions `p` and `p+1` of factor `fidx`
/// in term `t`, producing the exact equal expression: the swapped main term
/// plus Riemann commutator corrections.
///
/// Convention: `[∇_u, ∇_v] T^c = R^c_{e u v} T^e` and
/// `[∇_u, ∇_v] T_c = −R^e_{c u v} T_e`, with the fully lowered storage
/// `R^c_{euv} = ginv^{cx} Riem[_x _e _u _v]`.
pub fn swap_derivs(ctx: &Context, t: &Term, fidx: usize, p: usize) -> Result<Expression> {
    let f = &t.factors[fidx];
    assert!(p + 1 < f.derivs.len());
    let u = f.derivs[p].clone();
    let v = f.derivs[p + 1].clone();

    // Main term with the two derivatives exchanged.
    let mut main = t.clone();
    main.factors[fidx].derivs.swap(p, p + 1);

    // Corrections: outer prefix D[0..p] applied to the commutator
    // [∇_u, ∇_v] acting on the inner object (remaining prefix + slots),
    // times the untouched sibling factors.
    let inner = Factor {
        sym: f.sym.clone(),
        derivs: f.derivs[p + 2..].to_vec(),
        slots: f.slots.clone(),
    };
    let outer = f.derivs[..p].to_vec();

    let whole = Expression::from_term(t.clone());
    let mut gen = LabelGen::avoiding(&[&whole]);
    // Reserve labels also used by free indices of t (LabelGen only tracks
    // canonical dummies, but fresh labels use the dummy prefix so they can
    // never collide with user labels).

    let mut corr_core = Expression::zero();
    let n_inner = inner.derivs.len() + inner.slots.len();
    for pos in 0..n_inner {
        let (idx_here, is_deriv) = if pos < inner.derivs.len() {
            (inner.derivs[pos].clone(), true)
        } else {
            (inner.slots[pos - inner.derivs.len()].clone(), false)
        };
        let e_lab = gen.fresh();
        let x_lab = gen.fresh();
        let (sign, ginv_slots, riem_second) = if idx_here.up {
            // +ginv^{c x} Riem[_x _e _u _v] T^{..e..}
            (
                1i64,
                vec![Index::up(&idx_here.label), Index::up(&x_lab)],
                Index::down(&e_lab),
            )
        } else {
            // −ginv^{e x} Riem[_x _c _u _v] T_{..e..}
            (
                -1i64,
                vec![Index::up(&e_lab), Index::up(&x_lab)],
                Index::down(&idx_here.label),
            )
        };
        let mut modified = inner.clone();
        let new_idx = Index {
            up: idx_here.up,
            label: e_lab.clone(),
        };
        if is_deriv {
            modified.derivs[pos] = new_idx;
        } else {
            modified.slots[pos - inner.derivs.len()] = new_idx;
        }
        let riem = Factor::new(
            "Riem",
            vec![
                Index::down(&x_lab),
                riem_second,
                u.clone(),
                v.clone(),
            ],
        );
        corr_core.terms.push(Term::new(
            rat_int(sign),
            vec![Factor::new("ginv", ginv_slots), riem, modified],
        ));
    }

    // Apply the outer prefix to the commutator product.
    let corr = nabla_prefix(ctx, &outer, &corr_core)?;

    // Reattach coefficient, dimension power, and sibling factors.
    let mut out = Expression::from_term(main);
    for ct in corr.terms {
        let mut nt = t.clone();
        nt.factors.remove(fidx);
        nt.coeff = &t.coeff * &ct.coeff;
        nt.factors.extend(ct.factors);
        out.terms.push(nt);
    }
    Ok(out)
}

/// Classification of a derivative-prefix index for normal ordering.
/// Lower keys sort outermost.
fn prefix_key(t: &Term, fidx: usize, label: &str) -> (u8, usize, usize) {
    let f = &t.factors[fidx];
    // Direct self-contraction: partner is a slot of the same factor.
    if let Some(sp) = f.slots.iter().position(|s| s.label == label) {
        return (3, sp, 0);
    }
    // Metric-mediated self-contraction: partner is a slot of a bare g/ginv
    // whose other slot contracts a slot of this factor.
    for (mi, m) in t.factors.iter().enumerate() {
        if mi == fidx || !(m.sym == "g" || m.sym == "ginv") || !m.derivs.is_empty() {
            continue;
        }
        if let Some(k) = m.slots.iter().position(|s| s.label == label) {
            let other = &m.slots[1 - k];
            if let Some(sp) = f.slots.iter().position(|s| s.label == other.label) {
                return (2, sp, mi);
            }
        }
    }
    // Bound to another factor (slot or prefix).
    for (oi, o) in t.factors.iter().enumerate() {
        if oi == fidx {
            continue;
        }
        if let Some(q) = o.indices().position(|i| i.label == label) {
            return (0, oi, q);
        }
    }
    // Free (or bound within the same prefix — impossible, both lowered).
    (1, 0, 0)
}

/// Bring every derivative prefix into normal order: indices bound to other
/// factors outermost, then free indices, then (metric-mediated) divergence
/// indices innermost. Exact: each transposition inserts its Riemann
/// correction. The result is canonicalized.
pub fn normal_order(ctx: &Context, e: &Expression) -> Result<Expression> {
    let mut work = normalize(ctx, e)?;
    for _pass in 0..ctx.max_passes {
        let mut next: Vec<Term> = vec![];
        let mut changed = false;
        for t in &work.terms {
            // Bubble this term's prefixes; corrections go to `next` raw.
            let mut stack = vec![t.clone()];
            'term: while let Some(cur) = stack.pop() {
                for (fidx, f) in cur.factors.iter().enumerate() {
                    if f.derivs.len() < 2 {
                        continue;
                    }
                    for p in 0..f.derivs.len() - 1 {
                        let ka = prefix_key(&cur, fidx, &f.derivs[p].label);
                        let kb = prefix_key(&cur, fidx, &f.derivs[p + 1].label);
                        if ka > kb {
                            let sw = swap_derivs(ctx, &cur, fidx, p)?;
                            changed = true;
                            stack.extend(sw.terms);
                            continue 'term;
                        }
                    }
                }
                next.push(cur);
                if next.len() > ctx.max_terms {
                    return Err(Error::TermBudget {
                        size: next.len(),
                        cap: ctx.max_terms,
                    });
                }
            }
        }
        work = normalize(ctx, &Expression::from_terms(next))?;
        if !changed {
            return Ok(work);
        }
    }
    Err(Error::PassBudget(ctx.max_passes))
}

/// One pass of built-in curvature identities over a single term.
/// Returns Some(replacement) if a rewrite fired.
fn identities_term_once(t: &Term) -> Option<Expression> {
    // (a) Ricci trace of Riemann: bare ginv contracting two slots of one
    // Riem factor.
    for (vi, vf) in t.factors.iter().enumerate() {
        if vf.sym != "ginv" || !vf.derivs.is_empty() {
            continue;
        }
        let (la, lb) = (&vf.slots[0].label, &vf.slots[1].label);
        for (ri, rf) in t.factors.iter().enumerate() {
            if rf.sym != "Riem" {
                continue;
            }
            let pa = rf.slots.iter().position(|s| &s.label == la);
            let pb = rf.slots.iter().position(|s| &s.label == lb);
            if let (Some(mut i), Some(mut j)) = (pa, pb) {
                if i > j {
                    std::mem::swap(&mut i, &mut j);
                }
                // Contraction table for fully lowered Riem with
                // Ricci_eg = ginv^{ah} Riem[_h _e _a _g].
                let (sign, keep): (i64, [usize; 2]) = match (i, j) {
                    (0, 2) => (1, [1, 3]),
                    (1, 3) => (1, [0, 2]),
                    (0, 3) => (-1, [1, 2]),
                    (1, 2) => (-1, [0, 3]),
                    // Antisymmetric pair traced: zero.
                    (0, 1) | (2, 3) => return Some(Expression::zero()),
                    _ => unreachable!(),
                };
                let mut nt = t.clone();
                let ricci = Factor {
                    sym: "Ricci".to_string(),
                    derivs: rf.derivs.clone(),
                    slots: vec![rf.slots[keep[0]].clone(), rf.slots[keep[1]].clone()],
                };
                let (hi, lo) = if ri > vi { (ri, vi) } else { (vi, ri) };
                nt.factors.remove(hi);
                nt.factors.remove(lo);
                nt.factors.push(ricci);
                nt.coeff *= rat_int(sign);
                return Some(Expression::from_term(nt));
            }
        }
    }

    // (b) Contracted second Bianchi: ginv^{xy} ∇_{D'} ∇_x Ricci_{y b}
    //     = 1/2 ginv^{xy} ∇_{D'} ∇_b Ricci_{x y}.
    for (vi, vf) in t.factors.iter().enumerate() {
        if vf.sym != "ginv" || !vf.derivs.is_empty() {
            continue;
        }
        for (ri, rf) in t.factors.iter().enumerate() {
            if rf.sym != "Ricci" || rf.derivs.is_empty() {
                continue;
            }
            let inner = &rf.derivs[rf.derivs.len() - 1];
            // The bare ginv must pair the innermost derivative index with
            // one of the Ricci slots.
            let k = match (
                vf.slots.iter().position(|s| s.label == inner.label),
                0,
            ) {
                (Some(k), _) => k,
                _ => continue,
            };
            let other = &vf.slots[1 - k];
            let slot_pos = match rf.slots.iter().position(|s| s.label == other.label) {
                Some(p) => p,
                None => continue,
            };
            let b = rf.slots[1 - slot_pos].clone();
            // Skip the degenerate case where `b` itself is one of the pair
            // (cannot happen: labels are distinct within a contraction).
            let mut nt = t.clone();
            let x = vf.slots[0].clone();
            let y = vf.slots[1].clone();
            let mut new_derivs = rf.derivs[..rf.derivs.len() - 1].to_vec();
            new_derivs.push(Index::down(&b.label));
            let new_ricci = Factor {
                sym: "Ricci".to_string(),
                derivs: new_derivs,
                slots: vec![Index::down(&x.label), Index::down(&y.label)],
            };
            // Replace the Ricci factor; keep the ginv (it now contracts the
            // two Ricci slots).
            nt.factors[ri] = new_ricci;
            let _ = vi;
            nt.coeff *= crate::expr::rat(1, 2);
            return Some(Expression::from_term(nt));
        }
    }
    None
}

/// Apply built-in curvature identities (Riemann trace → Ricci, contracted
/// second Bianchi) to a fixpoint.
pub fn apply_identities(ctx: &Context, e: &Expression) -> Result<Expression> {
    let mut work = normalize(ctx, e)?;
    for _ in 0..ctx.max_passes {
        let mut changed = false;
        let mut next = Expression::zero();
        for t in &work.terms {
            match identities_term_once(t) {
                Some(rep) => {
                    changed = true;
                    next = next.add(rep);
                }
                None => next.terms.push(t.clone()),
            }
        }
        work = normalize(ctx, &next)?;
        if !changed {
            return Ok(work);
        }
    }
    Err(Error::PassBudget(ctx.max_passes))
}

/// Full normalization pipeline: metric simplification, canonicalization,
/// derivative normal ordering, curvature identities, iterated to a joint
/// fixpoint.
pub fn simplify_deep(ctx: &Context, e: &Expression) -> Result<Expression> {
    let mut work = normalize(ctx, e)?;
    for _ in 0..ctx.max_passes {
        let a = normal_order(ctx, &work)?;
        let b = apply_identities(ctx, &a)?;
        if b == work {
            return Ok(work);
        }
        work = b;
    }
    Err(Error::PassBudget(ctx.max_passes))
}

/// Integration by parts under an implicit integral: repeatedly move every
/// derivative off factors of the given symbol, flipping signs. After this,
/// no factor of `sym` carries a derivative prefix. Boundary terms vanish
/// (closed slice / compact support).
pub fn strip_derivs_off(ctx: &Context, e: &Expression, sym: &str) -> Result<Expression> {
    let mut work = e.clone();
    for _ in 0..ctx.max_passes * 20 {
        let mut progressed = false;
        let mut next: Vec<Term> = vec![];
        for t in &work.terms {
            let hit = t
                .factors
                .iter()
                .position(|f| f.sym == sym && !f.derivs.is_empty());
            match hit {
                None => next.push(t.clone()),
                Some(fidx) => {
                    progressed = true;
                    let f = &t.factors[fidx];
                    let outer = f.derivs[0].clone();
                    let mut stripped = f.clone();
                    stripped.derivs.remove(0);
                    let mut rest = t.clone();
                    rest.factors.remove(fidx);
                    rest.coeff = -rest.coeff.clone();
                    let moved = nabla(ctx, &outer, &Expression::from_term(rest))?;
                    for mut mt in moved.terms {
                        mt.factors.push(stripped.clone());
                        next.push(mt);
                    }
                }
            }
        }
        if next.len() > ctx.max_terms {
            return Err(Error::TermBudget {
                size: next.len(),
                cap: ctx.max_terms,
            });
        }
        work = Expression::from_terms(next);
        if !progressed {
            return Ok(work);
        }
    }
    Err(Error::PassBudget(ctx.max_passes))
}

// ---------------------------------------------------------------------------
// Rewrite-rule registry
// ---------------------------------------------------------------------------

/// A user-supplied rewrite rule in surface syntax. The left-hand side must
/// be a single term; every index label in it is a pattern variable. Matched
/// factors are removed and replaced by the right-hand side with labels
/// substituted. Labels appearing only on the right-hand side are freshened.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewriteRule {
    pub name: String,
    pub lhs: String,
    pub rhs: String,
    /// Optional guard. Currently supported: "bare" (matched factors must
    /// have empty derivative prefixes beyond those written in the pattern).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RuleSet {
    pub rules: Vec<RewriteRule>,
}

impl RuleSet {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialization cannot fail")
    }
}

struct CompiledRule {
    lhs: Term,
    rhs: Expression,
}

fn compile_rule(ctx: &Context, r: &RewriteRule) -> Result<CompiledRule> {
    let lhs = crate::parse::parse(ctx, &r.lhs)?;
    if lhs.terms.len() != 1 {
        return Err(Error::Other(format!(
            "rule `{}`: lhs must be a single term",
            r.name
        )));
    }
    let rhs = crate::parse::parse(ctx, &r.rhs)?;
    Ok(CompiledRule {
        lhs: lhs.terms[0].clone(),
        rhs,
    })
}

/// Try to match `pat` factors against a subset of `t`'s factors with a
/// consistent injective label substitution; on success return the rewritten
/// term set.
fn try_rule(t: &Term, rule: &CompiledRule) -> Option<Expression> {
    let pf = &rule.lhs.factors;
    let n = t.factors.len();
    if pf.len() > n {
        return None;
    }
    // Backtracking assignment of pattern factors to distinct term factors.
    fn assign(
        pf: &[Factor],
        t: &Term,
        used: &mut Vec<bool>,
        sub: &mut std::collections::BTreeMap<String, String>,
        chosen: &mut Vec<usize>,
        k: usize,
    ) -> bool {
        if k == pf.len() {
            return true;
        }
        let p = &pf[k];
        for (fi, f) in t.factors.iter().enumerate() {
            if used[fi] || f.sym != p.sym || f.derivs.len() != p.derivs.len() {
                continue;
            }
            if f.slots.len() != p.slots.len() {
                continue;
            }
            // Try to unify indices pairwise (no symmetry enumeration: rules
            // are applied to canonicalized input, and rule authors provide
            // symmetry variants if needed).
            let mut local: Vec<(String, String)> = vec![];
            let mut ok = true;
            for (pi, ti) in p.indices().zip(f.indices()) {
                if pi.up != ti.up {
                    ok = false;
                    break;
                }
                match sub.get(&pi.label) {
                    Some(b) if b == &ti.label => {}
                    Some(_) => {
                        ok = false;
                        break;
                    }
                    None => {
                        if sub.values().any(|v| v == &ti.label)
                            || local.iter().any(|(a, b)| a != &pi.label && b == &ti.label)
                        {
                            ok = false;
                            break;
                        }
                        if let Some((_, b)) = local.iter().find(|(a, _)| a == &pi.label) {
                            if b != &ti.label {
                                ok = false;
                                break;
                            }
                        } else {
                            local.push((pi.label.clone(), ti.label.clone()));
                        }
                    }
                }
            }
            if !ok {
                continue;
            }
            for (a, b) in &local {
                sub.insert(a.clone(), b.clone());
            }
            used[fi] = true;
            chosen.push(fi);
            if assign(pf, t, used, sub, chosen, k + 1) {
                return true;
            }
            chosen.pop();
            used[fi] = false;
            for (a, _) in &local {
                sub.remove(a);
            }
        }
        false
    }

    let mut used = vec![false; n];
    let mut sub = std::collections::BTreeMap::new();
    let mut chosen: Vec<usize> = vec![];
    if !assign(pf, t, &mut used, &mut sub, &mut chosen, 0) {
        return None;
    }
    // Verify contraction structure: pattern dummies must map to labels
    // contracted entirely within the matched subset; pattern frees must not.
    let pat_counts = rule.lhs.label_counts();
    let mut matched_counts: std::collections::BTreeMap<&str, usize> =
        std::collections::BTreeMap::new();
    for &fi in &chosen {
        for i in t.factors[fi].indices() {
            *matched_counts.entry(i.label.as_str()).or_insert(0) += 1;
        }
    }
    for (pl, pc) in &pat_counts {
        let tl = &sub[*pl];
        let tc = matched_counts.get(tl.as_str()).copied().unwrap_or(0);
        if *pc == 2 && tc != 2 {
            return None;
        }
        if *pc == 1 && tc != 1 {
            return None;
        }
    }

    // Build replacement: remaining factors + substituted rhs.
    let mut rest = t.clone();
    let mut sorted = chosen.clone();
    sorted.sort_unstable();
    for &fi in sorted.iter().rev() {
        rest.factors.remove(fi);
    }
    let whole = Expression::from_term(t.clone());
    let mut gen = LabelGen::avoiding(&[&whole, &rule.rhs]);
    let mut out = Expression::zero();
    for rt in &rule.rhs.terms {
        let mut nt = rest.clone();
        nt.coeff = &rest.coeff * &rt.coeff;
        nt.dimpow = rest.dimpow + rt.dimpow;
        // Freshen rhs-only labels per rhs term.
        let mut fresh_map: std::collections::BTreeMap<String, String> = Default::default();
        for f in &rt.factors {
            let mut f2 = f.clone();
            for i in f2.indices_mut() {
                if let Some(b) = sub.get(&i.label) {
                    i.label = b.clone();
                } else {
                    let nl = fresh_map
                        .entry(i.label.clone())
                        .or_insert_with(|| gen.fresh());
                    i.label = nl.clone();
                }
            }
            nt.factors.push(f2);
        }
        out.terms.push(nt);
    }
    Some(out)
}

/// Apply a rule set to a fixpoint (with the context's pass cap).
pub fn apply_rules(ctx: &Context, e: &Expression, rules: &RuleSet) -> Result<Expression> {
    let compiled: Vec<CompiledRule> = rules
        .rules
        .iter()
        .map(|r| compile_rule(ctx, r))
        .collect::<Result<Vec<_>>>()?;
    let mut work = normalize(ctx, e)?;
    for _ in 0..ctx.max_passes {
        let mut changed = false;
        let mut next = Expression::zero();
        for t in &work.terms {
            let mut hit = None;
            for r in &compiled {
                if let Some(rep) = try_rule(t, r) {
                    hit = Some(rep);
                    break;
                }
            }
            match hit {
                Some(rep) => {
                    changed = true;
                    next = next.add(rep);
                }
                None => next.terms.push(t.clone()),
            }
        }
        work = normalize(ctx, &next)?;
        if !changed {
            return Ok(work);
        }
    }
    Err(Error::PassBudget(ctx.max_passes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::equal;
    use crate::parse::parse;

    fn ctx() -> Context {
        Context::new()
    }

    #[test]
    fn nabla_of_metric_vanishes() {
        let c = ctx();
        let e = parse(&c, "g[_a _b] * ginv[^a ^b]").unwrap();
        let d = nabla(&c, &Index::down("c"), &e).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn nabla_leibniz_two_factors() {
        let c = ctx();
        let e = parse(&c, "f * h").unwrap();
        let d = nabla(&c, &Index::down("c"), &e).unwrap();
        let want = parse(&c, "D(_c, f) * h + f * D(_c, h)").unwrap();
        assert!(equal(&c, &d, &want).unwrap());
    }

    #[test]
    fn commutator_on_scalar_vanishes() {
        let c = ctx();
        // ∇_a ∇_b f  −  ∇_b ∇_a f = 0 exactly.
        let e = parse(&c, "D(_a, D(_b, f)) - D(_b, D(_a, f))").unwrap();
        // Swap the first term's prefix and subtract.
        let t = &e.terms[0];
        let swapped = swap_derivs(&c, t, 0, 0).unwrap();
        let rest = Expression::from_term(e.terms[1].clone());
        let z = normalize(&c, &swapped.add(rest)).unwrap();
        assert!(z.is_empty(), "got {}", crate::render::to_text(&z));
    }

    #[test]
    fn commutator_on_vector_gives_riemann() {
        let c = ctx();
        // [∇_a, ∇_b] xi^c = R^c_{e a b} xi^e = ginv^{cx} Riem[_x _e _a _b] xi^e.
        let e1 = parse(&c, "D(_a, D(_b, xi[^c]))").unwrap();
        let t = &e1.terms[0];
        let swapped = swap_derivs(&c, t, 0, 0).unwrap(); // = ∇_b∇_a xi^c + corr
        let direct = parse(&c, "D(_b, D(_a, xi[^c]))").unwrap();
        let comm = normalize(&c, &swapped.sub(direct)).unwrap();
        let want = parse(&c, "ginv[^c ^x] * Riem[_x _e _a _b] * xi[^e]").unwrap();
        assert!(
            equal(&c, &comm, &want).unwrap(),
            "commutator mismatch: {}",
            crate::render::to_text(&comm)
        );
    }

    #[test]
    fn normal_order_idempotent_and_exact() {
        let c = ctx();
        let e = parse(&c, "D(_a, D(_b, D(_c, pi[^a ^c]))) * xi[^b]").unwrap();
        let n1 = normal_order(&c, &e).unwrap();
        let n2 = normal_order(&c, &n1).unwrap();
        assert_eq!(n1, n2);
    }

    #[test]
    fn riemann_trace_to_ricci() {
        let c = ctx();
        let e = parse(&c, "ginv[^a ^h] * Riem[_h _e _a _g] * xi[^e] * xi[^g]").unwrap();
        let r = apply_identities(&c, &e).unwrap();
        let want = parse(&c, "Ricci[_e _g] * xi[^e] * xi[^g]").unwrap();
        assert!(equal(&c, &r, &want).unwrap(), "{}", crate::render::to_text(&r));
    }

    #[test]
    fn riemann_other_trace_signs() {
        let c = ctx();
        // ginv^{xy} Riem[_e _x _g _y] = Ricci[_e _g]  (contract slots 1,3).
        let e = parse(&c, "ginv[^x ^y] * Riem[_e _x _g _y] * xi[^e] * xi[^g]").unwrap();
        let r = apply_identities(&c, &e).unwrap();
        let want = parse(&c, "Ricci[_e _g] * xi[^e] * xi[^g]").unwrap();
        assert!(equal(&c, &r, &want).unwrap(), "{}", crate::render::to_text(&r));
    }

    #[test]
    fn contracted_bianchi() {
        let c = ctx();
        // ∇^a Ricci_{ab} − 1/2 ∇_b R = 0.
        let e = parse(
            &c,
            "ginv[^a ^e] * D(_e, Ricci[_a _b]) - 1/2 * ginv[^p ^q] * D(_b, Ricci[_p _q])",
        )
        .unwrap();
        let r = apply_identities(&c, &e).unwrap();
        assert!(r.is_empty(), "{}", crate::render::to_text(&r));
    }

    #[test]
    fn strip_smearing_derivatives() {
        let c = ctx();
        // ∫ ∇_a∇_b f · pi^{ab}  =  ∫ f ∇_b∇_a pi^{ab}.
        let e = parse(&c, "D(_a, D(_b, f)) * pi[^a ^b]").unwrap();
        let s = strip_derivs_off(&c, &e, "f").unwrap();
        let want = parse(&c, "f * D(_b, D(_a, pi[^a ^b]))").unwrap();
        assert!(equal(&c, &s, &want).unwrap(), "{}", crate::render::to_text(&s));
    }

    #[test]
    fn strip_then_simplify_scalar_case() {
        let c = ctx();
        // ∫ ∇_a f · ginv^{ab} ∇_b h  is symmetric under f ↔ h after IBP.
        let e1 = parse(&c, "D(_a, f) * ginv[^a ^b] * D(_b, h)").unwrap();
        let s1 = simplify_deep(&c, &strip_derivs_off(&c, &e1, "h").unwrap()).unwrap();
        let e2 = parse(&c, "D(_a, h) * ginv[^a ^b] * D(_b, f)").unwrap();
        let s2 = simplify_deep(&c, &strip_derivs_off(&c, &e2, "h").unwrap()).unwrap();
        assert!(equal(&c, &s1, &s2).unwrap());
    }

    #[test]
    fn rule_set_round_trip_and_apply() {
        let c = ctx();
        let rules = RuleSet {
            rules: vec![RewriteRule {
                name: "trace-pi".into(),
                lhs: "g[_a _b] * pi[^a ^b]".into(),
                rhs: "trpi".into(),
                guard: None,
            }],
        };
        let mut c2 = c.clone();
        c2.registry
            .register_smearing("trpi", vec![], &[]);
        let json = rules.to_json();
        let rules2 = RuleSet::from_json(&json).unwrap();
        let e = parse(&c2, "3 * g[_p _q] * pi[^q ^p] * f").unwrap();
        let r = apply_rules(&c2, &e, &rules2).unwrap();
        let want = parse(&c2, "3 * trpi * f").unwrap();
        assert!(equal(&c2, &r, &want).unwrap(), "{}", crate::render::to_text(&r));
    }
}
