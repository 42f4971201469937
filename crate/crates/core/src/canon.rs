//! Canonical forms for tensor terms and expressions.
//!
//! Strategy: for each term, enumerate every representation reachable by
//! (a) applying a slot-symmetry group element to each factor and
//! (b) permuting factors that share a skeleton (same symbol, same prefix
//! length), relabel dummy indices by first occurrence for each candidate,
//! and keep the lexicographically least key. If the least key is reached
//! with both signs the term is identically zero (a symmetric–antisymmetric
//! contraction). Like terms are then merged by exact structural equality.

use std::collections::BTreeMap;

use num::rational::BigRational;
use num::Zero;

use crate::expr::{Expression, Factor, Index, Term};
use crate::{Context, Error, Result};

/// Encoded index for intra-term key comparison.
/// Layout: kind (0 = canonical dummy, 1 = free), value, variance bit.
fn encode_idx(
    idx: &Index,
    dummy_ids: &BTreeMap<&str, usize>,
    free_rank: &BTreeMap<&str, usize>,
    assigned: &mut Vec<Option<usize>>,
    next: &mut usize,
) -> u64 {
    let (kind, val) = if let Some(&did) = dummy_ids.get(idx.label.as_str()) {
        let v = match assigned[did] {
            Some(v) => v,
            None => {
                let v = *next;
                assigned[did] = Some(v);
                *next += 1;
                v
            }
        };
        (0u64, v as u64)
    } else {
        (1u64, free_rank[idx.label.as_str()] as u64)
    };
    (kind << 62) | (val << 1) | (idx.up as u64)
}

struct CanonResult {
    /// None if the term canonicalizes to zero.
    term: Option<Term>,
}

fn canonical_term(ctx: &Context, term: &Term) -> Result<CanonResult> {
    if term.coeff.is_zero() {
        return Ok(CanonResult { term: None });
    }
    // Classify labels.
    let counts = term.label_counts();
    let mut dummy_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let mut frees: Vec<&str> = vec![];
    for (l, c) in &counts {
        match c {
            2 => {
                let id = dummy_ids.len();
                dummy_ids.insert(l, id);
            }
            1 => frees.push(l),
            _ => {
                return Err(Error::IndexCount {
                    label: l.to_string(),
                    count: *c,
                })
            }
        }
    }
    let free_rank: BTreeMap<&str, usize> =
        frees.iter().enumerate().map(|(i, l)| (*l, i)).collect();

    // Sort factors by skeleton; group equal skeletons.
    let mut order: Vec<usize> = (0..term.factors.len()).collect();
    let skel = |i: usize| {
        let f = &term.factors[i];
        (f.sym.clone(), f.derivs.len())
    };
    order.sort_by_key(|&i| skel(i));
    let mut groups: Vec<Vec<usize>> = vec![];
    for &i in &order {
        if let Some(last) = groups.last_mut() {
            if skel(last[0]) == skel(i) {
                last.push(i);
                continue;
            }
        }
        groups.push(vec![i]);
    }

    // Precompute permutations per group and symmetry groups per factor.
    let mut group_perms: Vec<Vec<Vec<usize>>> = vec![];
    let mut n_candidates: usize = 1;
    for gmem in &groups {
        let perms = permutations(gmem.len());
        n_candidates = n_candidates.saturating_mul(perms.len());
        group_perms.push(perms);
    }
    let mut sym_groups: Vec<&[crate::symbols::SignedPerm]> = vec![];
    for f in &term.factors {
        let info = ctx.registry.get(&f.sym)?;
        n_candidates = n_candidates.saturating_mul(info.group.len().max(1));
        sym_groups.push(&info.group);
    }
    if n_candidates > ctx.max_canon_candidates {
        return Err(Error::CanonBudget(n_candidates));
    }

    // Mixed-radix enumeration: one digit per group (permutation choice) and
    // one digit per factor (symmetry element choice).
    let ng = groups.len();
    let nf = term.factors.len();
    let mut digits = vec![0usize; ng + nf];
    let radix: Vec<usize> = groups
        .iter()
        .enumerate()
        .map(|(gi, _)| group_perms[gi].len())
        .chain(sym_groups.iter().map(|g| g.len().max(1)))
        .collect();

    let mut best_key: Option<Vec<u64>> = None;
    let mut best_order: Vec<usize> = vec![];
    let mut best_elems: Vec<usize> = vec![];
    let mut signs_at_best: (bool, bool) = (false, false); // (plus, minus)

    let mut key_buf: Vec<u64> = Vec::new();
    loop {
        // Build candidate order.
        let mut cand_order: Vec<usize> = Vec::with_capacity(nf);
        for (gi, gmem) in groups.iter().enumerate() {
            let p = &group_perms[gi][digits[gi]];
            for &k in p {
                cand_order.push(gmem[k]);
            }
        }
        // Sign from symmetry elements.
        let mut sign: i8 = 1;
        for (fi, _) in term.factors.iter().enumerate() {
            sign *= sym_groups[fi][digits[ng + fi]].sign;
        }
        // Build key with first-occurrence dummy relabeling.
        key_buf.clear();
        let mut assigned: Vec<Option<usize>> = vec![None; dummy_ids.len()];
        let mut next = 0usize;
        for (pos, &fi) in cand_order.iter().enumerate() {
            let f = &term.factors[fi];
            // Stable symbol identification: the skeleton sort already fixed
            // symbol blocks, but the key must distinguish them; use the
            // group index of this position.
            let _ = pos;
            key_buf.push(u64::MAX); // factor separator
            for d in &f.derivs {
                key_buf.push(encode_idx(d, &dummy_ids, &free_rank, &mut assigned, &mut next));
            }
            key_buf.push(u64::MAX - 1); // derivs/slots separator
            let elem = &sym_groups[fi][digits[ng + fi]];
            for k in 0..f.slots.len() {
                // elem.perm maps destination slot -> source slot? We apply:
                // new_slots[j] = old_slots[perm[j]].
                let s = &f.slots[elem.perm[k]];
                key_buf.push(encode_idx(s, &dummy_ids, &free_rank, &mut assigned, &mut next));
            }
        }
        let better = match &best_key {
            None => true,
            Some(bk) => key_buf < *bk,
        };
        if better {
            best_key = Some(key_buf.clone());
            best_order = cand_order;
            best_elems = digits[ng..].to_vec();
            signs_at_best = (sign > 0, sign < 0);
        } else if best_key.as_ref() == Some(&key_buf) {
            if sign > 0 {
                signs_at_best.0 = true;
            } else {
                signs_at_best.1 = true;
            }
        }
        // Advance mixed-radix counter.
        let mut carry = true;
        for d in 0..digits.len() {
            if !carry {
                break;
            }
            digits[d] += 1;
            if digits[d] >= radix[d] {
                digits[d] = 0;
            } else {
                carry = false;
            }
        }
        if carry {
            break;
        }
    }

    if signs_at_best.0 && signs_at_best.1 {
        return Ok(CanonResult { term: None });
    }
    let sign = if signs_at_best.1 { -1 } else { 1 };

    // Rebuild the winning term with canonical dummy labels.
    let mut assigned: Vec<Option<usize>> = vec![None; dummy_ids.len()];
    let mut next = 0usize;
    let mut rename: BTreeMap<String, String> = BTreeMap::new();
    let mut new_factors: Vec<Factor> = Vec::with_capacity(nf);
    for &fi in best_order.iter() {
        let f = &term.factors[fi];
        // best_elems is indexed by original factor index.
        let elem = &sym_groups[fi][best_elems[fi]];
        let mut nf_ = Factor {
            sym: f.sym.clone(),
            derivs: f.derivs.clone(),
            slots: (0..f.slots.len())
                .map(|j| f.slots[elem.perm[j]].clone())
                .collect(),
        };
        for i in nf_.indices_mut() {
            if let Some(&did) = dummy_ids.get(i.label.as_str()) {
                let v = match assigned[did] {
                    Some(v) => v,
                    None => {
                        let v = next;
                        assigned[did] = Some(v);
                        next += 1;
                        v
                    }
                };
                let new_label = format!("{}{}", crate::expr::DUMMY_PREFIX, v);
                rename.insert(i.label.clone(), new_label.clone());
                i.label = new_label;
            }
        }
        new_factors.push(nf_);
    }

    let mut coeff = term.coeff.clone();
    if sign < 0 {
        coeff = -coeff;
    }
    Ok(CanonResult {
        term: Some(Term {
            coeff,
            dimpow: term.dimpow,
            factors: new_factors,
        }),
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![];
    let mut cur: Vec<usize> = (0..n).collect();
    heap_permute(&mut cur, n, &mut out);
    out
}

fn heap_permute(arr: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(arr.clone());
        return;
    }
    for i in 0..k {
        heap_permute(arr, k - 1, out);
        if k % 2 == 0 {
            arr.swap(i, k - 1);
        } else {
            arr.swap(0, k - 1);
        }
    }
}

/// Canonicalize an expression: canonical form per term, merge like terms,
/// drop zeros, sort deterministically.
pub fn canonicalize(ctx: &Context, e: &Expression) -> Result<Expression> {
    // Merge key: (factors, dimpow). With a bound dimension we fold dimpow
    // into the coefficient first so `d * x` and `3x` merge at d = 3.
    let mut acc: BTreeMap<(Vec<Factor>, i32), BigRational> = BTreeMap::new();
    for t in &e.terms {
        let mut t = t.clone();
        if let Some(d) = ctx.dim {
            t.bind_dim(d);
        }
        if let Some(ct) = canonical_term(ctx, &t)?.term {
            let entry = acc
                .entry((ct.factors, ct.dimpow))
                .or_insert_with(BigRational::zero);
            *entry += ct.coeff;
        }
    }
    let mut terms: Vec<Term> = acc
        .into_iter()
        .filter(|(_, c)| !c.is_zero())
        .map(|((factors, dimpow), coeff)| Term {
            coeff,
            dimpow,
            factors,
        })
        .collect();
    terms.sort_by(|a, b| (&a.factors, a.dimpow).cmp(&(&b.factors, b.dimpow)));
    if terms.len() > ctx.max_terms {
        return Err(Error::TermBudget {
            size: terms.len(),
            cap: ctx.max_terms,
        });
    }
    Ok(Expression::from_terms(terms))
}

/// One simplification pass over a single term. Returns true if changed.
fn simplify_term_once(t: &mut Term) -> bool {
    // sqrtg * isqrtg -> 1
    let mut si = None;
    let mut ii = None;
    for (k, f) in t.factors.iter().enumerate() {
        if f.derivs.is_empty() {
            if f.sym == "sqrtg" && si.is_none() {
                si = Some(k);
            } else if f.sym == "isqrtg" && ii.is_none() {
                ii = Some(k);
            }
        }
    }
    if let (Some(a), Some(b)) = (si, ii) {
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        t.factors.remove(hi);
        t.factors.remove(lo);
        return true;
    }

    // g . ginv -> delta (or trace).
    for gi in 0..t.factors.len() {
        if t.factors[gi].sym != "g" || !t.factors[gi].derivs.is_empty() {
            continue;
        }
        for vi in 0..t.factors.len() {
            if t.factors[vi].sym != "ginv" || !t.factors[vi].derivs.is_empty() {
                continue;
            }
            let gl: Vec<&str> = t.factors[gi].slots.iter().map(|i| i.label.as_str()).collect();
            let vl: Vec<&str> = t.factors[vi].slots.iter().map(|i| i.label.as_str()).collect();
            let shared: Vec<&str> = gl.iter().filter(|l| vl.contains(l)).cloned().collect();
            if shared.is_empty() {
                continue;
            }
            if shared.len() == 2 {
                // Full trace: g_ab ginv^ab = dim.
                let (hi, lo) = if gi > vi { (gi, vi) } else { (vi, gi) };
                t.factors.remove(hi);
                t.factors.remove(lo);
                t.dimpow += 1;
                return true;
            }
            // Single contraction: g[_a _x] ginv[^x ^c] -> delta[_a ^c].
            let x = shared[0];
            let a = t.factors[gi]
                .slots
                .iter()
                .find(|i| i.label != x)
                .unwrap()
                .clone();
            let c = t.factors[vi]
                .slots
                .iter()
                .find(|i| i.label != x)
                .unwrap()
                .clone();
            let (hi, lo) = if gi > vi { (gi, vi) } else { (vi, gi) };
            t.factors.remove(hi);
            t.factors.remove(lo);
            t.factors.push(Factor::new("delta", vec![a, c]));
            return true;
        }
    }

    // delta handling.
    for di in 0..t.factors.len() {
        if t.factors[di].sym != "delta" || !t.factors[di].derivs.is_empty() {
            continue;
        }
        let down = t.factors[di].slots[0].clone();
        let up = t.factors[di].slots[1].clone();
        if down.label == up.label {
            // Trace: delta[_a ^a] = dim.
            t.factors.remove(di);
            t.dimpow += 1;
            return true;
        }
        // Find a partner occurrence of `down.label` (as an up index) or of
        // `up.label` (as a down index) outside this delta.
        for fi in 0..t.factors.len() {
            if fi == di {
                continue;
            }
            // Contract into another factor's indices (slots or prefix).
            let f = &t.factors[fi];
            let hit_up = f
                .indices()
                .position(|i| i.label == down.label && i.up);
            let hit_down = f
                .indices()
                .position(|i| i.label == up.label && !i.up);
            if let Some(p) = hit_up {
                let mut f = t.factors[fi].clone();
                rename_at(&mut f, p, &up.label);
                t.factors[fi] = f;
                t.factors.remove(di);
                return true;
            }
            if let Some(p) = hit_down {
                let mut f = t.factors[fi].clone();
                rename_at(&mut f, p, &down.label);
                t.factors[fi] = f;
                t.factors.remove(di);
                return true;
            }
        }
    }
    false
}

fn rename_at(f: &mut Factor, pos: usize, to: &str) {
    let nd = f.derivs.len();
    if pos < nd {
        f.derivs[pos].label = to.to_string();
    } else {
        f.slots[pos - nd].label = to.to_string();
    }
}

/// Metric simplification: `g·ginv → δ`, δ-contraction, `δ^a_a → dim`,
/// `sqrtg·isqrtg → 1`. No implicit raising/lowering of other factors.
pub fn simplify_metric(_ctx: &Context, e: &Expression) -> Expression {
    let mut out = e.clone();
    for t in &mut out.terms {
        while simplify_term_once(t) {}
    }
    out
}

/// Full cheap normalization: metric simplification then canonicalization.
pub fn normalize(ctx: &Context, e: &Expression) -> Result<Expression> {
    canonicalize(ctx, &simplify_metric(ctx, e))
}

/// Structural equality modulo dummy relabeling, slot symmetries, factor
/// ordering, and metric simplification.
pub fn equal(ctx: &Context, a: &Expression, b: &Expression) -> Result<bool> {
    let d = normalize(ctx, &a.clone().sub(b.clone()))?;
    Ok(d.is_empty())
}

/// Replace every factor of symbol `from` by the same factor of symbol `to`
/// (identical slots and derivative prefix). The two symbols must share a
/// slot signature.
pub fn rename_symbol(e: &Expression, from: &str, to: &str) -> Expression {
    let mut out = e.clone();
    for t in &mut out.terms {
        for f in &mut t.factors {
            if f.sym == from {
                f.sym = to.to_string();
            }
        }
    }
    out
}

/// Drop every term containing the given symbol.
pub fn drop_terms_with(e: &Expression, sym: &str) -> Expression {
    Expression::from_terms(
        e.terms
            .iter()
            .filter(|t| !t.factors.iter().any(|f| f.sym == sym))
            .cloned()
            .collect(),
    )
}

/// Keep only terms containing the given symbol.
pub fn keep_terms_with(e: &Expression, sym: &str) -> Expression {
    Expression::from_terms(
        e.terms
            .iter()
            .filter(|t| t.factors.iter().any(|f| f.sym == sym))
            .cloned()
            .collect(),
    )
}
