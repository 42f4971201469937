//! Functional variation with respect to the metric and the momentum.
//!
//! The metric variation of a derived factor is computed recursively:
//! δ(∇_i S) = ∇_i δS plus one connection-variation term per index of S,
//! with δΓ^e_{ab} = ½ g^{ec}(∇_a δg_bc + ∇_b δg_ac − ∇_c δg_ab)
//!              = ½ g^{ec} Ξ^{lij}_{cab} ∇_l δg_ij.
//! Curvature variations follow the Palatini identity
//! δR^h_{efg} = ∇_f δΓ^h_{ge} − ∇_g δΓ^h_{fe}. A configuration switch
//! routes δRicci through the variation of the full Riemann tensor instead
//! of the direct trace formula; the two are equal and the switch exists to
//! exercise the dimension-agnostic route.

use crate::calculus::{nabla, strip_derivs_off};
use crate::canon::normalize;
use crate::expr::{rat, rat_int, Expression, Factor, Index, LabelGen, Term};
use crate::symbols::SymbolClass;
use crate::{Context, Error, Result};

/// Routing options for the variation engine.
#[derive(Debug, Clone, Copy, Default)]
pub struct VariationMode {
    /// Expand δΓ through the Ξ tensor (six delta-product terms) instead of
    /// the direct three-term formula. Mathematically identical.
    pub gamma_via_xi: bool,
    /// Vary Ricci as the ginv-trace of the varied Riemann tensor instead of
    /// the direct Palatini trace formula. Mathematically identical.
    pub ricci_via_riemann: bool,
}

/// What to vary with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    Metric,
    Momentum,
}

fn dn(label: &str) -> Index {
    Index::down(label)
}
fn up(label: &str) -> Index {
    Index::up(label)
}

/// Ξ^{lij}_{cab} as an explicit sum of delta products:
/// Ξ^{lij}_{cab} = δ_a^l δ_b^{(i} δ_c^{j)} + δ_b^l δ_a^{(i} δ_c^{j)}
///               − δ_c^l δ_a^{(i} δ_b^{j)}.
/// Free labels in argument order (l, i, j upper; c, a, b lower).
pub fn build_xi(l: &str, i: &str, j: &str, c: &str, a: &str, b: &str) -> Expression {
    let d3 = |x: &str, y: &str, z: &str, s1: &str, s2: &str, s3: &str| {
        // δ_x^{s1} δ_y^{s2} δ_z^{s3}
        Term::from_factors(vec![
            Factor::new("delta", vec![dn(x), up(s1)]),
            Factor::new("delta", vec![dn(y), up(s2)]),
            Factor::new("delta", vec![dn(z), up(s3)]),
        ])
    };
    let mut e = Expression::zero();
    let half = rat(1, 2);
    // δ_a^l δ_b^{(i} δ_c^{j)}
    for (xi, xj) in [(i, j), (j, i)] {
        let mut t = d3(a, b, c, l, xi, xj);
        t.coeff = half.clone();
        e.terms.push(t);
    }
    // + δ_b^l δ_a^{(i} δ_c^{j)}
    for (xi, xj) in [(i, j), (j, i)] {
        let mut t = d3(b, a, c, l, xi, xj);
        t.coeff = half.clone();
        e.terms.push(t);
    }
    // − δ_c^l δ_a^{(i} δ_b^{j)}
    for (xi, xj) in [(i, j), (j, i)] {
        let mut t = d3(c, a, b, l, xi, xj);
        t.coeff = -half.clone();
        e.terms.push(t);
    }
    e
}

/// ⁽⁰⁾A^{ij l1 l2}_{kl} = g^{l1 k'} Ξ^{l2 ij}_{k' k l}
///                      − g^{k1 k2} Ξ^{l2 ij}_{k1 k2 (k} δ_{l)}^{l1}.
/// Free labels (i, j, l1, l2 upper; k, l lower).
pub fn build_a0(i: &str, j: &str, l1: &str, l2: &str, k: &str, l: &str) -> Expression {
    // Use reserved internal labels for the contractions.
    let kp = "#A0kp";
    let k1 = "#A0k1";
    let k2 = "#A0k2";
    let ginv_f = |x: &str, y: &str| Factor::new("ginv", vec![up(x), up(y)]);

    let mut out = Expression::zero();
    // First piece: g^{l1 k'} Ξ^{l2 ij}_{k' k l}.
    let xi1 = build_xi(l2, i, j, kp, k, l);
    for mut t in xi1.terms {
        t.factors.push(ginv_f(l1, kp));
        out.terms.push(t);
    }
    // Trace piece, symmetrized over (k, l):
    for (ka, kb) in [(k, l), (l, k)] {
        let xi2 = build_xi(l2, i, j, k1, k2, ka);
        for mut t in xi2.terms {
            t.factors.push(ginv_f(k1, k2));
            t.factors.push(Factor::new("delta", vec![dn(kb), up(l1)]));
            t.coeff *= rat(-1, 2);
            out.terms.push(t);
        }
    }
    out
}

/// DeWitt supermetric with lower indices:
/// G_abcd = ½ (g_ac g_bd + g_ad g_bc) − 1/(dim−1) g_ab g_cd.
/// The trace coefficient must be a rational number, so a numeric dimension
/// binding is required.
pub fn dewitt_lower(ctx: &Context, a: &str, b: &str, c: &str, d: &str) -> Result<Expression> {
    let dim = ctx.require_dim()? as i64;
    if dim < 2 {
        return Err(Error::Other("DeWitt supermetric needs dim ≥ 2".into()));
    }
    let g = |x: &str, y: &str| Factor::new("g", vec![dn(x), dn(y)]);
    let mut e = Expression::zero();
    e.terms.push(Term::new(rat(1, 2), vec![g(a, c), g(b, d)]));
    e.terms.push(Term::new(rat(1, 2), vec![g(a, d), g(b, c)]));
    e.terms.push(Term::new(rat(-1, dim - 1), vec![g(a, b), g(c, d)]));
    Ok(e)
}

/// DeWitt supermetric with raised indices (same coefficients, ginv factors).
pub fn dewitt_upper(ctx: &Context, a: &str, b: &str, c: &str, d: &str) -> Result<Expression> {
    let dim = ctx.require_dim()? as i64;
    if dim < 2 {
        return Err(Error::Other("DeWitt supermetric needs dim ≥ 2".into()));
    }
    let gi = |x: &str, y: &str| Factor::new("ginv", vec![up(x), up(y)]);
    let mut e = Expression::zero();
    e.terms.push(Term::new(rat(1, 2), vec![gi(a, c), gi(b, d)]));
    e.terms.push(Term::new(rat(1, 2), vec![gi(a, d), gi(b, c)]));
    e.terms.push(Term::new(rat(-1, dim - 1), vec![gi(a, b), gi(c, d)]));
    Ok(e)
}

/// δΓ^{e}_{ab} expressed in terms of ∇ δg. Labels: e upper, a, b lower.
pub fn delta_gamma(
    mode: VariationMode,
    e_lab: &str,
    a_lab: &str,
    b_lab: &str,
    gen: &mut LabelGen,
) -> Expression {
    if mode.gamma_via_xi {
        // ½ g^{ec} Ξ^{lij}_{cab} ∇_l δg_ij
        let c = gen.fresh();
        let l = gen.fresh();
        let i = gen.fresh();
        let j = gen.fresh();
        let xi = build_xi(&l, &i, &j, &c, a_lab, b_lab);
        let mut out = Expression::zero();
        for mut t in xi.terms {
            t.coeff *= rat(1, 2);
            t.factors.push(Factor::new("ginv", vec![up(e_lab), up(&c)]));
            t.factors
                .push(Factor::with_derivs("dg", vec![dn(&l)], vec![dn(&i), dn(&j)]));
            out.terms.push(t);
        }
        out
    } else {
        // ½ g^{ec}(∇_a δg_bc + ∇_b δg_ac − ∇_c δg_ab)
        let c = gen.fresh();
        let gfac = Factor::new("ginv", vec![up(e_lab), up(&c)]);
        let mk = |di: &str, s1: &str, s2: &str, sign: i64| {
            Term::new(
                rat(sign, 2),
                vec![
                    gfac.clone(),
                    Factor::with_derivs("dg", vec![dn(di)], vec![dn(s1), dn(s2)]),
                ],
            )
        };
        Expression::from_terms(vec![
            mk(a_lab, b_lab, &c, 1),
            mk(b_lab, a_lab, &c, 1),
            mk(&c, a_lab, b_lab, -1),
        ])
    }
}

/// Variation of one underived factor with respect to the metric.
fn vary_base_metric(
    ctx: &Context,
    mode: VariationMode,
    f: &Factor,
    gen: &mut LabelGen,
) -> Result<Expression> {
    debug_assert!(f.derivs.is_empty());
    let info = ctx.registry.get(&f.sym)?;
    let e = match f.sym.as_str() {
        "g" => Expression::from_term(Term::from_factors(vec![Factor::new(
            "dg",
            f.slots.clone(),
        )])),
        "ginv" => {
            // δ g^{ab} = − g^{ap} g^{bq} δg_pq
            let p = gen.fresh();
            let q = gen.fresh();
            Expression::from_term(Term::new(
                rat_int(-1),
                vec![
                    Factor::new("ginv", vec![f.slots[0].clone(), up(&p)]),
                    Factor::new("ginv", vec![f.slots[1].clone(), up(&q)]),
                    Factor::new("dg", vec![dn(&p), dn(&q)]),
                ],
            ))
        }
        "sqrtg" | "isqrtg" => {
            let p = gen.fresh();
            let q = gen.fresh();
            let sign = if f.sym == "sqrtg" { 1 } else { -1 };
            Expression::from_term(Term::new(
                rat(sign, 2),
                vec![
                    Factor::new(&f.sym, vec![]),
                    Factor::new("ginv", vec![up(&p), up(&q)]),
                    Factor::new("dg", vec![dn(&p), dn(&q)]),
                ],
            ))
        }
        "delta" | "Lambda" => Expression::zero(),
        "pi" | "dpi" => Expression::zero(),
        "dg" => {
            return Err(Error::Other(
                "second metric variation is not supported".into(),
            ))
        }
        "Ricci" => {
            if mode.ricci_via_riemann {
                // Ricci_kl = ginv^{ah} Riem[_h _k _a _l]
                let a = gen.fresh();
                let h = gen.fresh();
                let expanded = Expression::from_term(Term::from_factors(vec![
                    Factor::new("ginv", vec![up(&a), up(&h)]),
                    Factor::new(
                        "Riem",
                        vec![dn(&h), f.slots[0].clone(), dn(&a), f.slots[1].clone()],
                    ),
                ]));
                vary_metric_with(ctx, VariationMode { ricci_via_riemann: false, ..mode }, &expanded)?
            } else {
                // δRicci_kl = ∇_a δΓ^a_{lk} − ∇_l δΓ^a_{ak}
                let k = &f.slots[0].label;
                let l = &f.slots[1].label;
                let a = gen.fresh();
                let t1 = nabla(ctx, &dn(&a), &delta_gamma(mode, &a, l, k, gen))?;
                let t2 = nabla(ctx, &dn(l), &delta_gamma(mode, &a, &a, k, gen))?;
                t1.sub(t2)
            }
        }
        "Riem" => {
            // Riem[_h _e _f _g] = g_{hc} R^c_{efg}:
            // δ = dg_{hc} ginv^{cx} Riem[_x _e _f _g]
            //   + g_{hc} (∇_f δΓ^c_{ge} − ∇_g δΓ^c_{fe}).
            let (h, e_, fl, gl) = (
                f.slots[0].label.clone(),
                f.slots[1].label.clone(),
                f.slots[2].label.clone(),
                f.slots[3].label.clone(),
            );
            let c = gen.fresh();
            let x = gen.fresh();
            let first = Expression::from_term(Term::from_factors(vec![
                Factor::new("dg", vec![dn(&h), dn(&c)]),
                Factor::new("ginv", vec![up(&c), up(&x)]),
                Factor::new("Riem", vec![dn(&x), dn(&e_), dn(&fl), dn(&gl)]),
            ]));
            let c2 = gen.fresh();
            let pal1 = nabla(ctx, &dn(&fl), &delta_gamma(mode, &c2, &gl, &e_, gen))?;
            let pal2 = nabla(ctx, &dn(&gl), &delta_gamma(mode, &c2, &fl, &e_, gen))?;
            let mut pal = pal1.sub(pal2);
            for t in &mut pal.terms {
                t.factors.push(Factor::new("g", vec![dn(&h), dn(&c2)]));
            }
            first.add(pal)
        }
        _ => match info.class {
            SymbolClass::Smearing => Expression::zero(),
            _ => {
                return Err(Error::Other(format!(
                    "no metric-variation rule for symbol `{}`",
                    f.sym
                )))
            }
        },
    };
    Ok(e)
}

/// Variation of a (possibly derived) factor with respect to the metric.
fn vary_factor_metric(
    ctx: &Context,
    mode: VariationMode,
    f: &Factor,
    gen: &mut LabelGen,
) -> Result<Expression> {
    if f.derivs.is_empty() {
        return vary_base_metric(ctx, mode, f, gen);
    }
    let outer = f.derivs[0].clone();
    let inner = Factor {
        sym: f.sym.clone(),
        derivs: f.derivs[1..].to_vec(),
        slots: f.slots.clone(),
    };
    // ∇_outer δ(inner)
    let mut out = nabla(ctx, &outer, &vary_factor_metric(ctx, mode, &inner, gen)?)?;
    // δΓ corrections, one per index of the inner object.
    let n_inner = inner.derivs.len() + inner.slots.len();
    for pos in 0..n_inner {
        let (idx_here, is_deriv) = if pos < inner.derivs.len() {
            (inner.derivs[pos].clone(), true)
        } else {
            (inner.slots[pos - inner.derivs.len()].clone(), false)
        };
        let e_lab = gen.fresh();
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
        let (dgam, sign) = if idx_here.up {
            // +δΓ^{c}_{outer e} T^{..e..} with c = original label
            (
                delta_gamma(mode, &idx_here.label, &outer.label, &e_lab, gen),
                1i64,
            )
        } else {
            // −δΓ^{e}_{outer c} T_{..e..}
            (
                delta_gamma(mode, &e_lab, &outer.label, &idx_here.label, gen),
                -1i64,
            )
        };
        for mut t in dgam.terms {
            t.coeff *= rat_int(sign);
            t.factors.push(modified.clone());
            out.terms.push(t);
        }
    }
    // Density-weight correction: ∇ on a weight-w density subtracts
    // w Γ^c_{cb} T, so its metric variation subtracts w δΓ^c_{c,outer} T.
    let weight = ctx.registry.get(&f.sym)?.density_weight;
    if weight != 0 {
        let cl = gen.fresh();
        let dgam = delta_gamma(mode, &cl, &outer.label, &cl, gen);
        for mut t in dgam.terms {
            t.coeff *= rat_int(-(weight as i64));
            t.factors.push(inner.clone());
            out.terms.push(t);
        }
    }
    Ok(out)
}

fn vary_metric_with(ctx: &Context, mode: VariationMode, e: &Expression) -> Result<Expression> {
    let mut out = Expression::zero();
    for t in &e.terms {
        let whole = Expression::from_term(t.clone());
        for (k, f) in t.factors.iter().enumerate() {
            let mut gen = LabelGen::avoiding(&[&whole]);
            let df = vary_factor_metric(ctx, mode, f, &mut gen)?;
            for mut dt in df.terms {
                let mut nt = t.clone();
                nt.factors.remove(k);
                dt.coeff *= &nt.coeff;
                dt.dimpow += nt.dimpow;
                dt.factors.extend(nt.factors);
                out.terms.push(dt);
            }
        }
    }
    Ok(out)
}

/// Metric variation: returns an expression linear in the formal variation
/// `dg` (with derivative prefixes). Not normalized.
pub fn vary_metric(ctx: &Context, mode: VariationMode, e: &Expression) -> Result<Expression> {
    vary_metric_with(ctx, mode, e)
}

/// Momentum variation: replaces each `pi` factor (derivative prefixes pass
/// through unchanged) by `dpi`, Leibniz-style.
pub fn vary_momentum(_ctx: &Context, e: &Expression) -> Result<Expression> {
    let mut out = Expression::zero();
    for t in &e.terms {
        for (k, f) in t.factors.iter().enumerate() {
            if f.sym == "pi" {
                let mut nt = t.clone();
                nt.factors[k].sym = "dpi".to_string();
                out.terms.push(nt);
            }
        }
    }
    Ok(out)
}

/// Functional derivative of the integral of a scalar density.
///
/// For `Wrt::Metric`: returns the symmetric kernel K^{ab} (upper free
/// indices `la`, `lb`) such that δ∫e = ∫ K^{ab} δg_ab. For
/// `Wrt::Momentum`: the kernel K_ab (lower free indices) such that
/// δ∫e = ∫ K_ab δπ^{ab}.
pub fn functional_derivative(
    ctx: &Context,
    mode: VariationMode,
    e: &Expression,
    wrt: Wrt,
    la: &str,
    lb: &str,
) -> Result<Expression> {
    let (varied, dsym) = match wrt {
        Wrt::Metric => (vary_metric(ctx, mode, e)?, "dg"),
        Wrt::Momentum => (vary_momentum(ctx, e)?, "dpi"),
    };
    // Integrate by parts until the formal variation is bare.
    let stripped = strip_derivs_off(ctx, &varied, dsym)?;
    let mut out = Expression::zero();
    for t in &stripped.terms {
        let k = t
            .factors
            .iter()
            .position(|f| f.sym == dsym)
            .ok_or_else(|| Error::Other("variation lost its formal factor".into()))?;
        let df = t.factors[k].clone();
        debug_assert!(df.derivs.is_empty());
        let (s0, s1) = (df.slots[0].label.clone(), df.slots[1].label.clone());
        let mut nt = t.clone();
        nt.factors.remove(k);
        // Symmetrize over the two kernel slots (δg and δπ are symmetric).
        for (x, y) in [(la, lb), (lb, la)] {
            let mut st = nt.clone();
            st.coeff *= rat(1, 2);
            // Temporary names to avoid collisions during the swap.
            st.rename_label(&s0, "#swapA");
            st.rename_label(&s1, "#swapB");
            st.rename_label("#swapA", x);
            st.rename_label("#swapB", y);
            out.terms.push(st);
        }
    }
    normalize(ctx, &out)
}

/// Trace-shift coefficient c = 1/(dim − 1); the kinetic trace coefficient of
/// the DeWitt supermetric. Equals ½ in three dimensions.
pub fn trace_shift(ctx: &Context) -> Result<num::BigRational> {
    let dim = ctx.require_dim()? as i64;
    if dim < 2 {
        return Err(Error::Other("trace shift needs dim ≥ 2".into()));
    }
    Ok(rat(1, dim - 1))
}

fn pi_down(ctx: &Context, i: &str, j: &str) -> Expression {
    crate::parse::parse(ctx, &format!("g[_{i} _zp] * g[_{j} _zq] * pi[^zp ^zq]"))
        .expect("static expression")
}

/// Both sides of the momentum contraction of ⁽⁰⁾A:
/// ⁽⁰⁾A^{ij l1 l2}_{kl} (π_ij − c g_ij π)
///   = c π (g^{l1l2} g_kl − δ^{l1}_{(k} δ^{l2}_{l)}) + 2 δ^{l2}_{(l} π^{l1}_{k)}
///     − g^{l1l2} π_kl,   with c = 1/(dim−1).
/// Free labels: l1, l2 upper; k, l lower.
pub fn identity_a_sides(ctx: &Context) -> Result<(Expression, Expression)> {
    let c = trace_shift(ctx)?;
    let p = crate::parse::parse;
    let a0 = build_a0("i", "j", "l1", "l2", "k", "l");
    let arg = pi_down(ctx, "i", "j").sub(
        p(ctx, "g[_i _j] * g[_zp _zq] * pi[^zp ^zq]")?.scale(&c),
    );
    let lhs = crate::expr::mul(&a0, &arg);
    let rhs = p(
        ctx,
        "ginv[^l1 ^l2] * g[_k _l] * g[_zp _zq] * pi[^zp ^zq] \
         - 1/2 * delta[_k ^l1] * delta[_l ^l2] * g[_zp _zq] * pi[^zp ^zq] \
         - 1/2 * delta[_l ^l1] * delta[_k ^l2] * g[_zp _zq] * pi[^zp ^zq]",
    )?
    .scale(&c)
    .add(p(
        ctx,
        "delta[_l ^l2] * ginv[^l1 ^zp] * g[_zp _zq] * g[_k _zr] * pi[^zq ^zr] \
         + delta[_k ^l2] * ginv[^l1 ^zp] * g[_zp _zq] * g[_l _zr] * pi[^zq ^zr] \
         - ginv[^l1 ^l2] * g[_k _zp] * g[_l _zq] * pi[^zp ^zq]",
    )?);
    Ok((lhs, rhs))
}

/// Left side of the Ξ momentum identity, with or without the trace shift:
/// ½ g^{k c} π^{d f} Ξ^{n ij}_{k e f} (π_ij [− c₀ g_ij π])  symmetrized over
/// (c ↔ d) with weight ½. Free labels: n, c, d upper; e lower.
pub fn identity_xi_lhs(ctx: &Context, with_trace_shift: bool) -> Result<Expression> {
    let p = crate::parse::parse;
    let mut arg = pi_down(ctx, "i", "j");
    if with_trace_shift {
        let c0 = trace_shift(ctx)?;
        arg = arg.sub(p(ctx, "g[_i _j] * g[_zp _zq] * pi[^zp ^zq]")?.scale(&c0));
    }
    let mut lhs = Expression::zero();
    for (cl, dl) in [("c", "d"), ("d", "c")] {
        let xi = build_xi("n", "i", "j", "k", "e", "ff");
        let pre = p(
            ctx,
            &format!("1/2 * ginv[^k ^{cl}] * pi[^{dl} ^ff]"),
        )?;
        lhs = lhs.add(crate::expr::mul(&pre, &crate::expr::mul(&xi, &arg)));
    }
    Ok(lhs)
}

/// The momentum-bilinear ("traceless") block of the Ξ identity:
/// δ^n_e π^{ck} π^d_k + ½(π^{cn} π^d_e + π^{dn} π^c_e)
/// − ½(g^{dn} π^{ck} π_{ke} + g^{cn} π^{dk} π_{ke}).
pub fn identity_xi_t_rhs(ctx: &Context) -> Result<Expression> {
    crate::parse::parse(
        ctx,
        "delta[_e ^n] * pi[^c ^zk] * g[_zk _zm] * pi[^d ^zm] \
         + 1/2 * pi[^c ^n] * g[_e _zm] * pi[^d ^zm] \
         + 1/2 * pi[^d ^n] * g[_e _zm] * pi[^c ^zm] \
         - 1/2 * ginv[^d ^n] * pi[^c ^zk] * g[_zk _zm] * g[_zp _e] * pi[^zm ^zp] \
         - 1/2 * ginv[^c ^n] * pi[^d ^zk] * g[_zk _zm] * g[_zp _e] * pi[^zm ^zp]",
    )
}

/// The trace block of the Ξ identity, proportional to π = g_ij π^{ij}, with
/// coefficient c₀ = 1/(dim−1):
/// π c₀ (−δ^n_e π^{cd} − ½(δ^c_e π^{dn} + δ^d_e π^{cn})
///       + ½(g^{cn} π^d_e + g^{dn} π^c_e)).
pub fn identity_xi_trace_rhs(ctx: &Context) -> Result<Expression> {
    let c0 = trace_shift(ctx)?;
    Ok(crate::parse::parse(
        ctx,
        "- delta[_e ^n] * pi[^c ^d] * g[_zp _zq] * pi[^zp ^zq] \
         - 1/2 * delta[_e ^c] * pi[^d ^n] * g[_zp _zq] * pi[^zp ^zq] \
         - 1/2 * delta[_e ^d] * pi[^c ^n] * g[_zp _zq] * pi[^zp ^zq] \
         + 1/2 * ginv[^c ^n] * g[_e _zm] * pi[^d ^zm] * g[_zp _zq] * pi[^zp ^zq] \
         + 1/2 * ginv[^d ^n] * g[_e _zm] * pi[^c ^zm] * g[_zp _zq] * pi[^zp ^zq]",
    )?
    .scale(&c0))
}

/// Both sides of the metric contraction of Ξ:
/// Ξ^{n ij}_{kef} g_ij g^{k(c} π^{d)f}
///   = δ^n_e π^{cd} + δ^{(c}_e π^{d)n} − g^{n(c} π^{d)}_e
/// with weight-½ symmetrization. Free labels: n, c, d upper; e lower.
pub fn identity_xi_contracted_sides(ctx: &Context) -> Result<(Expression, Expression)> {
    let p = crate::parse::parse;
    let mut lhs = Expression::zero();
    for (cl, dl) in [("c", "d"), ("d", "c")] {
        let xi = build_xi("n", "i", "j", "k", "e", "ff");
        let pre = p(
            ctx,
            &format!("1/2 * g[_i _j] * ginv[^k ^{cl}] * pi[^{dl} ^ff]"),
        )?;
        lhs = lhs.add(crate::expr::mul(&pre, &xi));
    }
    let rhs = p(
        ctx,
        "delta[_e ^n] * pi[^c ^d] \
         + 1/2 * delta[_e ^c] * pi[^d ^n] + 1/2 * delta[_e ^d] * pi[^c ^n] \
         - 1/2 * ginv[^n ^c] * g[_e _zm] * pi[^d ^zm] \
         - 1/2 * ginv[^n ^d] * g[_e _zm] * pi[^c ^zm]",
    )?;
    Ok((lhs, rhs))
}

/// Both sides of the Ξ–momentum contraction ("no trace terms"):
/// Ξ^{lij}_{kab} π_ij = −δ^l_k π_ab + δ^l_b π_ak + δ^l_a π_bk.
pub fn identity_xi_pi_sides(ctx: &Context) -> Result<(Expression, Expression)> {
    let p = crate::parse::parse;
    let xi = build_xi("l", "i", "j", "k", "a", "b");
    let lhs = crate::expr::mul(&xi, &pi_down(ctx, "i", "j"));
    let rhs = p(
        ctx,
        "- delta[_k ^l] * g[_a _zp] * g[_b _zq] * pi[^zp ^zq] \
         + delta[_b ^l] * g[_a _zp] * g[_k _zq] * pi[^zp ^zq] \
         + delta[_a ^l] * g[_b _zp] * g[_k _zq] * pi[^zp ^zq]",
    )?;
    Ok((lhs, rhs))
}
