//! Smeared constraint functionals and their Poisson brackets.
//!
//! A constraint functional is represented by its scalar-density integrand,
//! smearing factor included. The Poisson bracket of two functionals is
//! computed through exact functional derivatives:
//! {F, P} = ∫ (δF/δg_ab · δP/δπ^ab − δP/δg_ab · δF/δπ^ab).

use crate::calculus::{simplify_deep, strip_derivs_off};
use crate::canon::normalize;
use crate::expr::{mul, rat_int, Expression, Factor, Index, Term};
use crate::variation::{dewitt_lower, functional_derivative, VariationMode, Wrt};
use crate::{Context, Result};

/// A smeared functional: a scalar-density integrand together with the name
/// of its smearing symbol (used when stripping derivatives during closure
/// analysis).
#[derive(Debug, Clone)]
pub struct SmearedFunctional {
    pub density: Expression,
    pub smearing: String,
}

impl SmearedFunctional {
    pub fn new(density: Expression, smearing: &str) -> Self {
        SmearedFunctional {
            density,
            smearing: smearing.to_string(),
        }
    }
}

/// GR Hamiltonian-constraint density smeared with a scalar `n`:
/// n (G_abcd π^ab π^cd / √g − √g (R − 2Λ)), with the DeWitt trace
/// coefficient 1/(dim − 1).
pub fn gr_hamiltonian_density(ctx: &Context, n: &str) -> Result<Expression> {
    let g = dewitt_lower(ctx, "za", "zb", "zc", "zd")?;
    let pis = crate::parse::parse(ctx, &format!("{n} * isqrtg * pi[^za ^zb] * pi[^zc ^zd]"))?;
    let kinetic = mul(&g, &pis);
    let potential = crate::parse::parse(ctx, &format!("- {n} * sqrtg * R + 2 * {n} * sqrtg * Lambda"))?;
    normalize(ctx, &kinetic.add(potential))
}

/// Kinetic part of the GR Hamiltonian density (momentum-squared term only).
pub fn gr_kinetic_density(ctx: &Context, n: &str) -> Result<Expression> {
    let g = dewitt_lower(ctx, "za", "zb", "zc", "zd")?;
    let pis = crate::parse::parse(ctx, &format!("{n} * isqrtg * pi[^za ^zb] * pi[^zc ^zd]"))?;
    normalize(ctx, &mul(&g, &pis))
}

/// Potential part of the GR Hamiltonian density: −n √g (R − 2Λ).
pub fn gr_potential_density(ctx: &Context, n: &str) -> Result<Expression> {
    let e = crate::parse::parse(ctx, &format!("- {n} * sqrtg * R + 2 * {n} * sqrtg * Lambda"))?;
    normalize(ctx, &e)
}

/// GR momentum-constraint density smeared with a vector `v`:
/// −2 v^a g_ae ∇_b π^be.
pub fn gr_momentum_density(ctx: &Context, v: &str) -> Result<Expression> {
    let e = crate::parse::parse(
        ctx,
        &format!("- 2 * {v}[^za] * g[_za _ze] * D(_zb, pi[^zb ^ze])"),
    )?;
    normalize(ctx, &e)
}

/// Poisson-bracket integrand of two scalar-density functionals.
pub fn poisson_bracket_density(
    ctx: &Context,
    mode: VariationMode,
    f: &Expression,
    p: &Expression,
) -> Result<Expression> {
    let fg = functional_derivative(ctx, mode, f, Wrt::Metric, "zzk", "zzl")?;
    let fp = functional_derivative(ctx, mode, f, Wrt::Momentum, "zzk", "zzl")?;
    let pg = functional_derivative(ctx, mode, p, Wrt::Metric, "zzk", "zzl")?;
    let pp = functional_derivative(ctx, mode, p, Wrt::Momentum, "zzk", "zzl")?;
    let integrand = mul(&fg, &pp).sub(mul(&pg, &fp));
    normalize(ctx, &integrand)
}

/// Lie bracket of two vector smearings as an expression with one free upper
/// label: [v, w]^a = v^b ∇_b w^a − w^b ∇_b v^a.
pub fn lie_bracket_vector(ctx: &Context, v: &str, w: &str, a: &str) -> Result<Expression> {
    crate::parse::parse(
        ctx,
        &format!("{v}[^zb] * D(_zb, {w}[^{a}]) - {w}[^zb] * D(_zb, {v}[^{a}])"),
    )
}

/// Momentum-constraint density smeared with an arbitrary vector-valued
/// expression (one free upper label `a`): −2 s^a g_ae ∇_b π^be.
pub fn momentum_density_for(ctx: &Context, smearing_vec: &Expression, a: &str) -> Result<Expression> {
    let body = crate::parse::parse(ctx, &format!("- 2 * g[_{a} _ze] * D(_zb, pi[^zb ^ze])"))?;
    let prod = mul(smearing_vec, &body);
    // `a` is bound between the two pieces.
    normalize(ctx, &prod)
}

/// Hamiltonian-constraint density smeared with an arbitrary scalar-valued
/// expression (no free labels).
pub fn hamiltonian_density_for(ctx: &Context, smearing_scalar: &Expression) -> Result<Expression> {
    let unit = gr_hamiltonian_density_unsmearied(ctx)?;
    normalize(ctx, &mul(smearing_scalar, &unit))
}

fn gr_hamiltonian_density_unsmearied(ctx: &Context) -> Result<Expression> {
    let g = dewitt_lower(ctx, "za", "zb", "zc", "zd")?;
    let pis = crate::parse::parse(ctx, "isqrtg * pi[^za ^zb] * pi[^zc ^zd]")?;
    let kinetic = mul(&g, &pis);
    let potential = crate::parse::parse(ctx, "- sqrtg * R + 2 * sqrtg * Lambda")?;
    normalize(ctx, &kinetic.add(potential))
}

/// Kind and parameters of a constraint density.
///
/// Kinetic modifications are F(f) = ∫ f B^{i1…in j1…jm}_{abcd}
/// ∇_{i1…in}π^{ab} ∇_{j1…jm}π^{cd}, with `B` given as an expression whose
/// free labels follow a fixed naming scheme: lower `za zb zc zd` for the
/// momentum pairs and upper `zi1…zin`, `zj1…zjm` for the derivative groups.
/// Potential modifications are V̂(f) = ∫ f V with V metric-only. Linear
/// modifications are P(f) = −∫ f β_ab π^ab with β given with free lower
/// labels `za zb`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSpec {
    GrHamiltonian,
    MomentumConstraint,
    KineticMod { b: String, n: u32, m: u32 },
    PotentialMod { v: String },
    LinearMod { beta: String },
}

/// Named constraint library manifest (JSON external interface).
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ConstraintManifest {
    pub constraints: std::collections::BTreeMap<String, ConstraintSpec>,
}

impl ConstraintManifest {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(crate::Error::from)
    }
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(crate::Error::from)
    }
}

fn group_labels(prefix: &str, count: u32) -> Vec<String> {
    (1..=count).map(|k| format!("{prefix}{k}")).collect()
}

/// Structural invariant for kinetic modifications: no term of B may contain
/// a factor directly connecting the {za, zb} pair group with the j-group,
/// nor {zc, zd} with the i-group (such contractions change the grading
/// bookkeeping the analysis relies on).
fn check_kinetic_groups(b: &Expression, n: u32, m: u32) -> Result<()> {
    let igroup = group_labels("zi", n);
    let jgroup = group_labels("zj", m);
    for t in &b.terms {
        for f in &t.factors {
            let labels: Vec<&str> = f
                .indices()
                .map(|ix| ix.label.as_str())
                .collect();
            let has = |set: &[&str]| labels.iter().any(|l| set.contains(l));
            let ab = ["za", "zb"];
            let cd = ["zc", "zd"];
            let in_i = labels.iter().any(|l| igroup.iter().any(|x| x == l));
            let in_j = labels.iter().any(|l| jgroup.iter().any(|x| x == l));
            if has(&ab) && in_j {
                return Err(crate::Error::Other(
                    "kinetic modification contracts the {ab} pair with the j-derivative group"
                        .into(),
                ));
            }
            if has(&cd) && in_i {
                return Err(crate::Error::Other(
                    "kinetic modification contracts the {cd} pair with the i-derivative group"
                        .into(),
                ));
            }
        }
    }
    Ok(())
}

/// Build the smeared functional for a constraint spec.
pub fn make_constraint(ctx: &Context, spec: &ConstraintSpec, smearing: &str) -> Result<SmearedFunctional> {
    let density = match spec {
        ConstraintSpec::GrHamiltonian => gr_hamiltonian_density(ctx, smearing)?,
        ConstraintSpec::MomentumConstraint => gr_momentum_density(ctx, smearing)?,
        ConstraintSpec::KineticMod { b, n, m } => {
            let be = crate::parse::parse(ctx, b)?;
            check_kinetic_groups(&be, *n, *m)?;
            let mut first = String::from("pi[^za ^zb]");
            for lab in group_labels("zi", *n).iter().rev() {
                first = format!("D(_{lab}, {first})");
            }
            let mut second = String::from("pi[^zc ^zd]");
            for lab in group_labels("zj", *m).iter().rev() {
                second = format!("D(_{lab}, {second})");
            }
            let pis = crate::parse::parse(ctx, &format!("{smearing} * {first} * {second}"))?;
            normalize(ctx, &mul(&be, &pis))?
        }
        ConstraintSpec::PotentialMod { v } => {
            let ve = crate::parse::parse(ctx, v)?;
            let s = crate::parse::parse(ctx, smearing)?;
            normalize(ctx, &mul(&s, &ve))?
        }
        ConstraintSpec::LinearMod { beta } => {
            let be = crate::parse::parse(ctx, beta)?;
            let pis = crate::parse::parse(ctx, &format!("- {smearing} * pi[^za ^zb]"))?;
            normalize(ctx, &mul(&be, &pis))?
        }
    };
    Ok(SmearedFunctional::new(density, smearing))
}

/// Poisson bracket of two smeared functionals (integrand form).
pub fn poisson_bracket(
    ctx: &Context,
    mode: VariationMode,
    a: &SmearedFunctional,
    b: &SmearedFunctional,
) -> Result<Expression> {
    poisson_bracket_density(ctx, mode, &a.density, &b.density)
}

/// {A(f), B(h)} − {A(h), B(f)}: the f↔h antisymmetrized bracket used by the
/// closure analysis.
pub fn antisymmetrized_bracket(
    ctx: &Context,
    mode: VariationMode,
    a: &ConstraintSpec,
    b: &ConstraintSpec,
    f: &str,
    h: &str,
) -> Result<Expression> {
    let af = make_constraint(ctx, a, f)?;
    let bh = make_constraint(ctx, b, h)?;
    let ah = make_constraint(ctx, a, h)?;
    let bf = make_constraint(ctx, b, f)?;
    let first = poisson_bracket(ctx, mode, &af, &bh)?;
    let second = poisson_bracket(ctx, mode, &ah, &bf)?;
    normalize(ctx, &first.sub(second))
}

/// Drop the integral sign and the bare smearing factor `which`, leaving the
/// local distributional coefficient. Every term must carry `which` exactly
/// once with no derivatives on it.
pub fn localize(ctx: &Context, e: &Expression, which: &str) -> Result<Expression> {
    let mut out = Expression::zero();
    for t in &e.terms {
        let mut found = None;
        for (k, f) in t.factors.iter().enumerate() {
            if f.sym == which {
                if !f.derivs.is_empty() {
                    return Err(crate::Error::Other(format!(
                        "cannot localize: derivatives remain on `{which}` (integrate by parts first)"
                    )));
                }
                if found.is_some() {
                    return Err(crate::Error::Other(format!(
                        "cannot localize: `{which}` appears more than once in a term"
                    )));
                }
                found = Some(k);
            }
        }
        let k = found.ok_or_else(|| {
            crate::Error::Other(format!("cannot localize: a term has no `{which}` factor"))
        })?;
        let mut nt = t.clone();
        nt.factors.remove(k);
        out.terms.push(nt);
    }
    normalize(ctx, &out)
}

/// Integrand-level closure residual: lhs − rhs, with all derivatives moved
/// off the smearing `strip_sym` by parts, then simplified to canonical form.
/// An empty result certifies the equality of the two smeared functionals.
pub fn closure_residual(
    ctx: &Context,
    lhs: &Expression,
    rhs: &Expression,
    strip_sym: &str,
) -> Result<Expression> {
    let diff = lhs.clone().sub(rhs.clone());
    let stripped = strip_derivs_off(ctx, &diff, strip_sym)?;
    simplify_deep(ctx, &stripped)
}

/// Convenience: the canonical divergence factor ∇_b π^{ba} used when
/// recognizing momentum-constraint multiples.
pub fn momentum_divergence_factor(a_label: &str, dummy: &str) -> Factor {
    Factor::with_derivs(
        "pi",
        vec![Index::down(dummy)],
        vec![Index::up(dummy), Index::up(a_label)],
    )
}

/// Scale helper used by golden tests: ±1 as a rational.
pub fn sign_term(sign: i8) -> Term {
    Term::new(rat_int(sign as i64), vec![])
}
