//! Rendering of expressions to surface text and LaTeX.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Signed};

use crate::expr::{rat_str, Expression, Factor, Index, Term};

/// Build a per-term display renaming for internal dummy labels (`#k`) to
/// parseable identifiers (`i0`, `i1`, ...) avoiding the term's free labels.
fn display_renaming(t: &Term) -> BTreeMap<String, String> {
    let used: BTreeSet<&str> = t
        .factors
        .iter()
        .flat_map(|f| f.indices().map(|i| i.label.as_str()))
        .collect();
    let mut map = BTreeMap::new();
    let mut n = 0usize;
    for f in &t.factors {
        for i in f.indices() {
            if i.label.starts_with(crate::expr::DUMMY_PREFIX) && !map.contains_key(&i.label) {
                let name = loop {
                    let cand = format!("i{}", n);
                    n += 1;
                    if !used.contains(cand.as_str()) {
                        break cand;
                    }
                };
                map.insert(i.label.clone(), name);
            }
        }
    }
    map
}

fn idx_text(i: &Index, map: &BTreeMap<String, String>) -> String {
    let l = map.get(&i.label).unwrap_or(&i.label);
    format!("{}{}", if i.up { "^" } else { "_" }, l)
}

fn factor_text(f: &Factor, map: &BTreeMap<String, String>) -> String {
    let mut core = if f.slots.is_empty() {
        f.sym.clone()
    } else {
        let slots: Vec<String> = f.slots.iter().map(|i| idx_text(i, map)).collect();
        format!("{}[{}]", f.sym, slots.join(" "))
    };
    for d in f.derivs.iter().rev() {
        core = format!("D({}, {})", idx_text(d, map), core);
    }
    core
}

/// Render in the surface grammar; `parse(render(e))` canonicalizes back to
/// `e`.
pub fn to_text(e: &Expression) -> String {
    if e.terms.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (k, t) in e.terms.iter().enumerate() {
        let neg = t.coeff.is_negative();
        let mag = t.coeff.abs();
        if k == 0 {
            if neg {
                out.push_str("- ");
            }
        } else if neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let map = display_renaming(t);
        let mut parts: Vec<String> = vec![];
        if !mag.is_one() || (t.factors.is_empty() && t.dimpow == 0) {
            parts.push(rat_str(&mag));
        }
        if t.dimpow != 0 {
            if t.dimpow == 1 {
                parts.push("dim".to_string());
            } else if t.dimpow > 1 {
                parts.push(format!("dim^{}", t.dimpow));
            } else {
                // Negative powers of dim cannot appear from traces; render
                // defensively as repeated 1/dim in the coefficient. This
                // only occurs if a caller constructed one by hand.
                parts.push(format!("dim^{}", t.dimpow));
            }
        }
        for f in &t.factors {
            parts.push(factor_text(f, &map));
        }
        out.push_str(&parts.join(" * "));
    }
    out
}

fn idx_latex(i: &Index, map: &BTreeMap<String, String>) -> String {
    map.get(&i.label).unwrap_or(&i.label).clone()
}

fn sym_latex(name: &str) -> (String, bool) {
    // (base name, slots-as-subscript-in-order). All built-ins use fixed
    // variance so we render slots per their variance directly.
    let s = match name {
        "pi" => "\\pi",
        "g" => "g",
        "ginv" => "g",
        "delta" => "\\delta",
        "sqrtg" => "\\sqrt{g}",
        "isqrtg" => "\\tfrac{1}{\\sqrt{g}}",
        "Lambda" => "\\Lambda",
        "Ricci" => "R",
        "Riem" => "R",
        "dg" => "\\delta g",
        "dpi" => "\\delta \\pi",
        "xi" => "\\xi",
        "eta" => "\\eta",
        "phi" => "\\varphi",
        "psi" => "\\psi",
        other => return (other.to_string(), true),
    };
    (s.to_string(), true)
}

fn factor_latex(f: &Factor, map: &BTreeMap<String, String>) -> String {
    let (base, _) = sym_latex(&f.sym);
    let mut ups: Vec<String> = vec![];
    let mut downs: Vec<String> = vec![];
    for s in &f.slots {
        if s.up {
            ups.push(idx_latex(s, map));
        } else {
            downs.push(idx_latex(s, map));
        }
    }
    let mut core = base;
    if !ups.is_empty() {
        core = format!("{}^{{{}}}", core, ups.join(" "));
    }
    if !downs.is_empty() {
        core = format!("{}_{{{}}}", core, downs.join(" "));
    }
    for d in f.derivs.iter().rev() {
        core = format!("\\nabla_{{{}}} {}", idx_latex(d, map), core);
    }
    core
}

/// Render as LaTeX math (no surrounding delimiters).
pub fn to_latex(e: &Expression) -> String {
    if e.terms.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (k, t) in e.terms.iter().enumerate() {
        let neg = t.coeff.is_negative();
        let mag = t.coeff.abs();
        if k == 0 {
            if neg {
                out.push('-');
            }
        } else if neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let map = display_renaming(t);
        if !mag.is_one() || t.factors.is_empty() {
            if mag.denom() == &num::BigInt::from(1) {
                out.push_str(&format!("{}", mag.numer()));
            } else {
                out.push_str(&format!("\\tfrac{{{}}}{{{}}}", mag.numer(), mag.denom()));
            }
            out.push_str(" \\, ");
        }
        if t.dimpow != 0 {
            out.push_str(&format!("d^{{{}}} \\, ", t.dimpow));
        }
        let parts: Vec<String> = t.factors.iter().map(|f| factor_latex(f, &map)).collect();
        out.push_str(&parts.join(" \\, "));
    }
    out
}
