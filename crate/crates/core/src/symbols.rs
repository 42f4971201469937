//! Tensor symbol registry: slot signatures, index symmetries, grading data
//! and behaviour classes for every atomic symbol the engine knows about.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// How a symbol behaves under the covariant derivative and under
/// functional variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SymbolClass {
    /// Built from the spatial metric (g, ginv, delta, sqrtg, isqrtg,
    /// Ricci, Riem) or a constant (Lambda). Varies under δg per built-in
    /// rules; the covariantly constant ones are inert under ∇.
    Metric,
    /// The canonical momentum density π^{ab}.
    Momentum,
    /// An external smearing / test field: inert under both δg and δπ,
    /// carries covariant derivatives freely.
    Smearing,
    /// A formal variation placeholder (dg, dpi).
    Variation,
}

/// A slot permutation together with its sign: applying `perm` to the slot
/// list multiplies the term by `sign`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedPerm {
    pub perm: Vec<usize>,
    pub sign: i8,
}

/// Static description of a tensor symbol.
#[derive(Debug, Clone)]
pub struct SymbolInfo {
    pub name: String,
    /// Expected variance per slot: `true` = upper.
    pub slots_up: Vec<bool>,
    /// Full slot-symmetry group (closure of the generators), including the
    /// identity. Elements permute slots and carry a sign.
    pub group: Vec<SignedPerm>,
    pub class: SymbolClass,
    /// Contribution to the derivative degree of a term (2 for curvature
    /// symbols, 0 otherwise). Derivative prefixes add on top.
    pub deriv_degree: u32,
    /// Contribution to the momentum power of a term.
    pub momentum_power: u32,
    /// Whether the covariant derivative annihilates the symbol.
    pub nabla_inert: bool,
    /// Tensor-density weight under ∇ (π and its formal variation carry
    /// weight 1): the covariant derivative subtracts
    /// `weight · Γ^c_{cb} T` and the metric variation of ∇T picks up
    /// `−weight · δΓ^c_{cb} T`.
    pub density_weight: i32,
}

fn close_group(arity: usize, generators: &[(Vec<usize>, i8)]) -> Vec<SignedPerm> {
    let id = SignedPerm {
        perm: (0..arity).collect(),
        sign: 1,
    };
    let mut elems: Vec<SignedPerm> = vec![id];
    loop {
        let mut added = false;
        let snapshot = elems.clone();
        for e in &snapshot {
            for (gp, gs) in generators {
                // compose: first apply e, then g.
                let perm: Vec<usize> = (0..arity).map(|i| gp[e.perm[i]]).collect();
                let sign = e.sign * gs;
                if !elems.iter().any(|x| x.perm == perm) {
                    elems.push(SignedPerm { perm, sign });
                    added = true;
                } else if let Some(x) = elems.iter().find(|x| x.perm == perm) {
                    // A permutation appearing with both signs would make the
                    // symbol identically zero; built-ins never do this.
                    debug_assert_eq!(x.sign, sign, "inconsistent symmetry group");
                }
            }
        }
        if !added {
            break;
        }
    }
    elems
}

/// Registry of known symbols.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    map: BTreeMap<String, SymbolInfo>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry::default()
    }

    /// Registry preloaded with the canonical-gravity symbol set.
    pub fn with_builtins() -> Self {
        let mut r = Registry::default();
        let sym2 = vec![(vec![1usize, 0usize], 1i8)];
        let anti01 = (vec![1usize, 0, 2, 3], -1i8);
        let anti23 = (vec![0usize, 1, 3, 2], -1i8);
        let pairswap = (vec![2usize, 3, 0, 1], 1i8);

        r.register_full("g", vec![false, false], &sym2, SymbolClass::Metric, 0, 0, true);
        r.register_full("ginv", vec![true, true], &sym2, SymbolClass::Metric, 0, 0, true);
        r.register_full("delta", vec![false, true], &[], SymbolClass::Metric, 0, 0, true);
        r.register_full("sqrtg", vec![], &[], SymbolClass::Metric, 0, 0, true);
        r.register_full("isqrtg", vec![], &[], SymbolClass::Metric, 0, 0, true);
        r.register_full("Lambda", vec![], &[], SymbolClass::Metric, 0, 0, true);
        r.register_full("pi", vec![true, true], &sym2, SymbolClass::Momentum, 0, 1, false);
        r.register_full("Ricci", vec![false, false], &sym2, SymbolClass::Metric, 2, 0, false);
        r.register_full(
            "Riem",
            vec![false, false, false, false],
            &[anti01, anti23, pairswap],
            SymbolClass::Metric,
            2,
            0,
            false,
        );
        r.register_full("dg", vec![false, false], &sym2, SymbolClass::Variation, 0, 0, false);
        r.register_full("dpi", vec![true, true], &sym2, SymbolClass::Variation, 0, 1, false);
        // Common smearing fields. More can be registered by callers.
        for s in ["f", "h", "N", "M", "u", "w"] {
            r.register_full(s, vec![], &[], SymbolClass::Smearing, 0, 0, false);
        }
        for s in ["xi", "eta"] {
            r.register_full(s, vec![true], &[], SymbolClass::Smearing, 0, 0, false);
        }
        // Symmetric two-index test fields (used e.g. by the functional-curl
        // check and the Lie-drag pairing).
        r.register_full("phi", vec![false, false], &sym2, SymbolClass::Smearing, 0, 0, false);
        r.register_full("psi", vec![false, false], &sym2, SymbolClass::Smearing, 0, 0, false);
        r.register_full("tup", vec![true, true], &sym2, SymbolClass::Smearing, 0, 0, false);
        // The canonical momentum is a weight-1 tensor density.
        r.map.get_mut("pi").unwrap().density_weight = 1;
        r.map.get_mut("dpi").unwrap().density_weight = 1;
        r
    }

    #[allow(clippy::too_many_arguments)]
    pub fn register_full(
        &mut self,
        name: &str,
        slots_up: Vec<bool>,
        generators: &[(Vec<usize>, i8)],
        class: SymbolClass,
        deriv_degree: u32,
        momentum_power: u32,
        nabla_inert: bool,
    ) {
        let group = close_group(slots_up.len(), generators);
        self.map.insert(
            name.to_string(),
            SymbolInfo {
                name: name.to_string(),
                slots_up,
                group,
                class,
                deriv_degree,
                momentum_power,
                nabla_inert,
                density_weight: 0,
            },
        );
    }

    /// Register an external smearing field with the given slot signature and
    /// optional symmetry generators.
    pub fn register_smearing(
        &mut self,
        name: &str,
        slots_up: Vec<bool>,
        generators: &[(Vec<usize>, i8)],
    ) {
        self.register_full(name, slots_up, generators, SymbolClass::Smearing, 0, 0, false);
    }

    pub fn get(&self, name: &str) -> Result<&SymbolInfo> {
        self.map
            .get(name)
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }
}
