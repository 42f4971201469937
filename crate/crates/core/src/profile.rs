//! Convention profiles.
//!
//! Every golden result of this engine (Dirac-algebra signs, kernel
//! normalizations, certificate coefficients) is relative to a set of sign
//! and normalization conventions. Those conventions are baked into the
//! builders in `variation` and `bracket`; the profile file makes them
//! explicit, versioned, and auditable. Commands echo the active profile's
//! content hash so results can be tied to the exact convention set that
//! produced them.
//!
//! Loading a profile whose convention constants differ from the engine's
//! built-ins is an error: the engine does not reinterpret its builders at
//! runtime, it refuses to run under a convention it was not validated for.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// The convention set all shipped golden tests were validated under.
///
/// Field semantics:
/// - `dewitt_symmetric_coefficient`: coefficient of g_ac g_bd + g_ad g_bc
///   in the DeWitt supermetric G_abcd.
/// - `dewitt_trace_coefficient`: coefficient of −g_ab g_cd, as a function
///   of the spatial dimension.
/// - `potential_sign`: sign of the √g R term in the Hamiltonian constraint.
/// - `cosmological_sign`: sign of the 2√g Λ term.
/// - `momentum_constraint_coefficient`: overall factor of g_ae ∇_b π^be in
///   the momentum constraint density.
/// - `momentum_density_weight`: tensor-density weight assigned to π^ab
///   (covariant derivatives and metric variations account for it).
/// - `bracket_order`: which functional derivative ordering defines {F, P}.
/// - `metric_variation_symmetric`: δF = ∫ (δF/δg_ab) δg_ab with symmetric
///   kernel and no double-count factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConventionProfile {
    pub name: String,
    pub dewitt_symmetric_coefficient: String,
    pub dewitt_trace_coefficient: String,
    pub potential_sign: i8,
    pub cosmological_sign: i8,
    pub momentum_constraint_coefficient: i64,
    pub momentum_density_weight: i32,
    pub bracket_order: String,
    pub metric_variation_symmetric: bool,
}

impl Default for ConventionProfile {
    fn default() -> Self {
        ConventionProfile {
            name: "default".to_string(),
            dewitt_symmetric_coefficient: "1/2".to_string(),
            dewitt_trace_coefficient: "1/(dim-1)".to_string(),
            potential_sign: -1,
            cosmological_sign: 1,
            momentum_constraint_coefficient: -2,
            momentum_density_weight: 1,
            bracket_order: "dF/dg.dP/dpi - dP/dg.dF/dpi".to_string(),
            metric_variation_symmetric: true,
        }
    }
}

impl ConventionProfile {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(Error::from)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(Error::from)
    }

    /// Content hash of the canonical JSON serialization, echoed by the CLI
    /// so outputs can be tied to the convention set that produced them.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("profile serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        format!("sha256:{:x}", h.finalize())
    }

    /// Verify the profile's convention constants match the engine's
    /// built-ins. The name is free; the physics is not.
    pub fn check_supported(&self) -> Result<()> {
        let d = ConventionProfile::default();
        let mut mine = self.clone();
        mine.name = d.name.clone();
        if mine != d {
            return Err(Error::Other(format!(
                "convention profile `{}` requests constants the engine was not validated for; \
                 supported convention set: {}",
                self.name,
                d.to_json().unwrap_or_default()
            )));
        }
        Ok(())
    }

    /// Load a profile from a file and validate it.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        let p = Self::from_json(&s)?;
        p.check_supported()?;
        Ok(p)
    }
}

/// The shipped default profile file content, embedded so the engine works
/// without any files on disk.
pub const DEFAULT_PROFILE_JSON: &str = include_str!("../../../profiles/default.json");

/// The active default profile.
pub fn default_profile() -> ConventionProfile {
    ConventionProfile::default()
}
