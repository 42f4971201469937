//! Numeric oracle: evaluates symbolic expressions on randomized smooth
//! charts over the periodic box [0, 2π)^d and provides an independent
//! finite-difference path for functional derivatives.
//!
//! Every field is a small trigonometric (finite Fourier) polynomial, so
//! partial derivatives of any order are exact and trapezoid quadrature over
//! the box is spectrally accurate. Covariant derivatives, curvature, and
//! index contractions are computed with truncated multivariate Taylor jets,
//! entirely independently of the symbolic rules they are used to check.
//! The oracle refutes, it never certifies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::Expression;
use crate::symbols::SymbolClass;
use crate::{Context, Error, Result};

/// Chart specification (JSON-serializable external interface).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartSpec {
    pub dim: u32,
    pub seed: u64,
    /// Amplitude of the metric perturbation around the flat background.
    #[serde(default = "default_metric_amp")]
    pub metric_amplitude: f64,
    /// Amplitude of the momentum and smearing fields.
    #[serde(default = "default_field_amp")]
    pub field_amplitude: f64,
    /// Number of random Fourier modes per field component.
    #[serde(default = "default_modes")]
    pub modes: u32,
    /// Finite-difference stencil order for the FD paths (2 or 4).
    #[serde(default = "default_stencil")]
    pub stencil_order: u32,
    /// Comparison tolerance (relative).
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    /// Project the momentum onto its transverse part so that
    /// `∇_b π^{ab} = 0`. Requires `metric_amplitude = 0`.
    #[serde(default)]
    pub transverse_momentum: bool,
}

fn default_metric_amp() -> f64 {
    0.05
}
fn default_field_amp() -> f64 {
    0.4
}
fn default_modes() -> u32 {
    2
}
fn default_stencil() -> u32 {
    2
}
fn default_tol() -> f64 {
    1e-8
}

impl ChartSpec {
    pub fn new(dim: u32, seed: u64) -> Self {
        ChartSpec {
            dim,
            seed,
            metric_amplitude: default_metric_amp(),
            field_amplitude: default_field_amp(),
            modes: default_modes(),
            stencil_order: default_stencil(),
            tolerance: default_tol(),
            transverse_momentum: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.dim) {
            return Err(Error::Chart(format!("dim {} out of range", self.dim)));
        }
        if self.transverse_momentum && self.metric_amplitude != 0.0 {
            return Err(Error::Chart(
                "transverse momentum projection requires a flat chart (metric_amplitude = 0)"
                    .into(),
            ));
        }
        if self.stencil_order != 2 && self.stencil_order != 4 {
            return Err(Error::Chart("stencil_order must be 2 or 4".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Truncated multivariate Taylor jets
// ---------------------------------------------------------------------------

/// Shared exponent table for jets of a fixed (dim, order).
#[derive(Debug)]
pub struct JetCtx {
    pub dim: usize,
    pub order: usize,
    /// All exponent multi-indices with |α| ≤ order, graded lexicographic.
    pub exps: Vec<Vec<u8>>,
    /// Precomputed products: for (i, j) with |αi + αj| ≤ order, target k.
    mul_pairs: Vec<Vec<(usize, usize)>>,
    /// For the shift (∂ in direction d): coefficient and source index.
    shift: Vec<Vec<(usize, f64)>>, // per direction: (target_index, factor) from source enumeration
}

impl JetCtx {
    pub fn new(dim: usize, order: usize) -> std::rc::Rc<Self> {
        let mut exps: Vec<Vec<u8>> = vec![];
        // enumerate all exponent vectors with sum ≤ order
        fn gen(cur: &mut Vec<u8>, dim: usize, left: usize, out: &mut Vec<Vec<u8>>) {
            if cur.len() == dim {
                out.push(cur.clone());
                return;
            }
            for e in 0..=left {
                cur.push(e as u8);
                gen(cur, dim, left - e, out);
                cur.pop();
            }
        }
        let mut cur = vec![];
        gen(&mut cur, dim, order, &mut exps);
        exps.sort_by_key(|e| {
            (
                e.iter().map(|&x| x as usize).sum::<usize>(),
                e.clone(),
            )
        });
        let index: std::collections::HashMap<Vec<u8>, usize> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        // multiplication table, grouped by target index
        let mut mul_pairs: Vec<Vec<(usize, usize)>> = vec![vec![]; exps.len()];
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                let sum: usize = a.iter().zip(b).map(|(&x, &y)| (x + y) as usize).sum();
                if sum > order {
                    continue;
                }
                let key: Vec<u8> = a.iter().zip(b).map(|(&x, &y)| x + y).collect();
                let k = index[&key];
                mul_pairs[k].push((i, j));
            }
        }
        // derivative (shift) tables: coefficient of ∂_d f at exponent α is
        // (α_d + 1) * f[α + e_d].
        let mut shift: Vec<Vec<(usize, f64)>> = vec![];
        for d in 0..dim {
            let mut tab = vec![(usize::MAX, 0.0); exps.len()];
            for (i, a) in exps.iter().enumerate() {
                let mut up = a.clone();
                up[d] += 1;
                if let Some(&src) = index.get(&up) {
                    tab[i] = (src, (a[d] as f64) + 1.0);
                }
            }
            shift.push(tab);
        }
        std::rc::Rc::new(JetCtx {
            dim,
            order,
            exps,
            mul_pairs,
            shift,
        })
    }
}

/// A truncated Taylor expansion around the evaluation point.
#[derive(Debug, Clone)]
pub struct Jet {
    pub ctx: std::rc::Rc<JetCtx>,
    pub c: Vec<f64>,
}

impl Jet {
    pub fn zero(ctx: &std::rc::Rc<JetCtx>) -> Self {
        Jet {
            ctx: ctx.clone(),
            c: vec![0.0; ctx.exps.len()],
        }
    }
    pub fn constant(ctx: &std::rc::Rc<JetCtx>, v: f64) -> Self {
        let mut j = Jet::zero(ctx);
        j.c[0] = v;
        j
    }
    pub fn value(&self) -> f64 {
        self.c[0]
    }
    pub fn add(&self, o: &Jet) -> Jet {
        let mut r = self.clone();
        for (a, b) in r.c.iter_mut().zip(&o.c) {
            *a += b;
        }
        r
    }
    pub fn add_assign(&mut self, o: &Jet) {
        for (a, b) in self.c.iter_mut().zip(&o.c) {
            *a += b;
        }
    }
    pub fn sub(&self, o: &Jet) -> Jet {
        let mut r = self.clone();
        for (a, b) in r.c.iter_mut().zip(&o.c) {
            *a -= b;
        }
        r
    }
    pub fn scale(&self, s: f64) -> Jet {
        let mut r = self.clone();
        for a in r.c.iter_mut() {
            *a *= s;
        }
        r
    }
    pub fn mul(&self, o: &Jet) -> Jet {
        let mut r = Jet::zero(&self.ctx);
        for (k, pairs) in self.ctx.mul_pairs.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, j) in pairs {
                acc += self.c[i] * o.c[j];
            }
            r.c[k] = acc;
        }
        r
    }
    /// Partial derivative ∂_d (valid to one order less; higher coefficients
    /// that would need unknown data are simply absent from the table and
    /// left at zero — callers must budget the base order accordingly).
    pub fn diff(&self, d: usize) -> Jet {
        let mut r = Jet::zero(&self.ctx);
        for (i, &(src, fac)) in self.ctx.shift[d].iter().enumerate() {
            if src != usize::MAX {
                r.c[i] = self.c[src] * fac;
            }
        }
        r
    }
    /// 1 / self, via the geometric series around the constant part.
    pub fn recip(&self) -> Jet {
        let a0 = self.c[0];
        assert!(a0.abs() > 1e-12, "jet reciprocal of near-zero");
        let mut eps = self.scale(1.0 / a0);
        eps.c[0] = 0.0;
        let mut acc = Jet::constant(&self.ctx, 1.0);
        let mut pow = Jet::constant(&self.ctx, 1.0);
        for _ in 0..self.ctx.order {
            pow = pow.mul(&eps).scale(-1.0);
            acc.add_assign(&pow);
        }
        acc.scale(1.0 / a0)
    }
    /// sqrt(self), via the binomial series around the constant part.
    pub fn sqrt(&self) -> Jet {
        let a0 = self.c[0];
        assert!(a0 > 1e-12, "jet sqrt of non-positive");
        let mut eps = self.scale(1.0 / a0);
        eps.c[0] = 0.0;
        let mut acc = Jet::constant(&self.ctx, 1.0);
        let mut pow = Jet::constant(&self.ctx, 1.0);
        let mut coef = 1.0;
        for k in 1..=self.ctx.order {
            coef *= (0.5 - (k as f64 - 1.0)) / k as f64;
            pow = pow.mul(&eps);
            acc.add_assign(&pow.scale(coef));
        }
        acc.scale(a0.sqrt())
    }
}

// ---------------------------------------------------------------------------
// Trigonometric fields
// ---------------------------------------------------------------------------

/// One scalar component: bias + Σ amp · sin(k·x + phase).
#[derive(Debug, Clone)]
pub struct TrigScalar {
    pub bias: f64,
    pub modes: Vec<(f64, Vec<i32>, f64)>,
}

impl TrigScalar {
    fn random(rng: &mut ChaCha8Rng, dim: usize, nmodes: u32, amp: f64, bias: f64) -> Self {
        let mut modes = vec![];
        for _ in 0..nmodes {
            let a = amp * (0.5 + rng.gen::<f64>());
            let k: Vec<i32> = (0..dim).map(|_| rng.gen_range(-2..=2)).collect();
            let phase = rng.gen::<f64>() * std::f64::consts::TAU;
            modes.push((a, k, phase));
        }
        TrigScalar { bias, modes }
    }

    /// Exact jet at point x.
    pub fn jet(&self, ctx: &std::rc::Rc<JetCtx>, x: &[f64]) -> Jet {
        let mut j = Jet::constant(ctx, self.bias);
        for (amp, k, phase) in &self.modes {
            let arg: f64 = k
                .iter()
                .zip(x)
                .map(|(&ki, &xi)| ki as f64 * xi)
                .sum::<f64>()
                + phase;
            for (idx, e) in ctx.exps.iter().enumerate() {
                let total: usize = e.iter().map(|&v| v as usize).sum();
                // ∂^α sin(arg) = k^α sin(arg + total·π/2)
                let kpow: f64 = e
                    .iter()
                    .zip(k)
                    .map(|(&ei, &ki)| (ki as f64).powi(ei as i32))
                    .product();
                let mut fact = 1.0;
                for v in e.iter() {
                    for q in 1..=(*v as usize) {
                        fact *= q as f64;
                    }
                }
                // Taylor coefficient = ∂^α f / α!
                j.c[idx] += amp * kpow
                    * (arg + (total as f64) * std::f64::consts::FRAC_PI_2).sin()
                    / fact;
            }
        }
        j
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.bias
            + self
                .modes
                .iter()
                .map(|(a, k, p)| {
                    (k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum::<f64>() + p).sin() * a
                })
                .sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// Chart
// ---------------------------------------------------------------------------

/// A realized chart: concrete random fields for the metric, momentum, and
/// every smearing symbol encountered.
pub struct Chart {
    pub spec: ChartSpec,
    pub dim: usize,
    /// g_ab = δ_ab + pert_ab (+ ε · bump_ab when a bump is active).
    metric_pert: Vec<TrigScalar>, // symmetric, row-major upper storage d*d (full)
    momentum: Vec<TrigScalar>,    // symmetric full d*d
    bump: Option<(f64, Vec<TrigScalar>)>,
    smearing_cache: std::cell::RefCell<std::collections::HashMap<String, Vec<TrigScalar>>>,
}

fn sym_store(dim: usize, rng: &mut ChaCha8Rng, nmodes: u32, amp: f64, bias_diag: f64) -> Vec<TrigScalar> {
    // Build symmetric fields: fill upper triangle, mirror.
    let mut fields: Vec<Option<TrigScalar>> = vec![None; dim * dim];
    for a in 0..dim {
        for b in a..dim {
            let bias = if a == b { bias_diag } else { 0.0 };
            let f = TrigScalar::random(rng, dim, nmodes, amp, bias);
            fields[a * dim + b] = Some(f.clone());
            fields[b * dim + a] = Some(f);
        }
    }
    fields.into_iter().map(|f| f.unwrap()).collect()
}

impl Chart {
    pub fn new(spec: ChartSpec) -> Result<Self> {
        spec.validate()?;
        let dim = spec.dim as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let metric_pert = sym_store(dim, &mut rng, spec.modes, spec.metric_amplitude, 0.0);
        let mut momentum = sym_store(dim, &mut rng, spec.modes, spec.field_amplitude, 0.0);
        if spec.transverse_momentum {
            // Flat chart: project each Fourier mode of π^{ab} with the
            // transverse projector P = I − k̂ k̂ᵀ (exact for g = δ).
            let mut by_mode: std::collections::HashMap<(Vec<i32>, u64), Vec<Vec<f64>>> =
                Default::default();
            // Re-sample as coherent modes: simplest exact construction is to
            // rebuild the momentum from scratch with matrix amplitudes.
            let mut rng2 = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e3779b97f4a7c15);
            let mut fields: Vec<TrigScalar> = (0..dim * dim)
                .map(|_| TrigScalar {
                    bias: 0.0,
                    modes: vec![],
                })
                .collect();
            for m in 0..spec.modes {
                let amp_mat: Vec<Vec<f64>> = (0..dim)
                    .map(|_| {
                        (0..dim)
                            .map(|_| spec.field_amplitude * (rng2.gen::<f64>() - 0.5))
                            .collect()
                    })
                    .collect();
                // symmetrize
                let mut a = vec![vec![0.0; dim]; dim];
                for i in 0..dim {
                    for j in 0..dim {
                        a[i][j] = 0.5 * (amp_mat[i][j] + amp_mat[j][i]);
                    }
                }
                let k: Vec<i32> = (0..dim).map(|_| rng2.gen_range(-2..=2i32)).collect();
                let phase = rng2.gen::<f64>() * std::f64::consts::TAU;
                let knorm2: f64 = k.iter().map(|&ki| (ki as f64).powi(2)).sum();
                let proj = |a: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                    if knorm2 == 0.0 {
                        return a.clone();
                    }
                    let kf: Vec<f64> = k.iter().map(|&ki| ki as f64).collect();
                    // P A P with P = I − kkᵀ/|k|²
                    let mut ap = vec![vec![0.0; dim]; dim];
                    for i in 0..dim {
                        for j in 0..dim {
                            let mut s = a[i][j];
                            // subtract k-projections
                            let mut ka_j = 0.0;
                            let mut ka_i = 0.0;
                            let mut kak = 0.0;
                            for p in 0..dim {
                                ka_j += kf[p] * a[p][j];
                                ka_i += kf[p] * a[i][p];
                                for q in 0..dim {
                                    kak += kf[p] * a[p][q] * kf[q];
                                }
                            }
                            s -= kf[i] * ka_j / knorm2;
                            s -= ka_i * kf[j] / knorm2;
                            s += kf[i] * kf[j] * kak / (knorm2 * knorm2);
                            ap[i][j] = s;
                        }
                    }
                    ap
                };
                let ap = proj(&a);
                let _ = m;
                for i in 0..dim {
                    for j in 0..dim {
                        fields[i * dim + j].modes.push((ap[i][j], k.clone(), phase));
                    }
                }
            }
            by_mode.clear();
            momentum = fields;
        }
        Ok(Chart {
            spec,
            dim,
            metric_pert,
            momentum,
            bump: None,
            smearing_cache: Default::default(),
        })
    }

    /// A copy of this chart with the metric perturbed by `eps · bump`.
    pub fn with_metric_bump(&self, eps: f64, bump_seed: u64) -> Chart {
        let mut rng = ChaCha8Rng::seed_from_u64(bump_seed);
        let bump = sym_store(self.dim, &mut rng, self.spec.modes, 1.0, 0.0);
        Chart {
            spec: self.spec.clone(),
            dim: self.dim,
            metric_pert: self.metric_pert.clone(),
            momentum: self.momentum.clone(),
            bump: Some((eps, bump)),
            smearing_cache: std::cell::RefCell::new(self.smearing_cache.borrow().clone()),
        }
    }

    /// The bump field value at a point (for pairing against a kernel).
    pub fn bump_value(&self, bump_seed: u64, x: &[f64]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(bump_seed);
        let bump = sym_store(self.dim, &mut rng, self.spec.modes, 1.0, 0.0);
        bump.iter().map(|f| f.value(x)).collect()
    }

    fn smearing_fields(&self, name: &str, ncomp: usize) -> Vec<TrigScalar> {
        let mut cache = self.smearing_cache.borrow_mut();
        cache
            .entry(name.to_string())
            .or_insert_with(|| {
                // Deterministic per (chart seed, symbol name).
                let mut h: u64 = self.spec.seed ^ 0xcbf29ce484222325;
                for b in name.bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x100000001b3);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(h);
                (0..ncomp)
                    .map(|_| {
                        TrigScalar::random(
                            &mut rng,
                            self.dim,
                            self.spec.modes,
                            self.spec.field_amplitude,
                            0.3,
                        )
                    })
                    .collect()
            })
            .clone()
    }
}

// ---------------------------------------------------------------------------
// Tensor evaluation via jets
// ---------------------------------------------------------------------------

/// A dense component array over a list of index variances.
#[derive(Debug, Clone)]
struct JArr {
    dim: usize,
    vars: Vec<bool>, // true = up
    comps: Vec<Jet>, // row-major over indices
}

impl JArr {
    fn n(&self) -> usize {
        self.comps.len()
    }
    fn idx(&self, multi: &[usize]) -> usize {
        let mut k = 0;
        for &m in multi {
            k = k * self.dim + m;
        }
        k
    }
}

/// Evaluator at a fixed point with a fixed jet order.
struct PointEval<'a> {
    chart: &'a Chart,
    jctx: std::rc::Rc<JetCtx>,
    x: Vec<f64>,
    cache: std::collections::HashMap<(String, usize), JArr>,
}

impl<'a> PointEval<'a> {
    fn new(chart: &'a Chart, order: usize, x: Vec<f64>) -> Self {
        PointEval {
            chart,
            jctx: JetCtx::new(chart.dim, order),
            x,
            cache: Default::default(),
        }
    }

    fn metric(&self) -> JArr {
        let d = self.chart.dim;
        let mut comps = vec![];
        for a in 0..d {
            for b in 0..d {
                let mut j = self.chart.metric_pert[a * d + b].jet(&self.jctx, &self.x);
                if a == b {
                    j.c[0] += 1.0;
                }
                if let Some((eps, bump)) = &self.chart.bump {
                    j.add_assign(&bump[a * d + b].jet(&self.jctx, &self.x).scale(*eps));
                }
                comps.push(j);
            }
        }
        JArr {
            dim: d,
            vars: vec![false, false],
            comps,
        }
    }

    fn metric_inv(&self, g: &JArr) -> JArr {
        let d = self.chart.dim;
        // Gauss-Jordan on jets.
        let mut a: Vec<Vec<Jet>> = (0..d)
            .map(|i| (0..d).map(|j| g.comps[i * d + j].clone()).collect())
            .collect();
        let mut inv: Vec<Vec<Jet>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| Jet::constant(&self.jctx, if i == j { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        for col in 0..d {
            let piv = a[col][col].recip();
            for j in 0..d {
                a[col][j] = a[col][j].mul(&piv);
                inv[col][j] = inv[col][j].mul(&piv);
            }
            for r in 0..d {
                if r == col {
                    continue;
                }
                let f = a[r][col].clone();
                for j in 0..d {
                    let t = a[col][j].mul(&f);
                    a[r][j] = a[r][j].sub(&t);
                    let t = inv[col][j].mul(&f);
                    inv[r][j] = inv[r][j].sub(&t);
                }
            }
        }
        JArr {
            dim: d,
            vars: vec![true, true],
            comps: (0..d * d).map(|k| inv[k / d][k % d].clone()).collect(),
        }
    }

    fn det_metric(&self, g: &JArr) -> Jet {
        let d = self.chart.dim;
        // LU-free: cofactor for small d via permutation expansion is
        // factorial; use Gaussian elimination tracking the product of pivots.
        let mut a: Vec<Vec<Jet>> = (0..d)
            .map(|i| (0..d).map(|j| g.comps[i * d + j].clone()).collect())
            .collect();
        let mut det = Jet::constant(&self.jctx, 1.0);
        for col in 0..d {
            det = det.mul(&a[col][col]);
            let piv = a[col][col].recip();
            for r in col + 1..d {
                let f = a[r][col].mul(&piv);
                for j in col..d {
                    let t = a[col][j].mul(&f);
                    a[r][j] = a[r][j].sub(&t);
                }
            }
        }
        det
    }

    fn christoffel(&self, g: &JArr, ginv: &JArr) -> JArr {
        let d = self.chart.dim;
        // Γ^c_{ab}, stored with multi-index [c, a, b], variances [up, down, down].
        let mut comps = vec![Jet::zero(&self.jctx); d * d * d];
        for c in 0..d {
            for a in 0..d {
                for b in 0..d {
                    let mut acc = Jet::zero(&self.jctx);
                    for e in 0..d {
                        let t1 = g.comps[b * d + e].diff(a);
                        let t2 = g.comps[a * d + e].diff(b);
                        let t3 = g.comps[a * d + b].diff(e);
                        let sum = t1.add(&t2).sub(&t3);
                        acc.add_assign(&ginv.comps[c * d + e].mul(&sum));
                    }
                    comps[(c * d + a) * d + b] = acc.scale(0.5);
                }
            }
        }
        JArr {
            dim: d,
            vars: vec![true, false, false],
            comps,
        }
    }

    /// Riemann with mixed indices: R^c_{dab} = ∂_a Γ^c_{bd} − ∂_b Γ^c_{ad}
    /// + Γ^c_{ae} Γ^e_{bd} − Γ^c_{be} Γ^e_{ad}.
    fn riemann_mixed(&self, gamma: &JArr) -> JArr {
        let d = self.chart.dim;
        let gi = |c: usize, a: usize, b: usize| &gamma.comps[(c * d + a) * d + b];
        let mut comps = vec![Jet::zero(&self.jctx); d * d * d * d];
        for c in 0..d {
            for dd in 0..d {
                for a in 0..d {
                    for b in 0..d {
                        let mut acc = gi(c, b, dd).diff(a).sub(&gi(c, a, dd).diff(b));
                        for e in 0..d {
                            acc.add_assign(&gi(c, a, e).mul(gi(e, b, dd)));
                            let t = gi(c, b, e).mul(gi(e, a, dd));
                            acc = acc.sub(&t);
                        }
                        comps[((c * d + dd) * d + a) * d + b] = acc;
                    }
                }
            }
        }
        JArr {
            dim: d,
            vars: vec![true, false, false, false],
            comps,
        }
    }

    /// Covariant derivative: prepend one lower index. `weight` is the
    /// tensor-density weight of the differentiated object: the derivative
    /// subtracts `weight · Γ^c_{ci} T`.
    fn cov_deriv(&self, t: &JArr, gamma: &JArr, weight: i32) -> JArr {
        let d = self.chart.dim;
        let rank = t.vars.len();
        let mut vars = vec![false];
        vars.extend(t.vars.iter().copied());
        let n_new = d * t.n();
        let mut comps = vec![Jet::zero(&self.jctx); n_new];
        let gi = |c: usize, a: usize, b: usize| &gamma.comps[(c * d + a) * d + b];
        // iterate over all new multi-indices
        let mut multi = vec![0usize; rank + 1];
        for k in 0..n_new {
            // decode k
            let mut kk = k;
            for p in (0..rank + 1).rev() {
                multi[p] = kk % d;
                kk /= d;
            }
            let i = multi[0];
            let inner = &multi[1..];
            let mut acc = t.comps[t.idx(inner)].diff(i);
            for (p, &up) in t.vars.iter().enumerate() {
                let orig = inner[p];
                let mut m2: Vec<usize> = inner.to_vec();
                for e in 0..d {
                    m2[p] = e;
                    let te = &t.comps[t.idx(&m2)];
                    if up {
                        // +Γ^{orig}_{i e} T^{..e..}
                        acc.add_assign(&gi(orig, i, e).mul(te));
                    } else {
                        // −Γ^{e}_{i orig} T_{..e..}
                        let t2 = gi(e, i, orig).mul(te);
                        acc = acc.sub(&t2);
                    }
                }
            }
            if weight != 0 {
                let mut tr = Jet::zero(&self.jctx);
                for c in 0..d {
                    tr.add_assign(gi(c, c, i));
                }
                let t2 = tr.mul(&t.comps[t.idx(inner)]).scale(weight as f64);
                acc = acc.sub(&t2);
            }
            comps[k] = acc;
        }
        JArr {
            dim: d,
            vars,
            comps,
        }
    }

    /// Base (underived) array for a symbol.
    fn base(&mut self, ctx: &Context, sym: &str) -> Result<JArr> {
        let d = self.chart.dim;
        let g = self.metric();
        let arr = match sym {
            "g" => g,
            "ginv" => {
                let gi = self.metric_inv(&g);
                gi
            }
            "delta" => {
                let mut comps = vec![];
                for a in 0..d {
                    for b in 0..d {
                        comps.push(Jet::constant(&self.jctx, if a == b { 1.0 } else { 0.0 }));
                    }
                }
                JArr {
                    dim: d,
                    vars: vec![false, true],
                    comps,
                }
            }
            "sqrtg" => JArr {
                dim: d,
                vars: vec![],
                comps: vec![self.det_metric(&g).sqrt()],
            },
            "isqrtg" => JArr {
                dim: d,
                vars: vec![],
                comps: vec![self.det_metric(&g).sqrt().recip()],
            },
            "Lambda" => JArr {
                dim: d,
                vars: vec![],
                comps: vec![Jet::constant(&self.jctx, 0.35)],
            },
            "pi" => {
                let mut comps = vec![];
                for a in 0..d {
                    for b in 0..d {
                        comps.push(self.chart.momentum[a * d + b].jet(&self.jctx, &self.x));
                    }
                }
                JArr {
                    dim: d,
                    vars: vec![true, true],
                    comps,
                }
            }
            "Riem" => {
                let gi = self.metric_inv(&g);
                let gamma = self.christoffel(&g, &gi);
                let rm = self.riemann_mixed(&gamma);
                // lower the first index: Riem_{hdab} = g_{hc} R^c_{dab}
                let mut comps = vec![Jet::zero(&self.jctx); d * d * d * d];
                for h in 0..d {
                    for dd in 0..d {
                        for a in 0..d {
                            for b in 0..d {
                                let mut acc = Jet::zero(&self.jctx);
                                for c in 0..d {
                                    acc.add_assign(
                                        &g.comps[h * d + c]
                                            .mul(&rm.comps[((c * d + dd) * d + a) * d + b]),
                                    );
                                }
                                comps[((h * d + dd) * d + a) * d + b] = acc;
                            }
                        }
                    }
                }
                JArr {
                    dim: d,
                    vars: vec![false; 4],
                    comps,
                }
            }
            "Ricci" => {
                let gi = self.metric_inv(&g);
                let gamma = self.christoffel(&g, &gi);
                let rm = self.riemann_mixed(&gamma);
                let mut comps = vec![Jet::zero(&self.jctx); d * d];
                for dd in 0..d {
                    for b in 0..d {
                        let mut acc = Jet::zero(&self.jctx);
                        for a in 0..d {
                            acc.add_assign(&rm.comps[((a * d + dd) * d + a) * d + b]);
                        }
                        comps[dd * d + b] = acc;
                    }
                }
                JArr {
                    dim: d,
                    vars: vec![false, false],
                    comps,
                }
            }
            other => {
                let info = ctx.registry.get(other)?;
                match info.class {
                    SymbolClass::Smearing => {
                        let ncomp = d.pow(info.slots_up.len() as u32);
                        let fields = self.chart.smearing_fields(other, ncomp);
                        // Symmetrize fields per the symbol's symmetry group
                        // so e.g. phi_{ab} is honestly symmetric.
                        let rank = info.slots_up.len();
                        let mut comps = vec![Jet::zero(&self.jctx); ncomp];
                        let mut multi = vec![0usize; rank];
                        for k in 0..ncomp {
                            let mut kk = k;
                            for p in (0..rank).rev() {
                                multi[p] = kk % d;
                                kk /= d;
                            }
                            let mut acc = Jet::zero(&self.jctx);
                            for elem in &info.group {
                                let mut m2 = vec![0usize; rank];
                                for (q, &src) in elem.perm.iter().enumerate() {
                                    m2[q] = multi[src];
                                }
                                let mut flat = 0usize;
                                for &m in &m2 {
                                    flat = flat * d + m;
                                }
                                let j = fields[flat].jet(&self.jctx, &self.x);
                                acc.add_assign(&j.scale(elem.sign as f64));
                            }
                            comps[k] = acc.scale(1.0 / info.group.len() as f64);
                        }
                        JArr {
                            dim: d,
                            vars: info.slots_up.clone(),
                            comps,
                        }
                    }
                    _ => {
                        return Err(Error::Other(format!(
                            "oracle cannot evaluate symbol `{}`",
                            other
                        )))
                    }
                }
            }
        };
        Ok(arr)
    }

    /// Array for `∇^nderivs sym` with the derivative indices outermost-first.
    fn derived(&mut self, ctx: &Context, sym: &str, nderivs: usize) -> Result<JArr> {
        if let Some(a) = self.cache.get(&(sym.to_string(), nderivs)) {
            return Ok(a.clone());
        }
        let arr = if nderivs == 0 {
            self.base(ctx, sym)?
        } else {
            let inner = self.derived(ctx, sym, nderivs - 1)?;
            let g = self.metric();
            let gi = self.metric_inv(&g);
            let gamma = self.christoffel(&g, &gi);
            let weight = ctx.registry.get(sym).map(|i| i.density_weight).unwrap_or(0);
            self.cov_deriv(&inner, &gamma, weight)
        };
        self.cache.insert((sym.to_string(), nderivs), arr.clone());
        Ok(arr)
    }
}

/// Required jet order for an expression: deepest nesting of metric
/// derivatives any factor needs, plus its own derivative prefix.
fn needed_order(e: &Expression) -> usize {
    let mut k = 2; // headroom
    for t in &e.terms {
        for f in &t.factors {
            let intrinsic = match f.sym.as_str() {
                "Riem" | "Ricci" => 2,
                "sqrtg" | "isqrtg" | "ginv" | "g" => 0,
                _ => 0,
            };
            // every covariant derivative consumes one jet order and needs Γ
            k = k.max(f.derivs.len() + intrinsic + 1);
        }
    }
    k
}

/// Result of evaluating an expression: dense array over its free indices
/// (sorted by label, as in [`Expression::free_indices`]).
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub free_labels: Vec<String>,
    pub dim: usize,
    pub comps: Vec<f64>,
}

impl EvalResult {
    pub fn scalar(&self) -> f64 {
        assert!(self.free_labels.is_empty());
        self.comps[0]
    }
    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }
    pub fn max_abs_diff(&self, other: &EvalResult) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Evaluate an expression at a point on a chart.
pub fn evaluate_at(ctx: &Context, chart: &Chart, e: &Expression, x: &[f64]) -> Result<EvalResult> {
    let d = chart.dim;
    let order = needed_order(e);
    let mut pe = PointEval::new(chart, order, x.to_vec());

    let frees: Vec<crate::expr::Index> = e.free_indices();
    let free_labels: Vec<String> = frees.iter().map(|i| i.label.clone()).collect();
    let nfree = frees.len();
    let out_n = d.pow(nfree as u32);
    let mut out = vec![0.0; out_n];

    for t in &e.terms {
        let mut coeff = rational_to_f64(&t.coeff);
        if t.dimpow != 0 {
            coeff *= (d as f64).powi(t.dimpow);
        }
        // All distinct labels in deterministic order: frees first (sorted),
        // then dummies.
        let counts = t.label_counts();
        let mut labels: Vec<String> = free_labels.clone();
        for (l, c) in &counts {
            if *c == 2 {
                labels.push(l.to_string());
            }
        }
        let nlab = labels.len();
        let lab_pos: std::collections::HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();

        // Pre-fetch factor arrays (value level: order-0 jet coefficient).
        let mut fvals: Vec<(Vec<usize>, Vec<f64>)> = vec![]; // (label position per index, comps)
        for f in &t.factors {
            let arr = pe.derived(ctx, &f.sym, f.derivs.len())?;
            let vals: Vec<f64> = arr.comps.iter().map(|j| j.value()).collect();
            let mut pos = vec![];
            for i in f.derivs.iter().chain(f.slots.iter()) {
                pos.push(lab_pos[i.label.as_str()]);
            }
            fvals.push((pos, vals));
        }

        // Sum over all index assignments.
        let total = d.pow(nlab as u32);
        let mut assign = vec![0usize; nlab];
        for cfg in 0..total {
            let mut kk = cfg;
            for p in (0..nlab).rev() {
                assign[p] = kk % d;
                kk /= d;
            }
            let mut prod = coeff;
            for (pos, vals) in &fvals {
                let mut flat = 0usize;
                for &p in pos {
                    flat = flat * d + assign[p];
                }
                prod *= vals[flat];
                if prod == 0.0 {
                    break;
                }
            }
            if prod != 0.0 {
                let mut fk = 0usize;
                for p in 0..nfree {
                    fk = fk * d + assign[p];
                }
                out[fk] += prod;
            }
        }
    }
    Ok(EvalResult {
        free_labels,
        dim: d,
        comps: out,
    })
}

fn rational_to_f64(r: &num::rational::BigRational) -> f64 {
    use num::ToPrimitive;
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Deterministic sample points for a chart seed.
pub fn sample_points(dim: usize, seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x5851f42d4c957f2d) ^ 0x14057b7e);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>() * std::f64::consts::TAU).collect())
        .collect()
}

/// Check two expressions for numeric equality on a chart at several points.
/// Returns the maximum absolute deviation (scaled by the larger magnitude).
pub fn max_relative_deviation(
    ctx: &Context,
    chart: &Chart,
    a: &Expression,
    b: &Expression,
    npoints: usize,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in sample_points(chart.dim, chart.spec.seed, npoints) {
        let va = evaluate_at(ctx, chart, a, &x)?;
        let vb = evaluate_at(ctx, chart, b, &x)?;
        let scale = va.max_abs().max(vb.max_abs()).max(1.0);
        worst = worst.max(va.max_abs_diff(&vb) / scale);
    }
    Ok(worst)
}

/// Trapezoid (spectrally exact for trig polynomials) integral of a scalar
/// expression over the periodic box, with `n` points per axis.
pub fn integrate(ctx: &Context, chart: &Chart, e: &Expression, n: usize) -> Result<f64> {
    let d = chart.dim;
    let h = std::f64::consts::TAU / n as f64;
    let total = n.pow(d as u32);
    let mut acc = 0.0;
    let mut grid = vec![0usize; d];
    for cfg in 0..total {
        let mut kk = cfg;
        for p in (0..d).rev() {
            grid[p] = kk % n;
            kk /= n;
        }
        let x: Vec<f64> = grid.iter().map(|&gi| gi as f64 * h).collect();
        acc += evaluate_at(ctx, chart, e, &x)?.scalar();
    }
    Ok(acc * h.powi(d as i32))
}

/// Finite-difference functional derivative check: compare the symbolic
/// kernel `K^{ab}` of δF/δg_ab against a central-difference quotient of the
/// integral functional under a random metric bump.
///
/// Returns (fd_estimate, kernel_pairing, relative_error).
pub fn fd_check_metric_kernel(
    ctx: &Context,
    chart: &Chart,
    density: &Expression,
    kernel: &Expression,
    bump_seed: u64,
    eps: f64,
    grid_n: usize,
) -> Result<(f64, f64, f64)> {
    let d = chart.dim;
    // FD path: (F[g + εb] − F[g − εb]) / 2ε, optionally 4th order.
    let fd = match chart.spec.stencil_order {
        4 => {
            let fp = integrate(ctx, &chart.with_metric_bump(eps, bump_seed), density, grid_n)?;
            let fm = integrate(ctx, &chart.with_metric_bump(-eps, bump_seed), density, grid_n)?;
            let fp2 = integrate(
                ctx,
                &chart.with_metric_bump(2.0 * eps, bump_seed),
                density,
                grid_n,
            )?;
            let fm2 = integrate(
                ctx,
                &chart.with_metric_bump(-2.0 * eps, bump_seed),
                density,
                grid_n,
            )?;
            (8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * eps)
        }
        _ => {
            let fp = integrate(ctx, &chart.with_metric_bump(eps, bump_seed), density, grid_n)?;
            let fm = integrate(ctx, &chart.with_metric_bump(-eps, bump_seed), density, grid_n)?;
            (fp - fm) / (2.0 * eps)
        }
    };
    // Kernel path: ∫ K^{ab} b_ab.
    let h = std::f64::consts::TAU / grid_n as f64;
    let total = grid_n.pow(d as u32);
    let mut pairing = 0.0;
    let mut grid = vec![0usize; d];
    let frees = kernel.free_indices();
    assert_eq!(frees.len(), 2, "metric kernel must have two free indices");
    for cfg in 0..total {
        let mut kk = cfg;
        for p in (0..d).rev() {
            grid[p] = kk % grid_n;
            kk /= grid_n;
        }
        let x: Vec<f64> = grid.iter().map(|&gi| gi as f64 * h).collect();
        let kv = evaluate_at(ctx, chart, kernel, &x)?;
        let bv = chart.bump_value(bump_seed, &x);
        for a in 0..d {
            for b in 0..d {
                pairing += kv.comps[a * d + b] * bv[a * d + b];
            }
        }
    }
    pairing *= h.powi(d as i32);
    let scale = fd.abs().max(pairing.abs()).max(1e-12);
    Ok((fd, pairing, (fd - pairing).abs() / scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    fn chart3(seed: u64) -> Chart {
        Chart::new(ChartSpec::new(3, seed)).unwrap()
    }

    #[test]
    fn jet_arithmetic_matches_analytic() {
        let ctx = JetCtx::new(2, 4);
        // f = sin(x + 2y + 0.3) as a trig scalar; check ∂_x ∂_y f value.
        let f = TrigScalar {
            bias: 0.0,
            modes: vec![(1.0, vec![1, 2], 0.3)],
        };
        let x = [0.7, 1.1];
        let j = f.jet(&ctx, &x);
        let dxy = j.diff(0).diff(1).value();
        let arg: f64 = x[0] + 2.0 * x[1] + 0.3;
        // ∂_x∂_y sin(arg) = -2 sin(arg)
        assert!((dxy + 2.0 * arg.sin()).abs() < 1e-12);
    }

    #[test]
    fn jet_recip_and_sqrt() {
        let ctx = JetCtx::new(1, 5);
        let f = TrigScalar {
            bias: 2.0,
            modes: vec![(0.3, vec![1], 0.2)],
        };
        let j = f.jet(&ctx, &[0.4]);
        let r = j.recip();
        let check = j.mul(&r);
        assert!((check.value() - 1.0).abs() < 1e-12);
        for k in 1..check.c.len() {
            assert!(check.c[k].abs() < 1e-10);
        }
        let s = j.sqrt();
        let back = s.mul(&s);
        assert!((back.value() - j.value()).abs() < 1e-12);
    }

    #[test]
    fn metric_inverse_is_inverse() {
        let c = Context::with_dim(3);
        let chart = chart3(7);
        // g_{ab} ginv^{bc} should evaluate to delta_a^c.
        let e = parse(&c, "g[_a _b] * ginv[^b ^c]").unwrap();
        let want = parse(&c, "delta[_a ^c]").unwrap();
        let dev = max_relative_deviation(&c, &chart, &e, &want, 4).unwrap();
        assert!(dev < 1e-10, "dev = {}", dev);
    }

    #[test]
    fn nabla_of_metric_is_zero_numerically() {
        let c = Context::with_dim(3);
        let chart = chart3(11);
        let e = parse(&c, "D(_c, g[_a _b])").unwrap();
        for x in sample_points(3, 11, 3) {
            let v = evaluate_at(&c, &chart, &e, &x).unwrap();
            assert!(v.max_abs() < 1e-9, "∇g = {}", v.max_abs());
        }
    }

    #[test]
    fn ricci_is_riemann_trace_numerically() {
        let c = Context::with_dim(3);
        let chart = chart3(13);
        let e = parse(&c, "ginv[^a ^h] * Riem[_h _e _a _g]").unwrap();
        let want = parse(&c, "Ricci[_e _g]").unwrap();
        let dev = max_relative_deviation(&c, &chart, &e, &want, 3).unwrap();
        assert!(dev < 1e-9, "dev = {}", dev);
    }

    #[test]
    fn riemann_antisymmetry_numerically() {
        let c = Context::with_dim(3);
        let chart = chart3(17);
        let e = parse(&c, "Riem[_a _b _c _d] + Riem[_b _a _c _d]").unwrap();
        for x in sample_points(3, 17, 2) {
            let v = evaluate_at(&c, &chart, &e, &x).unwrap();
            assert!(v.max_abs() < 1e-9);
        }
    }

    #[test]
    fn transverse_momentum_has_zero_divergence() {
        let c = Context::with_dim(3);
        let mut spec = ChartSpec::new(3, 19);
        spec.metric_amplitude = 0.0;
        spec.transverse_momentum = true;
        let chart = Chart::new(spec).unwrap();
        let e = parse(&c, "D(_b, pi[^a ^b])").unwrap();
        for x in sample_points(3, 19, 4) {
            let v = evaluate_at(&c, &chart, &e, &x).unwrap();
            assert!(v.max_abs() < 1e-8, "div pi = {}", v.max_abs());
        }
    }

    #[test]
    fn commutator_identity_on_chart() {
        // (∇_a∇_b − ∇_b∇_a) xi^c = ginv^{cx} Riem[_x _e _a _b] xi^e,
        // checked on a curved chart: ties the symbolic Riemann convention
        // to the numeric one.
        let c = Context::with_dim(3);
        let chart = chart3(23);
        let lhs = parse(&c, "D(_a, D(_b, xi[^c])) - D(_b, D(_a, xi[^c]))").unwrap();
        let rhs = parse(&c, "ginv[^c ^x] * Riem[_x _e _a _b] * xi[^e]").unwrap();
        let dev = max_relative_deviation(&c, &chart, &lhs, &rhs, 3).unwrap();
        assert!(dev < 1e-8, "dev = {}", dev);
    }

    #[test]
    fn fd_functional_derivative_of_volume() {
        // F = ∫ sqrtg: δF/δg_ab = 1/2 sqrtg ginv^{ab}.
        let c = Context::with_dim(2);
        let chart = Chart::new(ChartSpec::new(2, 29)).unwrap();
        let density = parse(&c, "sqrtg").unwrap();
        let kernel = parse(&c, "1/2 * sqrtg * ginv[^a ^b]").unwrap();
        let (_fd, _pair, rel) =
            fd_check_metric_kernel(&c, &chart, &density, &kernel, 101, 1e-4, 12).unwrap();
        assert!(rel < 1e-7, "rel = {}", rel);
    }

    #[test]
    fn fd_convergence_order() {
        // Halving the step of the 2nd-order stencil must shrink the residual
        // by ≈ 4 (within 20%) on a functional with nonzero third derivative.
        let c = Context::with_dim(2);
        let chart = Chart::new(ChartSpec::new(2, 31)).unwrap();
        // F = ∫ sqrtg^3 (nonlinear enough in g).
        let density = parse(&c, "sqrtg * sqrtg * sqrtg").unwrap();
        let kernel = parse(&c, "3/2 * sqrtg * sqrtg * sqrtg * ginv[^a ^b]").unwrap();
        let (_, _, r1) =
            fd_check_metric_kernel(&c, &chart, &density, &kernel, 103, 2e-2, 10).unwrap();
        let (_, _, r2) =
            fd_check_metric_kernel(&c, &chart, &density, &kernel, 103, 1e-2, 10).unwrap();
        let ratio = r1 / r2;
        assert!(
            (ratio - 4.0).abs() < 0.8,
            "convergence ratio {} not within 20% of 4",
            ratio
        );
    }
}
