//! Noether currents, stress-energy tensors and the divergence identities they
//! satisfy for every smooth map.

use serde::{Deserialize, Serialize};

use crate::chart::VectorFieldOnTarget;
use crate::error::{invalid, Error, Result};
use crate::field::{dot, Field};
use crate::grid::DomainGrid;
use crate::map::{GridMap, Section, Target, TensionTower, BITENSION_RELATIVE_SIGN, VARIATION_SIGN};

/// A contravariant vector field on the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    /// `V^i` at every point.
    pub field: Field,
}

impl TangentField {
    /// `(1/√g) ∂_i(√g V^i)`.
    pub fn divergence(&self, grid: &DomainGrid) -> Field {
        grid.divergence(&self.field)
    }
}

/// A symmetric covariant 2-tensor `S_{ij}` on the domain (row-major per point).
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    pub field: Field,
}

impl SymTensorField {
    /// `(div S)_j = g^{ik}(∂_i S_{kj} − Γ^l_{ik} S_{lj} − Γ^l_{ij} S_{kl})`.
    pub fn divergence(&self, grid: &DomainGrid) -> Field {
        let m = grid.dim();
        let ds: Vec<Field> = (0..m).map(|i| grid.diff(&self.field, i)).collect();
        let flat = grid.is_flat();
        Field::from_fn(grid.len(), m, |p, out| {
            let mp = grid.metric_at(p);
            let s = self.field.at(p);
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..m {
                    for k in 0..m {
                        let w = mp.ginv[i * m + k];
                        if w == 0.0 {
                            continue;
                        }
                        let mut v = ds[i].at(p)[k * m + j];
                        if !flat {
                            for l in 0..m {
                                v -= mp.christoffel[l * m * m + i * m + k] * s[l * m + j];
                                v -= mp.christoffel[l * m * m + i * m + j] * s[k * m + l];
                            }
                        }
                        acc += w * v;
                    }
                }
                *o = acc;
            }
        })
    }

    pub fn is_symmetric(&self, m: usize) -> bool {
        (0..self.field.points()).all(|p| {
            let s = self.field.at(p);
            (0..m).all(|i| (0..m).all(|j| s[i * m + j] == s[j * m + i]))
        })
    }
}

/// A target vector field evaluated along a map, with its covariant derivative.
pub struct FieldAlong<'a> {
    map: &'a GridMap,
    value: Field,
    jac: Field,
    normal: Vec<f64>,
}

impl<'a> FieldAlong<'a> {
    pub fn new(map: &'a GridMap, x: &VectorFieldOnTarget) -> Result<Self> {
        let nc = map.ncomp();
        if x.dim() != nc {
            return Err(Error::Dimension(format!(
                "vector field has dimension {}, target representation has {nc}",
                x.dim()
            )));
        }
        let step = match map.target() {
            Target::Chart(c) => c.fd_step(),
            Target::Sphere { .. } => crate::chart::DEFAULT_FD_STEP,
        };
        let mut value = Field::zeros(map.len(), nc);
        let mut jac = Field::zeros(map.len(), nc * nc);
        let mut normal = vec![0.0; map.len()];
        for p in 0..map.len() {
            let u = map.value(p);
            let mut v = x.evaluate(u);
            if map.is_sphere() {
                normal[p] = dot(u, &v);
                map.project_at(p, &mut v);
            }
            value.at_mut(p).copy_from_slice(&v);
            jac.at_mut(p).copy_from_slice(&x.jacobian(u, step));
        }
        Ok(Self {
            map,
            value,
            jac,
            normal,
        })
    }

    /// `X∘φ` as a section.
    pub fn section(&self) -> &Section {
        &self.value
    }

    #[inline]
    pub fn value(&self, p: usize) -> &[f64] {
        self.value.at(p)
    }

    /// `∇_Y X` at the image of point `p`.
    pub fn nabla(&self, p: usize, y: &[f64]) -> Vec<f64> {
        let nc = y.len();
        let j = self.jac.at(p);
        let mut out: Vec<f64> = (0..nc)
            .map(|a| (0..nc).map(|b| j[a * nc + b] * y[b]).sum())
            .collect();
        match self.map.chart_gamma_at(p) {
            None => {
                self.map.project_at(p, &mut out);
                let s = self.normal[p];
                for (o, yi) in out.iter_mut().zip(y) {
                    *o -= s * yi;
                }
            }
            Some(gamma) => {
                let x = self.value.at(p);
                for (a, o) in out.iter_mut().enumerate() {
                    for b in 0..nc {
                        for c in 0..nc {
                            *o += gamma[a * nc * nc + b * nc + c] * y[b] * x[c];
                        }
                    }
                }
            }
        }
        out
    }

    /// Largest `|(L_X h)(Y, Z)|` over orthonormal tangent pairs at all points.
    pub fn killing_defect(&self) -> f64 {
        let map = self.map;
        let mut worst = 0.0f64;
        for p in 0..map.len() {
            let basis = tangent_basis(map, p);
            let k: Vec<Vec<f64>> = basis.iter().map(|e| self.nabla(p, e)).collect();
            for (a, ka) in k.iter().enumerate() {
                for (b, kb) in k.iter().enumerate() {
                    let v = map.inner(p, ka, &basis[b]) + map.inner(p, kb, &basis[a]);
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }
}

/// Orthonormal basis of the tangent space at the image of point `p`.
fn tangent_basis(map: &GridMap, p: usize) -> Vec<Vec<f64>> {
    let nc = map.ncomp();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for e in 0..nc {
        let mut v = vec![0.0; nc];
        v[e] = 1.0;
        map.project_at(p, &mut v);
        for b in &basis {
            let c = map.inner(p, &v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let n = map.inner(p, &v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    basis
}

/// Placement and sign of the `l`-independent term in the odd-order current.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OddTermPlacement {
    /// `+⟨∇̄_{∇̄W_{s-1}}X, W_{s-1}⟩` once, outside the sum.
    Hoisted,
    /// `−⟨∇̄_{∇̄W_{s-1}}X, W_{s-1}⟩` once, outside the sum.
    HoistedNegative,
    /// `−⟨∇̄_{∇̄W_{s-1}}X, W_{s-1}⟩` inside the sum over `l = 1..s-1`.
    InSum,
}

impl OddTermPlacement {
    /// Net coefficient of the term for order `2s+1`.
    pub fn coefficient(self, s: usize) -> f64 {
        match self {
            OddTermPlacement::Hoisted => 1.0,
            OddTermPlacement::HoistedNegative => -1.0,
            OddTermPlacement::InSum => -((s - 1) as f64),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OddTermPlacement::Hoisted => "hoisted",
            OddTermPlacement::HoistedNegative => "hoisted-negative",
            OddTermPlacement::InSum => "in-sum",
        }
    }
}

/// Sign `c_k` in the identity `div J^k + c_k ⟨τ_k, X∘φ⟩ = 0`.
pub fn identity_sign(k: usize) -> f64 {
    if k == 1 {
        -1.0
    } else {
        1.0
    }
}

fn lowered_to_tangent(map: &GridMap, lowered: Field) -> TangentField {
    TangentField {
        field: map.grid().raise(&lowered),
    }
}

/// The Noether current `J^k(φ)` for the target field `X`.
pub fn noether_current(map: &GridMap, x: &VectorFieldOnTarget, k: usize) -> Result<TangentField> {
    noether_current_with_placement(map, x, k, OddTermPlacement::Hoisted)
}

pub fn noether_current_with_placement(
    map: &GridMap,
    x: &VectorFieldOnTarget,
    k: usize,
    placement: OddTermPlacement,
) -> Result<TangentField> {
    if k == 0 {
        return Err(invalid("current order must be at least 1"));
    }
    let along = FieldAlong::new(map, x)?;
    let tower = map.tower(k.saturating_sub(1));
    Ok(current_from(map, &along, &tower, k, placement))
}

/// `J^k` from precomputed data; `tower` must hold `W_0..W_{k-2}` at least.
pub fn current_from(
    map: &GridMap,
    along: &FieldAlong<'_>,
    tower: &TensionTower,
    k: usize,
    placement: OddTermPlacement,
) -> TangentField {
    let m = map.dim();
    let dphi = map.differential();
    let lowered = map.pointwise(m, |p, out| {
        let xv = along.value(p);
        if k == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                *o = map.inner(p, dphi[i].at(p), xv);
            }
            return;
        }
        let s = k / 2;
        let even = k % 2 == 0;
        let top = if even { 2 * s - 2 } else { 2 * s - 1 };
        let wt = tower.w(top).at(p);
        let dwt = tower.dw(top);
        for (i, o) in out.iter_mut().enumerate() {
            let kphi = along.nabla(p, dphi[i].at(p));
            let mut v = map.inner(p, dwt[i].at(p), xv) - map.inner(p, &kphi, wt);
            for l in 1..s {
                let a = if even { s + l - 2 } else { s + l - 1 };
                let b = s - l - 1;
                let ka = along.nabla(p, tower.dw(a)[i].at(p));
                let kb = along.nabla(p, tower.dw(b)[i].at(p));
                v += map.inner(p, &ka, tower.w(b).at(p)) + map.inner(p, &kb, tower.w(a).at(p));
            }
            if !even {
                let c = placement.coefficient(s);
                if c != 0.0 {
                    let kw = along.nabla(p, tower.dw(s - 1)[i].at(p));
                    v += c * map.inner(p, &kw, tower.w(s - 1).at(p));
                }
            }
            *o = v;
        }
    });
    lowered_to_tangent(map, lowered)
}

/// `⟨∇̄(X∘φ), τ⟩♯ − ⟨X∘φ, ∇̄τ⟩♯`, the biharmonic current in the form paired
/// with the bitension evaluator; equals `−J²`.
pub fn bitension_current(map: &GridMap, x: &VectorFieldOnTarget) -> Result<TangentField> {
    let along = FieldAlong::new(map, x)?;
    let tower = map.tower(0);
    Ok(bitension_current_from(map, &along, &tower))
}

pub fn bitension_current_from(
    map: &GridMap,
    along: &FieldAlong<'_>,
    tower: &TensionTower,
) -> TangentField {
    let m = map.dim();
    let dphi = map.differential();
    let lowered = map.pointwise(m, |p, out| {
        let tau = tower.w(0).at(p);
        for (i, o) in out.iter_mut().enumerate() {
            let kphi = along.nabla(p, dphi[i].at(p));
            *o = map.inner(p, &kphi, tau) - map.inner(p, along.value(p), tower.dw(0)[i].at(p));
        }
    });
    lowered_to_tangent(map, lowered)
}

/// Pointwise pieces of the current identity at one resolution.
#[derive(Clone, Debug)]
pub struct CurrentIdentity {
    pub divergence: Field,
    /// `⟨τ_k, X∘φ⟩`
    pub pairing: Field,
    /// `div J^k + c_k ⟨τ_k, X∘φ⟩`
    pub residual: Field,
    /// `div J^k + ⟨τ_k, X∘φ⟩` regardless of `k`.
    pub residual_uniform_sign: Field,
    pub killing_defect: f64,
}

/// Evaluates `div J^k` and `⟨τ_k, X∘φ⟩` on one grid.
pub fn current_identity(
    map: &GridMap,
    x: &VectorFieldOnTarget,
    k: usize,
    placement: OddTermPlacement,
) -> Result<CurrentIdentity> {
    if k == 0 {
        return Err(invalid("current order must be at least 1"));
    }
    let along = FieldAlong::new(map, x)?;
    let tower = map.tower(k - 1);
    Ok(current_identity_with(map, &along, &tower, k, placement))
}

pub fn current_identity_with(
    map: &GridMap,
    along: &FieldAlong<'_>,
    tower: &TensionTower,
    k: usize,
    placement: OddTermPlacement,
) -> CurrentIdentity {
    let j = current_from(map, along, tower, k, placement);
    let divergence = j.divergence(map.grid());
    let tk = map.k_tension_with(k, tower);
    let pairing = map.scalar_field(|p| map.inner(p, tk.at(p), along.value(p)));
    let c = identity_sign(k);
    let residual = map.scalar_field(|p| divergence.at(p)[0] + c * pairing.at(p)[0]);
    let residual_uniform_sign = map.scalar_field(|p| divergence.at(p)[0] + pairing.at(p)[0]);
    CurrentIdentity {
        divergence,
        pairing,
        residual,
        residual_uniform_sign,
        killing_defect: along.killing_defect(),
    }
}

/// Residual field of `div J^k + c_k ⟨τ_k, X∘φ⟩` on one grid.
pub fn conservation_residual(map: &GridMap, x: &VectorFieldOnTarget, k: usize) -> Result<Field> {
    Ok(current_identity(map, x, k, OddTermPlacement::Hoisted)?.residual)
}

/// Stress-energy tensor `S_k` for `k ≥ 2`.
pub fn stress_energy(map: &GridMap, k: usize) -> Result<SymTensorField> {
    if k < 2 {
        return Err(invalid("stress-energy tensors are defined for k ≥ 2"));
    }
    let tower = map.tower(k - 1);
    Ok(stress_energy_with(map, k, &tower))
}

pub fn stress_energy_with(map: &GridMap, k: usize, tower: &TensionTower) -> SymTensorField {
    let m = map.dim();
    let s = k / 2;
    let even = k % 2 == 0;
    let dphi = map.differential();
    let top = if even { 2 * s - 2 } else { 2 * s - 1 };
    let field = map.pointwise(m * m, |p, out| {
        let ip = |a: &[f64], b: &[f64]| map.inner(p, a, b);
        let tau = tower.w(0).at(p);
        let wt = tower.w(top).at(p);
        let dwt = tower.dw(top);
        // scalar block
        let mut block = if even {
            let w = tower.w(s - 1).at(p);
            0.5 * ip(w, w)
        } else {
            let dw = tower.dw(s - 1);
            0.5 * map.metric_trace(p, |i, j| ip(dw[i].at(p), dw[j].at(p)))
        };
        block -= ip(tau, wt);
        block -= map.metric_trace(p, |i, j| ip(dphi[i].at(p), dwt[j].at(p)));
        for l in 1..s {
            let a = if even { s + l - 2 } else { s + l - 1 };
            let b = s - l - 1;
            block -= ip(tower.w(s - l).at(p), tower.w(a).at(p));
            let (dwb, dwa) = (tower.dw(b), tower.dw(a));
            block += map.metric_trace(p, |i, j| ip(dwb[i].at(p), dwa[j].at(p)));
        }
        let g = map.grid().metric_at(p).g;
        for i in 0..m {
            for j in i..m {
                let mut v = g[i * m + j] * block;
                for l in 1..s {
                    let a = if even { s + l - 2 } else { s + l - 1 };
                    let b = s - l - 1;
                    let (dwb, dwa) = (tower.dw(b), tower.dw(a));
                    v -= ip(dwb[i].at(p), dwa[j].at(p)) + ip(dwb[j].at(p), dwa[i].at(p));
                }
                v += ip(dphi[i].at(p), dwt[j].at(p)) + ip(dphi[j].at(p), dwt[i].at(p));
                if !even {
                    let dw = tower.dw(s - 1);
                    v -= ip(dw[i].at(p), dw[j].at(p));
                }
                out[i * m + j] = v;
                out[j * m + i] = v;
            }
        }
    });
    SymTensorField { field }
}

/// Pointwise pieces of the stress-energy identity at one resolution.
#[derive(Clone, Debug)]
pub struct StressIdentity {
    pub divergence: Field,
    /// `⟨τ_k, dφ(∂_j)⟩`
    pub pairing: Field,
    /// `(div S_k)_j + ⟨τ_k, dφ(∂_j)⟩`
    pub residual: Field,
}

pub fn stress_identity_with(map: &GridMap, k: usize, tower: &TensionTower) -> StressIdentity {
    let m = map.dim();
    let sk = stress_energy_with(map, k, tower);
    let divergence = sk.divergence(map.grid());
    let tk = map.k_tension_with(k, tower);
    let dphi = map.differential();
    let pairing = map.pointwise(m, |p, out| {
        for (j, o) in out.iter_mut().enumerate() {
            *o = map.inner(p, tk.at(p), dphi[j].at(p));
        }
    });
    let residual = divergence.add(&pairing);
    StressIdentity {
        divergence,
        pairing,
        residual,
    }
}

/// Residual field of `(div S_k)_j + ⟨τ_k, dφ(∂_j)⟩` on one grid.
pub fn stress_energy_residual(map: &GridMap, k: usize) -> Result<Field> {
    if k < 2 {
        return Err(invalid("stress-energy tensors are defined for k ≥ 2"));
    }
    let tower = map.tower(k - 1);
    Ok(stress_identity_with(map, k, &tower).residual)
}

/// Pointwise pieces of the Lie-derivative identity for `|τ|²`.
#[derive(Clone, Debug)]
pub struct LieTensionIdentity {
    /// `(L_X h)(τ, τ) + 2 h(L_X τ, τ)`
    pub lhs: Field,
    /// `(L_X h)(τ, τ)`
    pub metric_term: Field,
    /// `⟨X∘φ, τ₂⟩` with the bitension evaluator
    pub bitension_pairing: Field,
    /// divergence of `⟨∇̄(X∘φ), τ⟩♯ − ⟨X∘φ, ∇̄τ⟩♯`
    pub current_divergence: Field,
    /// `lhs − 2⟨X∘φ, τ₂⟩ − 2 div(…)`
    pub residual: Field,
    /// `lhs − (L_X h)(τ,τ) + 2⟨X∘φ, τ₂⟩ − 2 div(…)`
    pub residual_variant: Field,
}

/// Chart-mode evaluation of the `|τ|²` Lie-derivative identity for any `X`.
pub fn lie_tension_identity(map: &GridMap, x: &VectorFieldOnTarget) -> Result<LieTensionIdentity> {
    let chart = match map.target() {
        Target::Chart(c) => c.clone(),
        Target::Sphere { .. } => {
            return Err(Error::UnsupportedMode(
                "the |τ|² Lie-derivative identity needs a chart target".into(),
            ))
        }
    };
    let d = chart.dim();
    let along = FieldAlong::new(map, x)?;
    let tower = map.tower(1);
    let tau = tower.w(0);
    let dphi = map.differential();
    let mut metric_term = Field::zeros(map.len(), 1);
    let mut lhs = Field::zeros(map.len(), 1);
    for p in 0..map.len() {
        let y = map.value(p);
        let lh = chart.killing_residual(x, y)?;
        let lg = chart.lie_christoffel(x, y)?;
        let t = tau.at(p);
        let mt: f64 = (0..d * d).map(|bc| lh[bc] * t[bc / d] * t[bc % d]).sum();
        let mut ltau = vec![0.0; d];
        for (a, la) in ltau.iter_mut().enumerate() {
            *la = map.metric_trace(p, |i, j| {
                let (di, dj) = (dphi[i].at(p), dphi[j].at(p));
                let mut s = 0.0;
                for b in 0..d {
                    for c in 0..d {
                        s += lg[a * d * d + b * d + c] * di[b] * dj[c];
                    }
                }
                s
            });
        }
        metric_term.at_mut(p)[0] = mt;
        lhs.at_mut(p)[0] = mt + 2.0 * map.inner(p, &ltau, t);
    }
    let bit = map.bitension_alt_with(&tower);
    let bitension_pairing = map.scalar_field(|p| map.inner(p, along.value(p), bit.at(p)));
    let current_divergence = bitension_current_from(map, &along, &tower).divergence(map.grid());
    let residual = map.scalar_field(|p| {
        lhs.at(p)[0] - 2.0 * bitension_pairing.at(p)[0] - 2.0 * current_divergence.at(p)[0]
    });
    let residual_variant = map.scalar_field(|p| {
        lhs.at(p)[0] - metric_term.at(p)[0] + 2.0 * bitension_pairing.at(p)[0]
            - 2.0 * current_divergence.at(p)[0]
    });
    Ok(LieTensionIdentity {
        lhs,
        metric_term,
        bitension_pairing,
        current_divergence,
        residual,
        residual_variant,
    })
}

/// Residual field of the `|τ|²` Lie-derivative identity on one grid.
pub fn lie_tension_sq_residual(map: &GridMap, x: &VectorFieldOnTarget) -> Result<Field> {
    Ok(lie_tension_identity(map, x)?.residual)
}

/// Sign constants embedded in reports.
pub fn sign_constants() -> serde_json::Value {
    serde_json::json!({
        "variation_sign": VARIATION_SIGN,
        "bitension_relative_sign": BITENSION_RELATIVE_SIGN,
        "current_identity_sign_k1": identity_sign(1),
        "current_identity_sign_k_ge_2": identity_sign(2),
        "odd_term_placement": OddTermPlacement::Hoisted.name(),
    })
}
