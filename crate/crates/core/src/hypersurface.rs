//! Hypersurfaces of `S^{m+1}`: induced metric, unit normal, shape operator,
//! the biharmonic system and the hypersurface current.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::Deserialize;

use crate::chart::VectorFieldOnTarget;
use crate::conservation::{FieldAlong, TangentField};
use crate::error::{invalid, Error, Result};
use crate::field::{dot, Field};
use crate::grid::{AxisSpec, Backend, DomainGrid};
use crate::map::{GridMap, Target};

/// Polar band `[θ₀, π − θ₀]` used for round 2-spheres, which admit no
/// periodic parametrization.
pub const POLAR_MARGIN: f64 = 0.5;

/// An immersion of an `m`-dimensional grid into `S^{m+1} ⊂ ℝ^{m+2}`.
#[derive(Clone)]
pub struct HypersurfaceImmersion {
    map: GridMap,
    /// `∂_iφ` (ambient, unprojected)
    dphi: Vec<Field>,
    normal: Field,
}

impl HypersurfaceImmersion {
    /// Builds the immersion from ambient values on a flat grid; the induced
    /// metric replaces the grid metric.
    pub fn new(grid: &DomainGrid, values: Field) -> Result<Self> {
        let m = grid.dim();
        let n = m + 2;
        if values.ncomp() != n {
            return Err(Error::Dimension(format!(
                "a hypersurface of dimension {m} needs {n} ambient components, got {}",
                values.ncomp()
            )));
        }
        let mut values = values;
        for p in 0..values.points() {
            let u = values.at_mut(p);
            let norm = dot(u, u).sqrt();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::OutOfChart {
                    index: p,
                    value: u.to_vec(),
                });
            }
            u.iter_mut().for_each(|x| *x /= norm);
        }
        let flat = grid.flat_copy();
        let dphi = flat.gradient(&values);
        let g = Field::from_fn(flat.len(), m * m, |p, o| {
            for i in 0..m {
                for j in 0..m {
                    o[i * m + j] = dot(dphi[i].at(p), dphi[j].at(p));
                }
            }
        });
        let induced = flat.with_metric_field(g).map_err(|e| match e {
            Error::SingularMetric { point } => {
                let index = (0..grid.len())
                    .find(|&p| grid.coords(p) == point)
                    .unwrap_or(0);
                Error::DegenerateImmersion { index }
            }
            other => other,
        })?;
        let map = GridMap::new(Arc::new(induced), Target::Sphere { n: m + 1 }, values)?;
        let normal = orient(&map, &pointwise_normals(&map, &dphi)?);
        Ok(Self { map, dphi, normal })
    }

    /// Samples an embedding `x ↦ φ(x)` on a flat grid.
    pub fn from_fn(grid: &DomainGrid, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let values = grid.flat_copy().sample_vec(grid.dim() + 2, f);
        Self::new(grid, values)
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    /// Domain grid carrying the induced metric.
    pub fn grid(&self) -> &DomainGrid {
        self.map.grid()
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim() + 2
    }

    pub fn values(&self) -> &Field {
        self.map.values()
    }

    pub fn tangent(&self, i: usize) -> &Field {
        &self.dphi[i]
    }

    pub fn normal(&self) -> &Field {
        &self.normal
    }

    /// Same immersion with the opposite unit normal.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        out.normal = self.normal.scaled(-1.0);
        out
    }

    /// Largest violations of `⟨ν,φ⟩ = 0`, `⟨ν,∂_iφ⟩ = 0` and `|ν| = 1`.
    pub fn normal_defects(&self) -> (f64, f64, f64) {
        let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
        for p in 0..self.len() {
            let nu = self.normal.at(p);
            a = a.max(dot(nu, self.values().at(p)).abs());
            for d in &self.dphi {
                b = b.max(dot(nu, d.at(p)).abs());
            }
            c = c.max((dot(nu, nu).sqrt() - 1.0).abs());
        }
        (a, b, c)
    }

    fn ginv(&self, p: usize) -> &[f64] {
        self.grid().metric_at(p).ginv
    }
}

/// Unit vector orthogonal to `φ` and every `∂_iφ`, sign not yet fixed.
fn pointwise_normals(map: &GridMap, dphi: &[Field]) -> Result<Field> {
    let n = map.ncomp();
    let mut out = Field::zeros(map.len(), n);
    for p in 0..map.len() {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
        let push = |v: &[f64], basis: &mut Vec<Vec<f64>>| -> f64 {
            let mut w = v.to_vec();
            for _ in 0..2 {
                for b in basis.iter() {
                    let c = dot(&w, b);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > 0.0 {
                w.iter_mut().for_each(|x| *x /= norm);
            }
            basis.push(w);
            norm
        };
        push(map.value(p), &mut basis);
        for d in dphi {
            let scale = dot(d.at(p), d.at(p)).sqrt();
            if push(d.at(p), &mut basis) <= 1e-10 * scale.max(1e-300) {
                return Err(Error::DegenerateImmersion { index: p });
            }
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..n {
            let mut v = vec![0.0; n];
            v[e] = 1.0;
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let norm = dot(&v, &v).sqrt();
            if best.as_ref().is_none_or(|(bn, _)| norm > *bn) {
                best = Some((norm, v));
            }
        }
        let (norm, mut v) = best.expect("ambient dimension is positive");
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let norm2 = dot(&v, &v).sqrt();
        debug_assert!(norm > 0.0);
        v.iter_mut().for_each(|x| *x /= norm2);
        out.at_mut(p).copy_from_slice(&v);
    }
    Ok(out)
}

/// Fixes a global orientation: the seed (point 0) has its last component of
/// magnitude above `1e-8` positive, then signs propagate to grid neighbours.
fn orient(map: &GridMap, normals: &Field) -> Field {
    let grid = map.grid();
    let res = grid.resolution();
    let specs = grid.axis_specs();
    let m = res.len();
    let mut strides = vec![1usize; m];
    for a in (0..m.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * res[a + 1];
    }
    let mut out = normals.clone();
    let seed = out.at(0).to_vec();
    if let Some(last) = seed.iter().rev().find(|x| x.abs() > 1e-8) {
        if *last < 0.0 {
            out.at_mut(0).iter_mut().for_each(|x| *x = -*x);
        }
    }
    let mut seen = vec![false; grid.len()];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(p) = queue.pop_front() {
        let idx = grid.index(p);
        for a in 0..m {
            let periodic = matches!(specs[a], AxisSpec::Periodic { .. });
            for step in [-1isize, 1] {
                let j = idx[a] as isize + step;
                let j = if periodic {
                    j.rem_euclid(res[a] as isize) as usize
                } else if j < 0 || j >= res[a] as isize {
                    continue;
                } else {
                    j as usize
                };
                let q = p - idx[a] * strides[a] + j * strides[a];
                if seen[q] {
                    continue;
                }
                seen[q] = true;
                if dot(out.at(q), out.at(p)) < 0.0 {
                    out.at_mut(q).iter_mut().for_each(|x| *x = -*x);
                }
                queue.push_back(q);
            }
        }
    }
    out
}

/// Shape operator `A^j_i` (stored at `j*m + i`), mean curvature `f = tr A/m`,
/// `|A|² = tr(A²)` and the second fundamental form coefficients
/// `b_{ij} = −⟨∂_iν, ∂_jφ⟩`.
#[derive(Clone, Debug)]
pub struct ShapeOperator {
    pub matrix: Field,
    pub second_form: Field,
    pub mean_curvature: Field,
    pub norm_sq: Field,
}

impl ShapeOperator {
    /// Largest `|b_{ij} − b_{ji}|`, i.e. the failure of self-adjointness.
    pub fn self_adjoint_defect(&self, m: usize) -> f64 {
        let mut worst = 0.0f64;
        for p in 0..self.second_form.points() {
            let b = self.second_form.at(p);
            for i in 0..m {
                for j in 0..m {
                    worst = worst.max((b[i * m + j] - b[j * m + i]).abs());
                }
            }
        }
        worst
    }

    /// `A(v)` for contravariant `v` at point `p`.
    pub fn apply(&self, p: usize, v: &[f64]) -> Vec<f64> {
        let m = v.len();
        let a = self.matrix.at(p);
        (0..m)
            .map(|j| (0..m).map(|i| a[j * m + i] * v[i]).sum())
            .collect()
    }
}

pub fn shape_operator(imm: &HypersurfaceImmersion) -> ShapeOperator {
    let m = imm.dim();
    let flat = imm.grid().flat_copy();
    let dnu = flat.gradient(imm.normal());
    let mut matrix = Field::zeros(imm.len(), m * m);
    let mut second_form = Field::zeros(imm.len(), m * m);
    let mut mean_curvature = Field::zeros(imm.len(), 1);
    let mut norm_sq = Field::zeros(imm.len(), 1);
    for p in 0..imm.len() {
        let gi = imm.ginv(p);
        let b: Vec<f64> = (0..m * m)
            .map(|ij| -dot(dnu[ij / m].at(p), imm.dphi[ij % m].at(p)))
            .collect();
        let a = matrix.at_mut(p);
        for j in 0..m {
            for i in 0..m {
                a[j * m + i] = (0..m).map(|k| gi[j * m + k] * b[i * m + k]).sum();
            }
        }
        let tr: f64 = (0..m).map(|i| a[i * m + i]).sum();
        let sq: f64 = (0..m)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[j * m + i])
            .sum();
        second_form.at_mut(p).copy_from_slice(&b);
        mean_curvature.at_mut(p)[0] = tr / m as f64;
        norm_sq.at_mut(p)[0] = sq;
    }
    ShapeOperator {
        matrix,
        second_form,
        mean_curvature,
        norm_sq,
    }
}

/// `𝐈𝐈(Y, Z) = ⟨A(Y), Z⟩ ν` at point `p` for contravariant `Y`, `Z`.
pub fn second_fundamental_form(
    imm: &HypersurfaceImmersion,
    shape: &ShapeOperator,
    p: usize,
    y: &[f64],
    z: &[f64],
) -> Vec<f64> {
    let m = imm.dim();
    let g = imm.grid().metric_at(p).g;
    let ay = shape.apply(p, y);
    let c: f64 = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| g[i * m + j] * ay[i] * z[j])
        .sum();
    imm.normal().at(p).iter().map(|x| c * x).collect()
}

fn gradient_contravariant(imm: &HypersurfaceImmersion, f: &Field) -> Field {
    let grid = imm.grid();
    let m = grid.dim();
    let df = grid.gradient(f);
    let lowered = Field::from_fn(grid.len(), m, |p, o| {
        for (i, oi) in o.iter_mut().enumerate() {
            *oi = df[i].at(p)[0];
        }
    });
    grid.raise(&lowered)
}

fn metric_norm(imm: &HypersurfaceImmersion, p: usize, v: &[f64]) -> f64 {
    let m = v.len();
    let g = imm.grid().metric_at(p).g;
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += g[i * m + j] * v[i] * v[j];
        }
    }
    s.max(0.0).sqrt()
}

/// Residual fields of the biharmonic hypersurface system.
#[derive(Clone, Debug)]
pub struct BiharmonicSystem {
    /// `Δf − (m − |A|²) f`
    pub normal: Field,
    /// `A(grad f) + (m/2) f grad f` (contravariant)
    pub tangential: Field,
    /// pointwise induced norm of `tangential`
    pub tangential_norm: Field,
}

pub fn biharmonic_system(imm: &HypersurfaceImmersion) -> BiharmonicSystem {
    let m = imm.dim();
    let shape = shape_operator(imm);
    let f = &shape.mean_curvature;
    let lap = imm.grid().laplacian(f);
    let grad = gradient_contravariant(imm, f);
    let normal = Field::from_fn(imm.len(), 1, |p, o| {
        o[0] = lap.at(p)[0] - (m as f64 - shape.norm_sq.at(p)[0]) * f.at(p)[0];
    });
    let tangential = Field::from_fn(imm.len(), m, |p, o| {
        let gf = grad.at(p);
        let agf = shape.apply(p, gf);
        let fp = f.at(p)[0];
        for i in 0..m {
            o[i] = agf[i] + 0.5 * m as f64 * fp * gf[i];
        }
    });
    let tangential_norm = Field::from_fn(imm.len(), 1, |p, o| {
        o[0] = metric_norm(imm, p, tangential.at(p))
    });
    BiharmonicSystem {
        normal,
        tangential,
        tangential_norm,
    }
}

/// `(Tr ∇A)_j − m ∂_j f` with `(Tr ∇A)_j = g^{ki}(∇_k b)_{ij}`, as a covector,
/// together with its pointwise induced norm.
pub fn codazzi_trace(imm: &HypersurfaceImmersion) -> (Field, Field) {
    let m = imm.dim();
    let grid = imm.grid();
    let shape = shape_operator(imm);
    let db = grid.gradient(&shape.second_form);
    let df = grid.gradient(&shape.mean_curvature);
    let residual = Field::from_fn(imm.len(), m, |p, o| {
        let mp = grid.metric_at(p);
        let b = shape.second_form.at(p);
        let gam = mp.christoffel;
        for (j, oj) in o.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..m {
                for i in 0..m {
                    let w = mp.ginv[k * m + i];
                    let mut cov = db[k].at(p)[i * m + j];
                    for l in 0..m {
                        cov -= gam[l * m * m + k * m + i] * b[l * m + j];
                        cov -= gam[l * m * m + k * m + j] * b[i * m + l];
                    }
                    s += w * cov;
                }
            }
            *oj = s - m as f64 * df[j].at(p)[0];
        }
    });
    let norm = Field::from_fn(imm.len(), 1, |p, o| {
        let gi = grid.metric_at(p).ginv;
        let v = residual.at(p);
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += gi[i * m + j] * v[i] * v[j];
            }
        }
        o[0] = s.max(0.0).sqrt();
    });
    (residual, norm)
}

/// `τ(φ) − m f ν` with τ the sphere-target tension under the induced metric.
pub fn tension_consistency(imm: &HypersurfaceImmersion) -> Field {
    let m = imm.dim() as f64;
    let tau = imm.map().tension();
    let f = shape_operator(imm).mean_curvature;
    Field::from_fn(imm.len(), imm.ambient_dim(), |p, o| {
        let nu = imm.normal().at(p);
        for (c, oc) in o.iter_mut().enumerate() {
            *oc = tau.at(p)[c] - m * f.at(p)[0] * nu[c];
        }
    })
}

/// `⟨Tr ∇̄∇̄(X∘φ), ν⟩ = −⟨Δ̄(X∘φ), ν⟩`.
pub fn normal_block(imm: &HypersurfaceImmersion, x: &VectorFieldOnTarget) -> Result<Field> {
    let along = FieldAlong::new(imm.map(), x)?;
    let lap = imm.map().rough_laplacian(along.section());
    Ok(Field::from_fn(imm.len(), 1, |p, o| {
        o[0] = -dot(lap.at(p), imm.normal().at(p));
    }))
}

/// `⟨X∘φ, ν⟩`.
pub fn normal_component(imm: &HypersurfaceImmersion, x: &VectorFieldOnTarget) -> Result<Field> {
    let along = FieldAlong::new(imm.map(), x)?;
    Ok(Field::from_fn(imm.len(), 1, |p, o| {
        o[0] = dot(along.value(p), imm.normal().at(p));
    }))
}

/// The hypersurface current and the pieces of its divergence identity.
#[derive(Clone, Debug)]
pub struct HypersurfaceCurrent {
    /// `J^{2,hyp} = m f ⟨∇̄(X∘φ), ν⟩♯ + m f ⟨X∘φ, A(·)⟩♯`
    pub current: TangentField,
    pub divergence: Field,
    /// `2m ⟨X∘φ, A(grad f) + (m/2) f grad f⟩`
    pub tangential_term: Field,
    /// `m ⟨grad f, grad⟨X∘φ, ν⟩⟩ + m f (|A|² − m) ⟨X∘φ, ν⟩`
    pub normal_terms: Field,
    /// `div J^{2,hyp} − tangential_term`
    pub residual_tangential_only: Field,
    /// `div J^{2,hyp} − tangential_term − normal_terms`
    pub residual: Field,
    /// `J^{2,hyp} − m ⟨X∘φ, ν⟩ grad f`
    pub reduced_current: TangentField,
    /// `div(reduced) − 2m⟨X∘φ, A(grad f) + (m/2) f grad f⟩
    ///  − m ⟨X∘φ, ν⟩ (Δf − (m − |A|²) f)`
    pub reduced_residual: Field,
}

pub fn hypersurface_current(
    imm: &HypersurfaceImmersion,
    x: &VectorFieldOnTarget,
) -> Result<HypersurfaceCurrent> {
    let m = imm.dim();
    let mf = m as f64;
    let grid = imm.grid();
    let along = FieldAlong::new(imm.map(), x)?;
    let shape = shape_operator(imm);
    let f = &shape.mean_curvature;
    let lowered = Field::from_fn(imm.len(), m, |p, o| {
        let nu = imm.normal().at(p);
        let xv = along.value(p);
        let fp = f.at(p)[0];
        for (i, oi) in o.iter_mut().enumerate() {
            let k = along.nabla(p, imm.dphi[i].at(p));
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            let ai = shape.apply(p, &e);
            let xa: f64 = (0..m).map(|j| ai[j] * dot(xv, imm.dphi[j].at(p))).sum();
            *oi = mf * fp * (dot(&k, nu) + xa);
        }
    });
    let current = TangentField {
        field: grid.raise(&lowered),
    };
    let divergence = current.divergence(grid);
    let grad = gradient_contravariant(imm, f);
    let xn = Field::from_fn(imm.len(), 1, |p, o| {
        o[0] = dot(along.value(p), imm.normal().at(p))
    });
    let dxn = grid.gradient(&xn);
    let lap_f = grid.laplacian(f);
    let tangential_term = Field::from_fn(imm.len(), 1, |p, o| {
        let gf = grad.at(p);
        let agf = shape.apply(p, gf);
        let fp = f.at(p)[0];
        let xv = along.value(p);
        o[0] = (0..m)
            .map(|j| 2.0 * mf * (agf[j] + 0.5 * mf * fp * gf[j]) * dot(xv, imm.dphi[j].at(p)))
            .sum();
    });
    let normal_terms = Field::from_fn(imm.len(), 1, |p, o| {
        let gf = grad.at(p);
        let cross: f64 = (0..m).map(|i| gf[i] * dxn[i].at(p)[0]).sum();
        o[0] = mf * cross + mf * f.at(p)[0] * (shape.norm_sq.at(p)[0] - mf) * xn.at(p)[0];
    });
    let residual_tangential_only = divergence.sub(&tangential_term);
    let residual = residual_tangential_only.sub(&normal_terms);
    let reduced = Field::from_fn(imm.len(), m, |p, o| {
        for (i, oi) in o.iter_mut().enumerate() {
            *oi = current.field.at(p)[i] - mf * xn.at(p)[0] * grad.at(p)[i];
        }
    });
    let reduced_current = TangentField { field: reduced };
    let reduced_div = reduced_current.divergence(grid);
    let reduced_residual = Field::from_fn(imm.len(), 1, |p, o| {
        let sys = lap_f.at(p)[0] - (mf - shape.norm_sq.at(p)[0]) * f.at(p)[0];
        o[0] = reduced_div.at(p)[0] - tangential_term.at(p)[0] - mf * xn.at(p)[0] * sys;
    });
    Ok(HypersurfaceCurrent {
        current,
        divergence,
        tangential_term,
        normal_terms,
        residual_tangential_only,
        residual,
        reduced_current,
        reduced_residual,
    })
}

/// A registry entry or JSON description of an immersion.
#[derive(Clone, Debug, PartialEq)]
pub enum ImmersionDef {
    /// `S^m(r) ⊂ S^{m+1}`: `(r ω, √(1−r²))`
    SmallHypersphere { m: usize, r: f64 },
    /// `S^m(r)` with radius `r(1 + amp·h)` for a smooth bump `h` of the given
    /// frequency
    PerturbedHypersphere {
        m: usize,
        r: f64,
        amplitude: f64,
        frequency: i32,
    },
    /// `(cos a cos x, cos a sin x, sin a cos y, sin a sin y)` with
    /// `a = a₀ + amp·sin(freq·x)·cos(y)`, in `S³`
    PerturbedTorus {
        a0: f64,
        amplitude: f64,
        frequency: i32,
    },
    /// Explicit ambient values on a periodic grid.
    Table {
        resolution: Vec<usize>,
        periods: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

pub const BUILTIN_IMMERSIONS: &[&str] = &[
    "small-hypersphere:m:r",
    "equator:m",
    "perturbed-hypersphere:m:r:amplitude:frequency",
    "perturbed-torus:a0:amplitude:frequency",
];

#[derive(Deserialize)]
struct TableJson {
    resolution: Vec<usize>,
    #[serde(default)]
    periods: Option<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl ImmersionDef {
    pub fn builtin(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| {
                    invalid(format!(
                        "immersion {name:?}: argument {i} missing or not a number"
                    ))
                })
        };
        let dim = |i: usize| -> Result<usize> {
            let v = num(i)?;
            if v.fract() != 0.0 || !(1.0..=2.0).contains(&v) {
                return Err(invalid("hypersurface dimension must be 1 or 2"));
            }
            Ok(v as usize)
        };
        let radius = |v: f64| -> Result<f64> {
            if v > 0.0 && v <= 1.0 {
                Ok(v)
            } else {
                Err(invalid("radius must lie in (0, 1]"))
            }
        };
        let arity = |k: usize| -> Result<()> {
            if parts.len() == k {
                Ok(())
            } else {
                Err(invalid(format!(
                    "immersion {name:?} expects {} arguments",
                    k - 1
                )))
            }
        };
        match parts[0] {
            "small-hypersphere" => {
                arity(3)?;
                Ok(Self::SmallHypersphere {
                    m: dim(1)?,
                    r: radius(num(2)?)?,
                })
            }
            "equator" => {
                arity(2)?;
                Ok(Self::SmallHypersphere { m: dim(1)?, r: 1.0 })
            }
            "perturbed-hypersphere" => {
                arity(5)?;
                let frequency = num(4)?;
                if frequency.fract() != 0.0 {
                    return Err(invalid("frequency must be an integer"));
                }
                let (r, amplitude) = (radius(num(2)?)?, num(3)?);
                if r * (1.0 + amplitude.abs()) >= 1.0 {
                    return Err(invalid("perturbed radius must stay below 1"));
                }
                Ok(Self::PerturbedHypersphere {
                    m: dim(1)?,
                    r,
                    amplitude,
                    frequency: frequency as i32,
                })
            }
            "perturbed-torus" => {
                arity(4)?;
                let frequency = num(3)?;
                if frequency.fract() != 0.0 {
                    return Err(invalid("frequency must be an integer"));
                }
                Ok(Self::PerturbedTorus {
                    a0: num(1)?,
                    amplitude: num(2)?,
                    frequency: frequency as i32,
                })
            }
            _ => Err(invalid(format!("unknown immersion {name:?}"))),
        }
    }

    /// `{"resolution": [...], "periods": [...], "values": [[...], ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let t: TableJson = serde_json::from_str(text)?;
        let periods = t
            .periods
            .unwrap_or_else(|| vec![2.0 * PI; t.resolution.len()]);
        Ok(Self::Table {
            resolution: t.resolution,
            periods,
            values: t.values,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::SmallHypersphere { m, .. } | Self::PerturbedHypersphere { m, .. } => *m,
            Self::PerturbedTorus { .. } => 2,
            Self::Table { resolution, .. } => resolution.len(),
        }
    }

    /// Parametrization domain at resolution `n` (per periodic axis; interval
    /// axes use `n/2 + 1` nodes).
    pub fn grid(&self, n: usize, backend: Backend) -> Result<DomainGrid> {
        match self {
            Self::SmallHypersphere { m: 2, .. } | Self::PerturbedHypersphere { m: 2, .. } => {
                if backend != Backend::Spectral {
                    return Err(invalid(
                        "2-dimensional hyperspheres use a Chebyshev polar band and need the spectral backend",
                    ));
                }
                DomainGrid::new(
                    vec![
                        AxisSpec::Interval {
                            n: n / 2 + 1,
                            lo: POLAR_MARGIN,
                            hi: PI - POLAR_MARGIN,
                        },
                        AxisSpec::Periodic {
                            n,
                            period: 2.0 * PI,
                        },
                    ],
                    backend,
                )
            }
            Self::Table {
                resolution,
                periods,
                ..
            } => DomainGrid::periodic(resolution, periods, backend),
            _ => DomainGrid::torus(self.dim(), n, backend),
        }
    }

    /// Ambient embedding at a domain point.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            Self::SmallHypersphere { m, r } => sphere_point(m, r, x),
            Self::PerturbedHypersphere {
                m,
                r,
                amplitude,
                frequency,
            } => {
                let k = frequency as f64;
                let bump = match m {
                    1 => (k * x[0]).cos(),
                    _ => x[0].sin() * (k * x[1]).cos(),
                };
                sphere_point(m, r * (1.0 + amplitude * bump), x)
            }
            Self::PerturbedTorus {
                a0,
                amplitude,
                frequency,
            } => {
                let a = a0 + amplitude * (frequency as f64 * x[0]).sin() * x[1].cos();
                vec![
                    a.cos() * x[0].cos(),
                    a.cos() * x[0].sin(),
                    a.sin() * x[1].cos(),
                    a.sin() * x[1].sin(),
                ]
            }
            Self::Table { .. } => Vec::new(),
        }
    }

    pub fn build(&self, n: usize, backend: Backend) -> Result<HypersurfaceImmersion> {
        let grid = self.grid(n, backend)?;
        match self {
            Self::Table { values, .. } => {
                let nc = self.dim() + 2;
                if values.len() != grid.len() || values.iter().any(|v| v.len() != nc) {
                    return Err(invalid(format!(
                        "immersion table needs {} points with {nc} components",
                        grid.len()
                    )));
                }
                HypersurfaceImmersion::new(&grid, Field::from_vec(nc, values.concat()))
            }
            _ => HypersurfaceImmersion::from_fn(&grid, |x| self.embed(x)),
        }
    }
}

/// `(ρ ω(x), √(1−ρ²))` with `ω` the standard parametrization of `S^m`.
fn sphere_point(m: usize, rho: f64, x: &[f64]) -> Vec<f64> {
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    match m {
        1 => vec![rho * x[0].cos(), rho * x[0].sin(), c],
        _ => vec![
            rho * x[0].sin() * x[1].cos(),
            rho * x[0].sin() * x[1].sin(),
            rho * x[0].cos(),
            c,
        ],
    }
}
