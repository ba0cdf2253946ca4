//! Discrete maps from a domain grid into a target, and the differential
//! operators built on them: differential, tension, pull-back connection,
//! rough Laplacian, the k-energies and the k-tension fields.
//!
//! Sections along a map are plain [`Field`]s: chart components in chart mode,
//! ambient vectors tangent to the sphere in sphere mode.

use std::sync::Arc;

use rayon::prelude::*;

use crate::chart::ChartMetric;
use crate::error::{invalid, Error, Result};
use crate::field::{dot, Field};
use crate::grid::DomainGrid;

/// A section of the pull-back bundle along a [`GridMap`].
pub type Section = Field;

/// Tolerance for the unit-length constraint of sphere-mode values.
pub const SPHERE_TOLERANCE: f64 = 1e-12;

/// The target manifold of a map.
#[derive(Clone, Debug)]
pub enum Target {
    /// Unit sphere `Sⁿ ⊂ ℝⁿ⁺¹`, values stored as ambient unit vectors.
    Sphere { n: usize },
    /// A chart of a Riemannian manifold, values stored as chart coordinates.
    Chart(Arc<ChartMetric>),
}

impl Target {
    /// Parses `sphere:n` or a built-in chart name.
    pub fn parse(name: &str) -> Result<Self> {
        if let Some(rest) = name.strip_prefix("sphere:") {
            let n = rest
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| invalid(format!("bad sphere dimension in {name:?}")))?;
            return Ok(Target::Sphere { n });
        }
        Ok(Target::Chart(Arc::new(crate::chart::builtin_chart(name)?)))
    }

    pub fn chart(chart: ChartMetric) -> Self {
        Target::Chart(Arc::new(chart))
    }

    /// Number of stored components per point.
    pub fn value_dim(&self) -> usize {
        match self {
            Target::Sphere { n } => n + 1,
            Target::Chart(c) => c.dim(),
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Target::Sphere { .. })
    }

    pub fn name(&self) -> String {
        match self {
            Target::Sphere { n } => format!("sphere:{n}"),
            Target::Chart(c) => c.name().to_string(),
        }
    }
}

#[derive(Debug)]
struct ChartPoints {
    h: Field,
    gamma: Field,
    riem: Field,
}

/// A map sampled on a domain grid.
#[derive(Clone, Debug)]
pub struct GridMap {
    grid: Arc<DomainGrid>,
    target: Target,
    values: Field,
    dphi: Vec<Field>,
    chart: Option<Arc<ChartPoints>>,
}

/// Iterated rough Laplacians `W_a = Δ̄^a τ` and their pull-back derivatives.
#[derive(Clone, Debug)]
pub struct TensionTower {
    /// `w[a] = Δ̄^a τ`
    pub w: Vec<Section>,
    /// `dw[a][i] = ∇̄_{∂_i} Δ̄^a τ`
    pub dw: Vec<Vec<Section>>,
}

impl TensionTower {
    /// `W_a`, with `W_{-1} = 0` handled by callers never requesting it.
    pub fn w(&self, a: usize) -> &Section {
        &self.w[a]
    }

    pub fn dw(&self, a: usize) -> &[Section] {
        &self.dw[a]
    }
}

impl GridMap {
    pub fn new(grid: Arc<DomainGrid>, target: Target, values: Field) -> Result<Self> {
        let nc = target.value_dim();
        if values.ncomp() != nc || values.points() != grid.len() {
            return Err(Error::Dimension(format!(
                "map values have {} components on {} points, expected {} on {}",
                values.ncomp(),
                values.points(),
                nc,
                grid.len()
            )));
        }
        let chart = match &target {
            Target::Sphere { .. } => {
                for p in 0..grid.len() {
                    let u = values.at(p);
                    if (dot(u, u).sqrt() - 1.0).abs() > SPHERE_TOLERANCE {
                        return Err(Error::OutOfChart {
                            index: p,
                            value: u.to_vec(),
                        });
                    }
                }
                None
            }
            Target::Chart(c) => {
                let d = c.dim();
                let mut h = Field::zeros(grid.len(), d * d);
                let mut gamma = Field::zeros(grid.len(), d * d * d);
                let mut riem = Field::zeros(grid.len(), d * d * d * d);
                let rows: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>)>> = (0..grid.len())
                    .into_par_iter()
                    .map(|p| {
                        let x = values.at(p);
                        if !c.contains(x) {
                            return Err(Error::OutOfChart {
                                index: p,
                                value: x.to_vec(),
                            });
                        }
                        Ok((c.metric(x), c.christoffel(x)?, c.riemann(x)?))
                    })
                    .collect();
                for (p, row) in rows.into_iter().enumerate() {
                    let (a, b, r) = row?;
                    h.at_mut(p).copy_from_slice(&a);
                    gamma.at_mut(p).copy_from_slice(&b);
                    riem.at_mut(p).copy_from_slice(&r);
                }
                Some(Arc::new(ChartPoints { h, gamma, riem }))
            }
        };
        let mut map = Self {
            grid,
            target,
            values,
            dphi: Vec::new(),
            chart,
        };
        let raw = map.grid.gradient(&map.values);
        map.dphi = raw.into_iter().map(|d| map.project(d)).collect();
        Ok(map)
    }

    /// Samples `f` at every grid point; sphere values are used as given.
    pub fn from_fn(
        grid: Arc<DomainGrid>,
        target: Target,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let values = grid.sample_vec(target.value_dim(), f);
        Self::new(grid, target, values)
    }

    /// Same grid and target with new values.
    pub fn with_values(&self, values: Field) -> Result<Self> {
        Self::new(self.grid.clone(), self.target.clone(), values)
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<DomainGrid> {
        self.grid.clone()
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn value(&self, p: usize) -> &[f64] {
        self.values.at(p)
    }

    /// Components per target vector.
    pub fn ncomp(&self) -> usize {
        self.values.ncomp()
    }

    /// Domain dimension.
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn is_sphere(&self) -> bool {
        self.target.is_sphere()
    }

    /// Chart metric at point `p` (chart mode only).
    pub fn chart_metric_at(&self, p: usize) -> Option<&[f64]> {
        self.chart.as_ref().map(|c| c.h.at(p))
    }

    pub(crate) fn chart_gamma_at(&self, p: usize) -> Option<&[f64]> {
        self.chart.as_ref().map(|c| c.gamma.at(p))
    }

    /// Target inner product at the image of point `p`.
    #[inline]
    pub fn inner(&self, p: usize, a: &[f64], b: &[f64]) -> f64 {
        match &self.chart {
            None => dot(a, b),
            Some(c) => {
                let d = a.len();
                let h = c.h.at(p);
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += h[i * d + j] * a[i] * b[j];
                    }
                }
                s
            }
        }
    }

    /// Removes the normal part in sphere mode; identity in chart mode.
    #[inline]
    pub fn project_at(&self, p: usize, v: &mut [f64]) {
        if self.chart.is_none() {
            let u = self.values.at(p);
            let s = dot(u, v);
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= s * ui;
            }
        }
    }

    /// Pointwise tangential projection of a whole field.
    pub fn project(&self, mut v: Field) -> Field {
        if self.chart.is_none() {
            let nc = v.ncomp();
            v.data_mut()
                .par_chunks_mut(nc)
                .enumerate()
                .for_each(|(p, chunk)| {
                    self.project_at(p, chunk);
                });
        }
        v
    }

    /// `R^N(Y,Z)W` at the image of point `p`.
    #[inline]
    pub fn curvature(&self, p: usize, y: &[f64], z: &[f64], w: &[f64]) -> Vec<f64> {
        match &self.chart {
            None => {
                let zw = dot(z, w);
                let yw = dot(y, w);
                y.iter().zip(z).map(|(a, b)| zw * a - yw * b).collect()
            }
            Some(c) => ChartMetric::curvature_apply(c.riem.at(p), y.len(), y, z, w),
        }
    }

    /// Parallel per-point construction of a field with `ncomp` components.
    pub(crate) fn pointwise(&self, ncomp: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Field {
        let mut out = Field::zeros(self.len(), ncomp);
        out.data_mut()
            .par_chunks_mut(ncomp)
            .enumerate()
            .for_each(|(p, chunk)| f(p, chunk));
        out
    }

    /// Parallel per-point scalar.
    pub(crate) fn scalar_field(&self, f: impl Fn(usize) -> f64 + Sync) -> Field {
        Field::scalar((0..self.len()).into_par_iter().map(&f).collect())
    }

    /// `Σ_{ij} g^{ij} F(i, j)` at point `p`.
    #[inline]
    pub(crate) fn metric_trace(&self, p: usize, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
        let m = self.dim();
        if self.grid.is_flat() {
            (0..m).map(|i| f(i, i)).sum()
        } else {
            let gi = self.grid.metric_at(p).ginv;
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let w = gi[i * m + j];
                    if w != 0.0 {
                        s += w * f(i, j);
                    }
                }
            }
            s
        }
    }

    /// `Σ_{ij} g^{ij} F(i, j)` for vector-valued `F`, accumulated into `out`.
    #[inline]
    pub(crate) fn metric_trace_vec(
        &self,
        p: usize,
        out: &mut [f64],
        scale: f64,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) {
        let m = self.dim();
        let flat = self.grid.is_flat();
        let gi = self.grid.metric_at(p).ginv;
        for i in 0..m {
            for j in 0..m {
                let w = if flat {
                    if i == j {
                        1.0
                    } else {
                        continue;
                    }
                } else {
                    gi[i * m + j]
                };
                if w == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(f(i, j)) {
                    *o += scale * w * v;
                }
            }
        }
    }

    /// `dφ(∂_i)` for every domain axis (tangential in sphere mode).
    pub fn differential(&self) -> &[Section] {
        &self.dphi
    }

    /// Energy density `½ g^{ij}⟨∂_iφ, ∂_jφ⟩`.
    pub fn energy_density(&self) -> Field {
        self.scalar_field(|p| {
            0.5 * self.metric_trace(p, |i, j| {
                self.inner(p, self.dphi[i].at(p), self.dphi[j].at(p))
            })
        })
    }

    /// `E(φ) = ½∫|dφ|²`.
    pub fn energy(&self) -> f64 {
        self.grid.integrate(self.energy_density().data())
    }

    /// Pull-back covariant derivative `∇̄_{∂_i} V`.
    pub fn pullback_derivative(&self, v: &Section, i: usize) -> Section {
        let mut d = self.grid.diff(v, i);
        let nc = d.ncomp();
        match &self.chart {
            None => d = self.project(d),
            Some(c) => {
                d.data_mut()
                    .par_chunks_mut(nc)
                    .enumerate()
                    .for_each(|(p, out)| {
                        let gamma = c.gamma.at(p);
                        let dp = self.dphi[i].at(p);
                        let vp = v.at(p);
                        for (a, o) in out.iter_mut().enumerate() {
                            let mut s = 0.0;
                            for b in 0..nc {
                                for cc in 0..nc {
                                    s += gamma[a * nc * nc + b * nc + cc] * dp[b] * vp[cc];
                                }
                            }
                            *o += s;
                        }
                    });
            }
        }
        d
    }

    /// `∇̄_{∂_i} V` for every axis.
    pub fn pullback_gradient(&self, v: &Section) -> Vec<Section> {
        (0..self.dim())
            .map(|i| self.pullback_derivative(v, i))
            .collect()
    }

    /// Rough Laplacian from precomputed first derivatives `dv[i] = ∇̄_i V`.
    pub fn rough_laplacian_from(&self, dv: &[Section]) -> Section {
        let m = self.dim();
        let nc = dv[0].ncomp();
        if self.grid.is_flat() {
            let mut out = Field::zeros(self.len(), nc);
            for (i, d) in dv.iter().enumerate() {
                out.axpy(-1.0, &self.pullback_derivative(d, i));
            }
            return out;
        }
        let second: Vec<Vec<Section>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| self.pullback_derivative(&dv[j], i))
                    .collect()
            })
            .collect();
        self.pointwise(nc, |p, out| {
            let mp = self.grid.metric_at(p);
            for i in 0..m {
                for j in 0..m {
                    let w = mp.ginv[i * m + j];
                    if w == 0.0 {
                        continue;
                    }
                    let sij = second[i][j].at(p);
                    for (c, o) in out.iter_mut().enumerate() {
                        let mut v = sij[c];
                        for (k, dvk) in dv.iter().enumerate() {
                            v -= mp.christoffel[k * m * m + i * m + j] * dvk.at(p)[c];
                        }
                        *o -= w * v;
                    }
                }
            }
        })
    }

    /// Rough Laplacian `Δ̄V = −Tr(∇̄∇̄ − ∇̄_∇)V`.
    pub fn rough_laplacian(&self, v: &Section) -> Section {
        self.rough_laplacian_from(&self.pullback_gradient(v))
    }

    /// Tension field `τ(φ) = Tr ∇̄dφ`.
    pub fn tension(&self) -> Section {
        let nc = self.ncomp();
        let lap: Vec<Field> = (0..nc)
            .map(|c| self.grid.laplacian(&self.values.component(c)))
            .collect();
        match &self.chart {
            None => self.pointwise(nc, |p, out| {
                for (c, o) in out.iter_mut().enumerate() {
                    *o = -lap[c].at(p)[0];
                }
                self.project_at(p, out);
            }),
            Some(ch) => self.pointwise(nc, |p, out| {
                let gamma = ch.gamma.at(p);
                for (a, o) in out.iter_mut().enumerate() {
                    let quad = self.metric_trace(p, |i, j| {
                        let (di, dj) = (self.dphi[i].at(p), self.dphi[j].at(p));
                        let mut s = 0.0;
                        for b in 0..nc {
                            for c in 0..nc {
                                s += gamma[a * nc * nc + b * nc + c] * di[b] * dj[c];
                            }
                        }
                        s
                    });
                    *o = -lap[a].at(p)[0] + quad;
                }
            }),
        }
    }

    /// `W_a = Δ̄^a τ` for `a = 0..=max` together with `∇̄W_a`.
    pub fn tower(&self, max: usize) -> TensionTower {
        let mut w = vec![self.tension()];
        let mut dw = vec![self.pullback_gradient(&w[0])];
        for a in 0..max {
            let next = self.rough_laplacian_from(&dw[a]);
            dw.push(self.pullback_gradient(&next));
            w.push(next);
        }
        TensionTower { w, dw }
    }

    /// `E_k(φ)`; `k = 1` is the Dirichlet energy.
    pub fn k_energy(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(invalid("energy order must be at least 1"));
        }
        if k == 1 {
            return Ok(self.energy());
        }
        let s = k / 2;
        let tower = self.tower(s - 1);
        Ok(self.k_energy_with(k, &tower))
    }

    pub(crate) fn k_energy_with(&self, k: usize, tower: &TensionTower) -> f64 {
        if k == 1 {
            return self.energy();
        }
        let s = k / 2;
        let density = if k % 2 == 0 {
            let w = tower.w(s - 1);
            self.scalar_field(|p| 0.5 * self.inner(p, w.at(p), w.at(p)))
        } else {
            let dw = tower.dw(s - 1);
            self.scalar_field(|p| {
                0.5 * self.metric_trace(p, |i, j| self.inner(p, dw[i].at(p), dw[j].at(p)))
            })
        };
        self.grid.integrate(density.data())
    }

    /// The k-tension field `τ_k(φ)`.
    pub fn k_tension(&self, k: usize) -> Result<Section> {
        if k == 0 {
            return Err(invalid("tension order must be at least 1"));
        }
        let tower = self.tower(k - 1);
        Ok(self.k_tension_with(k, &tower))
    }

    /// `τ_k` from a tower holding at least `W_0..W_{k-1}`.
    pub fn k_tension_with(&self, k: usize, tower: &TensionTower) -> Section {
        if k == 1 {
            return tower.w(0).clone();
        }
        let nc = self.ncomp();
        let s = k / 2;
        let even = k % 2 == 0;
        let dphi = &self.dphi;
        let out = self.pointwise(nc, |p, out| {
            let (top, next) = if even {
                (2 * s - 1, 2 * s - 2)
            } else {
                (2 * s, 2 * s - 1)
            };
            out.copy_from_slice(tower.w(top).at(p));
            let wn = tower.w(next).at(p);
            self.metric_trace_vec(p, out, -1.0, |i, j| {
                self.curvature(p, wn, dphi[i].at(p), dphi[j].at(p))
            });
            for l in 1..s {
                let a = if even { s + l - 2 } else { s + l - 1 };
                let b = s - l - 1;
                let (wa, wb) = (tower.w(a).at(p), tower.w(b).at(p));
                let (dwa, dwb) = (tower.dw(a), tower.dw(b));
                self.metric_trace_vec(p, out, -1.0, |i, j| {
                    let first = self.curvature(p, dwa[i].at(p), wb, dphi[j].at(p));
                    let second = self.curvature(p, wa, dwb[i].at(p), dphi[j].at(p));
                    first.iter().zip(second).map(|(x, y)| x - y).collect()
                });
            }
            if !even {
                let w = tower.w(s - 1).at(p);
                let dws = tower.dw(s - 1);
                self.metric_trace_vec(p, out, -1.0, |i, j| {
                    self.curvature(p, dws[i].at(p), w, dphi[j].at(p))
                });
            }
            self.project_at(p, out);
        });
        out
    }

    /// Bitension in the form `−Δ̄τ − Tr R^N(dφ, τ)dφ`.
    pub fn bitension_alt(&self) -> Section {
        let tower = self.tower(1);
        self.bitension_alt_with(&tower)
    }

    pub(crate) fn bitension_alt_with(&self, tower: &TensionTower) -> Section {
        let nc = self.ncomp();
        self.pointwise(nc, |p, out| {
            for (o, v) in out.iter_mut().zip(tower.w(1).at(p)) {
                *o = -v;
            }
            let tau = tower.w(0).at(p);
            self.metric_trace_vec(p, out, -1.0, |i, j| {
                self.curvature(p, self.dphi[i].at(p), tau, self.dphi[j].at(p))
            });
            self.project_at(p, out);
        })
    }

    /// `∫⟨A, B⟩ dv_g` for two sections.
    pub fn integrate_inner(&self, a: &Section, b: &Section) -> f64 {
        let density = self.scalar_field(|p| self.inner(p, a.at(p), b.at(p)));
        self.grid.integrate(density.data())
    }

    /// `φ + εV`, retracted to the sphere by normalization in sphere mode.
    pub fn perturbed(&self, v: &Section, eps: f64) -> Result<Self> {
        let mut values = self.values.clone();
        values.axpy(eps, v);
        if self.is_sphere() {
            let nc = values.ncomp();
            values.data_mut().par_chunks_mut(nc).for_each(|u| {
                let n = dot(u, u).sqrt();
                u.iter_mut().for_each(|x| *x /= n);
            });
        }
        self.with_values(values)
    }

    /// `|(E_k(φ_ε) − E_k(φ_{−ε}))/(2ε) − σ_k ∫⟨τ_k, V⟩|`.
    pub fn first_variation_residual(&self, v: &Section, k: usize, eps: f64) -> Result<f64> {
        let parts = self.first_variation_parts(v, k, eps)?;
        Ok((parts.0 - VARIATION_SIGN * parts.1).abs())
    }

    /// Central energy difference quotient and `∫⟨τ_k, V⟩`.
    pub fn first_variation_parts(&self, v: &Section, k: usize, eps: f64) -> Result<(f64, f64)> {
        if eps == 0.0 || !eps.is_finite() {
            return Err(invalid("variation step must be nonzero and finite"));
        }
        let v = self.project(v.clone());
        let plus = self.perturbed(&v, eps)?.k_energy(k)?;
        let minus = self.perturbed(&v, -eps)?.k_energy(k)?;
        let tk = self.k_tension(k)?;
        Ok(((plus - minus) / (2.0 * eps), self.integrate_inner(&tk, &v)))
    }
}

/// Sign `σ_k` in `dE_k(φ_ε)/dε = σ_k ∫⟨τ_k, V⟩` for the canonical family (every k).
pub const VARIATION_SIGN: f64 = -1.0;

/// Sign of the bitension evaluator `−Δ̄τ − Tr R(dφ, τ)dφ` in the same relation.
pub const BITENSION_VARIATION_SIGN: f64 = 1.0;

/// Global sign `σ` with `bitension_alt = σ · τ₂`.
pub const BITENSION_RELATIVE_SIGN: f64 = -1.0;
