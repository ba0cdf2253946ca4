//! Target charts: metric, Christoffel symbols, curvature, Lie derivatives and
//! Killing-field diagnostics.
//!
//! Index layout: Christoffel symbols `Γ^a_{bc}` live at `a*d*d + b*d + c`;
//! curvature components `R^a_{bcd}` live at `((a*d + b)*d + c)*d + d'` and are
//! defined by `R(∂_c, ∂_d)∂_b = R^a_{bcd} ∂_a` with
//! `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_{[X,Y]}Z`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{invalid, Error, Result};

type PointFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// A chart of a Riemannian manifold given by its metric coefficients.
#[derive(Clone)]
pub struct ChartMetric {
    name: String,
    dim: usize,
    metric: PointFn,
    christoffel_closed: Option<PointFn>,
    in_domain: Option<DomainFn>,
    fd_step: f64,
}

impl fmt::Debug for ChartMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartMetric")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("fd_step", &self.fd_step)
            .field("closed_christoffel", &self.christoffel_closed.is_some())
            .finish()
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

impl ChartMetric {
    /// Chart from a metric evaluator returning the row-major `dim × dim` matrix.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        metric: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            metric: Arc::new(metric),
            christoffel_closed: None,
            in_domain: None,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_christoffel(
        mut self,
        gamma: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.christoffel_closed = Some(Arc::new(gamma));
        self
    }

    pub fn with_domain(mut self, pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.in_domain = Some(Arc::new(pred));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    /// Same metric with the closed-form Christoffel evaluator removed.
    pub fn without_closed_form(mut self) -> Self {
        self.christoffel_closed = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_closed_christoffel(&self) -> bool {
        self.christoffel_closed.is_some()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter().all(|v| v.is_finite())
            && self.in_domain.as_ref().map_or(true, |f| f(x))
    }

    /// Metric coefficients `g_{ab}` (row-major).
    pub fn metric(&self, x: &[f64]) -> Vec<f64> {
        (self.metric)(x)
    }

    /// Inverse metric; fails when the metric is not finite and positive definite.
    pub fn inverse_metric(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let entries = self.metric(x);
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMetric { point: x.to_vec() });
        }
        let g = DMatrix::from_row_slice(d, d, &entries);
        let chol = g
            .cholesky()
            .ok_or_else(|| Error::SingularMetric { point: x.to_vec() })?;
        let inv = chol.inverse();
        Ok((0..d * d).map(|k| inv[(k / d, k % d)]).collect())
    }

    fn shifted(x: &[f64], axis: usize, by: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        y[axis] += by;
        y
    }

    /// Christoffel symbols by the Levi-Civita formula from central differences
    /// of the metric, ignoring any closed form.
    pub fn christoffel_fd(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let h = self.fd_step;
        let ginv = self.inverse_metric(x)?;
        let dg: Vec<Vec<f64>> = (0..d)
            .map(|c| {
                let p = self.metric(&Self::shifted(x, c, h));
                let m = self.metric(&Self::shifted(x, c, -h));
                p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let mut gamma = vec![0.0; d * d * d];
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    let mut s = 0.0;
                    for e in 0..d {
                        s += ginv[a * d + e]
                            * (dg[b][e * d + c] + dg[c][e * d + b] - dg[e][b * d + c]);
                    }
                    gamma[a * d * d + b * d + c] = 0.5 * s;
                }
            }
        }
        Ok(gamma)
    }

    /// Christoffel symbols `Γ^a_{bc}`, closed form when supplied.
    pub fn christoffel(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.christoffel_closed {
            Some(f) => {
                self.inverse_metric(x)?;
                Ok(f(x))
            }
            None => self.christoffel_fd(x),
        }
    }

    /// `∂_e Γ^a_{bc}` at `e*d³ + a*d² + b*d + c` (central differences).
    pub fn christoffel_derivative(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let h = self.fd_step;
        let mut out = Vec::with_capacity(d * d * d * d);
        for e in 0..d {
            let p = self.christoffel(&Self::shifted(x, e, h))?;
            let m = self.christoffel(&Self::shifted(x, e, -h))?;
            out.extend(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)));
        }
        Ok(out)
    }

    /// Curvature components `R^a_{bcd}`.
    pub fn riemann(&self, x: &[f64]) -> Result<Vec<f64>> {
        let gamma = self.christoffel(x)?;
        let dgamma = self.christoffel_derivative(x)?;
        Ok(riemann_from(self.dim, &gamma, &dgamma))
    }

    /// Fully lowered curvature `R_{abcd} = g_{ae} R^e_{bcd}`.
    pub fn riemann_lowered(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let r = self.riemann(x)?;
        let g = self.metric(x);
        let mut out = vec![0.0; d * d * d * d];
        for a in 0..d {
            for rest in 0..d * d * d {
                out[a * d * d * d + rest] =
                    (0..d).map(|e| g[a * d + e] * r[e * d * d * d + rest]).sum();
            }
        }
        Ok(out)
    }

    /// Covariant derivative `∇_b X^a` stored at `a*d + b`.
    pub fn covariant_derivative(&self, field: &VectorFieldOnTarget, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let gamma = self.christoffel(x)?;
        let xv = field.evaluate(x);
        let jac = field.jacobian(x, self.fd_step);
        let mut out = jac;
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] += (0..d)
                    .map(|c| gamma[a * d * d + b * d + c] * xv[c])
                    .sum::<f64>();
            }
        }
        Ok(out)
    }

    /// `(L_X h)(∂_b, ∂_c) = ⟨∇_b X, ∂_c⟩ + ⟨∇_c X, ∂_b⟩` (row-major, exactly symmetric).
    pub fn killing_residual(&self, field: &VectorFieldOnTarget, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let nabla = self.covariant_derivative(field, x)?;
        let g = self.metric(x);
        let t: Vec<f64> = (0..d * d)
            .map(|k| {
                let (b, c) = (k / d, k % d);
                (0..d).map(|a| g[c * d + a] * nabla[a * d + b]).sum()
            })
            .collect();
        Ok((0..d * d)
            .map(|k| {
                let (b, c) = (k / d, k % d);
                t[b * d + c] + t[c * d + b]
            })
            .collect())
    }

    /// Second covariant derivative `∇_b∇_c X^a` at `a*d*d + b*d + c`.
    pub fn second_covariant_derivative(
        &self,
        field: &VectorFieldOnTarget,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        let d = self.dim;
        let h = self.fd_step;
        let gamma = self.christoffel(x)?;
        let nabla = self.covariant_derivative(field, x)?;
        let mut out = vec![0.0; d * d * d];
        for b in 0..d {
            let p = self.covariant_derivative(field, &Self::shifted(x, b, h))?;
            let m = self.covariant_derivative(field, &Self::shifted(x, b, -h))?;
            for a in 0..d {
                for c in 0..d {
                    let mut v = (p[a * d + c] - m[a * d + c]) / (2.0 * h);
                    for e in 0..d {
                        v += gamma[a * d * d + b * d + e] * nabla[e * d + c];
                        v -= gamma[e * d * d + b * d + c] * nabla[a * d + e];
                    }
                    out[a * d * d + b * d + c] = v;
                }
            }
        }
        Ok(out)
    }

    /// `R(Y,Z)W` from curvature components.
    pub fn curvature_apply(riem: &[f64], d: usize, y: &[f64], z: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (a, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        s += riem[((a * d + b) * d + c) * d + e] * w[b] * y[c] * z[e];
                    }
                }
            }
            *o = s;
        }
        out
    }

    /// `∇²_{Y,Z}X + R(X,Y)Z`; vanishes for Killing fields.
    pub fn curvature_killing_residual(
        &self,
        field: &VectorFieldOnTarget,
        y: &[f64],
        z: &[f64],
        x: &[f64],
    ) -> Result<Vec<f64>> {
        let d = self.dim;
        let hess = self.second_covariant_derivative(field, x)?;
        let riem = self.riemann(x)?;
        let xv = field.evaluate(x);
        let mut out = Self::curvature_apply(&riem, d, &xv, y, z);
        for (a, o) in out.iter_mut().enumerate() {
            for b in 0..d {
                for c in 0..d {
                    *o += hess[a * d * d + b * d + c] * y[b] * z[c];
                }
            }
        }
        Ok(out)
    }

    /// `L_X Γ^a_{bc} = ∇_b∇_c X^a + (R(X, ∂_b)∂_c)^a`.
    pub fn lie_christoffel(&self, field: &VectorFieldOnTarget, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let mut out = self.second_covariant_derivative(field, x)?;
        let riem = self.riemann(x)?;
        let xv = field.evaluate(x);
        let mut eb = vec![0.0; d];
        let mut ec = vec![0.0; d];
        for b in 0..d {
            for c in 0..d {
                eb.iter_mut().for_each(|v| *v = 0.0);
                ec.iter_mut().for_each(|v| *v = 0.0);
                eb[b] = 1.0;
                ec[c] = 1.0;
                let r = Self::curvature_apply(&riem, d, &xv, &eb, &ec);
                for a in 0..d {
                    out[a * d * d + b * d + c] += r[a];
                }
            }
        }
        Ok(out)
    }
}

/// Curvature components from Christoffel symbols and their derivatives.
pub fn riemann_from(d: usize, gamma: &[f64], dgamma: &[f64]) -> Vec<f64> {
    let g = |a: usize, b: usize, c: usize| gamma[a * d * d + b * d + c];
    let dg = |e: usize, a: usize, b: usize, c: usize| dgamma[e * d * d * d + a * d * d + b * d + c];
    let mut r = vec![0.0; d * d * d * d];
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    let mut v = dg(c, a, e, b) - dg(e, a, c, b);
                    for f in 0..d {
                        v += g(a, c, f) * g(f, e, b) - g(a, e, f) * g(f, c, b);
                    }
                    r[((a * d + b) * d + c) * d + e] = v;
                }
            }
        }
    }
    r
}

/// A vector field on the target, in chart components or (for spheres) ambient components.
#[derive(Clone)]
pub struct VectorFieldOnTarget {
    label: String,
    dim: usize,
    evaluate: PointFn,
    jacobian: Option<PointFn>,
    generator: Option<Vec<f64>>,
}

impl fmt::Debug for VectorFieldOnTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldOnTarget")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("generator", &self.generator)
            .finish()
    }
}

impl VectorFieldOnTarget {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        evaluate: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            dim,
            evaluate: Arc::new(evaluate),
            jacobian: None,
            generator: None,
        }
    }

    /// Supplies `∂_b X^a` in closed form (row-major, `a*d + b`).
    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    /// Linear field `X(u) = A u` for an antisymmetric `A` (row-major, `dim × dim`).
    pub fn from_generator(a: &[f64], dim: usize) -> Result<Self> {
        if a.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "generator has {} entries, expected {}",
                a.len(),
                dim * dim
            )));
        }
        for i in 0..dim {
            for j in 0..dim {
                if (a[i * dim + j] + a[j * dim + i]).abs() > 1e-12 {
                    return Err(invalid(format!(
                        "generator is not antisymmetric at ({i},{j})"
                    )));
                }
            }
        }
        let gen = a.to_vec();
        let gen_eval = gen.clone();
        let gen_jac = gen.clone();
        Ok(Self {
            label: "generator".into(),
            dim,
            evaluate: Arc::new(move |u| {
                (0..dim)
                    .map(|i| (0..dim).map(|j| gen_eval[i * dim + j] * u[j]).sum())
                    .collect()
            }),
            jacobian: Some(Arc::new(move |_| gen_jac.clone())),
            generator: Some(gen),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generator(&self) -> Option<&[f64]> {
        self.generator.as_deref()
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        (self.evaluate)(x)
    }

    /// `∂_b X^a` (closed form when supplied, otherwise central differences with `step`).
    pub fn jacobian(&self, x: &[f64], step: f64) -> Vec<f64> {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        let mut y = x.to_vec();
        for b in 0..d {
            y[b] = x[b] + step;
            let p = self.evaluate(&y);
            y[b] = x[b] - step;
            let m = self.evaluate(&y);
            y[b] = x[b];
            for a in 0..d {
                out[a * d + b] = (p[a] - m[a]) / (2.0 * step);
            }
        }
        out
    }

    /// `a X + b Y` (generators combine when both are present).
    pub fn linear_combination(a: f64, x: &Self, b: f64, y: &Self) -> Result<Self> {
        if x.dim != y.dim {
            return Err(Error::Dimension(
                "vector fields of different dimension".into(),
            ));
        }
        let (xe, ye) = (x.evaluate.clone(), y.evaluate.clone());
        let (xs, ys) = (x.clone(), y.clone());
        let dim = x.dim;
        let mut out = Self::new(format!("{a}*{}+{b}*{}", x.label, y.label), dim, move |p| {
            xe(p)
                .iter()
                .zip(ye(p))
                .map(|(u, v)| a * u + b * v)
                .collect()
        });
        if x.jacobian.is_some() && y.jacobian.is_some() {
            out = out.with_jacobian(move |p| {
                xs.jacobian(p, 0.0)
                    .iter()
                    .zip(ys.jacobian(p, 0.0))
                    .map(|(u, v)| a * u + b * v)
                    .collect()
            });
        }
        if let (Some(g), Some(h)) = (&x.generator, &y.generator) {
            out.generator = Some(g.iter().zip(h).map(|(u, v)| a * u + b * v).collect());
        }
        Ok(out)
    }
}

/// Inverse stereographic projection from the north pole: `x ↦ (2x, |x|²−1)/(|x|²+1)`.
pub fn stereographic_inverse(x: &[f64]) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let mut p: Vec<f64> = x.iter().map(|v| 2.0 * v / (1.0 + r2)).collect();
    p.push((r2 - 1.0) / (r2 + 1.0));
    p
}

/// Stereographic projection `p ↦ p_{1..n}/(1 − p_{n+1})`.
pub fn stereographic(p: &[f64]) -> Vec<f64> {
    let n = p.len() - 1;
    p[..n].iter().map(|v| v / (1.0 - p[n])).collect()
}

/// Ambient image of the chart vector `v` at chart point `x` under the inverse projection.
pub fn stereographic_push(x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = x.len();
    let r2: f64 = x.iter().map(|t| t * t).sum();
    let q = 1.0 + r2;
    let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
    let mut out: Vec<f64> = (0..n)
        .map(|i| 2.0 * v[i] / q - 4.0 * x[i] * xv / (q * q))
        .collect();
    out.push(4.0 * xv / (q * q));
    out
}

/// Chart vector corresponding to an ambient tangent vector `w` at `p = σ⁻¹(x)`.
pub fn stereographic_pull(p: &[f64], w: &[f64]) -> Vec<f64> {
    let n = p.len() - 1;
    let den = 1.0 - p[n];
    (0..n)
        .map(|i| w[i] / den + p[i] * w[n] / (den * den))
        .collect()
}

fn conformal_christoffel(dim: usize, dw: &[f64]) -> Vec<f64> {
    let mut gamma = vec![0.0; dim * dim * dim];
    for a in 0..dim {
        for b in 0..dim {
            for c in 0..dim {
                let mut v = 0.0;
                if a == b {
                    v += dw[c];
                }
                if a == c {
                    v += dw[b];
                }
                if b == c {
                    v -= dw[a];
                }
                gamma[a * dim * dim + b * dim + c] = v;
            }
        }
    }
    gamma
}

fn scaled_identity(dim: usize, s: f64) -> Vec<f64> {
    let mut g = vec![0.0; dim * dim];
    for i in 0..dim {
        g[i * dim + i] = s;
    }
    g
}

/// Flat chart on ℝⁿ.
pub fn euclidean(dim: usize) -> ChartMetric {
    ChartMetric::new(format!("euclidean:{dim}"), dim, move |_| {
        scaled_identity(dim, 1.0)
    })
    .with_christoffel(move |_| vec![0.0; dim * dim * dim])
}

/// Round unit sphere in stereographic coordinates, `g = 4δ/(1+|x|²)²`.
pub fn sphere_stereographic(dim: usize) -> ChartMetric {
    ChartMetric::new(format!("sphere-stereographic:{dim}"), dim, move |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        scaled_identity(dim, 4.0 / ((1.0 + r2) * (1.0 + r2)))
    })
    .with_christoffel(move |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let dw: Vec<f64> = x.iter().map(|v| -2.0 * v / (1.0 + r2)).collect();
        conformal_christoffel(dim, &dw)
    })
}

/// Upper half-plane model of the hyperbolic plane, `g = δ/y²`.
pub fn hyperbolic_halfplane() -> ChartMetric {
    ChartMetric::new("hyperbolic-halfplane", 2, |x| {
        scaled_identity(2, 1.0 / (x[1] * x[1]))
    })
    .with_christoffel(|x| conformal_christoffel(2, &[0.0, -1.0 / x[1]]))
    .with_domain(|x| x[1] > 0.0)
}

/// Built-in chart by registry name.
pub fn builtin_chart(name: &str) -> Result<ChartMetric> {
    let parts: Vec<&str> = name.split(':').collect();
    let dim = |s: Option<&&str>| -> Result<usize> {
        s.ok_or_else(|| invalid(format!("chart {name:?} needs a dimension")))?
            .parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| invalid(format!("bad dimension in chart {name:?}")))
    };
    match parts[0] {
        "euclidean" => Ok(euclidean(dim(parts.get(1))?)),
        "sphere-stereographic" => Ok(sphere_stereographic(dim(parts.get(1))?)),
        "hyperbolic-halfplane" if parts.len() == 1 => Ok(hyperbolic_halfplane()),
        _ => Err(invalid(format!("unknown chart {name:?}"))),
    }
}

pub const BUILTIN_CHARTS: &[&str] = &[
    "euclidean:n",
    "sphere-stereographic:n",
    "hyperbolic-halfplane",
];

#[derive(Clone, Debug, Deserialize)]
struct Monomial {
    coef: f64,
    powers: Vec<u32>,
}

#[derive(Clone, Debug, Deserialize)]
struct RationalEntry {
    i: usize,
    j: usize,
    numerator: Vec<Monomial>,
    #[serde(default)]
    denominator: Option<Vec<Monomial>>,
}

#[derive(Clone, Debug, Deserialize)]
struct RationalChartSpec {
    #[serde(default)]
    name: Option<String>,
    dim: usize,
    entries: Vec<RationalEntry>,
    #[serde(default)]
    fd_step: Option<f64>,
}

fn eval_poly(terms: &[Monomial], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|m| {
            m.coef
                * m.powers
                    .iter()
                    .zip(x)
                    .map(|(&p, v)| v.powi(p as i32))
                    .product::<f64>()
        })
        .sum()
}

/// Chart whose metric entries are rational functions of the coordinates.
///
/// ```json
/// {"dim": 2, "entries": [
///   {"i": 0, "j": 0, "numerator": [{"coef": 1.0, "powers": [0, 0]}],
///    "denominator": [{"coef": 1.0, "powers": [0, 2]}]},
///   {"i": 1, "j": 1, "numerator": [{"coef": 1.0, "powers": [0, 0]}],
///    "denominator": [{"coef": 1.0, "powers": [0, 2]}]}]}
/// ```
/// Unlisted entries are zero; an entry `(i, j)` also fills `(j, i)`.
pub fn chart_from_json(text: &str) -> Result<ChartMetric> {
    let spec: RationalChartSpec = serde_json::from_str(text)?;
    let d = spec.dim;
    if d == 0 {
        return Err(Error::Spec("chart dimension must be positive".into()));
    }
    for e in &spec.entries {
        if e.i >= d || e.j >= d {
            return Err(Error::Spec(format!(
                "entry ({}, {}) out of range",
                e.i, e.j
            )));
        }
        let all = e.numerator.iter().chain(e.denominator.iter().flatten());
        if all.clone().any(|m| m.powers.len() != d) {
            return Err(Error::Spec(
                "monomial powers must have one entry per coordinate".into(),
            ));
        }
    }
    let entries = spec.entries.clone();
    let mut chart = ChartMetric::new(spec.name.unwrap_or_else(|| "json".into()), d, move |x| {
        let mut g = vec![0.0; d * d];
        for e in &entries {
            let num = eval_poly(&e.numerator, x);
            let den = e.denominator.as_ref().map_or(1.0, |t| eval_poly(t, x));
            g[e.i * d + e.j] = num / den;
            g[e.j * d + e.i] = num / den;
        }
        g
    });
    if let Some(h) = spec.fd_step {
        if !(h > 0.0) {
            return Err(Error::Spec("fd_step must be positive".into()));
        }
        chart = chart.with_fd_step(h);
    }
    Ok(chart)
}

/// Killing field on the stereographic chart of Sⁿ induced by the ambient rotation `A`.
pub fn stereographic_rotation_field(a: &[f64], n: usize) -> Result<VectorFieldOnTarget> {
    let ambient = VectorFieldOnTarget::from_generator(a, n + 1)?;
    Ok(VectorFieldOnTarget::new(
        "stereographic-rotation",
        n,
        move |x| {
            let p = stereographic_inverse(x);
            stereographic_pull(&p, &ambient.evaluate(&p))
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_chart_has_no_curvature() {
        let c = euclidean(3);
        let x = [0.3, -0.2, 1.1];
        assert!(c.christoffel(&x).unwrap().iter().all(|v| *v == 0.0));
        assert!(c.riemann(&x).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn singular_metric_is_reported() {
        let c = ChartMetric::new("degenerate", 2, |_| vec![1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            c.christoffel(&[0.0, 0.0]),
            Err(Error::SingularMetric { .. })
        ));
    }

    #[test]
    fn registry_parses_names() {
        assert_eq!(builtin_chart("euclidean:4").unwrap().dim(), 4);
        assert_eq!(builtin_chart("sphere-stereographic:2").unwrap().dim(), 2);
        assert!(builtin_chart("hyperbolic-halfplane").is_ok());
        assert!(builtin_chart("torus").is_err());
        assert!(builtin_chart("euclidean:0").is_err());
    }

    #[test]
    fn generator_must_be_antisymmetric() {
        assert!(VectorFieldOnTarget::from_generator(&[0.0, 1.0, 1.0, 0.0], 2).is_err());
        let x = VectorFieldOnTarget::from_generator(&[0.0, -1.0, 1.0, 0.0], 2).unwrap();
        assert_eq!(x.evaluate(&[1.0, 0.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn stereographic_maps_are_inverse() {
        let x = [0.4, -1.3];
        let p = stereographic_inverse(&x);
        assert!((p.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-15);
        let back = stereographic(&p);
        assert!((back[0] - x[0]).abs() < 1e-14 && (back[1] - x[1]).abs() < 1e-14);
        let v = [0.7, 0.2];
        let w = stereographic_push(&x, &v);
        assert!(w.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-15);
        let v2 = stereographic_pull(&p, &w);
        assert!((v2[0] - v[0]).abs() < 1e-13 && (v2[1] - v[1]).abs() < 1e-13);
    }
}
