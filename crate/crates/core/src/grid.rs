//! Periodic domain grids, differentiation backends, domain metric and quadrature.
//!
//! Points are stored row-major (last axis fastest). Periodic axes are uniform;
//! an axis may also be a closed interval sampled at Chebyshev–Lobatto nodes,
//! which is only used with the spectral backend for patches that admit no
//! periodic parametrization (e.g. a round 2-sphere).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{pairwise_sum, Field};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Fd2,
    Fd4,
    Spectral,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Fd2 => "fd2",
            Backend::Fd4 => "fd4",
            Backend::Spectral => "spectral",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fd2" => Ok(Backend::Fd2),
            "fd4" => Ok(Backend::Fd4),
            "spectral" => Ok(Backend::Spectral),
            other => Err(invalid(format!("unknown backend {other:?}"))),
        }
    }
}

/// Geometry of a single grid axis.
#[derive(Clone, Debug, PartialEq)]
pub enum AxisSpec {
    Periodic {
        n: usize,
        period: f64,
    },
    /// Chebyshev–Lobatto nodes on `[lo, hi]`.
    Interval {
        n: usize,
        lo: f64,
        hi: f64,
    },
}

impl AxisSpec {
    pub fn len(&self) -> usize {
        match *self {
            AxisSpec::Periodic { n, .. } | AxisSpec::Interval { n, .. } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone)]
struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
enum AxisOps {
    Fd { h: f64 },
    Fourier { fft: FftPair, wavenumbers: Vec<f64> },
    Chebyshev { matrix: Vec<f64> },
}

#[derive(Clone)]
struct Axis {
    spec: AxisSpec,
    coords: Vec<f64>,
    weights: Vec<f64>,
    ops: AxisOps,
}

/// Per-point domain metric data.
#[derive(Clone, Debug)]
struct MetricData {
    g: Field,
    ginv: Field,
    sqrt_det: Vec<f64>,
    /// Γ^k_ij stored at `k*m*m + i*m + j`.
    christoffel: Field,
}

/// Domain metric quantities at one grid point.
#[derive(Clone, Copy, Debug)]
pub struct MetricPoint<'a> {
    pub g: &'a [f64],
    pub ginv: &'a [f64],
    pub sqrt_det: f64,
    pub christoffel: &'a [f64],
}

/// A uniform periodic grid on a torus (optionally with Chebyshev interval axes),
/// a differentiation backend and a domain metric.
#[derive(Clone)]
pub struct DomainGrid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
    backend: Backend,
    metric: Option<Arc<MetricData>>,
    identity: Vec<f64>,
    zero_gamma: Vec<f64>,
}

impl fmt::Debug for DomainGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainGrid")
            .field(
                "axes",
                &self.axes.iter().map(|a| &a.spec).collect::<Vec<_>>(),
            )
            .field("backend", &self.backend)
            .field("flat", &self.metric.is_none())
            .finish()
    }
}

fn chebyshev_axis(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let nn = n - 1;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let x: Vec<f64> = (0..n).map(|j| (PI * j as f64 / nn as f64).cos()).collect();
    let c = |i: usize| if i == 0 || i == nn { 2.0 } else { 1.0 };
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i != j {
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let v = c(i) / c(j) * sign / (x[i] - x[j]);
                d[i * n + j] = v / half;
                row += v / half;
            }
        }
        d[i * n + i] = -row;
    }
    // Clenshaw–Curtis weights
    let mut w = vec![0.0; n];
    let theta: Vec<f64> = (0..n).map(|k| PI * k as f64 / nn as f64).collect();
    let nf = nn as f64;
    let mut v = vec![1.0; n];
    if nn % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[nn] = w[0];
        for k in 1..nn / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate().take(nn).skip(1) {
                *vi -= 2.0 * (2.0 * kf * theta[i]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate().take(nn).skip(1) {
            *vi -= (nf * theta[i]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[nn] = w[0];
        for k in 1..=(nn - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate().take(nn).skip(1) {
                *vi -= 2.0 * (2.0 * kf * theta[i]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for i in 1..nn {
        w[i] = 2.0 * v[i] / nf;
    }
    let coords = x.iter().map(|xi| mid + half * xi).collect();
    let weights = w.iter().map(|wi| wi * half).collect();
    (coords, weights, d)
}

impl DomainGrid {
    /// Flat grid from explicit axis specifications.
    pub fn new(axes: Vec<AxisSpec>, backend: Backend) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("domain needs at least one axis"));
        }
        let mut planner = FftPlanner::<f64>::new();
        let mut built = Vec::with_capacity(axes.len());
        for spec in axes {
            let axis = match spec {
                AxisSpec::Periodic { n, period } => {
                    if n < 4 || !(period > 0.0) {
                        return Err(invalid(format!("bad periodic axis n={n} period={period}")));
                    }
                    let h = period / n as f64;
                    let coords = (0..n).map(|j| j as f64 * h).collect();
                    let weights = vec![h; n];
                    let ops = match backend {
                        Backend::Spectral => {
                            let fft = FftPair {
                                forward: planner.plan_fft_forward(n),
                                inverse: planner.plan_fft_inverse(n),
                            };
                            let scale = 2.0 * PI / period;
                            let wavenumbers = (0..n)
                                .map(|j| {
                                    if 2 * j == n {
                                        0.0
                                    } else if j < n / 2 + n % 2 {
                                        j as f64 * scale
                                    } else {
                                        (j as f64 - n as f64) * scale
                                    }
                                })
                                .collect();
                            AxisOps::Fourier { fft, wavenumbers }
                        }
                        _ => AxisOps::Fd { h },
                    };
                    Axis {
                        spec,
                        coords,
                        weights,
                        ops,
                    }
                }
                AxisSpec::Interval { n, lo, hi } => {
                    if backend != Backend::Spectral {
                        return Err(invalid("interval axes require the spectral backend"));
                    }
                    if n < 3 || !(hi > lo) {
                        return Err(invalid(format!("bad interval axis n={n} [{lo},{hi}]")));
                    }
                    let (coords, weights, matrix) = chebyshev_axis(n, lo, hi);
                    Axis {
                        spec,
                        coords,
                        weights,
                        ops: AxisOps::Chebyshev { matrix },
                    }
                }
            };
            built.push(axis);
        }
        let dim = built.len();
        let mut strides = vec![1; dim];
        for a in (0..dim - 1).rev() {
            strides[a] = strides[a + 1] * built[a + 1].spec.len();
        }
        let len = strides[0] * built[0].spec.len();
        let mut identity = vec![0.0; dim * dim];
        for i in 0..dim {
            identity[i * dim + i] = 1.0;
        }
        Ok(Self {
            axes: built,
            strides,
            len,
            backend,
            metric: None,
            identity,
            zero_gamma: vec![0.0; dim * dim * dim],
        })
    }

    /// Flat torus with the given resolutions and periods.
    pub fn periodic(resolution: &[usize], periods: &[f64], backend: Backend) -> Result<Self> {
        if resolution.len() != periods.len() {
            return Err(Error::Dimension(
                "resolution and periods differ in length".into(),
            ));
        }
        Self::new(
            resolution
                .iter()
                .zip(periods)
                .map(|(&n, &period)| AxisSpec::Periodic { n, period })
                .collect(),
            backend,
        )
    }

    /// Flat torus `[0, 2π)^dim` with `n` points per axis.
    pub fn torus(dim: usize, n: usize, backend: Backend) -> Result<Self> {
        Self::periodic(&vec![n; dim], &vec![2.0 * PI; dim], backend)
    }

    /// Same axes and backend, flat metric.
    pub fn flat_copy(&self) -> Self {
        let mut out = self.clone();
        out.metric = None;
        out
    }

    /// Same geometry with a different resolution per axis.
    pub fn with_resolution(&self, resolution: &[usize]) -> Result<Self> {
        let axes = self
            .axes
            .iter()
            .zip(resolution)
            .map(|(a, &n)| match a.spec {
                AxisSpec::Periodic { period, .. } => AxisSpec::Periodic { n, period },
                AxisSpec::Interval { lo, hi, .. } => AxisSpec::Interval { n, lo, hi },
            })
            .collect();
        Self::new(axes, self.backend)
    }

    /// Installs a domain metric sampled from `metric_at(x)` (row-major m×m).
    pub fn with_metric_fn(self, metric_at: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let m = self.dim();
        let g = Field::from_fn(self.len, m * m, |p, out| {
            out.copy_from_slice(&metric_at(&self.coords(p)));
        });
        self.with_metric_field(g)
    }

    /// Installs a domain metric given per grid point; Christoffel symbols are
    /// derived with the grid's own backend.
    pub fn with_metric_field(mut self, g: Field) -> Result<Self> {
        let m = self.dim();
        if g.ncomp() != m * m || g.points() != self.len {
            return Err(Error::Dimension("metric field has wrong shape".into()));
        }
        let mut ginv = Field::zeros(self.len, m * m);
        let mut sqrt_det = vec![0.0; self.len];
        for p in 0..self.len {
            let gm = nalgebra::DMatrix::from_row_slice(m, m, g.at(p));
            let det = gm.determinant();
            if !(det > 0.0) {
                return Err(Error::SingularMetric {
                    point: self.coords(p),
                });
            }
            let inv = gm.try_inverse().ok_or_else(|| Error::SingularMetric {
                point: self.coords(p),
            })?;
            for i in 0..m {
                for j in 0..m {
                    ginv.at_mut(p)[i * m + j] = inv[(i, j)];
                }
            }
            sqrt_det[p] = det.sqrt();
        }
        let dg: Vec<Field> = (0..m).map(|a| self.diff(&g, a)).collect();
        let mut christoffel = Field::zeros(self.len, m * m * m);
        for p in 0..self.len {
            let gi = ginv.at(p);
            let out = christoffel.at_mut(p);
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        let mut s = 0.0;
                        for l in 0..m {
                            let d_i_lj = dg[i].at(p)[l * m + j];
                            let d_j_li = dg[j].at(p)[l * m + i];
                            let d_l_ij = dg[l].at(p)[i * m + j];
                            s += gi[k * m + l] * (d_i_lj + d_j_li - d_l_ij);
                        }
                        out[k * m * m + i * m + j] = 0.5 * s;
                    }
                }
            }
        }
        self.metric = Some(Arc::new(MetricData {
            g,
            ginv,
            sqrt_det,
            christoffel,
        }));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn is_flat(&self) -> bool {
        self.metric.is_none()
    }

    pub fn resolution(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.spec.len()).collect()
    }

    pub fn axis_specs(&self) -> Vec<AxisSpec> {
        self.axes.iter().map(|a| a.spec.clone()).collect()
    }

    /// Characteristic grid step (largest axis spacing).
    pub fn step(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| match a.spec {
                AxisSpec::Periodic { n, period } => period / n as f64,
                AxisSpec::Interval { n, lo, hi } => (hi - lo) / (n - 1) as f64,
            })
            .fold(0.0, f64::max)
    }

    /// Multi-index of point `p`.
    pub fn index(&self, p: usize) -> Vec<usize> {
        self.axes
            .iter()
            .zip(&self.strides)
            .map(|(a, &s)| (p / s) % a.spec.len())
            .collect()
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        self.axes
            .iter()
            .zip(&self.strides)
            .map(|(a, &s)| a.coords[(p / s) % a.spec.len()])
            .collect()
    }

    /// Quadrature weight of point `p` for the coordinate measure (without √det g).
    pub fn cell_weight(&self, p: usize) -> f64 {
        self.axes
            .iter()
            .zip(&self.strides)
            .map(|(a, &s)| a.weights[(p / s) % a.spec.len()])
            .product()
    }

    pub fn metric_at(&self, p: usize) -> MetricPoint<'_> {
        match &self.metric {
            None => MetricPoint {
                g: &self.identity,
                ginv: &self.identity,
                sqrt_det: 1.0,
                christoffel: &self.zero_gamma,
            },
            Some(md) => MetricPoint {
                g: md.g.at(p),
                ginv: md.ginv.at(p),
                sqrt_det: md.sqrt_det[p],
                christoffel: md.christoffel.at(p),
            },
        }
    }

    /// Scalar field from a function of the coordinates.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        Field::scalar((0..self.len).map(|p| f(&self.coords(p))).collect())
    }

    /// Vector-valued field from a function of the coordinates.
    pub fn sample_vec(&self, ncomp: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Field {
        Field::from_fn(self.len, ncomp, |p, out| {
            out.copy_from_slice(&f(&self.coords(p)))
        })
    }

    /// Partial derivative of every component along `axis`.
    pub fn diff(&self, f: &Field, axis: usize) -> Field {
        assert_eq!(f.points(), self.len, "field does not live on this grid");
        let ax = &self.axes[axis];
        let n = ax.spec.len();
        let stride = self.strides[axis];
        let nc = f.ncomp();
        let src = f.data();
        match &ax.ops {
            AxisOps::Fd { h } => {
                let h = *h;
                let fourth = self.backend == Backend::Fd4;
                let mut out = vec![0.0; src.len()];
                out.par_chunks_mut(nc).enumerate().for_each(|(p, o)| {
                    let i = (p / stride) % n;
                    let base = p - i * stride;
                    let at = |k: isize| {
                        let j = (i as isize + k).rem_euclid(n as isize) as usize;
                        (base + j * stride) * nc
                    };
                    if fourth {
                        let (m2, m1, p1, p2) = (at(-2), at(-1), at(1), at(2));
                        for c in 0..nc {
                            o[c] = (src[m2 + c] - 8.0 * src[m1 + c] + 8.0 * src[p1 + c]
                                - src[p2 + c])
                                / (12.0 * h);
                        }
                    } else {
                        let (m1, p1) = (at(-1), at(1));
                        for c in 0..nc {
                            o[c] = (src[p1 + c] - src[m1 + c]) / (2.0 * h);
                        }
                    }
                });
                Field::from_vec(nc, out)
            }
            AxisOps::Fourier { fft, wavenumbers } => {
                let bases = self.line_bases(axis);
                let lines: Vec<Vec<f64>> = bases
                    .par_iter()
                    .map(|&base| {
                        let mut buf = vec![Complex64::new(0.0, 0.0); n];
                        let mut res = vec![0.0; n * nc];
                        let mut scratch =
                            vec![Complex64::new(0.0, 0.0); fft.forward.get_inplace_scratch_len()];
                        for c in 0..nc {
                            for (j, b) in buf.iter_mut().enumerate() {
                                *b = Complex64::new(src[(base + j * stride) * nc + c], 0.0);
                            }
                            fft.forward.process_with_scratch(&mut buf, &mut scratch);
                            for (b, k) in buf.iter_mut().zip(wavenumbers) {
                                *b = Complex64::new(-b.im * k, b.re * k);
                            }
                            fft.inverse.process_with_scratch(&mut buf, &mut scratch);
                            for j in 0..n {
                                res[j * nc + c] = buf[j].re / n as f64;
                            }
                        }
                        res
                    })
                    .collect();
                self.scatter_lines(axis, nc, &bases, &lines)
            }
            AxisOps::Chebyshev { matrix } => {
                let bases = self.line_bases(axis);
                let lines: Vec<Vec<f64>> = bases
                    .par_iter()
                    .map(|&base| {
                        let mut res = vec![0.0; n * nc];
                        for i in 0..n {
                            for j in 0..n {
                                let d = matrix[i * n + j];
                                let off = (base + j * stride) * nc;
                                for c in 0..nc {
                                    res[i * nc + c] += d * src[off + c];
                                }
                            }
                        }
                        res
                    })
                    .collect();
                self.scatter_lines(axis, nc, &bases, &lines)
            }
        }
    }

    fn line_bases(&self, axis: usize) -> Vec<usize> {
        let n = self.axes[axis].spec.len();
        let stride = self.strides[axis];
        (0..self.len).filter(|p| (p / stride) % n == 0).collect()
    }

    fn scatter_lines(&self, axis: usize, nc: usize, bases: &[usize], lines: &[Vec<f64>]) -> Field {
        let n = self.axes[axis].spec.len();
        let stride = self.strides[axis];
        let mut out = Field::zeros(self.len, nc);
        for (&base, line) in bases.iter().zip(lines) {
            for j in 0..n {
                out.at_mut(base + j * stride)
                    .copy_from_slice(&line[j * nc..(j + 1) * nc]);
            }
        }
        out
    }

    /// All first partial derivatives of `f`.
    pub fn gradient(&self, f: &Field) -> Vec<Field> {
        (0..self.dim()).map(|a| self.diff(f, a)).collect()
    }

    /// Integral of a scalar density against the Riemannian volume.
    pub fn integrate(&self, density: &[f64]) -> f64 {
        assert_eq!(density.len(), self.len);
        let terms: Vec<f64> = (0..self.len)
            .map(|p| density[p] * self.cell_weight(p) * self.metric_at(p).sqrt_det)
            .collect();
        pairwise_sum(&terms)
    }

    /// Total Riemannian volume of the domain.
    pub fn volume(&self) -> f64 {
        self.integrate(&vec![1.0; self.len])
    }

    /// Raises the index of a covector field (`m` components per point).
    pub fn raise(&self, lowered: &Field) -> Field {
        let m = self.dim();
        if self.is_flat() {
            return lowered.clone();
        }
        Field::from_fn(self.len, m, |p, out| {
            let gi = self.metric_at(p).ginv;
            let v = lowered.at(p);
            for i in 0..m {
                out[i] = (0..m).map(|j| gi[i * m + j] * v[j]).sum();
            }
        })
    }

    /// Metric divergence `(1/√g) ∂_i(√g V^i)` of a contravariant field.
    pub fn divergence(&self, v: &Field) -> Field {
        let m = self.dim();
        assert_eq!(v.ncomp(), m);
        let weighted = Field::from_fn(self.len, m, |p, out| {
            let s = self.metric_at(p).sqrt_det;
            for (o, x) in out.iter_mut().zip(v.at(p)) {
                *o = s * x;
            }
        });
        let mut div = vec![0.0; self.len];
        for a in 0..m {
            let comp = weighted.component(a);
            let d = self.diff(&comp, a);
            for (acc, x) in div.iter_mut().zip(d.data()) {
                *acc += x;
            }
        }
        for (p, x) in div.iter_mut().enumerate() {
            *x /= self.metric_at(p).sqrt_det;
        }
        Field::scalar(div)
    }

    /// Laplace–Beltrami operator with the positive sign convention (`Δf = -f''` on ℝ).
    pub fn laplacian(&self, f: &Field) -> Field {
        assert_eq!(f.ncomp(), 1);
        let grad = self.gradient(f);
        let m = self.dim();
        let lowered = Field::from_fn(self.len, m, |p, out| {
            for (a, o) in out.iter_mut().enumerate() {
                *o = grad[a].at(p)[0];
            }
        });
        self.divergence(&self.raise(&lowered)).scaled(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_err(a: &Field, b: &Field) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn spectral_derivative_exact_for_trig_polynomials() {
        let grid = DomainGrid::torus(2, 16, Backend::Spectral).unwrap();
        let f = grid.sample(|x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() + x[1].sin());
        let fx = grid.sample(|x| 3.0 * (3.0 * x[0]).cos() * (2.0 * x[1]).cos());
        let fy = grid.sample(|x| -2.0 * (3.0 * x[0]).sin() * (2.0 * x[1]).sin() + x[1].cos());
        assert!(max_err(&grid.diff(&f, 0), &fx) < 1e-12);
        assert!(max_err(&grid.diff(&f, 1), &fy) < 1e-12);
    }

    #[test]
    fn fd_orders() {
        for (backend, order) in [(Backend::Fd2, 2.0), (Backend::Fd4, 4.0)] {
            let errs: Vec<f64> = [64, 128]
                .iter()
                .map(|&n| {
                    let grid = DomainGrid::torus(1, n, backend).unwrap();
                    let f = grid.sample(|x| (x[0].sin()).exp());
                    let df = grid.sample(|x| x[0].cos() * (x[0].sin()).exp());
                    max_err(&grid.diff(&f, 0), &df)
                })
                .collect();
            let est = (errs[0] / errs[1]).log2();
            assert!((est - order).abs() < 0.1, "{backend:?}: {est}");
        }
    }

    #[test]
    fn chebyshev_axis_differentiates_and_integrates() {
        let grid = DomainGrid::new(
            vec![AxisSpec::Interval {
                n: 24,
                lo: 0.5,
                hi: 2.0,
            }],
            Backend::Spectral,
        )
        .unwrap();
        let f = grid.sample(|x| x[0].sin() * x[0]);
        let df = grid.sample(|x| x[0].cos() * x[0] + x[0].sin());
        assert!(max_err(&grid.diff(&f, 0), &df) < 1e-11);
        let integral = grid.integrate(f.data());
        let exact = |x: f64| x.sin() - x * x.cos();
        assert!((integral - (exact(2.0) - exact(0.5))).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_volume_and_metric_divergence() {
        let grid = DomainGrid::torus(2, 32, Backend::Spectral)
            .unwrap()
            .with_metric_fn(|x| {
                let a = 1.0 + 0.3 * x[0].sin();
                vec![a, 0.0, 0.0, a]
            })
            .unwrap();
        // conformal flat-torus metric; volume is ∫ a dx dy = 4π²
        assert!((grid.volume() - 4.0 * PI * PI).abs() < 1e-10);
        // divergence of a metric gradient integrates to zero
        let f = grid.sample(|x| (x[0] + 2.0 * x[1]).cos());
        let lap = grid.laplacian(&f);
        assert!(grid.integrate(lap.data()).abs() < 1e-10);
    }
}
