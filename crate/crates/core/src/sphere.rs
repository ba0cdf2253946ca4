//! Sphere targets in their ambient form: rotation fields, the extrinsic
//! tension and bitension equations, wedge-product currents and the
//! zero-curvature residual.

use serde::Serialize;

use crate::chart::VectorFieldOnTarget;
use crate::error::{invalid, Error, Result};
use crate::field::{dot, Field};
use crate::grid::DomainGrid;
use crate::map::{GridMap, Section};
use crate::report::{Gate, Level, ResidualReport};

fn require_sphere(map: &GridMap) -> Result<()> {
    if map.is_sphere() {
        Ok(())
    } else {
        Err(Error::UnsupportedMode(
            "operation needs a sphere target".into(),
        ))
    }
}

/// `X(u) = A·u` for an antisymmetric `A` (row-major, `(n+1)×(n+1)`).
pub fn killing_from_generator(a: &[f64], ambient_dim: usize) -> Result<VectorFieldOnTarget> {
    VectorFieldOnTarget::from_generator(a, ambient_dim)
}

/// Parses a row-major antisymmetric generator from JSON: either a flat array
/// or an array of rows.
pub fn generator_from_json(text: &str) -> Result<(Vec<f64>, usize)> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    generator_from_value(&v)
}

pub fn generator_from_value(v: &serde_json::Value) -> Result<(Vec<f64>, usize)> {
    let arr = v
        .as_array()
        .ok_or_else(|| invalid("generator must be a JSON array"))?;
    let mut flat = Vec::new();
    if arr.iter().all(|r| r.is_array()) {
        for row in arr {
            for x in row.as_array().unwrap() {
                flat.push(
                    x.as_f64()
                        .ok_or_else(|| invalid("generator entries must be numbers"))?,
                );
            }
        }
    } else {
        for x in arr {
            flat.push(
                x.as_f64()
                    .ok_or_else(|| invalid("generator entries must be numbers"))?,
            );
        }
    }
    let n = (flat.len() as f64).sqrt().round() as usize;
    if n * n != flat.len() || n == 0 {
        return Err(invalid("generator must be a square matrix"));
    }
    VectorFieldOnTarget::from_generator(&flat, n)?;
    Ok((flat, n))
}

/// Multi-component metric divergence `(1/√g) Σ_i ∂_i(√g V^i)` where
/// `comps[i]` holds the contravariant axis-`i` component of every channel.
fn divergence_channels(grid: &DomainGrid, comps: &[Field]) -> Field {
    let nc = comps[0].ncomp();
    let mut out = Field::zeros(grid.len(), nc);
    for (i, c) in comps.iter().enumerate() {
        let weighted = if grid.is_flat() {
            c.clone()
        } else {
            Field::from_fn(grid.len(), nc, |p, o| {
                let s = grid.metric_at(p).sqrt_det;
                for (oo, x) in o.iter_mut().zip(c.at(p)) {
                    *oo = s * x;
                }
            })
        };
        out = out.add(&grid.diff(&weighted, i));
    }
    if !grid.is_flat() {
        for p in 0..grid.len() {
            let s = grid.metric_at(p).sqrt_det;
            out.at_mut(p).iter_mut().for_each(|x| *x /= s);
        }
    }
    out
}

/// Raises the axis index of per-axis channel fields.
fn raise_channels(grid: &DomainGrid, lowered: &[Field]) -> Vec<Field> {
    if grid.is_flat() {
        return lowered.to_vec();
    }
    let m = grid.dim();
    let nc = lowered[0].ncomp();
    (0..m)
        .map(|i| {
            Field::from_fn(grid.len(), nc, |p, o| {
                let gi = grid.metric_at(p).ginv;
                for (c, oc) in o.iter_mut().enumerate() {
                    *oc = (0..m).map(|j| gi[i * m + j] * lowered[j].at(p)[c]).sum();
                }
            })
        })
        .collect()
}

/// Positive Laplace–Beltrami operator applied channel by channel.
pub fn ambient_laplacian(grid: &DomainGrid, f: &Field) -> Field {
    let grad = grid.gradient(f);
    divergence_channels(grid, &raise_channels(grid, &grad)).scaled(-1.0)
}

fn metric_pair(grid: &DomainGrid, p: usize, a: &[Field], b: &[Field]) -> f64 {
    let m = grid.dim();
    if grid.is_flat() {
        (0..m).map(|i| dot(a[i].at(p), b[i].at(p))).sum()
    } else {
        let gi = grid.metric_at(p).ginv;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += gi[i * m + j] * dot(a[i].at(p), b[j].at(p));
            }
        }
        s
    }
}

/// Ambient derivatives of a sphere map used by the extrinsic formulas.
struct Extrinsic {
    /// `∂_i u`
    du: Vec<Field>,
    /// `Δu`
    lap: Field,
    /// `|∇u|²`
    grad_sq: Field,
}

impl Extrinsic {
    fn new(map: &GridMap) -> Self {
        let grid = map.grid();
        let u = map.values();
        let du = grid.gradient(u);
        let lap = ambient_laplacian(grid, u);
        let grad_sq = Field::from_fn(grid.len(), 1, |p, o| o[0] = metric_pair(grid, p, &du, &du));
        Self { du, lap, grad_sq }
    }
}

/// `−Δu + |∇u|² u`.
pub fn tension_extrinsic(map: &GridMap) -> Result<Section> {
    require_sphere(map)?;
    let e = Extrinsic::new(map);
    let nc = map.ncomp();
    Ok(Field::from_fn(map.len(), nc, |p, o| {
        let u = map.value(p);
        let s = e.grad_sq.at(p)[0];
        for c in 0..nc {
            o[c] = -e.lap.at(p)[c] + s * u[c];
        }
    }))
}

/// `⟨u, Δu⟩ − |∇u|²`, which vanishes for every map into the unit sphere.
pub fn lambda_identity_residual(map: &GridMap) -> Result<Field> {
    require_sphere(map)?;
    let e = Extrinsic::new(map);
    Ok(Field::from_fn(map.len(), 1, |p, o| {
        o[0] = dot(map.value(p), e.lap.at(p)) - e.grad_sq.at(p)[0]
    }))
}

/// Pieces of the extrinsic biharmonic equation on one grid.
#[derive(Clone, Debug)]
pub struct ExtrinsicBiharmonic {
    /// `Δ²u − (−|Δu|² + Δ|∇u|² + 2⟨∇u,∇Δu⟩ − 2|∇u|⁴)u + 2 div(|∇u|²∇u)`
    pub residual: Field,
    /// `⟨Δ²u,u⟩ − (Δ|∇u|² − |Δu|² + 2⟨∇u,∇Δu⟩)`
    pub scalar_fourth_order: Field,
    /// `⟨div(|∇u|²∇u), u⟩ + |∇u|⁴`
    pub scalar_second_order: Field,
    /// `div(|∇u|²∇u)`
    pub flux_divergence: Field,
    /// `Δ²u`
    pub bilaplacian: Field,
}

pub fn biharmonic_extrinsic(map: &GridMap) -> Result<ExtrinsicBiharmonic> {
    require_sphere(map)?;
    let grid = map.grid();
    let nc = map.ncomp();
    let e = Extrinsic::new(map);
    let bilaplacian = ambient_laplacian(grid, &e.lap);
    let lap_grad_sq = ambient_laplacian(grid, &e.grad_sq);
    let dlap = grid.gradient(&e.lap);
    let weighted: Vec<Field> =
        e.du.iter()
            .map(|d| {
                Field::from_fn(grid.len(), nc, |p, o| {
                    let s = e.grad_sq.at(p)[0];
                    for (oo, x) in o.iter_mut().zip(d.at(p)) {
                        *oo = s * x;
                    }
                })
            })
            .collect();
    let flux_divergence = divergence_channels(grid, &raise_channels(grid, &weighted));
    let mut residual = Field::zeros(grid.len(), nc);
    let mut s4 = Field::zeros(grid.len(), 1);
    let mut s2 = Field::zeros(grid.len(), 1);
    for p in 0..grid.len() {
        let u = map.value(p);
        let lap = e.lap.at(p);
        let gs = e.grad_sq.at(p)[0];
        let lap_sq = dot(lap, lap);
        let cross = metric_pair(grid, p, &e.du, &dlap);
        let coeff = -lap_sq + lap_grad_sq.at(p)[0] + 2.0 * cross - 2.0 * gs * gs;
        let b = bilaplacian.at(p);
        let fd = flux_divergence.at(p);
        let r = residual.at_mut(p);
        for c in 0..nc {
            r[c] = b[c] - coeff * u[c] + 2.0 * fd[c];
        }
        s4.at_mut(p)[0] = dot(b, u) - (lap_grad_sq.at(p)[0] - lap_sq + 2.0 * cross);
        s2.at_mut(p)[0] = dot(fd, u) + gs * gs;
    }
    Ok(ExtrinsicBiharmonic {
        residual,
        scalar_fourth_order: s4,
        scalar_second_order: s2,
        flux_divergence,
        bilaplacian,
    })
}

/// Residual report for the extrinsic biharmonic equation and its two scalar
/// sub-identities.
pub fn biharmonic_extrinsic_residual(map: &GridMap, gate: Gate) -> Result<Vec<ResidualReport>> {
    let b = biharmonic_extrinsic(map)?;
    let grid = map.grid();
    Ok(vec![
        ResidualReport::single("extrinsic_biharmonic", grid, &b.residual, gate.clone()),
        ResidualReport::single(
            "extrinsic_fourth_order_scalar",
            grid,
            &b.scalar_fourth_order,
            gate.clone(),
        ),
        ResidualReport::single(
            "extrinsic_second_order_scalar",
            grid,
            &b.scalar_second_order,
            gate,
        ),
    ])
}

/// Per-point, per-axis antisymmetric `(n+1)×(n+1)` matrices; channel layout
/// `[axis][α][β]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WedgeField {
    dim: usize,
    ambient: usize,
    data: Field,
}

/// `(a ∧ b)^{αβ} = a^α b^β − a^β b^α`, accumulated with weight `s`.
fn wedge_into(out: &mut [f64], n: usize, s: f64, a: &[f64], b: &[f64]) {
    for al in 0..n {
        for be in 0..n {
            out[al * n + be] += s * (a[al] * b[be] - a[be] * b[al]);
        }
    }
}

impl WedgeField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn field(&self) -> &Field {
        &self.data
    }

    /// Matrix of axis `i` at point `p`, row-major.
    pub fn matrix(&self, p: usize, i: usize) -> &[f64] {
        let n2 = self.ambient * self.ambient;
        &self.data.at(p)[i * n2..(i + 1) * n2]
    }

    /// The axis-`i` matrices as an `(n+1)²`-channel field.
    pub fn axis(&self, i: usize) -> Field {
        let n2 = self.ambient * self.ambient;
        Field::from_fn(self.data.points(), n2, |p, o| {
            o.copy_from_slice(self.matrix(p, i))
        })
    }

    /// Largest `|J^{αβ} + J^{βα}|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.ambient;
        let mut worst = 0.0f64;
        for p in 0..self.data.points() {
            for i in 0..self.dim {
                let m = self.matrix(p, i);
                for a in 0..n {
                    for b in 0..n {
                        worst = worst.max((m[a * n + b] + m[b * n + a]).abs());
                    }
                }
            }
        }
        worst
    }

    /// `½ Σ_{αβ} A_{αβ} J^{αβ}_i` per axis (lowered index).
    pub fn contract(&self, a: &[f64]) -> Result<Field> {
        let n = self.ambient;
        if a.len() != n * n {
            return Err(Error::Dimension(format!(
                "generator has {} entries, expected {}",
                a.len(),
                n * n
            )));
        }
        Ok(Field::from_fn(self.data.points(), self.dim, |p, o| {
            for (i, oi) in o.iter_mut().enumerate() {
                *oi = 0.5 * dot(a, self.matrix(p, i));
            }
        }))
    }

    /// Metric divergence, one antisymmetric matrix per point.
    pub fn divergence(&self, grid: &DomainGrid) -> Field {
        let lowered: Vec<Field> = (0..self.dim).map(|i| self.axis(i)).collect();
        divergence_channels(grid, &raise_channels(grid, &lowered))
    }
}

/// The wedge current of order 1 (`∇u ∧ u`) or 2
/// (`−∇Δu ∧ u + Δu ∧ ∇u + 2|∇u|² ∇u ∧ u`).
pub fn wedge_current(map: &GridMap, order: usize) -> Result<WedgeField> {
    require_sphere(map)?;
    if order != 1 && order != 2 {
        return Err(invalid("wedge currents exist for orders 1 and 2"));
    }
    let grid = map.grid();
    let m = grid.dim();
    let n = map.ncomp();
    let n2 = n * n;
    let e = Extrinsic::new(map);
    let dlap = if order == 2 {
        grid.gradient(&e.lap)
    } else {
        Vec::new()
    };
    let data = Field::from_fn(grid.len(), m * n2, |p, o| {
        let u = map.value(p);
        for i in 0..m {
            let out = &mut o[i * n2..(i + 1) * n2];
            let ui = e.du[i].at(p);
            if order == 1 {
                wedge_into(out, n, 1.0, ui, u);
            } else {
                wedge_into(out, n, -1.0, dlap[i].at(p), u);
                wedge_into(out, n, 1.0, e.lap.at(p), ui);
                wedge_into(out, n, 2.0 * e.grad_sq.at(p)[0], ui, u);
            }
        }
    });
    Ok(WedgeField {
        dim: m,
        ambient: n,
        data,
    })
}

/// Outcome of comparing the divergence of a wedge current with the matching
/// Euler–Lagrange equation.
#[derive(Clone, Debug, Serialize)]
pub struct WedgeEquivalence {
    pub order: usize,
    /// `‖div J‖∞` (Frobenius norm per point)
    pub divergence: f64,
    /// `‖τ‖∞` for order 1, `‖extrinsic biharmonic residual‖∞` for order 2
    pub equation: f64,
    /// `‖div J − E ∧ u‖∞` where `E` is the equation residual above; zero for
    /// every sphere map
    pub bridge: f64,
    /// `divergence / equation` when both are resolved
    pub ratio: Option<f64>,
    pub tolerance: f64,
    pub constant: f64,
    pub pass: bool,
}

/// Constant `C` in `‖div J‖ ≤ C‖E‖ + tol` and `‖E‖ ≤ C‖div J‖ + tol`.
pub const EQUIVALENCE_CONSTANT: f64 = 2.0;

/// Checks that `div J` and the Euler–Lagrange residual vanish together.
pub fn wedge_equivalence_check(
    map: &GridMap,
    order: usize,
    tolerance: f64,
) -> Result<WedgeEquivalence> {
    let j = wedge_current(map, order)?;
    let grid = map.grid();
    let div = j.divergence(grid);
    let n = map.ncomp();
    let eq = match order {
        1 => tension_extrinsic(map)?,
        _ => biharmonic_extrinsic(map)?.residual,
    };
    let bridge = Field::from_fn(grid.len(), n * n, |p, o| {
        o.copy_from_slice(div.at(p));
        wedge_into(o, n, -1.0, eq.at(p), map.value(p));
    });
    let divergence = div.max_norm();
    let equation = eq.max_norm();
    let c = EQUIVALENCE_CONSTANT;
    let pass = divergence <= c * equation + tolerance && equation <= c * divergence + tolerance;
    let ratio = (equation > tolerance && divergence > tolerance).then(|| divergence / equation);
    Ok(WedgeEquivalence {
        order,
        divergence,
        equation,
        bridge: bridge.max_norm(),
        ratio,
        tolerance,
        constant: c,
        pass,
    })
}

impl WedgeEquivalence {
    pub fn to_report(&self, grid: &DomainGrid) -> ResidualReport {
        let level = Level::from_values(grid.resolution(), grid.step(), self.bridge, self.bridge);
        let mut r = ResidualReport::new(
            format!("wedge_equivalence_order{}", self.order),
            vec![level],
            Gate::Report,
        )
        .with_info("divergence_linf", self.divergence)
        .with_info("equation_linf", self.equation)
        .with_info("constant", self.constant)
        .with_info("tolerance", self.tolerance);
        if let Some(ratio) = self.ratio {
            r = r.with_info("ratio", ratio);
        }
        r.pass = Some(self.pass);
        r
    }
}

/// `∂_iJ_j − ∂_jJ_i − 2[J_i, J_j]` for every axis pair `i < j`, plus the
/// least-squares coefficient `c` that best fits `∂_iJ_j − ∂_jJ_i ≈ c[J_i, J_j]`.
#[derive(Clone, Debug)]
pub struct ZeroCurvature {
    pub residual: Field,
    pub best_fit_coefficient: Option<f64>,
    pub curl_linf: f64,
    pub commutator_linf: f64,
}

pub fn zero_curvature(map: &GridMap, order: usize) -> Result<ZeroCurvature> {
    require_sphere(map)?;
    let grid = map.grid();
    let m = grid.dim();
    if m < 2 {
        return Err(Error::Dimension(
            "the zero-curvature residual needs a domain of dimension at least 2".into(),
        ));
    }
    let j = wedge_current(map, order)?;
    let n = map.ncomp();
    let n2 = n * n;
    let axes: Vec<Field> = (0..m).map(|i| j.axis(i)).collect();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |k| (i, k)))
        .collect();
    let np = pairs.len();
    let mut curl = Field::zeros(grid.len(), np * n2);
    let mut comm = Field::zeros(grid.len(), np * n2);
    for (q, &(a, b)) in pairs.iter().enumerate() {
        let dab = grid.diff(&axes[b], a);
        let dba = grid.diff(&axes[a], b);
        for p in 0..grid.len() {
            let (ja, jb) = (axes[a].at(p), axes[b].at(p));
            let cu = &mut curl.at_mut(p)[q * n2..(q + 1) * n2];
            for (k, c) in cu.iter_mut().enumerate() {
                *c = dab.at(p)[k] - dba.at(p)[k];
            }
            let co = &mut comm.at_mut(p)[q * n2..(q + 1) * n2];
            for r in 0..n {
                for c in 0..n {
                    let mut s = 0.0;
                    for t in 0..n {
                        s += ja[r * n + t] * jb[t * n + c] - jb[r * n + t] * ja[t * n + c];
                    }
                    co[r * n + c] = s;
                }
            }
        }
    }
    let residual = Field::from_vec(np * n2, {
        let mut d = curl.data().to_vec();
        for (x, c) in d.iter_mut().zip(comm.data()) {
            *x -= 2.0 * c;
        }
        d
    });
    let lc: Vec<f64> = (0..grid.len())
        .map(|p| dot(curl.at(p), comm.at(p)))
        .collect();
    let cc: Vec<f64> = (0..grid.len())
        .map(|p| dot(comm.at(p), comm.at(p)))
        .collect();
    let (num, den) = (grid.integrate(&lc), grid.integrate(&cc));
    let best = (den > 1e-24).then(|| num / den);
    Ok(ZeroCurvature {
        curl_linf: curl.max_norm(),
        commutator_linf: comm.max_norm(),
        residual,
        best_fit_coefficient: best,
    })
}

/// Report for the zero-curvature residual at one resolution.
pub fn zero_curvature_residual(map: &GridMap, order: usize, gate: Gate) -> Result<ResidualReport> {
    let z = zero_curvature(map, order)?;
    let mut r = ResidualReport::single(
        format!("zero_curvature_order{order}"),
        map.grid(),
        &z.residual,
        gate,
    )
    .with_info("curl_linf", z.curl_linf)
    .with_info("commutator_linf", z.commutator_linf);
    if let Some(c) = z.best_fit_coefficient {
        r = r.with_info("best_fit_coefficient", c);
    }
    Ok(r)
}
