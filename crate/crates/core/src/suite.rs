//! JSON check suites: map and immersion specifications, the identities to
//! evaluate, and multi-resolution report assembly.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::builtins::{MapDef, RandomMapSpec, TrigTerm};
use crate::chart::{
    builtin_chart, chart_from_json, stereographic_rotation_field, VectorFieldOnTarget,
};
use crate::conservation::{
    current_identity_with, lie_tension_identity, noether_current, sign_constants,
    stress_identity_with, FieldAlong, OddTermPlacement,
};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{Backend, DomainGrid};
use crate::hypersurface::{
    biharmonic_system, codazzi_trace, hypersurface_current, normal_block, normal_component,
    shape_operator, tension_consistency, HypersurfaceImmersion, ImmersionDef,
};
use crate::map::{GridMap, Target, BITENSION_RELATIVE_SIGN};
use crate::report::{Gate, Level, ResidualReport};
use crate::sphere::{
    biharmonic_extrinsic, generator_from_value, lambda_identity_residual, wedge_current,
    wedge_equivalence_check, zero_curvature,
};

fn spec_err(msg: impl Into<String>) -> Error {
    Error::Spec(msg.into())
}

/// Domain description shared by every resolution of a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    /// Points per axis (a single value applies to every axis).
    #[serde(default)]
    pub resolution: Option<Resolution>,
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
    #[serde(default = "default_backend")]
    pub backend: Backend,
}

fn default_backend() -> Backend {
    Backend::Spectral
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

/// Every identity a check can request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    Tension,
    KTension,
    Current,
    StressEnergy,
    BitensionRelation,
    Variation,
    LieTension,
    ExtrinsicBiharmonic,
    Lambda,
    WedgeEquivalence,
    WedgeContraction,
    ZeroCurvature,
    ShapeOperator,
    SystemNormal,
    SystemTangential,
    Codazzi,
    TensionConsistency,
    HypersurfaceCurrent,
    HypersurfaceCurrentFull,
    HypersurfaceCurrentReduced,
    NormalBlock,
}

/// Random antisymmetric generators drawn from a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomGenerators {
    pub count: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// One entry of a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    /// Uniform per-axis resolutions, strictly increasing.
    #[serde(default)]
    pub resolutions: Option<Vec<usize>>,
    #[serde(default)]
    pub target: Option<String>,
    /// Built-in name, `{"trig": [...], "normalize": bool}`,
    /// `{"random": {...}}` or `{"constant": [...]}`.
    #[serde(default)]
    pub map: Option<Value>,
    /// Built-in immersion name or an embedding table.
    #[serde(default)]
    pub immersion: Option<Value>,
    /// Antisymmetric matrices (flat or nested rows).
    #[serde(default)]
    pub generators: Vec<Value>,
    #[serde(default)]
    pub random_generators: Option<RandomGenerators>,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default)]
    pub identities: Vec<Identity>,
    #[serde(default)]
    pub gate: Option<Gate>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub placement: Option<OddTermPlacement>,
}

fn default_orders() -> Vec<usize> {
    vec![1, 2]
}

fn default_epsilon() -> f64 {
    1e-4
}

/// A list of checks with a default seed for random maps and generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    #[serde(default)]
    pub seed: u64,
    pub checks: Vec<CheckSpec>,
}

impl SuiteSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SuiteSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.checks.is_empty() {
            return Err(spec_err("suite has no checks"));
        }
        for (i, c) in self.checks.iter().enumerate() {
            c.validate()
                .map_err(|e| spec_err(format!("check {i}: {e}")))?;
        }
        Ok(())
    }
}

/// The subject of a check at one resolution.
enum Subject {
    Map(GridMap),
    Immersion(HypersurfaceImmersion),
}

impl CheckSpec {
    pub fn label(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("check{index}"))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.map, &self.immersion) {
            (Some(_), None) => {
                if self.domain.is_none() {
                    return Err(spec_err("a map check needs a domain"));
                }
                if self.target.is_none() && self.map.as_ref().and_then(|m| m.as_str()).is_none() {
                    return Err(spec_err("a map check needs a target"));
                }
            }
            (None, Some(_)) => {}
            _ => return Err(spec_err("exactly one of map and immersion must be given")),
        }
        let res = self.resolution_list();
        if res.is_empty() {
            return Err(spec_err("no resolution given"));
        }
        if res.windows(2).any(|w| w[1] <= w[0]) {
            return Err(spec_err("resolutions must be strictly increasing"));
        }
        if self.orders.iter().any(|&k| k == 0) {
            return Err(spec_err("orders start at 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(spec_err("epsilon must be positive"));
        }
        Ok(())
    }

    pub fn resolution_list(&self) -> Vec<usize> {
        if let Some(r) = &self.resolutions {
            return r.clone();
        }
        match self.domain.as_ref().and_then(|d| d.resolution.clone()) {
            Some(Resolution::Uniform(n)) => vec![n],
            Some(Resolution::PerAxis(v)) => v.first().copied().into_iter().collect(),
            None => Vec::new(),
        }
    }

    fn backend(&self) -> Backend {
        self.domain
            .as_ref()
            .map_or(Backend::Spectral, |d| d.backend)
    }

    fn identities_or_default(&self) -> Vec<Identity> {
        if !self.identities.is_empty() {
            return self.identities.clone();
        }
        if self.immersion.is_some() {
            vec![
                Identity::SystemNormal,
                Identity::SystemTangential,
                Identity::Codazzi,
                Identity::HypersurfaceCurrent,
            ]
        } else {
            vec![Identity::Current, Identity::StressEnergy]
        }
    }

    fn default_gate(&self, levels: usize) -> Gate {
        if let Some(g) = &self.gate {
            return g.clone();
        }
        match (self.backend(), levels) {
            (Backend::Spectral, _) => Gate::Absolute { tol: 1e-8 },
            (_, 1) => Gate::Scaled { c: 50.0 },
            _ => Gate::Order {
                target: if self.backend() == Backend::Fd4 {
                    4.0
                } else {
                    2.0
                },
                band: 0.3,
                exact_below: 1e-9,
            },
        }
    }

    fn target(&self) -> Result<Target> {
        if let Some(t) = &self.target {
            if let Some(rest) = t.strip_prefix("json:") {
                return Ok(Target::chart(chart_from_json(rest)?));
            }
            return Target::parse(t);
        }
        let name = self
            .map
            .as_ref()
            .and_then(|m| m.as_str())
            .unwrap_or_default();
        MapDef::builtin(name)?
            .natural_target()
            .ok_or_else(|| spec_err("map has no natural target; give one"))
    }

    fn map_def(&self, seed: u64) -> Result<MapDef> {
        let v = self.map.as_ref().ok_or_else(|| spec_err("missing map"))?;
        map_def_from_value(v, seed)
    }

    fn grid(&self, n: usize) -> Result<DomainGrid> {
        let d = self
            .domain
            .as_ref()
            .ok_or_else(|| spec_err("missing domain"))?;
        let periods = d
            .periods
            .clone()
            .unwrap_or_else(|| vec![2.0 * std::f64::consts::PI; d.dim]);
        if periods.len() != d.dim {
            return Err(spec_err("periods must have one entry per axis"));
        }
        let res = match (&self.resolutions, &d.resolution) {
            (None, Some(Resolution::PerAxis(v))) if v.len() == d.dim => v.clone(),
            _ => vec![n; d.dim],
        };
        DomainGrid::periodic(&res, &periods, d.backend)
    }

    fn subject(&self, n: usize, seed: u64) -> Result<Subject> {
        if let Some(imm) = &self.immersion {
            let def = match imm {
                Value::String(s) => ImmersionDef::builtin(s)?,
                other => ImmersionDef::from_json(&other.to_string())?,
            };
            return Ok(Subject::Immersion(def.build(n, self.backend())?));
        }
        let grid = Arc::new(self.grid(n)?);
        Ok(Subject::Map(
            self.map_def(seed)?.build(grid, self.target()?)?,
        ))
    }

    /// Generators as `(matrix, ambient dimension)`.
    fn generator_list(&self, ambient: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::new();
        for g in &self.generators {
            let (a, n) = generator_from_value(g)?;
            if n != ambient {
                return Err(Error::Dimension(format!(
                    "generator is {n}×{n}, the target needs {ambient}×{ambient}"
                )));
            }
            out.push(a);
        }
        if let Some(r) = &self.random_generators {
            out.extend(random_generators(ambient, r.count, r.seed.unwrap_or(seed)));
        }
        Ok(out)
    }
}

/// Seeded antisymmetric matrices with entries uniform in `(−1, 1)`.
pub fn random_generators(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9e4e_0000_0000);
    (0..count)
        .map(|_| {
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    a[i * n + j] = v;
                    a[j * n + i] = -v;
                }
            }
            a
        })
        .collect()
}

fn map_def_from_value(v: &Value, seed: u64) -> Result<MapDef> {
    match v {
        Value::String(s) => MapDef::builtin(s),
        Value::Object(o) => {
            if let Some(t) = o.get("trig") {
                let components: Vec<Vec<TrigTerm>> = serde_json::from_value(t.clone())?;
                let normalize = o
                    .get("normalize")
                    .and_then(|b| b.as_bool())
                    .unwrap_or(false);
                Ok(MapDef::Trig {
                    components,
                    normalize,
                })
            } else if let Some(r) = o.get("random") {
                let mut r = r.clone();
                if let Some(obj) = r.as_object_mut() {
                    obj.entry("seed").or_insert(Value::from(seed));
                }
                let spec: RandomMapSpec = serde_json::from_value(r)?;
                Ok(MapDef::Random(spec))
            } else if let Some(c) = o.get("constant") {
                Ok(MapDef::Constant {
                    value: serde_json::from_value(c.clone())?,
                })
            } else {
                Err(spec_err("map object needs one of trig, random, constant"))
            }
        }
        _ => Err(spec_err("map must be a name or an object")),
    }
}

/// Target vector field for generator `a`: the rotation itself for spheres,
/// the induced field on stereographic charts, `x ↦ A x` on flat charts.
fn vector_field(target: &Target, a: &[f64], ambient: usize) -> Result<VectorFieldOnTarget> {
    match target {
        Target::Sphere { .. } => VectorFieldOnTarget::from_generator(a, ambient),
        Target::Chart(c) if c.name().starts_with("sphere-stereographic") => {
            stereographic_rotation_field(a, c.dim())
        }
        Target::Chart(_) => VectorFieldOnTarget::from_generator(a, ambient),
    }
}

fn generator_dim(target: &Target) -> usize {
    match target {
        Target::Sphere { n } => n + 1,
        Target::Chart(c) if c.name().starts_with("sphere-stereographic") => c.dim() + 1,
        Target::Chart(c) => c.dim(),
    }
}

/// Deterministic smooth variation field for first-variation checks.
fn variation_field(map: &GridMap, seed: u64) -> Field {
    let grid = map.grid();
    let m = grid.dim();
    let nc = map.ncomp();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a71_a710_0000_0000);
    let coeffs: Vec<(Vec<f64>, f64, f64)> = (0..nc)
        .map(|_| {
            let k: Vec<f64> = (0..m).map(|_| rng.gen_range(0..3) as f64).collect();
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.3))
        })
        .collect();
    let raw = grid.sample_vec(nc, |x| {
        coeffs
            .iter()
            .map(|(k, a, ph)| {
                let phase: f64 = k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
                a * (phase + ph).sin()
            })
            .collect()
    });
    map.project(raw)
}

struct LevelOutput {
    name: String,
    level: Level,
    gate: Option<Gate>,
    pass: Option<bool>,
    killing: Option<f64>,
    info: Vec<(String, Value)>,
}

impl LevelOutput {
    fn new(name: impl Into<String>, grid: &DomainGrid, residual: &Field) -> Self {
        Self {
            name: name.into(),
            level: Level::measure(grid, residual),
            gate: None,
            pass: None,
            killing: None,
            info: Vec::new(),
        }
    }

    fn gate(mut self, gate: Gate) -> Self {
        self.gate = Some(gate);
        self
    }

    fn info(mut self, key: &str, v: impl Into<Value>) -> Self {
        self.info.push((key.to_string(), v.into()));
        self
    }
}

fn map_level(check: &CheckSpec, map: &GridMap, seed: u64) -> Result<Vec<LevelOutput>> {
    let grid = map.grid();
    let target = map.target().clone();
    let ambient = generator_dim(&target);
    let gens = check.generator_list(ambient, seed)?;
    let fields: Vec<VectorFieldOnTarget> = gens
        .iter()
        .map(|a| vector_field(&target, a, ambient))
        .collect::<Result<_>>()?;
    let max_order = check.orders.iter().copied().max().unwrap_or(1);
    let tower = map.tower(max_order.max(2) - 1);
    let placement = check.placement.unwrap_or(OddTermPlacement::Hoisted);
    let mut out = Vec::new();
    for id in check.identities_or_default() {
        match id {
            Identity::Tension => out.push(LevelOutput::new("tension", grid, tower.w(0))),
            Identity::KTension => {
                for &k in &check.orders {
                    out.push(LevelOutput::new(
                        format!("tension_k{k}"),
                        grid,
                        &map.k_tension_with(k, &tower),
                    ));
                }
            }
            Identity::Current => {
                for &k in &check.orders {
                    for (g, x) in fields.iter().enumerate() {
                        let along = FieldAlong::new(map, x)?;
                        let id = current_identity_with(map, &along, &tower, k, placement);
                        let mut lo =
                            LevelOutput::new(format!("current_k{k}_gen{g}"), grid, &id.residual)
                                .info("pairing_linf", id.pairing.max_norm())
                                .info("divergence_linf", id.divergence.max_norm());
                        if k == 1 {
                            lo = lo.info(
                                "uniform_sign_residual_linf",
                                id.residual_uniform_sign.max_norm(),
                            );
                        }
                        lo.killing = Some(id.killing_defect);
                        out.push(lo);
                    }
                }
            }
            Identity::StressEnergy => {
                for &k in check.orders.iter().filter(|&&k| k >= 2) {
                    let s = stress_identity_with(map, k, &tower);
                    out.push(
                        LevelOutput::new(format!("stress_energy_k{k}"), grid, &s.residual)
                            .info("pairing_linf", s.pairing.max_norm()),
                    );
                }
            }
            Identity::BitensionRelation => {
                let alt = map.bitension_alt_with(&tower);
                let t2 = map.k_tension_with(2, &tower);
                let r = alt.sub(&t2.scaled(BITENSION_RELATIVE_SIGN));
                out.push(
                    LevelOutput::new("bitension_relation", grid, &r)
                        .info("tau2_linf", t2.max_norm()),
                );
            }
            Identity::Variation => {
                let v = variation_field(map, seed);
                for &k in &check.orders {
                    let (dq, ip) = map.first_variation_parts(&v, k, check.epsilon)?;
                    let r = map.first_variation_residual(&v, k, check.epsilon)?;
                    let level = Level::from_values(grid.resolution(), grid.step(), r, r);
                    out.push(LevelOutput {
                        name: format!("variation_k{k}"),
                        level,
                        gate: None,
                        pass: None,
                        killing: None,
                        info: vec![
                            ("difference_quotient".into(), dq.into()),
                            ("tension_pairing".into(), ip.into()),
                            ("epsilon".into(), check.epsilon.into()),
                        ],
                    });
                }
            }
            Identity::LieTension => {
                for (g, x) in fields.iter().enumerate() {
                    let l = lie_tension_identity(map, x)?;
                    out.push(
                        LevelOutput::new(format!("lie_tension_gen{g}"), grid, &l.residual)
                            .info("metric_term_linf", l.metric_term.max_norm())
                            .info("residual_variant_linf", l.residual_variant.max_norm()),
                    );
                }
            }
            Identity::ExtrinsicBiharmonic => {
                let b = biharmonic_extrinsic(map)?;
                out.push(LevelOutput::new("extrinsic_biharmonic", grid, &b.residual));
                out.push(LevelOutput::new(
                    "extrinsic_fourth_order_scalar",
                    grid,
                    &b.scalar_fourth_order,
                ));
                out.push(LevelOutput::new(
                    "extrinsic_second_order_scalar",
                    grid,
                    &b.scalar_second_order,
                ));
            }
            Identity::Lambda => out.push(LevelOutput::new(
                "lambda_identity",
                grid,
                &lambda_identity_residual(map)?,
            )),
            Identity::WedgeEquivalence => {
                for &k in check.orders.iter().filter(|&&k| k <= 2) {
                    let tol = 50.0 * grid.step() * grid.step();
                    let e = wedge_equivalence_check(map, k, tol)?;
                    let mut lo = LevelOutput {
                        name: format!("wedge_equivalence_order{k}"),
                        level: Level::from_values(
                            grid.resolution(),
                            grid.step(),
                            e.bridge,
                            e.bridge,
                        ),
                        gate: Some(Gate::Report),
                        pass: Some(e.pass),
                        killing: None,
                        info: vec![
                            ("divergence_linf".into(), e.divergence.into()),
                            ("equation_linf".into(), e.equation.into()),
                        ],
                    };
                    if let Some(r) = e.ratio {
                        lo = lo.info("ratio", r);
                    }
                    out.push(lo);
                }
            }
            Identity::WedgeContraction => {
                for &k in check.orders.iter().filter(|&&k| k <= 2) {
                    let w = wedge_current(map, k)?;
                    for (g, (a, x)) in gens.iter().zip(&fields).enumerate() {
                        let c = grid.raise(&w.contract(a)?);
                        let j = noether_current(map, x, k)?;
                        out.push(LevelOutput::new(
                            format!("wedge_contraction_k{k}_gen{g}"),
                            grid,
                            &c.sub(&j.field),
                        ));
                    }
                }
            }
            Identity::ZeroCurvature => {
                for &k in check.orders.iter().filter(|&&k| k <= 2) {
                    let z = zero_curvature(map, k)?;
                    let mut lo =
                        LevelOutput::new(format!("zero_curvature_order{k}"), grid, &z.residual)
                            .info("curl_linf", z.curl_linf)
                            .info("commutator_linf", z.commutator_linf);
                    if let Some(c) = z.best_fit_coefficient {
                        lo = lo.info("best_fit_coefficient", c);
                    }
                    if k == 2 {
                        lo = lo.gate(Gate::Report);
                    }
                    out.push(lo);
                }
            }
            other => {
                return Err(Error::UnsupportedMode(format!(
                    "{other:?} applies to immersions, not maps"
                )))
            }
        }
    }
    Ok(out)
}

fn immersion_level(
    check: &CheckSpec,
    imm: &HypersurfaceImmersion,
    seed: u64,
) -> Result<Vec<LevelOutput>> {
    let grid = imm.grid();
    let m = imm.dim() as f64;
    let gens = check.generator_list(imm.ambient_dim(), seed)?;
    let fields: Vec<VectorFieldOnTarget> = gens
        .iter()
        .map(|a| VectorFieldOnTarget::from_generator(a, imm.ambient_dim()))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    let need_fields = |what: &str| -> Result<()> {
        if fields.is_empty() {
            Err(spec_err(format!("{what} needs at least one generator")))
        } else {
            Ok(())
        }
    };
    for id in check.identities_or_default() {
        match id {
            Identity::ShapeOperator => {
                let s = shape_operator(imm);
                let sa = Field::from_fn(imm.len(), 1, |p, o| {
                    let b = s.second_form.at(p);
                    let d = imm.dim();
                    o[0] = (0..d)
                        .flat_map(|i| (0..d).map(move |j| (i, j)))
                        .map(|(i, j)| (b[i * d + j] - b[j * d + i]).abs())
                        .fold(0.0, f64::max);
                });
                let f = s.mean_curvature.data();
                let a2 = s.norm_sq.data();
                out.push(
                    LevelOutput::new("shape_self_adjointness", grid, &sa)
                        .info(
                            "mean_curvature_min",
                            f.iter().copied().fold(f64::INFINITY, f64::min),
                        )
                        .info(
                            "mean_curvature_max",
                            f.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        )
                        .info(
                            "norm_sq_max",
                            a2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        ),
                );
            }
            Identity::SystemNormal => {
                let s = biharmonic_system(imm);
                out.push(LevelOutput::new("system_normal", grid, &s.normal));
            }
            Identity::SystemTangential => {
                let s = biharmonic_system(imm);
                out.push(LevelOutput::new(
                    "system_tangential",
                    grid,
                    &s.tangential_norm,
                ));
            }
            Identity::Codazzi => {
                let (_, norm) = codazzi_trace(imm);
                out.push(LevelOutput::new("codazzi_trace", grid, &norm));
            }
            Identity::TensionConsistency => {
                out.push(LevelOutput::new(
                    "tension_consistency",
                    grid,
                    &tension_consistency(imm),
                ));
            }
            Identity::HypersurfaceCurrent
            | Identity::HypersurfaceCurrentFull
            | Identity::HypersurfaceCurrentReduced => {
                need_fields("the hypersurface current")?;
                for (g, x) in fields.iter().enumerate() {
                    let h = hypersurface_current(imm, x)?;
                    let (name, r) = match id {
                        Identity::HypersurfaceCurrent => {
                            ("hypersurface_current", &h.residual_tangential_only)
                        }
                        Identity::HypersurfaceCurrentFull => {
                            ("hypersurface_current_full", &h.residual)
                        }
                        _ => ("hypersurface_current_reduced", &h.reduced_residual),
                    };
                    out.push(
                        LevelOutput::new(format!("{name}_gen{g}"), grid, r)
                            .info("divergence_linf", h.divergence.max_norm())
                            .info("tangential_term_linf", h.tangential_term.max_norm()),
                    );
                }
            }
            Identity::NormalBlock => {
                need_fields("the normal block")?;
                for (g, x) in fields.iter().enumerate() {
                    let nb = normal_block(imm, x)?;
                    let xn = normal_component(imm, x)?;
                    let r = nb.add(&xn.scaled(m));
                    out.push(
                        LevelOutput::new(format!("normal_block_gen{g}"), grid, &r)
                            .info("normal_block_linf", nb.max_norm()),
                    );
                }
            }
            other => {
                return Err(Error::UnsupportedMode(format!(
                    "{other:?} applies to maps, not immersions"
                )))
            }
        }
    }
    Ok(out)
}

/// Runs one check over all of its resolutions.
pub fn run_check(check: &CheckSpec, suite_seed: u64) -> Result<Vec<ResidualReport>> {
    check.validate()?;
    let resolutions = check.resolution_list();
    let mut per_level: Vec<Vec<LevelOutput>> = Vec::with_capacity(resolutions.len());
    for &n in &resolutions {
        let outputs = match check.subject(n, suite_seed)? {
            Subject::Map(map) => map_level(check, &map, suite_seed)?,
            Subject::Immersion(imm) => immersion_level(check, &imm, suite_seed)?,
        };
        per_level.push(outputs);
    }
    let count = per_level[0].len();
    let default_gate = check.default_gate(resolutions.len());
    let mut reports = Vec::with_capacity(count);
    for idx in 0..count {
        let first = &per_level[0][idx];
        let levels: Vec<Level> = per_level.iter().map(|l| l[idx].level.clone()).collect();
        let gate = first.gate.clone().unwrap_or_else(|| default_gate.clone());
        let mut r = ResidualReport::new(first.name.clone(), levels, gate);
        let overrides: Vec<bool> = per_level.iter().filter_map(|l| l[idx].pass).collect();
        if !overrides.is_empty() {
            r.pass = Some(overrides.iter().all(|&b| b));
        }
        let killing = per_level
            .iter()
            .filter_map(|l| l[idx].killing)
            .fold(None, |acc: Option<f64>, k| {
                Some(acc.map_or(k, |a| a.max(k)))
            });
        if let Some(k) = killing {
            r = r.with_killing_residual(k);
        }
        let mut info: BTreeMap<String, Value> = BTreeMap::new();
        for (key, _) in &first.info {
            let values: Vec<Value> = per_level
                .iter()
                .map(|l| {
                    l[idx]
                        .info
                        .iter()
                        .find(|(k, _)| k == key)
                        .map_or(Value::Null, |(_, v)| v.clone())
                })
                .collect();
            info.insert(key.clone(), Value::Array(values));
        }
        info.insert("conventions".into(), sign_constants());
        if let Some(p) = check.placement {
            info.insert("odd_term_placement_override".into(), Value::from(p.name()));
        }
        r.info = info;
        reports.push(r);
    }
    Ok(reports)
}

/// Like [`run_check`] but requires at least three resolutions.
pub fn convergence_study(check: &CheckSpec, suite_seed: u64) -> Result<Vec<ResidualReport>> {
    if check.resolution_list().len() < 3 {
        return Err(Error::InvalidArgument(
            "a convergence study needs at least three resolutions".into(),
        ));
    }
    run_check(check, suite_seed)
}

/// Reports of one check, labelled.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub reports: Vec<ResidualReport>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed())
    }
}

/// Runs every check (concurrently), keeping spec order in the output.
pub fn run_suite(suite: &SuiteSpec, convergence: bool) -> Result<Vec<CheckOutcome>> {
    suite.validate()?;
    let results: Vec<Result<CheckOutcome>> = suite
        .checks
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let reports = if convergence {
                convergence_study(c, suite.seed)?
            } else {
                run_check(c, suite.seed)?
            };
            Ok(CheckOutcome {
                check: c.label(i),
                reports,
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Name lookup used by the command line `list-builtins`.
pub fn builtin_listing() -> Value {
    serde_json::json!({
        "maps": crate::builtins::BUILTIN_MAPS,
        "charts": crate::chart::BUILTIN_CHARTS,
        "immersions": crate::hypersurface::BUILTIN_IMMERSIONS,
        "backends": ["fd2", "fd4", "spectral"],
    })
}

/// Ensures a chart name resolves (used for early validation).
pub fn check_target_name(name: &str) -> Result<()> {
    if name.starts_with("sphere:") {
        Target::parse(name).map(|_| ())
    } else {
        builtin_chart(name).map(|_| ())
    }
}

impl CheckSpec {
    /// The map of a map check at resolution `n`.
    pub fn build_map(&self, n: usize, suite_seed: u64) -> Result<GridMap> {
        match self.subject(n, suite_seed)? {
            Subject::Map(m) => Ok(m),
            Subject::Immersion(_) => Err(spec_err("expected a map check, found an immersion")),
        }
    }

    pub fn is_immersion(&self) -> bool {
        self.immersion.is_some()
    }
}

/// A flow run: the initial map (as a check entry at one resolution) and
/// descent parameters, with optional overrides of the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub initial: CheckSpec,
    pub order: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub step_halving: Option<bool>,
}

impl FlowSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FlowSpec = serde_json::from_str(text)?;
        spec.initial.validate()?;
        if spec.initial.is_immersion() {
            return Err(spec_err("the flow needs a map, not an immersion"));
        }
        if spec.initial.resolution_list().len() != 1 {
            return Err(spec_err("the flow runs at exactly one resolution"));
        }
        spec.config().validate()?;
        Ok(spec)
    }

    pub fn config(&self) -> crate::flow::FlowConfig {
        let mut cfg = crate::flow::FlowConfig::new(self.order);
        if let Some(dt) = self.dt {
            cfg = cfg.with_dt(dt);
        }
        if let Some(n) = self.max_steps {
            cfg = cfg.with_max_steps(n);
        }
        if let Some(t) = self.tolerance {
            cfg = cfg.with_tolerance(t);
        }
        if let Some(b) = self.step_halving {
            cfg = cfg.with_step_halving(b);
        }
        cfg
    }

    pub fn initial_map(&self) -> Result<GridMap> {
        self.initial
            .build_map(self.initial.resolution_list()[0], self.seed)
    }

    pub fn run(&self) -> Result<crate::flow::FlowTrajectory> {
        crate::flow::gradient_flow(&self.initial_map()?, &self.config())
    }
}
