//! Map definitions: closed-form built-ins, trigonometric-polynomial tables and
//! the seeded random generator. A definition is independent of resolution and
//! can be sampled on any grid.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::dot;
use crate::grid::DomainGrid;
use crate::map::{GridMap, Target};

/// One term `cos·cos(k·x) + sin·sin(k·x)` of a trigonometric polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Parameters of the seeded random trigonometric map generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomMapSpec {
    pub seed: u64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: u32,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Base point; a random unit vector for sphere targets when absent,
    /// the chart origin otherwise.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

fn default_bandwidth() -> u32 {
    2
}

fn default_amplitude() -> f64 {
    0.05
}

/// A map definition.
#[derive(Clone, Debug, PartialEq)]
pub enum MapDef {
    /// `x ↦ (cos kx₁, sin kx₁, 0, …)`
    GreatCircle {
        k: i32,
    },
    /// `(cos x, sin x, cos y, sin y)/√2` into S³
    Clifford,
    /// `(r cos x, r sin x, √(1−r²))` into S²
    SmallCircle {
        r: f64,
    },
    /// `(cos x, sin x, cos y, sin y, √2)/2` into S⁴
    CliffordLift,
    Constant {
        value: Vec<f64>,
    },
    /// One trigonometric polynomial per component, optionally normalized.
    Trig {
        components: Vec<Vec<TrigTerm>>,
        normalize: bool,
    },
    Random(RandomMapSpec),
}

pub const BUILTIN_MAPS: &[&str] = &[
    "great-circle:k",
    "clifford",
    "small-circle:r",
    "clifford-lift",
];

impl MapDef {
    /// Parses a built-in name such as `great-circle:2` or `small-circle:0.7071`.
    pub fn builtin(name: &str) -> Result<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let num = |what: &str| -> Result<f64> {
            arg.and_then(|a| a.parse::<f64>().ok())
                .ok_or_else(|| invalid(format!("{what} needs a numeric argument: {name:?}")))
        };
        match head {
            "great-circle" => {
                let k = num("great-circle")?;
                if k.fract() != 0.0 {
                    return Err(invalid("great-circle frequency must be an integer"));
                }
                Ok(MapDef::GreatCircle { k: k as i32 })
            }
            "clifford" if arg.is_none() => Ok(MapDef::Clifford),
            "clifford-lift" if arg.is_none() => Ok(MapDef::CliffordLift),
            "small-circle" => {
                let r = num("small-circle")?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(invalid("small-circle radius must lie in [0, 1]"));
                }
                Ok(MapDef::SmallCircle { r })
            }
            _ => Err(invalid(format!("unknown built-in map {name:?}"))),
        }
    }

    /// Minimal domain dimension and target this definition needs, when fixed.
    pub fn natural_target(&self) -> Option<Target> {
        match self {
            MapDef::GreatCircle { .. } | MapDef::SmallCircle { .. } => {
                Some(Target::Sphere { n: 2 })
            }
            MapDef::Clifford => Some(Target::Sphere { n: 3 }),
            MapDef::CliffordLift => Some(Target::Sphere { n: 4 }),
            _ => None,
        }
    }

    fn required_dim(&self) -> usize {
        match self {
            MapDef::Clifford | MapDef::CliffordLift => 2,
            _ => 1,
        }
    }

    /// Expands the random generator into an explicit trigonometric table.
    pub fn resolve(&self, domain_dim: usize, target: &Target) -> Result<MapDef> {
        match self {
            MapDef::Random(spec) => random_trig(spec, domain_dim, target),
            other => Ok(other.clone()),
        }
    }

    /// Point evaluator on the domain.
    pub fn evaluator(
        &self,
        domain_dim: usize,
        target: &Target,
    ) -> Result<Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>> {
        if domain_dim < self.required_dim() {
            return Err(Error::Dimension(format!(
                "map needs a domain of dimension at least {}",
                self.required_dim()
            )));
        }
        let nc = target.value_dim();
        let sphere_dim = |need: usize| -> Result<()> {
            match target {
                Target::Sphere { n } if n + 1 >= need => Ok(()),
                _ => Err(Error::Dimension(format!(
                    "map needs a sphere target with at least {need} ambient components"
                ))),
            }
        };
        let pad = move |mut v: Vec<f64>| {
            v.resize(nc, 0.0);
            v
        };
        Ok(match self.resolve(domain_dim, target)? {
            MapDef::GreatCircle { k } => {
                sphere_dim(2)?;
                let k = k as f64;
                Arc::new(move |x| pad(vec![(k * x[0]).cos(), (k * x[0]).sin()]))
            }
            MapDef::SmallCircle { r } => {
                sphere_dim(3)?;
                let z = (1.0 - r * r).max(0.0).sqrt();
                Arc::new(move |x| pad(vec![r * x[0].cos(), r * x[0].sin(), z]))
            }
            MapDef::Clifford => {
                sphere_dim(4)?;
                Arc::new(move |x| {
                    pad(vec![
                        x[0].cos() / SQRT_2,
                        x[0].sin() / SQRT_2,
                        x[1].cos() / SQRT_2,
                        x[1].sin() / SQRT_2,
                    ])
                })
            }
            MapDef::CliffordLift => {
                sphere_dim(5)?;
                Arc::new(move |x| {
                    pad(vec![
                        0.5 * x[0].cos(),
                        0.5 * x[0].sin(),
                        0.5 * x[1].cos(),
                        0.5 * x[1].sin(),
                        0.5 * SQRT_2,
                    ])
                })
            }
            MapDef::Constant { value } => {
                if value.len() != nc {
                    return Err(Error::Dimension("constant map has wrong length".into()));
                }
                Arc::new(move |_| value.clone())
            }
            MapDef::Trig {
                components,
                normalize,
            } => {
                if components.len() != nc {
                    return Err(Error::Dimension(format!(
                        "trig table has {} components, target needs {nc}",
                        components.len()
                    )));
                }
                if components.iter().flatten().any(|t| t.k.len() != domain_dim) {
                    return Err(Error::Dimension("trig wave vector has wrong length".into()));
                }
                Arc::new(move |x| {
                    let mut v: Vec<f64> = components
                        .iter()
                        .map(|terms| {
                            terms
                                .iter()
                                .map(|t| {
                                    let phase: f64 =
                                        t.k.iter().zip(x).map(|(&k, xi)| k as f64 * xi).sum();
                                    t.cos * phase.cos() + t.sin * phase.sin()
                                })
                                .sum()
                        })
                        .collect();
                    if normalize {
                        let n = dot(&v, &v).sqrt();
                        v.iter_mut().for_each(|c| *c /= n);
                    }
                    v
                })
            }
            MapDef::Random(_) => unreachable!("resolved above"),
        })
    }

    /// Samples the definition on `grid`.
    pub fn build(&self, grid: Arc<DomainGrid>, target: Target) -> Result<GridMap> {
        let f = self.evaluator(grid.dim(), &target)?;
        GridMap::from_fn(grid, target, |x| f(x))
    }
}

/// Wave vectors with `|k|∞ ≤ bandwidth`, one representative of each `±k` pair.
fn half_lattice(dim: usize, bandwidth: i32) -> Vec<Vec<i32>> {
    let side = (2 * bandwidth + 1) as usize;
    let total = side.pow(dim as u32);
    let mut out = Vec::new();
    for idx in 0..total {
        let mut rest = idx;
        let k: Vec<i32> = (0..dim)
            .map(|_| {
                let v = (rest % side) as i32 - bandwidth;
                rest /= side;
                v
            })
            .collect();
        if let Some(first) = k.iter().find(|&&v| v != 0) {
            if *first > 0 {
                out.push(k);
            }
        }
    }
    out
}

fn random_trig(spec: &RandomMapSpec, dim: usize, target: &Target) -> Result<MapDef> {
    if spec.bandwidth == 0 || !(spec.amplitude >= 0.0) {
        return Err(invalid("random map needs bandwidth ≥ 1 and amplitude ≥ 0"));
    }
    let nc = target.value_dim();
    let waves = half_lattice(dim, spec.bandwidth as i32);
    let scale = spec.amplitude / ((2 * waves.len()) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _attempt in 0..64 {
        let center = match (&spec.center, target) {
            (Some(c), _) => {
                if c.len() != nc {
                    return Err(Error::Dimension(
                        "random map center has wrong length".into(),
                    ));
                }
                c.clone()
            }
            (None, Target::Sphere { .. }) => loop {
                let v: Vec<f64> = (0..nc).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = dot(&v, &v).sqrt();
                if n > 0.1 && n <= 1.0 {
                    break v.iter().map(|c| c / n).collect();
                }
            },
            (None, Target::Chart(_)) => vec![0.0; nc],
        };
        let components: Vec<Vec<TrigTerm>> = (0..nc)
            .map(|c| {
                let mut terms = vec![TrigTerm {
                    k: vec![0; dim],
                    cos: center[c],
                    sin: 0.0,
                }];
                for k in &waves {
                    terms.push(TrigTerm {
                        k: k.clone(),
                        cos: scale * rng.gen_range(-1.0..1.0),
                        sin: scale * rng.gen_range(-1.0..1.0),
                    });
                }
                terms
            })
            .collect();
        let def = MapDef::Trig {
            components,
            normalize: target.is_sphere(),
        };
        if !target.is_sphere() || min_norm_on_lattice(&def, dim) > 0.3 {
            return Ok(def);
        }
    }
    Err(invalid(
        "random map generator could not keep the map away from the origin",
    ))
}

/// Smallest `|v|` of the unnormalized polynomial over a sampling lattice.
fn min_norm_on_lattice(def: &MapDef, dim: usize) -> f64 {
    let MapDef::Trig { components, .. } = def else {
        return f64::INFINITY;
    };
    let per_axis = match dim {
        1 => 256,
        2 => 48,
        _ => 16,
    };
    let total = (per_axis as usize).pow(dim as u32);
    let step = 2.0 * std::f64::consts::PI / per_axis as f64;
    let mut min = f64::INFINITY;
    let mut x = vec![0.0; dim];
    for idx in 0..total {
        let mut rest = idx;
        for xi in x.iter_mut() {
            *xi = (rest % per_axis) as f64 * step;
            rest /= per_axis;
        }
        let v: Vec<f64> = components
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| {
                        let phase: f64 = t.k.iter().zip(&x).map(|(&k, xi)| k as f64 * xi).sum();
                        t.cos * phase.cos() + t.sin * phase.sin()
                    })
                    .sum()
            })
            .collect();
        min = min.min(dot(&v, &v).sqrt());
    }
    min
}
