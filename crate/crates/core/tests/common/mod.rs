#![allow(dead_code)]

use std::sync::Arc;

use polyharmonic::builtins::{MapDef, RandomMapSpec};
use polyharmonic::chart::VectorFieldOnTarget;
use polyharmonic::suite::random_generators;
use polyharmonic::{Backend, DomainGrid, Field, GridMap, Target};

pub fn grid(dim: usize, n: usize, backend: Backend) -> Arc<DomainGrid> {
    Arc::new(DomainGrid::torus(dim, n, backend).unwrap())
}

pub fn builtin(name: &str, dim: usize, n: usize, backend: Backend) -> GridMap {
    let def = MapDef::builtin(name).unwrap();
    let target = def.natural_target().unwrap();
    def.build(grid(dim, n, backend), target).unwrap()
}

pub fn random_def(seed: u64, amplitude: f64) -> MapDef {
    MapDef::Random(RandomMapSpec {
        seed,
        bandwidth: 2,
        amplitude,
        center: None,
    })
}

pub fn random_map(seed: u64, dim: usize, sphere: usize, n: usize, backend: Backend) -> GridMap {
    random_def(seed, 0.05)
        .build(grid(dim, n, backend), Target::Sphere { n: sphere })
        .unwrap()
}

pub fn rotations(ambient: usize, count: usize, seed: u64) -> Vec<VectorFieldOnTarget> {
    random_generators(ambient, count, seed)
        .iter()
        .map(|a| VectorFieldOnTarget::from_generator(a, ambient).unwrap())
        .collect()
}

/// Generator with `A e_i = e_j`, `A e_j = −e_i`.
pub fn plane_rotation(ambient: usize, i: usize, j: usize) -> VectorFieldOnTarget {
    let mut a = vec![0.0; ambient * ambient];
    a[j * ambient + i] = 1.0;
    a[i * ambient + j] = -1.0;
    VectorFieldOnTarget::from_generator(&a, ambient).unwrap()
}

pub fn max_diff(a: &Field, b: &Field) -> f64 {
    a.sub(b).max_abs()
}

/// `log₂` ratios of consecutive values.
pub fn halving_orders(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
