mod common;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use common::{builtin, grid, max_diff, random_map};
use polyharmonic::builtins::{MapDef, RandomMapSpec};
use polyharmonic::chart::{sphere_stereographic, stereographic_inverse, stereographic_push};
use polyharmonic::map::{BITENSION_RELATIVE_SIGN, VARIATION_SIGN};
use polyharmonic::{Backend, Error, Field, GridMap, Target};
use proptest::prelude::*;

fn constant_map(dim: usize, n: usize) -> GridMap {
    MapDef::Constant {
        value: vec![0.0, 0.6, 0.8],
    }
    .build(grid(dim, n, Backend::Spectral), Target::Sphere { n: 2 })
    .unwrap()
}

fn tangency_defect(map: &GridMap, v: &Field) -> f64 {
    (0..map.len())
        .map(|p| {
            map.value(p)
                .iter()
                .zip(v.at(p))
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn constant_map_has_no_energy_or_tension() {
    let m = constant_map(2, 16);
    assert_eq!(m.energy_density().max_abs(), 0.0);
    assert_eq!(m.energy(), 0.0);
    assert_eq!(m.tension().max_abs(), 0.0);
    for k in 1..=4 {
        assert_eq!(m.k_energy(k).unwrap(), 0.0);
        assert_eq!(m.k_tension(k).unwrap().max_abs(), 0.0);
    }
}

#[test]
fn great_circle_energy_is_pi_k_squared() {
    for k in 1..=3 {
        let m = builtin(&format!("great-circle:{k}"), 1, 32, Backend::Spectral);
        let expected = PI * (k * k) as f64;
        assert!(
            (m.energy() - expected).abs() < 1e-12 * expected,
            "k={k}: {}",
            m.energy()
        );
        assert!((m.k_energy(1).unwrap() - expected).abs() < 1e-12 * expected);
    }
}

#[test]
fn clifford_energy_density_is_one_half() {
    let m = builtin("clifford", 2, 32, Backend::Spectral);
    let e = m.energy_density();
    assert!(e.data().iter().all(|v| (v - 0.5).abs() < 1e-13));
    assert!((m.energy() - 2.0 * PI * PI).abs() < 1e-11);
}

#[test]
fn great_circle_is_harmonic_and_its_velocity_is_parallel() {
    for backend in [Backend::Spectral, Backend::Fd2, Backend::Fd4] {
        let m = builtin("great-circle:1", 1, 64, backend);
        let h = m.grid().step();
        assert!(m.tension().max_norm() <= 50.0 * h * h, "{backend:?}");
        let velocity = m.differential()[0].clone();
        assert!(m.pullback_derivative(&velocity, 0).max_norm() <= 50.0 * h * h);
        assert!(m.rough_laplacian(&velocity).max_norm() <= 50.0 * h * h);
    }
}

#[test]
fn small_circle_tension_matches_hand_computation() {
    let m = builtin(
        &format!("small-circle:{FRAC_1_SQRT_2}"),
        1,
        64,
        Backend::Spectral,
    );
    let tau = m.tension();
    let c = 1.0 / (2.0 * 2f64.sqrt());
    let oracle = m
        .grid()
        .sample_vec(3, |x| vec![-x[0].cos() * c, -x[0].sin() * c, c]);
    assert!(max_diff(&tau, &oracle) < 1e-12);
    for p in 0..m.len() {
        let s: f64 = tau.at(p).iter().map(|v| v * v).sum();
        assert!((s - 0.25).abs() < 1e-12);
    }
    assert!((m.k_energy(2).unwrap() - PI / 4.0).abs() < 1e-12);
}

#[test]
fn small_circle_is_biharmonic() {
    let m = builtin(
        &format!("small-circle:{FRAC_1_SQRT_2}"),
        1,
        64,
        Backend::Spectral,
    );
    assert!(m.k_tension(2).unwrap().max_norm() < 1e-10);
    assert!(m.bitension_alt().max_norm() < 1e-10);
}

#[test]
fn clifford_lift_is_proper_biharmonic() {
    let m = builtin("clifford-lift", 2, 32, Backend::Spectral);
    let tau = m.tension();
    for p in 0..m.len() {
        let s: f64 = tau.at(p).iter().map(|v| v * v).sum();
        assert!((s - 0.25).abs() < 1e-12);
    }
    assert!((tau.max_norm() - 0.5).abs() < 1e-12);
    assert!(m.k_tension(2).unwrap().max_norm() < 1e-10);
}

#[test]
fn harmonic_maps_have_vanishing_higher_tensions_and_energies() {
    let m = builtin("clifford", 2, 16, Backend::Spectral);
    for k in 2..=4 {
        assert!(
            m.k_tension(k).unwrap().max_norm() < 1e-8,
            "k={k}: {}",
            m.k_tension(k).unwrap().max_norm()
        );
        assert!(
            m.k_energy(k).unwrap() < 1e-16,
            "k={k}: {}",
            m.k_energy(k).unwrap()
        );
    }
}

#[test]
fn order_zero_is_rejected() {
    let m = builtin("great-circle:1", 1, 16, Backend::Spectral);
    assert!(matches!(m.k_tension(0), Err(Error::InvalidArgument(_))));
    assert!(matches!(m.k_energy(0), Err(Error::InvalidArgument(_))));
    let v = m.tension();
    assert!(matches!(
        m.first_variation_residual(&v, 1, 0.0),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn sections_stay_tangent() {
    let m = random_map(3, 2, 3, 32, Backend::Fd2);
    for k in 1..=4 {
        let t = m.k_tension(k).unwrap();
        assert!(
            tangency_defect(&m, &t) < 1e-12 * t.max_norm().max(1.0),
            "k={k}"
        );
    }
    assert!(tangency_defect(&m, &m.bitension_alt()) < 1e-10);
    for d in m.differential() {
        assert!(tangency_defect(&m, d) < 1e-13);
    }
}

fn chart_pair(n: usize, backend: Backend) -> (GridMap, GridMap) {
    let chart = Target::chart(sphere_stereographic(2));
    let def = MapDef::Random(RandomMapSpec {
        seed: 11,
        bandwidth: 2,
        amplitude: 0.3,
        center: Some(vec![0.2, -0.1]),
    });
    let g = grid(2, n, backend);
    let cm = def.build(g.clone(), chart).unwrap();
    let values = Field::from_fn(cm.len(), 3, |p, out| {
        out.copy_from_slice(&stereographic_inverse(cm.value(p)))
    });
    let sm = GridMap::new(g, Target::Sphere { n: 2 }, values).unwrap();
    (cm, sm)
}

fn pushed(cm: &GridMap, v: &Field) -> Field {
    Field::from_fn(cm.len(), 3, |p, out| {
        out.copy_from_slice(&stereographic_push(cm.value(p), v.at(p)))
    })
}

#[test]
fn chart_and_sphere_modes_agree() {
    let (cm, sm) = chart_pair(64, Backend::Spectral);
    let tau_c = pushed(&cm, &cm.tension());
    assert!(max_diff(&tau_c, &sm.tension()) < 1e-9);
    let t2 = pushed(&cm, &cm.k_tension(2).unwrap());
    assert!(
        max_diff(&t2, &sm.k_tension(2).unwrap())
            < 1e-7 * sm.k_tension(2).unwrap().max_norm().max(1.0)
    );
    let v = cm.differential()[1].clone();
    let dv = pushed(&cm, &cm.pullback_derivative(&v, 0));
    let sv = sm.differential()[1].clone();
    assert!(max_diff(&dv, &sm.pullback_derivative(&sv, 0)) < 1e-9);
}

#[test]
fn chart_and_sphere_modes_agree_to_second_order_under_fd2() {
    let diffs: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let (cm, sm) = chart_pair(n, Backend::Fd2);
            max_diff(&pushed(&cm, &cm.tension()), &sm.tension())
        })
        .collect();
    let h = 2.0 * PI / 128.0;
    assert!(diffs[2] <= 50.0 * h * h, "{diffs:?}");
}

#[test]
fn spectral_derivatives_are_exact_for_band_limited_maps() {
    let m = builtin("clifford", 2, 16, Backend::Spectral);
    let oracle = m
        .grid()
        .sample_vec(4, |x| vec![-x[0].sin(), x[0].cos(), 0.0, 0.0])
        .scaled(FRAC_1_SQRT_2);
    assert!(max_diff(&m.differential()[0], &oracle) < 1e-13);
}

/// `τ_k` under fd2 against the spectral value on the same grid.
fn fd2_truncation(seed: u64, k: usize, n: usize) -> f64 {
    let fd = random_map(seed, 2, 3, n, Backend::Fd2);
    let sp = random_map(seed, 2, 3, n, Backend::Spectral);
    max_diff(&fd.k_tension(k).unwrap(), &sp.k_tension(k).unwrap())
}

#[test]
fn fd2_k_tension_converges_at_second_order() {
    for k in 1..=4 {
        let e: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| fd2_truncation(5, k, n))
            .collect();
        let order = (e[1] / e[2]).log2();
        assert!((order - 2.0).abs() <= 0.3, "k={k}: errors {e:?}");
    }
}

#[test]
fn bitension_evaluator_differs_by_one_global_sign() {
    for seed in 0..4 {
        let m = random_map(seed, 2, 3, 32, Backend::Spectral);
        let t2 = m.k_tension(2).unwrap();
        let alt = m.bitension_alt();
        assert!(max_diff(&alt, &t2.scaled(BITENSION_RELATIVE_SIGN)) < 1e-9 * t2.max_norm());
        assert!(max_diff(&alt, &t2.scaled(-BITENSION_RELATIVE_SIGN)) > 0.1 * t2.max_norm());
    }
}

fn smooth_variation(m: &GridMap, phase: f64) -> Field {
    let raw = m.grid().sample_vec(m.ncomp(), |x| {
        (0..m.ncomp())
            .map(|c| (x[0] + phase * c as f64).sin() * 0.5)
            .collect()
    });
    m.project(raw)
}

#[test]
fn first_variation_of_a_harmonic_map_vanishes() {
    let m = builtin("great-circle:1", 1, 64, Backend::Spectral);
    let v = smooth_variation(&m, 0.4);
    let (dq, ip) = m.first_variation_parts(&v, 1, 1e-4).unwrap();
    assert!(ip.abs() < 1e-12);
    let r = m.first_variation_residual(&v, 1, 1e-4).unwrap();
    assert!((r - dq.abs()).abs() < 1e-12 && r < 1e-8, "{r:e}");
}

#[test]
fn first_variation_confirms_the_variation_sign() {
    for k in 1..=3 {
        let m = random_map(21, 1, 2, 64, Backend::Spectral);
        let v = smooth_variation(&m, 1.1);
        let (dq, ip) = m.first_variation_parts(&v, k, 1e-4).unwrap();
        assert!(
            ip.abs() > 1e-4,
            "k={k}: pairing too small to decide the sign"
        );
        assert!(
            (dq - VARIATION_SIGN * ip).abs() <= 1e-6,
            "k={k}: {dq} vs {ip}"
        );
        assert!((dq + VARIATION_SIGN * ip).abs() > 1e-4);
        let r1 = m.first_variation_residual(&v, k, 1e-3).unwrap();
        let r2 = m.first_variation_residual(&v, k, 2e-3).unwrap();
        assert!(
            r2 / r1 > 3.0 && r2 / r1 < 5.0,
            "k={k}: O(ε²) ratio {}",
            r2 / r1
        );
    }
}

#[test]
fn energies_are_bit_stable() {
    let a = random_map(8, 2, 3, 32, Backend::Fd2);
    let b = random_map(8, 2, 3, 32, Backend::Fd2);
    for k in 1..=3 {
        assert_eq!(
            a.k_energy(k).unwrap().to_bits(),
            b.k_energy(k).unwrap().to_bits()
        );
    }
}

#[test]
fn metric_domain_divergence_structure_is_consistent() {
    let g = polyharmonic::DomainGrid::torus(2, 32, Backend::Fd2)
        .unwrap()
        .with_metric_fn(|x| {
            let c = 1.0 + 0.2 * x[0].cos() * x[1].sin();
            vec![c, 0.0, 0.0, c]
        })
        .unwrap();
    let m = MapDef::builtin("clifford")
        .unwrap()
        .build(std::sync::Arc::new(g), Target::Sphere { n: 3 })
        .unwrap();
    let t = m.tension();
    let plain = builtin("clifford", 2, 32, Backend::Fd2).tension();
    // Conformal change in dimension two only rescales the tension.
    for p in 0..m.len() {
        let x = m.grid().coords(p);
        let c = 1.0 + 0.2 * x[0].cos() * x[1].sin();
        for (a, b) in t.at(p).iter().zip(plain.at(p)) {
            assert!((a * c - b).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn tension_of_random_maps_is_tangent(seed in 0u64..1000) {
        let m = random_map(seed, 1, 2, 32, Backend::Spectral);
        let t = m.tension();
        prop_assert!(tangency_defect(&m, &t) < 1e-13);
    }

    #[test]
    fn first_variation_holds_for_random_maps(seed in 0u64..1000) {
        let m = random_map(seed, 1, 2, 48, Backend::Spectral);
        let v = smooth_variation(&m, 0.7);
        prop_assert!(m.first_variation_residual(&v, 1, 1e-4).unwrap() <= 1e-6);
    }
}
