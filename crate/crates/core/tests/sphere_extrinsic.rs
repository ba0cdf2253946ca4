mod common;

use std::f64::consts::FRAC_1_SQRT_2;

use common::{builtin, grid, random_map};
use polyharmonic::builtins::{MapDef, RandomMapSpec};
use polyharmonic::conservation::noether_current;
use polyharmonic::report::Gate;
use polyharmonic::sphere::{
    biharmonic_extrinsic, biharmonic_extrinsic_residual, generator_from_json,
    killing_from_generator, lambda_identity_residual, tension_extrinsic, wedge_current,
    wedge_equivalence_check, zero_curvature, zero_curvature_residual,
};
use polyharmonic::suite::random_generators;
use polyharmonic::{Backend, Error, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_circle(n: usize, backend: Backend) -> polyharmonic::GridMap {
    builtin(&format!("small-circle:{FRAC_1_SQRT_2}"), 1, n, backend)
}

#[test]
fn zero_generator_gives_zero_field() {
    let x = killing_from_generator(&[0.0; 9], 3).unwrap();
    assert_eq!(x.evaluate(&[0.0, 0.6, 0.8]), vec![0.0; 3]);
}

#[test]
fn plane_generator_rotates_first_axis_to_second() {
    let mut a = vec![0.0; 9];
    a[3] = 1.0;
    a[1] = -1.0;
    let x = killing_from_generator(&a, 3).unwrap();
    assert_eq!(x.evaluate(&[1.0, 0.0, 0.0]), vec![0.0, 1.0, 0.0]);
}

#[test]
fn generator_fields_are_tangent() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for a in random_generators(5, 3, 1) {
        let x = killing_from_generator(&a, 5).unwrap();
        for _ in 0..100 {
            let mut u: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= n);
            let xu = x.evaluate(&u);
            assert!(xu.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-14);
        }
    }
}

#[test]
fn non_antisymmetric_generators_are_rejected() {
    let a = [0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert!(matches!(
        killing_from_generator(&a, 3),
        Err(Error::InvalidArgument(_))
    ));
    assert!(generator_from_json("[[0, 1, 0], [-1, 0, 0], [0, 0, 0]]").is_ok());
    assert!(generator_from_json("[0, 1, 0, -1, 0, 0, 0, 0, 0]").is_ok());
    assert!(generator_from_json("[[0, 1], [1, 0]]").is_err());
    assert!(generator_from_json("[[0, 1, 0], [-1, 0]]").is_err());
}

#[test]
fn extrinsic_tension_matches_intrinsic_and_is_tangent() {
    let m = random_map(4, 2, 3, 32, Backend::Spectral);
    let t = tension_extrinsic(&m).unwrap();
    assert!(
        t.sub(&m.tension()).max_abs() < 1e-9,
        "{:e}",
        t.sub(&m.tension()).max_abs()
    );
    for p in 0..m.len() {
        let d: f64 = t.at(p).iter().zip(m.value(p)).map(|(a, b)| a * b).sum();
        assert!(d.abs() < 1e-9);
    }
    assert!(
        tension_extrinsic(&builtin("great-circle:1", 1, 32, Backend::Spectral))
            .unwrap()
            .max_norm()
            < 1e-13
    );
    let sc = tension_extrinsic(&small_circle(32, Backend::Spectral)).unwrap();
    for p in 0..sc.points() {
        assert!((sc.at(p).iter().map(|v| v * v).sum::<f64>() - 0.25).abs() < 1e-12);
    }
}

#[test]
fn lambda_identity_holds_for_every_sphere_map() {
    for seed in 0..3 {
        let m = random_map(seed, 2, 3, 32, Backend::Spectral);
        let r = lambda_identity_residual(&m).unwrap().max_abs();
        assert!(r < 1e-9, "{r:e}");
    }
    let chart = MapDef::Random(RandomMapSpec {
        seed: 2,
        bandwidth: 2,
        amplitude: 0.3,
        center: Some(vec![0.1, 0.2]),
    })
    .build(
        grid(1, 16, Backend::Spectral),
        Target::parse("sphere-stereographic:2").unwrap(),
    )
    .unwrap();
    assert!(matches!(
        lambda_identity_residual(&chart),
        Err(Error::UnsupportedMode(_))
    ));
}

#[test]
fn closed_form_maps_satisfy_the_extrinsic_biharmonic_equation() {
    for m in [
        small_circle(64, Backend::Spectral),
        builtin("great-circle:2", 1, 64, Backend::Spectral),
        builtin("clifford", 2, 32, Backend::Spectral),
        builtin("clifford-lift", 2, 32, Backend::Spectral),
    ] {
        let b = biharmonic_extrinsic(&m).unwrap();
        assert!(b.residual.max_norm() < 1e-9, "{}", b.residual.max_norm());
    }
    let reports = biharmonic_extrinsic_residual(
        &small_circle(64, Backend::Spectral),
        Gate::Absolute { tol: 1e-8 },
    )
    .unwrap();
    assert_eq!(reports.len(), 3);
    assert!(reports.iter().all(|r| r.passed()));
}

#[test]
fn non_biharmonic_small_circle_stays_away_from_zero() {
    let r: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let m = builtin("small-circle:0.9", 1, n, Backend::Fd2);
            biharmonic_extrinsic(&m).unwrap().residual.max_norm()
        })
        .collect();
    assert!(r.iter().all(|&v| v > 0.05), "{r:?}");
    assert!((r[2] / r[1] - 1.0).abs() < 0.05);
    let scan: Vec<f64> = (1..=9)
        .map(|i| {
            let m = builtin(
                &format!("small-circle:{}", 0.1 * i as f64),
                1,
                32,
                Backend::Spectral,
            );
            biharmonic_extrinsic(&m).unwrap().residual.max_norm()
        })
        .collect();
    let best =
        scan.iter().copied().enumerate().fold(
            (0, f64::INFINITY),
            |b, (i, v)| if v < b.1 { (i, v) } else { b },
        );
    assert_eq!(
        best.0 + 1,
        7,
        "closest scanned radius to 1/√2 should win: {scan:?}"
    );
}

#[test]
fn scalar_sub_identities_converge_for_random_maps() {
    let r: Vec<(f64, f64)> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let b = biharmonic_extrinsic(&random_map(1, 2, 3, n, Backend::Fd2)).unwrap();
            (
                b.scalar_fourth_order.max_abs(),
                b.scalar_second_order.max_abs(),
            )
        })
        .collect();
    for which in 0..2 {
        let v: Vec<f64> = r
            .iter()
            .map(|p| if which == 0 { p.0 } else { p.1 })
            .collect();
        let order = (v[1] / v[2]).log2();
        assert!(v[2] < 1e-12 || (order - 2.0).abs() < 0.3, "{v:?}");
    }
    let spectral = biharmonic_extrinsic(&random_map(1, 2, 3, 48, Backend::Spectral)).unwrap();
    assert!(spectral.scalar_fourth_order.max_abs() < 1e-9);
    assert!(spectral.scalar_second_order.max_abs() < 1e-12);
}

#[test]
fn great_circle_wedge_current_is_the_plane_bivector() {
    let m = builtin("great-circle:1", 1, 32, Backend::Spectral);
    let w = wedge_current(&m, 1).unwrap();
    assert_eq!(w.antisymmetry_defect(), 0.0);
    for p in 0..m.len() {
        let a = w.matrix(p, 0);
        assert!((a[1] + 1.0).abs() < 1e-13 && (a[3] - 1.0).abs() < 1e-13);
        for (k, v) in a.iter().enumerate() {
            if k != 1 && k != 3 {
                assert!(v.abs() < 1e-13);
            }
        }
    }
    assert!(w.divergence(m.grid()).max_abs() < 1e-12);
}

#[test]
fn constant_map_has_zero_wedge_currents() {
    let m = MapDef::Constant {
        value: vec![0.0, 0.0, 1.0, 0.0],
    }
    .build(grid(2, 8, Backend::Spectral), Target::Sphere { n: 3 })
    .unwrap();
    for order in 1..=2 {
        assert_eq!(wedge_current(&m, order).unwrap().field().max_abs(), 0.0);
        assert_eq!(zero_curvature(&m, order).unwrap().residual.max_abs(), 0.0);
    }
    assert!(matches!(
        wedge_current(&m, 3),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn small_circle_second_order_wedge_is_divergence_free() {
    let m = small_circle(64, Backend::Spectral);
    let w = wedge_current(&m, 2).unwrap();
    assert!(w.divergence(m.grid()).max_abs() < 1e-10);
}

#[test]
fn generator_contraction_recovers_the_noether_current() {
    for (m, seeds) in [
        (random_map(3, 2, 3, 32, Backend::Spectral), 3u64),
        (builtin("clifford-lift", 2, 32, Backend::Spectral), 2),
    ] {
        let n = m.ncomp();
        for a in random_generators(n, seeds as usize, 21) {
            let x = killing_from_generator(&a, n).unwrap();
            for order in 1..=2 {
                let w = wedge_current(&m, order).unwrap();
                let c = m.grid().raise(&w.contract(&a).unwrap());
                let j = noether_current(&m, &x, order).unwrap().field;
                assert!(
                    c.sub(&j).max_abs() < 1e-8,
                    "order {order}: {}",
                    c.sub(&j).max_abs()
                );
            }
        }
    }
}

#[test]
fn equivalence_holds_on_closed_form_examples() {
    let tol = 1e-8;
    let gc = wedge_equivalence_check(&builtin("great-circle:1", 1, 64, Backend::Spectral), 1, tol)
        .unwrap();
    assert!(gc.pass && gc.divergence < tol && gc.equation < tol);
    for m in [
        small_circle(64, Backend::Spectral),
        builtin("clifford-lift", 2, 32, Backend::Spectral),
    ] {
        let e = wedge_equivalence_check(&m, 2, tol).unwrap();
        assert!(e.pass && e.divergence < tol && e.equation < tol, "{e:?}");
        assert!(e.bridge < tol);
    }
    let cl =
        wedge_equivalence_check(&builtin("clifford", 2, 32, Backend::Spectral), 1, tol).unwrap();
    assert!(cl.pass);
}

#[test]
fn equivalence_ratio_is_bounded_and_refinement_stable_for_non_critical_maps() {
    let ratios: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let e =
                wedge_equivalence_check(&random_map(7, 2, 3, n, Backend::Fd2), 1, 1e-8).unwrap();
            assert!(e.pass && e.divergence > 1e-3 && e.equation > 1e-3);
            e.ratio.unwrap()
        })
        .collect();
    assert!(
        ratios.iter().all(|r| (r - 2f64.sqrt()).abs() < 1e-4),
        "{ratios:?}"
    );
    let bridges: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            wedge_equivalence_check(&random_map(7, 2, 3, n, Backend::Fd2), 2, 1e-8)
                .unwrap()
                .bridge
        })
        .collect();
    assert!(bridges[2] < bridges[0] / 8.0, "{bridges:?}");
}

#[test]
fn harmonic_clifford_map_satisfies_the_zero_curvature_equation() {
    let z = zero_curvature(&builtin("clifford", 2, 64, Backend::Spectral), 1).unwrap();
    assert!(z.residual.max_abs() < 1e-8);
    assert!(z.commutator_linf > 0.1);
    assert!((z.best_fit_coefficient.unwrap() - 2.0).abs() < 1e-10);
    let one_d = builtin("great-circle:1", 1, 16, Backend::Spectral);
    assert!(matches!(
        zero_curvature(&one_d, 1),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn biharmonic_lift_has_a_refinement_stable_zero_curvature_defect() {
    let r: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            zero_curvature(&builtin("clifford-lift", 2, n, Backend::Spectral), 2)
                .unwrap()
                .residual
                .max_norm()
        })
        .collect();
    assert!(r.iter().all(|&v| v > 0.5), "{r:?}");
    assert!((r[2] / r[0] - 1.0).abs() < 0.05, "{r:?}");
    let rep = zero_curvature_residual(
        &builtin("clifford-lift", 2, 32, Backend::Spectral),
        2,
        Gate::Report,
    )
    .unwrap();
    assert!(rep.info.contains_key("best_fit_coefficient"));
}
