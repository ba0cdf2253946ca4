mod common;

use std::f64::consts::FRAC_1_SQRT_2;

use common::{builtin, grid, random_def, rotations};
use polyharmonic::builtins::{MapDef, TrigTerm};
use polyharmonic::conservation::conservation_residual;
use polyharmonic::flow::{descent_directional_derivative, descent_step, gradient_flow, FlowConfig};
use polyharmonic::{Backend, Error, GridMap, Target};

fn term(k: i32, cos: f64, sin: f64) -> TrigTerm {
    TrigTerm {
        k: vec![k],
        cos,
        sin,
    }
}

/// Biharmonic small circle with a `cos 3x` ripple in the height.
fn rippled_circle(n: usize, amplitude: f64) -> GridMap {
    let r = FRAC_1_SQRT_2;
    MapDef::Trig {
        components: vec![
            vec![term(1, r, 0.0)],
            vec![term(1, 0.0, r)],
            vec![term(0, r, 0.0), term(3, amplitude, 0.0)],
        ],
        normalize: true,
    }
    .build(grid(1, n, Backend::Spectral), Target::Sphere { n: 2 })
    .unwrap()
}

fn degree_zero_torus_map(n: usize) -> GridMap {
    random_def(3, 0.3)
        .build(grid(2, n, Backend::Spectral), Target::Sphere { n: 2 })
        .unwrap()
}

fn sphere_defect(m: &GridMap) -> f64 {
    (0..m.len())
        .map(|p| (m.value(p).iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn critical_map_stops_immediately() {
    let m = builtin("great-circle:1", 1, 32, Backend::Spectral);
    let traj = gradient_flow(&m, &FlowConfig::new(1)).unwrap();
    assert!(traj.converged);
    assert_eq!(traj.steps(), 0);
    assert_eq!(traj.records.len(), 1);
}

#[test]
fn harmonic_flow_shrinks_a_degree_zero_torus_map_to_a_point() {
    let m = degree_zero_torus_map(16);
    let cfg = FlowConfig::new(1)
        .with_dt(0.01)
        .with_tolerance(1e-7)
        .with_max_steps(5000);
    let traj = gradient_flow(&m, &cfg).unwrap();
    assert!(
        traj.converged,
        "{} steps, tension {:e}",
        traj.steps(),
        traj.final_tension()
    );
    let e = traj.energies();
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
    assert!(*e.last().unwrap() < 1e-6, "{:e}", e.last().unwrap());
    assert!(sphere_defect(&traj.final_map) < 1e-14);
}

#[test]
fn biharmonic_flow_relaxes_a_rippled_small_circle() {
    let m = rippled_circle(32, 0.05);
    let cfg = FlowConfig::new(2).with_dt(1e-5).with_max_steps(4000);
    let traj = gradient_flow(&m, &cfg).unwrap();
    let first = traj.records[0].tension_linf;
    let last = traj.final_tension();
    assert!(
        last < 0.1 * first,
        "{first:e} -> {last:e} after {} steps",
        traj.steps()
    );
    let e = traj.energies();
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
    assert!(sphere_defect(&traj.final_map) < 1e-14);
    for x in rotations(3, 3, 21) {
        let r = conservation_residual(&traj.final_map, &x, 2)
            .unwrap()
            .max_abs();
        assert!(r < 1e-8, "{r:e}");
    }
}

#[test]
fn oversized_step_without_halving_is_an_instability() {
    let m = degree_zero_torus_map(16);
    let cfg = FlowConfig::new(1)
        .with_dt(10.0)
        .with_step_halving(false)
        .with_max_steps(50);
    assert!(matches!(
        gradient_flow(&m, &cfg),
        Err(Error::Instability(_))
    ));
    let cfg = cfg.with_step_halving(true);
    let traj = gradient_flow(&m, &cfg).unwrap();
    assert!(traj.records.iter().skip(1).all(|r| r.dt < 10.0));
}

#[test]
fn descent_direction_lowers_the_energy() {
    for k in [1, 2, 3] {
        let m = rippled_circle(32, 0.1);
        let d = descent_directional_derivative(&m, k, 1e-4).unwrap();
        assert!(d < 0.0, "k = {k}: {d:e}");
    }
    let m = degree_zero_torus_map(16);
    let d = descent_directional_derivative(&m, 1, 1e-4).unwrap();
    assert!(d < 0.0);
}

#[test]
fn a_descent_step_stays_on_the_sphere() {
    let m = rippled_circle(32, 0.2);
    let tau = m.k_tension(2).unwrap();
    let next = descent_step(&m, &tau, 1e-3).unwrap();
    assert!(sphere_defect(&next) < 1e-15);
}

#[test]
fn flow_rejects_invalid_configurations() {
    let m = rippled_circle(16, 0.1);
    assert!(matches!(
        gradient_flow(&m, &FlowConfig::new(0)),
        Err(Error::InvalidArgument(_))
    ));
    assert!(gradient_flow(&m, &FlowConfig::new(1).with_dt(-1.0)).is_err());
    assert!(gradient_flow(&m, &FlowConfig::new(1).with_tolerance(0.0)).is_err());
    let chart = MapDef::Constant {
        value: vec![0.1, 0.2],
    }
    .build(
        grid(1, 16, Backend::Spectral),
        Target::parse("euclidean:2").unwrap(),
    )
    .unwrap();
    assert!(matches!(
        gradient_flow(&chart, &FlowConfig::new(1)),
        Err(Error::UnsupportedMode(_))
    ));
}

#[test]
fn csv_trajectory_has_one_row_per_record() {
    let m = rippled_circle(16, 0.1);
    let traj = gradient_flow(&m, &FlowConfig::new(1).with_dt(1e-3).with_max_steps(5)).unwrap();
    let csv = traj.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,energy,tau_linf,dt");
    assert_eq!(lines.len(), traj.records.len() + 1);
    assert!(lines[1].starts_with("0,"));
}
