use polyharmonic::report::{reports_to_csv, CSV_HEADER};
use polyharmonic::suite::{
    builtin_listing, convergence_study, run_check, run_suite, FlowSpec, SuiteSpec,
};
use polyharmonic::Error;

const SMALL_CIRCLE: &str = r#"{
  "seed": 1,
  "checks": [{
    "name": "small-circle",
    "domain": {"dim": 1, "backend": "spectral"},
    "map": "small-circle:0.7071067811865476",
    "resolutions": [64, 128],
    "orders": [2],
    "random_generators": {"count": 2}
  }]
}"#;

const GREAT_CIRCLE: &str = r#"{
  "checks": [{
    "domain": {"dim": 1, "resolution": 64},
    "map": "great-circle:1",
    "orders": [1],
    "generators": [[[0, -1, 0], [1, 0, 0], [0, 0, 0]]]
  }]
}"#;

const RANDOM_FD2: &str = r#"{
  "seed": 4,
  "checks": [{
    "name": "random",
    "domain": {"dim": 2, "backend": "fd2"},
    "target": "sphere:3",
    "map": {"random": {"seed": 3, "bandwidth": 2}},
    "resolutions": [32, 64, 128],
    "orders": [3],
    "random_generators": {"count": 1}
  }]
}"#;

fn suite(text: &str) -> SuiteSpec {
    SuiteSpec::from_json(text).unwrap()
}

#[test]
fn biharmonic_small_circle_passes_every_conservation_report() {
    let out = run_suite(&suite(SMALL_CIRCLE), false).unwrap();
    assert_eq!(out.len(), 1);
    assert!(out[0].passed());
    let ids: Vec<&str> = out[0].reports.iter().map(|r| r.identity.as_str()).collect();
    assert_eq!(
        ids,
        ["current_k2_gen0", "current_k2_gen1", "stress_energy_k2"]
    );
}

#[test]
fn harmonic_great_circle_passes_at_first_order() {
    let out = run_suite(&suite(GREAT_CIRCLE), false).unwrap();
    assert!(out[0].passed());
    assert_eq!(out[0].check, "check0");
    let killing = out[0].reports[0].killing_residual.unwrap();
    assert!(killing < 1e-12);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let s = suite(RANDOM_FD2);
    let a = serde_json::to_string(&run_suite(&s, true).unwrap()).unwrap();
    let b = serde_json::to_string(&run_suite(&s, true).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fd2_random_map_converges_at_second_order() {
    let s = suite(RANDOM_FD2);
    let reports = convergence_study(&s.checks[0], s.seed).unwrap();
    for r in &reports {
        let order = r.finest_order().unwrap();
        assert!((1.7..=2.3).contains(&order), "{}: {order}", r.identity);
        assert_eq!(r.pass, Some(true));
    }
}

#[test]
fn spectral_band_limited_rows_are_marked_exact() {
    let s = suite(&SMALL_CIRCLE.replace("[64, 128]", "[16, 32, 48]"));
    let reports = convergence_study(&s.checks[0], s.seed).unwrap();
    let csv = reports_to_csv(&reports);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert!(cols[2].parse::<f64>().unwrap() < 1e-9, "{line}");
        assert_eq!(cols[4], "exact", "{line}");
        assert_eq!(cols[5], "true");
    }
}

#[test]
fn convergence_needs_three_resolutions() {
    let s = suite(SMALL_CIRCLE);
    assert!(matches!(
        convergence_study(&s.checks[0], s.seed),
        Err(Error::InvalidArgument(_))
    ));
    assert!(run_suite(&s, true).is_err());
    assert!(run_check(&s.checks[0], s.seed).is_ok());
}

#[test]
fn every_report_records_the_sign_conventions() {
    for text in [SMALL_CIRCLE, GREAT_CIRCLE] {
        for outcome in run_suite(&suite(text), false).unwrap() {
            for r in &outcome.reports {
                let c = &r.info["conventions"];
                assert_eq!(c["variation_sign"], -1.0);
                assert_eq!(c["bitension_relative_sign"], -1.0);
                assert_eq!(c["current_identity_sign_k1"], -1.0);
                assert_eq!(c["current_identity_sign_k_ge_2"], 1.0);
                assert_eq!(c["odd_term_placement"], "hoisted");
            }
        }
    }
}

#[test]
fn seed_changes_random_content() {
    let mut s = suite(RANDOM_FD2);
    s.checks[0].resolutions = Some(vec![32]);
    let a = run_suite(&s, false).unwrap();
    s.seed = 5;
    let b = run_suite(&s, false).unwrap();
    assert_ne!(
        a[0].reports[0].levels[0].linf,
        b[0].reports[0].levels[0].linf
    );
}

#[test]
fn hypersurface_checks_run_from_json() {
    let text = r#"{"checks": [{
        "immersion": "small-hypersphere:1:0.7071067811865476",
        "resolutions": [64],
        "random_generators": {"count": 2}
    }]}"#;
    let out = run_suite(&suite(text), false).unwrap();
    assert!(out[0].passed(), "{:#?}", out[0].reports);
    assert!(out[0]
        .reports
        .iter()
        .any(|r| r.identity.starts_with("system_normal")));
}

#[test]
fn invalid_suites_are_spec_errors() {
    for bad in [
        r#"{"checks": []}"#,
        r#"{"checks": [{"map": "great-circle:1", "resolutions": [64]}]}"#,
        r#"{"checks": [{"domain": {"dim": 1}, "map": "great-circle:1", "resolutions": [64, 32]}]}"#,
        r#"{"checks": [{"domain": {"dim": 1}, "map": "great-circle:1", "resolutions": [64], "orders": [0]}]}"#,
        r#"{"checks": [{"domain": {"dim": 1}, "resolutions": [64]}]}"#,
    ] {
        assert!(
            matches!(SuiteSpec::from_json(bad), Err(Error::Spec(_))),
            "{bad}"
        );
    }
    assert!(SuiteSpec::from_json("{ not json").is_err());
    let unknown = suite(
        r#"{"checks": [{"domain": {"dim": 1}, "map": "spiral", "target": "sphere:2", "resolutions": [16]}]}"#,
    );
    assert!(run_suite(&unknown, false).is_err());
}

#[test]
fn flow_spec_runs_the_configured_descent() {
    let text = r#"{
        "seed": 2,
        "domain": {"dim": 1, "backend": "spectral"},
        "map": "great-circle:1",
        "resolutions": [32],
        "order": 1,
        "dt": 0.001,
        "max_steps": 10
    }"#;
    let spec = FlowSpec::from_json(text).unwrap();
    let traj = spec.run().unwrap();
    assert!(traj.converged);
    assert_eq!(traj.steps(), 0);
    assert!(FlowSpec::from_json(&text.replace("[32]", "[32, 64]")).is_err());
}

#[test]
fn builtin_listing_names_every_registry() {
    let v = builtin_listing();
    let text = v.to_string();
    for name in [
        "great-circle:k",
        "sphere-stereographic:n",
        "small-hypersphere:m:r",
        "spectral",
        "fd2",
    ] {
        assert!(text.contains(name), "{name}");
    }
}
