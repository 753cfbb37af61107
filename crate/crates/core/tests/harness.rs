use std::fs;

use dnls_lab::harness::{self, RunConfig, PDE_COLUMNS, REDUCED_COLUMNS, TOY_COLUMNS};
use dnls_lab::resonance::build_quad;
use dnls_lab::spectral;
use dnls_lab::Execution;

fn small() -> RunConfig {
    RunConfig {
        m: 5,
        n: -4,
        ode_stride: 0.01,
        ..RunConfig::default()
    }
}

#[test]
fn outputs_are_bit_identical_across_runs_and_execution_modes() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (i, d) in dirs.iter().enumerate() {
        let cfg = RunConfig {
            execution: if i == 2 { Execution::Sequential } else { Execution::Parallel },
            ..small()
        };
        let report = harness::run_exchange_experiment(&cfg).unwrap();
        let files = harness::emit_report(&report, d.path()).unwrap();
        assert_eq!(files.len(), 4);
    }
    for name in ["reduced.csv", "toy_gauged.csv", "toy_full.csv", "pde.csv"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        for d in &dirs[1..] {
            let b = fs::read(d.path().join(name)).unwrap();
            assert!(a == b, "{name} differs");
        }
    }
}

#[test]
fn csv_headers_and_sidecars_follow_the_schema() {
    let d = tempfile::tempdir().unwrap();
    let report = harness::run_exchange_experiment(&small()).unwrap();
    harness::emit_report(&report, d.path()).unwrap();
    for (name, cols) in [
        ("reduced.csv", &REDUCED_COLUMNS[..]),
        ("toy_gauged.csv", &TOY_COLUMNS[..]),
        ("toy_full.csv", &TOY_COLUMNS[..]),
        ("pde.csv", &PDE_COLUMNS[..]),
    ] {
        let text = fs::read_to_string(d.path().join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), cols.join(","));
        let rows: Vec<&str> = lines.collect();
        assert!(rows.iter().all(|r| r.split(',').count() == cols.len()));
        assert!(rows.iter().all(|r| r.split(',').all(|v| v.parse::<f64>().is_ok())));
        let side: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.path().join(format!("{name}.json"))).unwrap()).unwrap();
        assert_eq!(side["columns"], serde_json::json!(cols));
        assert_eq!(side["rows"], rows.len());
        assert_eq!(side["config"]["M"], 5);
    }
    assert_eq!(REDUCED_COLUMNS, ["t", "phi1", "K", "H", "het_residual"]);
    assert_eq!(
        PDE_COLUMNS,
        ["t", "M", "E", "P", "abs2_alpha1", "abs2_alpha2", "abs2_beta1", "abs2_beta2", "A_L", "A_H", "apriori_ratio"]
    );
}

#[test]
fn config_rejects_unknown_keys_and_bad_values() {
    assert!(serde_json::from_str::<RunConfig>(r#"{"M": 5, "bogus": 1}"#).is_err());
    let cfg: RunConfig = serde_json::from_str(r#"{"M": 5, "N": -4}"#).unwrap();
    assert_eq!(cfg.mu, 1.0);
    assert!(RunConfig { k0: 1.0, ..small() }.validate().is_err());
    assert!(RunConfig { delta: 1.0, ..small() }.validate().is_err());
    assert!(RunConfig { m: 4, n: -4, ..small() }.validate().is_err());
    assert!(RunConfig { lambda: Some(-20.0), ..small() }.validate().is_err());
    let back: RunConfig = serde_json::from_str(&serde_json::to_string(&small()).unwrap()).unwrap();
    assert_eq!(back, small());
}

#[test]
fn window_and_regime() {
    let w = harness::guaranteed_window(20.0, 1.0, 101);
    assert_eq!(w, 0.1 * (1.0 / 2020.0));
    let r = RunConfig::default().regime().unwrap();
    assert!(r.m_star_dominates_lambda && r.mu_small);
    assert!(!small().regime().unwrap().m_star_dominates_lambda);
}

#[test]
fn residual_norms_split_at_the_low_cutoff() {
    let q = build_quad(5, -4).unwrap();
    let mut f = spectral::synthesize_field(&q, 0.2, [0.0; 4], 21).unwrap();
    let n0 = harness::residual_norms(&f, &q, 0.5, harness::low_cutoff(&q)).unwrap();
    assert_eq!((n0.a_l, n0.a_h, n0.weighted_theorem_norm), (0.0, 0.0, 0.0));
    f.set(1, num_complex::Complex64::new(0.5, 0.0)).unwrap();
    f.set(10, num_complex::Complex64::new(0.0, 0.25)).unwrap();
    let n = harness::residual_norms(&f, &q, 0.5, 4).unwrap();
    assert_eq!(n.a_l, 0.5);
    assert!((n.a_h - 0.25 * 101f64.powf(0.25)).abs() < 1e-15);
    assert!((n.weighted_theorem_norm - (5f64.sqrt() * 0.5 + n.a_h)).abs() < 1e-15);
    assert!(harness::residual_norms(&f, &q, 0.4, 4).is_err());
}

#[test]
fn corollary_parameters_scale_amplitude_and_quintic_term() {
    let (s, mu) = harness::corollary_parameters(20.0, 1.0, 10.0);
    assert!((s - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(mu, 0.25);
    assert_eq!(harness::corollary_parameters(20.0, 3.0, 20.0), (1.0, 3.0));
}

#[test]
fn exploratory_full_period_is_reported_separately() {
    let cfg = RunConfig {
        exploratory_full_period: true,
        ..small()
    };
    let report = harness::run_exchange_experiment(&cfg).unwrap();
    let pde = report.pde.data.unwrap();
    assert!(pde.exploratory.is_some());
    assert!(report.toy.ok && report.reduced.ok);
}
