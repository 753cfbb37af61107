mod common;

use dnls_lab::resonance::build_quad;
use dnls_lab::spectral::{self, SpectralField};
use dnls_lab::LabError;
use num_complex::Complex64;
use proptest::prelude::*;

fn random_field(cutoff: usize, seed: &[(f64, f64)]) -> SpectralField {
    let mut f = SpectralField::with_cutoff(cutoff).unwrap();
    for (i, (r, th)) in seed.iter().enumerate() {
        let xi = i as i64 - cutoff as i64;
        if xi.abs() <= cutoff as i64 {
            f.set(xi, Complex64::from_polar(*r, *th)).unwrap();
        }
    }
    f
}

fn canonical() -> SpectralField {
    let q = build_quad(5, -4).unwrap();
    spectral::synthesize_field(&q, 0.2, [0.0, 0.3, -0.2, 1.0], 21).unwrap()
}

#[test]
fn padding_does_not_change_the_trajectory() {
    let f = canonical();
    let a = spectral::evolve_padded(&f, 20.0, 1.0, 1e-4, 200, 200, 3).unwrap();
    let b = spectral::evolve_padded(&f, 20.0, 1.0, 1e-4, 200, 200, 4).unwrap();
    let scale = spectral::max_intensity(&a[1]).sqrt();
    for (x, y) in a[1].coeffs.iter().zip(&b[1].coeffs) {
        assert!((x - y).norm() <= 1e-12 * scale);
    }
}

#[test]
fn insufficient_padding_is_rejected() {
    assert!(spectral::Evolver::new(canonical(), 20.0, 1.0, 1e-4, 2).is_err());
    assert!(spectral::Transform::new(21, 6 * 21).is_err());
    assert!(spectral::Transform::new(21, 6 * 21 + 1).is_ok());
    assert!(SpectralField::zeros(10, 24).is_err());
    assert!(SpectralField::zeros(10, 16).is_err());
    assert!(SpectralField::zeros(10, 32).is_ok());
}

#[test]
fn multimode_step_halving_is_fourth_order() {
    let f = canonical();
    let t = 0.02;
    let reference = spectral::evolve(&f, 20.0, 1.0, t / 1024.0, 1024, 1024).unwrap();
    let r = reference.last().unwrap();
    let steps = [16usize, 32, 64, 128];
    let errs: Vec<f64> = steps
        .iter()
        .map(|&s| {
            let out = spectral::evolve(&f, 20.0, 1.0, t / s as f64, s, s).unwrap();
            out.last().unwrap().coeffs.iter().zip(&r.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
        })
        .collect();
    let dts: Vec<f64> = steps.iter().map(|&s| t / s as f64).collect();
    let slope = common::loglog_slope(&dts, &errs);
    assert!((slope - 4.0).abs() <= 0.2, "slope {slope}, errors {errs:?}");
}

#[test]
fn functionals_are_real_and_energy_positive_along_the_flow() {
    let f = canonical();
    for g in spectral::evolve(&f, 20.0, 1.0, 2e-4, 100, 10).unwrap() {
        let c = spectral::conserved_triple_complex(&g, 20.0, 1.0);
        let scale = c.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
        assert!(c.iter().all(|z| z.im.abs() <= 1e-12 * scale));
        assert!(c[1].re > 0.0);
    }
}

#[test]
fn non_finite_state_reports_last_healthy_step() {
    let mut f = SpectralField::with_cutoff(8).unwrap();
    for xi in -8..=8 {
        f.set(xi, Complex64::new(30.0, 0.0)).unwrap();
    }
    match spectral::evolve(&f, 20.0, 1.0, 1.0, 50, 1) {
        Err(LabError::NonFinite { last_healthy_step, .. }) => assert!(last_healthy_step < 50),
        other => panic!("expected a non-finite error, got {:?}", other.map(|v| v.len())),
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.bin");
    let q = build_quad(5, -4).unwrap();
    let f = spectral::evolve(&canonical(), 20.0, 1.0, 1e-4, 10, 10).unwrap().pop().unwrap();
    spectral::write_checkpoint(&f, 20.0, 1.0, Some(&q), &path).unwrap();
    let (g, meta) = spectral::read_checkpoint(&path).unwrap();
    assert_eq!(g.coeffs, f.coeffs);
    assert_eq!(g.t, f.t);
    assert_eq!((meta.xi_max, meta.n, meta.quad), (21, 64, Some(q)));
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 43 * 16);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn functionals_match_direct_summation(seed in prop::collection::vec((0.0f64..0.5, -3.0f64..3.0), 21)) {
        let f = random_field(10, &seed);
        let lib = spectral::conserved_triple(&f, 20.0, 1.0).as_array();
        let oracle = common::functionals(&f.coeffs, 10, 20.0, 1.0);
        for (a, b) in lib.iter().zip(oracle) {
            prop_assert!((a - b).abs() <= 1e-11 * b.abs().max(1.0));
        }
        let q = spectral::quartic_mean(&f);
        prop_assert!((q - common::quartic_mean(&f.coeffs, 10)).abs() <= 1e-11 * q.max(1.0));
    }

    #[test]
    fn momentum_identity_holds_at_time_zero(seed in prop::collection::vec((0.0f64..0.5, -3.0f64..3.0), 21)) {
        let f = random_field(10, &seed);
        let p0 = common::functionals(&f.coeffs, 10, 20.0, 1.0)[2];
        prop_assert!(spectral::momentum_fourier_identity(&f, 20.0, p0) <= 1e-11);
    }

    #[test]
    fn mass_is_conserved(seed in prop::collection::vec((0.0f64..0.3, -3.0f64..3.0), 21)) {
        let f = random_field(10, &seed);
        let dt = spectral::stable_dt(&f, 2.0, 1.0) / 40.0;
        let out = spectral::evolve(&f, 2.0, 1.0, dt, 40, 40).unwrap();
        let (m0, m1) = (out[0].l2_squared(), out[1].l2_squared());
        prop_assert!((m0 - m1).abs() <= 1e-7 * m0.max(1e-12));
    }
}
