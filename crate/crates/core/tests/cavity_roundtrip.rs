use qrc_core::calibration::aggregate_repeats;
use qrc_core::cavity::{escape_efficiency, fit_reflection_scan, CavityFitOptions};
use qrc_core::exec::{map_indexed, Execution};
use qrc_core::simulator::{simulate_cavity_scan, SimConfig, Truth};
use qrc_core::{Error, PhasePoly};

const R_SQ: f64 = 0.8279;
const LOSS: f64 = 0.00247;

#[test]
fn recovers_truth_within_three_sigma() {
    let cfg = SimConfig::cavity_default().with_seed(7);
    let fit = fit_reflection_scan(
        &simulate_cavity_scan(&cfg).unwrap(),
        None,
        &CavityFitOptions::default(),
    )
    .unwrap();
    assert!(
        (fit.params.r_sq - R_SQ).abs() < 3.0 * fit.sigma.r_sq,
        "{fit:?}"
    );
    assert!(
        (fit.params.loss_rt - LOSS).abs() < 3.0 * fit.sigma.loss_rt,
        "{fit:?}"
    );
    assert!(fit.converged);
    let esc = fit.escape_efficiency().unwrap();
    let truth = escape_efficiency(R_SQ.into_exact(), LOSS.into_exact())
        .unwrap()
        .value;
    assert!((esc.value - truth).abs() < 3.0 * esc.sigma + 1e-12);
}

trait Exact {
    fn into_exact(self) -> qrc_core::UncertainValue;
}

impl Exact for f64 {
    fn into_exact(self) -> qrc_core::UncertainValue {
        qrc_core::UncertainValue::exact(self)
    }
}

#[test]
fn noise_free_scan_is_recovered_exactly() {
    let mut cfg = SimConfig::cavity_default();
    cfg.frac_noise = 0.0;
    let fit = fit_reflection_scan(
        &simulate_cavity_scan(&cfg).unwrap(),
        None,
        &CavityFitOptions::default(),
    )
    .unwrap();
    let p = &fit.params;
    assert!((p.r_sq / R_SQ - 1.0).abs() < 1e-8, "{p:?}");
    assert!((p.loss_rt / LOSS - 1.0).abs() < 1e-8, "{p:?}");
    assert!((p.i0 - 1.0).abs() < 1e-8);
    assert!((p.phi1 - 7.5).abs() < 1e-6 && (p.phi0 + 0.4).abs() < 1e-6);
}

#[test]
fn reported_sigma_matches_seed_spread() {
    let base = SimConfig::cavity_default();
    let fits = map_indexed(Execution::Parallel, 100, |k| {
        let tr = simulate_cavity_scan(&base.with_seed(1000 + k as u64)).unwrap();
        fit_reflection_scan(&tr, None, &CavityFitOptions::default()).unwrap()
    });
    let r: Vec<f64> = fits.iter().map(|f| f.params.r_sq).collect();
    let l: Vec<f64> = fits.iter().map(|f| f.params.loss_rt).collect();
    let spread_r = aggregate_repeats(&r).unwrap().std_dev;
    let spread_l = aggregate_repeats(&l).unwrap().std_dev;
    let sigma_r = fits.iter().map(|f| f.sigma.r_sq).sum::<f64>() / 100.0;
    let sigma_l = fits.iter().map(|f| f.sigma.loss_rt).sum::<f64>() / 100.0;
    let (qr, ql) = (spread_r / sigma_r, spread_l / sigma_l);
    assert!((1.0 / 1.5..1.5).contains(&qr), "r_sq spread/sigma = {qr}");
    assert!((1.0 / 1.5..1.5).contains(&ql), "loss spread/sigma = {ql}");
}

#[test]
fn short_scan_is_rejected() {
    let mut cfg = SimConfig::cavity_default();
    cfg.sweep = PhasePoly::new(-0.5, 1.2, 0.0);
    let err = fit_reflection_scan(
        &simulate_cavity_scan(&cfg).unwrap(),
        None,
        &CavityFitOptions::default(),
    );
    assert!(
        matches!(err, Err(Error::InsufficientPhaseRange { .. })),
        "{err:?}"
    );
}

#[test]
fn flat_scan_is_unidentifiable() {
    let mut cfg = SimConfig::cavity_default();
    // Far from resonance over the whole window: no dip.
    cfg.sweep = PhasePoly::new(0.6, 1.9, 0.0);
    let Truth::Cavity(_) = cfg.truth else {
        unreachable!()
    };
    let err = fit_reflection_scan(
        &simulate_cavity_scan(&cfg).unwrap(),
        None,
        &CavityFitOptions::default(),
    );
    assert!(err.is_err(), "{err:?}");
}
