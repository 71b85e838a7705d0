//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use qrc_core::calibration::{
    calibrate, propagate_first_order, propagate_monte_carlo, reference, retro_reflection_adjustment,
};
use qrc_core::cavity::{escape_efficiency, fit_reflection_scan, CavityFitOptions};
use qrc_core::exec::{map_indexed, Execution};
use qrc_core::homodyne::{
    check_proportionality, fit_sweep, normalize_trace, ProportionalityOptions, SweepFitOptions,
};
use qrc_core::quantum::{
    apply_loss, apply_phase_noise, infer_efficiency, photon_number, uncertainty_product,
};
use qrc_core::simulator::{
    simulate_cavity_scan, simulate_homodyne_sweep, simulate_proportionality, ProportionalityConfig,
    SimConfig,
};
use qrc_core::{PhaseNoise, QuadraturePair, UncertainValue};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
            o.detail
                .push_str(&format!("; runtime {took:.2?} exceeds {limit:?}"));
        }
    }
    (o, took)
}

fn c1_published_budget() -> Outcome {
    let r = calibrate(&reference::inputs(None), Execution::default())
        .expect("reference inputs calibrate");
    let de = r.eta_de;
    let ok = (de.value - 0.9720).abs() <= 0.0005 && (de.sigma - 0.0037).abs() <= 0.0002;
    outcome(
        ok,
        format!(
            "eta_DE = {:.4} % ± {:.4} % (target 97.20 ± 0.37)",
            100.0 * de.value,
            100.0 * de.sigma
        ),
    )
}

fn c2_escape_efficiency() -> Outcome {
    let esc = escape_efficiency(reference::R_SQ, reference::LOSS_RT).expect("valid mirror");
    let value_ok = (esc.value - 0.98583).abs() <= 0.00005;
    let sigma_ok = (esc.sigma - 0.00015).abs() <= 0.00005;
    outcome(
        value_ok && sigma_ok,
        format!(
            "eta_esc = {:.4} % (value {}), sigma = {:.4} % (sigma {}; target 0.015 ± 0.005, independent inputs)",
            100.0 * esc.value,
            if value_ok { "ok" } else { "off" },
            100.0 * esc.sigma,
            if sigma_ok { "ok" } else { "off" },
        ),
    )
}

fn c3_measured_trace() -> Outcome {
    let eta = infer_efficiency(QuadraturePair::new(reference::X_SQZ, reference::X_ASQZ).unwrap())
        .unwrap();
    outcome(
        (0.942..=0.948).contains(&eta),
        format!("eta = {:.4} %", 100.0 * eta),
    )
}

fn c4_photon_number() -> Outcome {
    let n = photon_number(QuadraturePair::pure_from_db(reference::SQUEEZING_DB).unwrap()).unwrap();
    outcome(
        (n - 4.73).abs() <= 0.05,
        format!("<n> = {n:.4} for {} dB", reference::SQUEEZING_DB),
    )
}

fn c5_product_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let v: f64 = 10f64.powf(rng.random_range(-3.0..-0.01));
        let eta: f64 = rng.random_range(1e-3..1.0);
        let pure = QuadraturePair::pure(v).unwrap();
        let n = (pure.x_var() + pure.y_var()) / 4.0 - 0.5;
        let lhs = uncertainty_product(apply_loss(pure, eta).unwrap());
        let rhs = 1.0 + 4.0 * (eta - eta * eta) * n;
        worst = worst.max((lhs / rhs - 1.0).abs());
    }
    outcome(
        worst <= 1e-12,
        format!("10^4 cases, worst relative gap {worst:.2e}"),
    )
}

fn c6_round_trips() -> Outcome {
    const TRUTH_ETA: f64 = 0.945;
    let base = SimConfig::homodyne_default();
    let etas = map_indexed(Execution::Parallel, 100, |k| {
        let cfg = base.with_seed(10_000 + k as u64);
        let tr = normalize_trace(
            &simulate_homodyne_sweep(&cfg).unwrap(),
            &cfg.budget().unwrap(),
        )
        .unwrap()
        .trace;
        fit_sweep(&tr, None, &SweepFitOptions::default())
            .and_then(|f| f.efficiency())
            .ok()
    });
    let ok_h: Vec<UncertainValue> = etas.into_iter().flatten().collect();
    let mean_h = ok_h.iter().map(|e| e.value).sum::<f64>() / ok_h.len().max(1) as f64;
    let cover_h = ok_h
        .iter()
        .filter(|e| (e.value - TRUTH_ETA).abs() <= 3.0 * e.sigma)
        .count();

    let (r_sq, loss) = (0.8279, 0.00247);
    let esc_truth = escape_efficiency(UncertainValue::exact(r_sq), UncertainValue::exact(loss))
        .unwrap()
        .value;
    let cbase = SimConfig::cavity_default();
    let fits = map_indexed(Execution::Parallel, 100, |k| {
        fit_reflection_scan(
            &simulate_cavity_scan(&cbase.with_seed(20_000 + k as u64)).unwrap(),
            None,
            &CavityFitOptions::default(),
        )
        .ok()
    });
    let fits: Vec<_> = fits.into_iter().flatten().collect();
    let cover_c = fits
        .iter()
        .filter(|f| {
            (f.params.r_sq - r_sq).abs() <= 3.0 * f.sigma.r_sq
                && (f.params.loss_rt - loss).abs() <= 3.0 * f.sigma.loss_rt
        })
        .count();
    let escs: Vec<f64> = fits
        .iter()
        .filter_map(|f| f.escape_efficiency().ok())
        .map(|e| e.value)
        .collect();
    let mean_esc = escs.iter().sum::<f64>() / escs.len().max(1) as f64;

    let pass = ok_h.len() == 100
        && (mean_h - TRUTH_ETA).abs() <= 0.003
        && cover_h >= 95
        && fits.len() == 100
        && (mean_esc - esc_truth).abs() <= 0.003
        && cover_c >= 95;
    outcome(
        pass,
        format!(
            "homodyne: {}/100 fitted, mean eta {:.4} %, {cover_h}/100 within 3 sigma; cavity: {}/100 fitted, mean eta_esc {:.4} % (truth {:.4} %), {cover_c}/100 within 3 sigma",
            ok_h.len(),
            100.0 * mean_h,
            fits.len(),
            100.0 * mean_esc,
            100.0 * esc_truth
        ),
    )
}

fn c7_monte_carlo() -> Outcome {
    let terms = reference::budget().product_terms();
    let fo = propagate_first_order(&terms).unwrap();
    let mc = propagate_monte_carlo(&terms, 1_000_000, 2024, Execution::Parallel).unwrap();
    let gap = (mc.std_dev / fo.sigma - 1.0).abs();
    outcome(
        gap <= 0.05,
        format!(
            "first-order {:.5}, Monte Carlo {:.5} (10^6 draws), gap {:.2} %",
            fo.sigma,
            mc.std_dev,
            100.0 * gap
        ),
    )
}

fn c8_phase_noise() -> Outcome {
    let m = QuadraturePair::new(0.10, 19.7).unwrap();
    let small = apply_phase_noise(m, PhaseNoise::new(0.002).unwrap());
    let shift = small.x_var() - m.x_var();

    let theta = 0.1;
    let closed = apply_phase_noise(m, PhaseNoise::new(theta).unwrap()).x_var();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = Normal::new(0.0, theta).unwrap();
    let draws = 1_000_000;
    let mc = (0..draws)
        .map(|_| {
            let (s, c) = d.sample(&mut rng).sin_cos();
            m.x_var() * c * c + m.y_var() * s * s
        })
        .sum::<f64>()
        / draws as f64;
    let gap = (mc / closed - 1.0).abs();
    outcome(
        shift.abs() < 1e-4 && gap <= 0.01,
        format!("2 mrad shift {shift:.2e}; 100 mrad closed form {closed:.5} vs Monte Carlo {mc:.5} (gap {:.3} %)", 100.0 * gap),
    )
}

fn c9_retro_reflection() -> Outcome {
    let eta = UncertainValue::exact(0.9720);
    let adj = retro_reflection_adjustment(eta, UncertainValue::exact(0.0046)).unwrap();
    let gain = 100.0 * (adj.value - eta.value);
    outcome(
        (0.44..=0.48).contains(&gain),
        format!(
            "{:.4} % -> {:.4} %, +{gain:.3} points",
            97.20,
            100.0 * adj.value
        ),
    )
}

fn c10_proportionality() -> Outcome {
    let powers: Vec<f64> = (1..=10).map(f64::from).collect();
    let opts = ProportionalityOptions::default();
    let linear = check_proportionality(
        &simulate_proportionality(&powers, &ProportionalityConfig::default()).unwrap(),
        &opts,
    )
    .unwrap();
    let quad_pts: Vec<(f64, f64)> = powers
        .iter()
        .map(|p| (*p, p + 0.05 / 10.0 * p * p))
        .collect();
    let quad = check_proportionality(&quad_pts, &opts).unwrap();
    let sat_cfg = ProportionalityConfig {
        saturation_power: Some(20.0),
        ..Default::default()
    };
    let sat = check_proportionality(&simulate_proportionality(&powers, &sat_cfg).unwrap(), &opts)
        .unwrap();
    outcome(
        linear.pass && !quad.pass && !sat.pass,
        format!(
            "linear pass={} (metric {:.1e}); 5 % quadratic pass={} (metric {:.3}); saturation pass={} (curvature {:?})",
            linear.pass, linear.nonlinearity_metric, quad.pass, quad.nonlinearity_metric, sat.pass, sat.curvature
        ),
    )
}

fn main() {
    type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (
            "published-budget replication",
            Some(Duration::from_secs(1)),
            c1_published_budget,
        ),
        ("escape-efficiency replication", None, c2_escape_efficiency),
        ("swept-trace efficiency bracket", None, c3_measured_trace),
        ("photon number of 13.2 dB state", None, c4_photon_number),
        (
            "uncertainty-product identity",
            Some(Duration::from_secs(5)),
            c5_product_identity,
        ),
        (
            "statistical round-trip fitting",
            Some(Duration::from_secs(60)),
            c6_round_trips,
        ),
        (
            "first-order vs Monte Carlo",
            Some(Duration::from_secs(30)),
            c7_monte_carlo,
        ),
        ("phase-noise negligibility", None, c8_phase_noise),
        ("retro-reflection consistency", None, c9_retro_reflection),
        ("proportionality gate", None, c10_proportionality),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.iter().enumerate() {
        let (o, took) = timed(*limit, f);
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{took:.2?}]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
