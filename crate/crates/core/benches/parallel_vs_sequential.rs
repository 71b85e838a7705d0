use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qrc_core::calibration::{propagate_monte_carlo, reference};
use qrc_core::cavity::{fit_reflection_scan, CavityFitOptions};
use qrc_core::homodyne::{fit_sweep, normalize_trace, SweepFitOptions};
use qrc_core::lsq::LmOptions;
use qrc_core::simulator::{simulate_homodyne_sweep, SimConfig};
use qrc_core::Execution;

const MODES: [(&str, Execution); 2] = [
    ("parallel", Execution::Parallel),
    ("sequential", Execution::Sequential),
];

fn lm(execution: Execution) -> LmOptions {
    LmOptions {
        execution,
        ..LmOptions::default()
    }
}

fn sweep_fit(c: &mut Criterion) {
    let cfg = SimConfig::homodyne_default();
    let trace = normalize_trace(
        &simulate_homodyne_sweep(&cfg).unwrap(),
        &cfg.budget().unwrap(),
    )
    .unwrap()
    .trace;
    let mut g = c.benchmark_group("fit_sweep_32001");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = SweepFitOptions {
            lm: lm(exec),
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_sweep(&trace, None, &opts).unwrap())
        });
    }
    g.finish();
}

fn cavity_fit(c: &mut Criterion) {
    let cfg = SimConfig::cavity_default();
    let trace = qrc_core::simulator::simulate_cavity_scan(&cfg).unwrap();
    let mut g = c.benchmark_group("fit_cavity_10001");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = CavityFitOptions {
            lm: lm(exec),
            ..Default::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fit_reflection_scan(&trace, None, &opts).unwrap())
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let terms = reference::budget().product_terms();
    let mut g = c.benchmark_group("monte_carlo_1e5");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| propagate_monte_carlo(&terms, 100_000, 7, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweep_fit, cavity_fit, monte_carlo);
criterion_main!(benches);
