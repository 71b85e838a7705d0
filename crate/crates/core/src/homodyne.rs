//! Swept-phase balanced homodyne traces: normalization to the vacuum level,
//! the `Δ²X(φ) = Δ²X_sqz cos²φ + Δ²X_asqz sin²φ` model and its fit, and the
//! auxiliary-beam efficiency measurements (fringe visibility, propagation,
//! detector proportionality).

use std::f64::consts::{FRAC_PI_2, LN_10, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cavity::{fit_phase_poly, sample_noise};
use crate::error::{Error, Result};
use crate::lsq::{self, LmOptions, Problem, Termination};
use crate::phase::{PhasePoly, TimeScale};
use crate::quantum::{efficiency_gradient, infer_efficiency, infer_pure_state, QuadraturePair};
use crate::trace::{median, moving_average, Trace};
use crate::uncertain::UncertainValue;

/// Largest phase advance per sample a fit may report, in radians.
pub const MAX_PHASE_STEP: f64 = PI / 8.0;

/// Smoothing windows wider than this fraction of a fringe period bias the fit.
pub const SMOOTHING_BIAS_FRACTION: f64 = 0.05;

/// Vacuum and dark noise levels used to normalize raw noise power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBudget {
    /// Noise power with the signal port blocked.
    pub vacuum_var: f64,
    /// Noise power with all light blocked.
    pub dark_var: f64,
}

impl NoiseBudget {
    pub fn new(vacuum_var: f64, dark_var: f64) -> Result<Self> {
        let b = Self {
            vacuum_var,
            dark_var,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dark_var >= 0.0 && self.vacuum_var > self.dark_var && self.vacuum_var.is_finite())
        {
            return Err(Error::domain(format!(
                "noise budget needs vacuum_var > dark_var >= 0, got vacuum {} dark {}",
                self.vacuum_var, self.dark_var
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Normalized {
    pub trace: Trace,
    /// Samples that fell below zero after dark subtraction.
    pub negative_samples: usize,
}

/// Dark-subtracts and scales a raw noise-power trace so the vacuum level is 1.
pub fn normalize_trace(raw: &Trace, budget: &NoiseBudget) -> Result<Normalized> {
    budget.validate()?;
    let scale = budget.vacuum_var - budget.dark_var;
    let v: Vec<f64> = raw
        .v()
        .iter()
        .map(|v| (v - budget.dark_var) / scale)
        .collect();
    let negative_samples = v.iter().filter(|x| **x < 0.0).count();
    let mut trace = raw.with_values(v)?;
    trace.meta.units = Some("normalized".into());
    Ok(Normalized {
        trace,
        negative_samples,
    })
}

/// Parameters of the swept-quadrature model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepModel {
    pub x_sqz: f64,
    pub x_asqz: f64,
    pub phase: PhasePoly,
}

/// Normalized variance read out at time `t`.
pub fn sweep_model(t: f64, model: &SweepModel) -> f64 {
    let (s, c) = model.phase.eval(t).sin_cos();
    model.x_sqz * c * c + model.x_asqz * s * s
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualDomain {
    #[default]
    Linear,
    Decibel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    /// σᵢ ∝ model value, refined by iterative reweighting.
    #[default]
    Fractional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepFitOptions {
    pub lm: LmOptions,
    pub domain: ResidualDomain,
    pub weighting: Weighting,
    /// Moving-average window in samples applied before fitting; 1 disables.
    pub smoothing_window: usize,
    /// Reweighting passes for [`Weighting::Fractional`] in the linear domain.
    pub reweight_passes: usize,
}

impl Default for SweepFitOptions {
    fn default() -> Self {
        Self {
            lm: LmOptions::default(),
            domain: ResidualDomain::Linear,
            weighting: Weighting::Fractional,
            smoothing_window: 1,
            reweight_passes: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepWarning {
    /// Smoothing wider than the bias threshold relative to the fitted fringe period.
    SmoothingBias {
        window: usize,
        fringe_period_samples: f64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepFit {
    pub x_sqz: f64,
    pub x_asqz: f64,
    pub phase: PhasePoly,
    /// Order: x_sqz, x_asqz, phi0, phi1, phi2.
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
    pub domain: ResidualDomain,
    pub smoothing_window: usize,
    pub warnings: Vec<SweepWarning>,
}

impl SweepFit {
    pub const NAMES: [&'static str; 5] = ["x_sqz", "x_asqz", "phi0", "phi1", "phi2"];

    pub fn model(&self) -> SweepModel {
        SweepModel {
            x_sqz: self.x_sqz,
            x_asqz: self.x_asqz,
            phase: self.phase,
        }
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.covariance[k][k].max(0.0).sqrt()
    }

    pub fn quadratures(&self) -> Result<QuadraturePair> {
        QuadraturePair::new(self.x_sqz, self.x_asqz)
    }

    /// Total efficiency with σ from the (x_sqz, x_asqz) covariance block.
    pub fn efficiency(&self) -> Result<UncertainValue> {
        let q = self.quadratures()?;
        let eta = infer_efficiency(q)?;
        let g = efficiency_gradient(q)?;
        let c = &self.covariance;
        let var = g[0] * g[0] * c[0][0] + 2.0 * g[0] * g[1] * c[0][1] + g[1] * g[1] * c[1][1];
        UncertainValue::new(eta, var.max(0.0).sqrt())
    }

    pub fn pure_state(&self) -> Result<QuadraturePair> {
        infer_pure_state(self.quadratures()?)
    }
}

struct SweepProblem<'a> {
    tau: &'a [f64],
    y: &'a [f64],
    /// Linear domain: per-sample weights. Decibel domain: unused.
    weights: Option<Vec<f64>>,
    domain: ResidualDomain,
}

const DB: f64 = 10.0 / LN_10;

impl Problem for SweepProblem<'_> {
    fn n_params(&self) -> usize {
        5
    }

    fn n_residuals(&self) -> usize {
        self.y.len()
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p.iter().all(|x| x.is_finite()) && p[0] > 0.0 && p[1] > 0.0
    }

    fn residual(&self, i: usize, p: &[f64]) -> f64 {
        let tau = self.tau[i];
        let (s, c) = (p[2] + tau * (p[3] + tau * p[4])).sin_cos();
        let m = p[0] * c * c + p[1] * s * s;
        match self.domain {
            ResidualDomain::Linear => (m - self.y[i]) * self.weights.as_ref().map_or(1.0, |w| w[i]),
            ResidualDomain::Decibel => DB * (m.ln() - self.y[i].ln()),
        }
    }

    fn residual_grad(&self, i: usize, p: &[f64], g: &mut [f64]) -> f64 {
        let tau = self.tau[i];
        let phi = p[2] + tau * (p[3] + tau * p[4]);
        let (s, c) = phi.sin_cos();
        let (cc, ss) = (c * c, s * s);
        let m = p[0] * cc + p[1] * ss;
        let dm_dphi = (p[1] - p[0]) * 2.0 * s * c;
        let (scale, r) = match self.domain {
            ResidualDomain::Linear => {
                let w = self.weights.as_ref().map_or(1.0, |w| w[i]);
                (w, (m - self.y[i]) * w)
            }
            ResidualDomain::Decibel => (DB / m, DB * (m.ln() - self.y[i].ln())),
        };
        g[0] = scale * cc;
        g[1] = scale * ss;
        g[2] = scale * dm_dphi;
        g[3] = g[2] * tau;
        g[4] = g[3] * tau;
        r
    }
}

/// Heuristic starting point for [`fit_sweep`] from a normalized trace.
///
/// Troughs and crests of a lightly smoothed copy anchor the phase at
/// multiples of π/2; the smoothed extremes seed the two variances.
pub fn initial_guess(trace: &Trace) -> Result<SweepModel> {
    let (t, v) = (trace.t(), trace.v());
    let n = v.len();
    let w0 = (n / 400).max(1) | 1;
    let sm = moving_average(v, w0);
    let lo = sm.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let noise = sample_noise(v) / (w0 as f64).sqrt();
    if !(hi - lo > (10.0 * noise).max(1e-9 * median(&sm).abs())) {
        return Err(Error::RankDeficient(
            "trace shows no fringe contrast; phase parameters are unidentifiable".into(),
        ));
    }

    // Extremes: (index, is_trough). A segment opens beyond a quarter of the
    // contrast and closes only once the trace crosses mid-contrast, so noise
    // near a threshold cannot split one extreme in two. Segments cut by the
    // trace ends are dropped.
    let span = hi - lo;
    let mid = lo + 0.5 * span;
    let mut extremes: Vec<(usize, bool)> = Vec::new();
    let mut open: Option<(usize, usize, bool)> = None; // (start, best, is_trough)
    for (i, &x) in sm.iter().enumerate() {
        open = match open {
            None if x < lo + 0.25 * span => Some((i, i, true)),
            None if x > hi - 0.25 * span => Some((i, i, false)),
            None => None,
            Some((start, best, trough)) => {
                let closed = if trough { x > mid } else { x < mid };
                if closed {
                    if start > 0 {
                        extremes.push((best, trough));
                    }
                    None
                } else {
                    let better = if trough { x < sm[best] } else { x > sm[best] };
                    Some((start, if better { i } else { best }, trough))
                }
            }
        };
    }
    if extremes.len() < 2 {
        let swept = if extremes.is_empty() { 0.0 } else { FRAC_PI_2 };
        return Err(Error::InsufficientPhaseRange {
            span: swept,
            required: PI,
        });
    }

    let mut phase = if extremes[0].1 { 0.0 } else { FRAC_PI_2 };
    let mut pts_t = vec![t[extremes[0].0]];
    let mut pts_phi = vec![phase];
    for w in extremes.windows(2) {
        phase += if w[0].1 == w[1].1 { PI } else { FRAC_PI_2 };
        pts_t.push(t[w[1].0]);
        pts_phi.push(phase);
    }
    let poly = fit_phase_poly(&pts_t, &pts_phi);
    Ok(SweepModel {
        x_sqz: lo.max(1e-6),
        x_asqz: hi,
        phase: poly,
    })
}

/// Fits [`sweep_model`] to a normalized trace. `init = None` runs
/// [`initial_guess`] on the (optionally smoothed) trace.
pub fn fit_sweep(
    trace: &Trace,
    init: Option<&SweepModel>,
    opts: &SweepFitOptions,
) -> Result<SweepFit> {
    let work = if opts.smoothing_window > 1 {
        trace.moving_average(opts.smoothing_window)?
    } else {
        trace.clone()
    };
    let init = match init {
        Some(m) => *m,
        None => initial_guess(&work)?,
    };
    if !(init.x_sqz > 0.0 && init.x_asqz > 0.0) {
        return Err(Error::domain("initial variances must be positive"));
    }
    if opts.domain == ResidualDomain::Decibel && work.v().iter().any(|y| !(*y > 0.0)) {
        return Err(Error::domain(
            "decibel residuals need strictly positive samples",
        ));
    }

    let ts = TimeScale::spanning(work.t());
    let tau: Vec<f64> = work.t().iter().map(|&t| ts.tau(t)).collect();
    let a = ts.to_scaled(&init.phase);
    let mut params = vec![init.x_sqz, init.x_asqz, a[0], a[1], a[2]];

    let passes = match (opts.domain, opts.weighting) {
        (ResidualDomain::Linear, Weighting::Fractional) => opts.reweight_passes.max(1),
        _ => 1,
    };
    let mut outcome = None;
    let mut iterations = 0;
    for _ in 0..passes {
        let weights = match (opts.domain, opts.weighting) {
            (ResidualDomain::Linear, Weighting::Fractional) => Some(
                tau.iter()
                    .map(|&tau| {
                        let (s, c) = (params[2] + tau * (params[3] + tau * params[4])).sin_cos();
                        1.0 / (params[0] * c * c + params[1] * s * s)
                    })
                    .collect(),
            ),
            _ => None,
        };
        let problem = SweepProblem {
            tau: &tau,
            y: work.v(),
            weights,
            domain: opts.domain,
        };
        let out = lsq::minimize(&problem, &params, &opts.lm)?;
        iterations += out.iterations;
        params = out.params.clone();
        outcome = Some(out);
    }
    let out = outcome.expect("at least one pass");
    let mut cov = out.covariance.clone();

    if opts.domain == ResidualDomain::Decibel {
        // Log-domain fits estimate the geometric mean; undo the −σ²/2 offset.
        let dof = (work.len() - 5).max(1) as f64;
        let s2 = (2.0 * out.cost / dof) / (DB * DB);
        let k = (0.5 * s2).exp();
        params[0] *= k;
        params[1] *= k;
        for r in 0..5 {
            for c in 0..5 {
                let f = if r < 2 { k } else { 1.0 } * if c < 2 { k } else { 1.0 };
                cov[(r, c)] *= f;
            }
        }
    }

    // Canonical orientation: x_sqz is the smaller variance.
    if params[0] > params[1] {
        params.swap(0, 1);
        params[2] += FRAC_PI_2;
        let perm = [1, 0, 2, 3, 4];
        cov = DMatrix::from_fn(5, 5, |r, c| cov[(perm[r], perm[c])]);
    }

    let mut jac = DMatrix::<f64>::identity(5, 5);
    let m = ts.to_absolute_matrix();
    for r in 0..3 {
        for c in 0..3 {
            jac[(2 + r, 2 + c)] = m[(r, c)];
        }
    }
    let cov = &jac * cov * jac.transpose();
    let phase = ts.to_absolute([params[2], params[3], params[4]]);

    let contrast = params[1] - params[0];
    let contrast_sigma = (cov[(0, 0)] + cov[(1, 1)] - 2.0 * cov[(0, 1)])
        .max(0.0)
        .sqrt();
    if !(contrast > 5.0 * contrast_sigma && contrast > 1e-9 * params[1]) {
        return Err(Error::RankDeficient(format!(
            "fringe contrast {contrast:.3e} ± {contrast_sigma:.3e} does not determine the phase"
        )));
    }

    let (t0, t1) = (work.t()[0], work.t()[work.len() - 1]);
    let swept = phase.span(t0, t1);
    if swept < PI {
        return Err(Error::InsufficientPhaseRange {
            span: swept,
            required: PI,
        });
    }

    let dt = (t1 - t0) / (work.len() - 1) as f64;
    let max_step = phase.rate(t0).abs().max(phase.rate(t1).abs()) * dt;
    if max_step > MAX_PHASE_STEP {
        return Err(Error::RankDeficient(format!(
            "fitted phase advances {max_step:.3} rad per sample; the fringes would be aliased"
        )));
    }

    let mut warnings = Vec::new();
    let period_samples = PI * (work.len() - 1) as f64 / swept;
    if opts.smoothing_window as f64 > SMOOTHING_BIAS_FRACTION * period_samples {
        warnings.push(SweepWarning::SmoothingBias {
            window: opts.smoothing_window,
            fringe_period_samples: period_samples,
        });
    }

    Ok(SweepFit {
        x_sqz: params[0],
        x_asqz: params[1],
        phase,
        covariance: (0..5)
            .map(|r| (0..5).map(|c| cov[(r, c)]).collect())
            .collect(),
        residual_norm: out.residual_norm(),
        converged: true,
        iterations,
        termination: out.termination,
        domain: opts.domain,
        smoothing_window: opts.smoothing_window.max(1),
        warnings,
    })
}

/// Auto-initialized sweep fit; `opts` picks smoothing and the residual domain.
pub fn fit_on_log_or_linear(trace: &Trace, opts: &SweepFitOptions) -> Result<SweepFit> {
    fit_sweep(trace, None, opts)
}

/// Fringe visibility `(U_max − U_min)/(U_max + U_min)` after removing the
/// no-light offset.
pub fn visibility(u_max: f64, u_min: f64, u_offset: f64) -> Result<f64> {
    let (hi, lo) = (u_max - u_offset, u_min - u_offset);
    let sum = hi + lo;
    if !(sum > 0.0) {
        return Err(Error::domain(format!(
            "offset-corrected U_max + U_min = {sum} must be positive"
        )));
    }
    if hi < 0.0 || lo < 0.0 {
        return Err(Error::domain(
            "a fringe extreme lies below the no-light offset",
        ));
    }
    Ok((hi - lo).abs() / sum)
}

/// Mode-matching efficiency `v²`.
pub fn mode_matching(v: UncertainValue) -> Result<UncertainValue> {
    if !(0.0..=1.0).contains(&v.value) {
        return Err(Error::domain(format!(
            "visibility must lie in [0, 1], got {}",
            v.value
        )));
    }
    UncertainValue::new(v.value * v.value, 2.0 * v.value * v.sigma)
}

/// `(P_PD1 + P_PD2) / P_cm` with first-order propagation.
pub fn propagation_efficiency(
    p_cm: UncertainValue,
    p_pd1: UncertainValue,
    p_pd2: UncertainValue,
) -> Result<UncertainValue> {
    for (name, p) in [("p_cm", p_cm), ("p_pd1", p_pd1), ("p_pd2", p_pd2)] {
        if !(p.value > 0.0) {
            return Err(Error::domain(format!(
                "{name} must be positive, got {}",
                p.value
            )));
        }
    }
    let sum = p_pd1.value + p_pd2.value;
    let value = sum / p_cm.value;
    let var = (p_pd1.sigma.powi(2) + p_pd2.sigma.powi(2)) / p_cm.value.powi(2)
        + (value * p_cm.sigma / p_cm.value).powi(2);
    let sigma = var.sqrt();
    if value > 1.0 + 3.0 * sigma {
        return Err(Error::Unphysical { value, sigma });
    }
    UncertainValue::new(value, sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProportionalityOptions {
    /// Largest acceptable relative residual of the linear fit.
    pub max_nonlinearity: f64,
    /// Known dark-noise level subtracted before fitting.
    pub dark_noise: f64,
    /// Largest acceptable |intercept|; defaults to `max_nonlinearity` times
    /// the fitted signal at the lowest power.
    pub intercept_allowance: Option<f64>,
}

impl Default for ProportionalityOptions {
    fn default() -> Self {
        Self {
            max_nonlinearity: 0.01,
            dark_noise: 0.0,
            intercept_allowance: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curvature {
    None,
    /// Grows faster than linear (excess noise such as scattered light).
    Positive,
    /// Grows slower than linear (saturation).
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionalityReport {
    pub slope: f64,
    pub intercept: f64,
    pub nonlinearity_metric: f64,
    /// Quadratic coefficient relative to the slope, `c·p_max/a`.
    pub relative_curvature: f64,
    pub curvature: Curvature,
    pub intercept_ok: bool,
    /// False when the noise does not respond to LO power at all.
    pub responsive: bool,
    pub pass: bool,
}

fn solve_ls(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let k = rows[0].len();
    let a = DMatrix::from_fn(rows.len(), k, |r, c| rows[r][c]);
    let b = DMatrix::from_column_slice(y.len(), 1, y);
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    Some((0..k).map(|j| sol[(j, 0)]).collect())
}

/// Checks that vacuum noise power scales linearly with LO power.
pub fn check_proportionality(
    points: &[(f64, f64)],
    opts: &ProportionalityOptions,
) -> Result<ProportionalityReport> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} points, need >= 3",
            points.len()
        )));
    }
    if points.iter().any(|(p, n)| !(*p > 0.0) || !n.is_finite()) {
        return Err(Error::domain("LO powers must be positive and noise finite"));
    }
    let p_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let p_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if p_max < 4.0 * p_min {
        return Err(Error::InsufficientData(format!(
            "LO power spans a factor {:.2}, need >= 4",
            p_max / p_min
        )));
    }
    let y: Vec<f64> = points.iter().map(|(_, n)| n - opts.dark_noise).collect();
    let lin_rows: Vec<Vec<f64>> = points.iter().map(|(p, _)| vec![1.0, *p]).collect();
    let lin = solve_ls(&lin_rows, &y).ok_or_else(|| Error::domain("linear fit failed"))?;
    let (intercept, slope) = (lin[0], lin[1]);

    let nonlinearity_metric = points
        .iter()
        .zip(&y)
        .map(|((p, _), y)| {
            let fit = intercept + slope * p;
            if fit.abs() > 0.0 {
                (y - fit).abs() / fit.abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);

    let quad_rows: Vec<Vec<f64>> = points.iter().map(|(p, _)| vec![1.0, *p, p * p]).collect();
    let quad = solve_ls(&quad_rows, &y).ok_or_else(|| Error::domain("quadratic fit failed"))?;
    let relative_curvature = if quad[1] != 0.0 {
        quad[2] * p_max / quad[1]
    } else {
        0.0
    };
    let curvature =
        if relative_curvature.abs() <= opts.max_nonlinearity || !relative_curvature.is_finite() {
            Curvature::None
        } else if relative_curvature > 0.0 {
            Curvature::Positive
        } else {
            Curvature::Negative
        };

    let mean_abs = y.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64;
    let responsive = slope > 0.0 && slope * (p_max - p_min) > 0.1 * mean_abs;
    let allowance = opts
        .intercept_allowance
        .unwrap_or(opts.max_nonlinearity * slope.abs() * p_min);
    let intercept_ok = intercept.abs() <= allowance;
    let pass = responsive && nonlinearity_metric < opts.max_nonlinearity && intercept_ok;
    Ok(ProportionalityReport {
        slope,
        intercept,
        nonlinearity_metric,
        relative_curvature,
        curvature,
        intercept_ok,
        responsive,
        pass,
    })
}
