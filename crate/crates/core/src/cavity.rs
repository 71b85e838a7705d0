//! Escape efficiency of the squeezing resonator from a scanned reflection
//! trace and the simultaneously recorded transmission peaks.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{self, LmOptions, Problem, Termination};
use crate::phase::{PhasePoly, TimeScale};
use crate::trace::{percentile, Trace};
use crate::uncertain::UncertainValue;

/// Coupling-mirror reflectivity assumed when no initial guess is supplied.
pub const DESIGN_R_SQ: f64 = 0.83;

/// Minimum phase excursion of a reflection scan, in radians.
pub const MIN_SCAN_RANGE: f64 = FRAC_PI_2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    /// Power reflectivity of the coupling mirror.
    pub r_sq: f64,
    /// Fractional power loss per round trip.
    pub loss_rt: f64,
    /// Incident power, arbitrary linear units.
    pub i0: f64,
    pub phase: PhasePoly,
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_sq > 0.0 && self.r_sq < 1.0) {
            return Err(Error::domain(format!(
                "r_sq must lie in (0, 1), got {}",
                self.r_sq
            )));
        }
        if !(self.loss_rt >= 0.0 && self.loss_rt < 1.0) {
            return Err(Error::domain(format!(
                "loss_rt must lie in [0, 1), got {}",
                self.loss_rt
            )));
        }
        if !(self.i0 > 0.0 && self.i0.is_finite()) {
            return Err(Error::domain(format!(
                "i0 must be positive, got {}",
                self.i0
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionPeaks {
    pub main_peak: f64,
    #[serde(default)]
    pub side_peaks: Vec<f64>,
    /// One-sigma uncertainty carried by every peak height.
    #[serde(default)]
    pub noise_floor: f64,
}

/// `|N/D|` parts of the reflection coefficient; returns `(N, D)` with
/// `R(φ) = N / D`.
#[inline]
fn reflection_parts(cos2phi: f64, r_sq: f64, loss_rt: f64) -> (f64, f64, f64) {
    let p = (r_sq * (1.0 - loss_rt)).sqrt();
    let n = r_sq + 1.0 - loss_rt - 2.0 * p * cos2phi;
    let d = 1.0 + p * p - 2.0 * p * cos2phi;
    (n, d, p)
}

/// Power reflected by the resonator at one-way round-trip phase `phi`.
pub fn reflection_response(phi: f64, params: &CavityParams) -> f64 {
    let (n, d, _) = reflection_parts((2.0 * phi).cos(), params.r_sq, params.loss_rt);
    params.i0 * n / d
}

/// Escape efficiency `(1 − r²)/(1 − r² + ℓ²)` with independent inputs.
pub fn escape_efficiency(r_sq: UncertainValue, loss_rt: UncertainValue) -> Result<UncertainValue> {
    escape_efficiency_correlated(r_sq, loss_rt, 0.0)
}

/// As [`escape_efficiency`], with correlation coefficient `rho` between the
/// two inputs (as reported by a joint fit).
pub fn escape_efficiency_correlated(
    r_sq: UncertainValue,
    loss_rt: UncertainValue,
    rho: f64,
) -> Result<UncertainValue> {
    if !(r_sq.value > 0.0 && r_sq.value < 1.0) {
        return Err(Error::domain(format!(
            "r_sq must lie in (0, 1), got {}",
            r_sq.value
        )));
    }
    if !(loss_rt.value >= 0.0 && loss_rt.value < 1.0) {
        return Err(Error::domain(format!(
            "loss_rt must lie in [0, 1), got {}",
            loss_rt.value
        )));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    let t = 1.0 - r_sq.value;
    let denom = t + loss_rt.value;
    let value = t / denom;
    let d_r = -loss_rt.value / (denom * denom);
    let d_l = -t / (denom * denom);
    let a = d_r * r_sq.sigma;
    let b = d_l * loss_rt.sigma;
    let var = a * a + b * b + 2.0 * rho * a * b;
    UncertainValue::new(value, var.max(0.0).sqrt())
}

/// Fraction of transmitted power in the fundamental mode: main peak over the
/// sum of all peaks.
pub fn mode_matching_from_transmission(peaks: &TransmissionPeaks) -> Result<UncertainValue> {
    if !(peaks.main_peak > 0.0) {
        return Err(Error::domain(format!(
            "main peak must be positive, got {}",
            peaks.main_peak
        )));
    }
    if let Some(s) = peaks.side_peaks.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::domain(format!("side peaks must be >= 0, got {s}")));
    }
    if peaks.side_peaks.iter().any(|s| *s > peaks.main_peak) {
        return Err(Error::domain("a side peak exceeds the main peak"));
    }
    if !(peaks.noise_floor >= 0.0) {
        return Err(Error::domain("noise floor must be >= 0"));
    }
    let main = peaks.main_peak;
    let side: f64 = peaks.side_peaks.iter().sum();
    let total = main + side;
    let value = main / total;
    let k = peaks.side_peaks.len() as f64;
    // ∂/∂main = side/total², ∂/∂sideᵢ = −main/total²
    let sigma = peaks.noise_floor * (side * side + k * main * main).sqrt() / (total * total);
    UncertainValue::new(value, sigma)
}

/// Dip depth of the matched mode alone, given the depth observed with
/// imperfect mode matching.
pub fn upscale_dip(fitted_loss: f64, mode_matching: UncertainValue) -> Result<UncertainValue> {
    let mm = mode_matching.value;
    if !(mm > 0.0 && mm <= 1.0) {
        return Err(Error::domain(format!(
            "mode matching must lie in (0, 1], got {mm}"
        )));
    }
    let value = fitted_loss / mm;
    UncertainValue::new(value, (value * mode_matching.sigma / mm).abs())
}

/// Off-resonance level of a reflection scan (95th percentile of the samples).
pub fn dip_baseline(trace: &Trace) -> f64 {
    percentile(trace.v(), 0.95)
}

/// Applies [`upscale_dip`] sample-wise: every dip below `baseline` is deepened
/// by `1 / mode_matching`.
pub fn upscale_trace(trace: &Trace, mode_matching: f64, baseline: f64) -> Result<Trace> {
    if !(mode_matching > 0.0 && mode_matching <= 1.0) {
        return Err(Error::domain(format!(
            "mode matching must lie in (0, 1], got {mode_matching}"
        )));
    }
    let v = trace
        .v()
        .iter()
        .map(|v| baseline - (baseline - v) / mode_matching)
        .collect();
    trace.with_values(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityFitOptions {
    pub lm: LmOptions,
    /// Per-sample standard deviations; uniform weights when absent.
    pub sigma: Option<Vec<f64>>,
    /// Reflectivity used by auto-initialization.
    pub design_r_sq: f64,
}

impl Default for CavityFitOptions {
    fn default() -> Self {
        Self {
            lm: LmOptions::default(),
            sigma: None,
            design_r_sq: DESIGN_R_SQ,
        }
    }
}

/// Named parameter vector in fit order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavityParamSet {
    pub r_sq: f64,
    pub loss_rt: f64,
    pub i0: f64,
    pub phi0: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl CavityParamSet {
    pub const NAMES: [&'static str; 6] = ["r_sq", "loss_rt", "i0", "phi0", "phi1", "phi2"];

    fn from_slice(v: &[f64]) -> Self {
        Self {
            r_sq: v[0],
            loss_rt: v[1],
            i0: v[2],
            phi0: v[3],
            phi1: v[4],
            phi2: v[5],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CavityFit {
    pub params: CavityParamSet,
    pub sigma: CavityParamSet,
    /// Covariance in [`CavityParamSet::NAMES`] order.
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
}

impl CavityFit {
    pub fn cavity_params(&self) -> CavityParams {
        CavityParams {
            r_sq: self.params.r_sq,
            loss_rt: self.params.loss_rt,
            i0: self.params.i0,
            phase: PhasePoly::new(self.params.phi0, self.params.phi1, self.params.phi2),
        }
    }

    pub fn r_sq(&self) -> UncertainValue {
        UncertainValue {
            value: self.params.r_sq,
            sigma: self.sigma.r_sq,
        }
    }

    pub fn loss_rt(&self) -> UncertainValue {
        UncertainValue {
            value: self.params.loss_rt,
            sigma: self.sigma.loss_rt,
        }
    }

    /// Correlation between fitted `r_sq` and `loss_rt`.
    pub fn r_loss_correlation(&self) -> f64 {
        let s = self.sigma.r_sq * self.sigma.loss_rt;
        if s > 0.0 {
            (self.covariance[0][1] / s).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }

    /// Escape efficiency propagated with the fit's full `r_sq`/`loss_rt` covariance.
    pub fn escape_efficiency(&self) -> Result<UncertainValue> {
        escape_efficiency_correlated(self.r_sq(), self.loss_rt(), self.r_loss_correlation())
    }
}

struct ScanProblem<'a> {
    tau: Vec<f64>,
    v: &'a [f64],
    inv_sigma: Option<Vec<f64>>,
}

impl ScanProblem<'_> {
    #[inline]
    fn weight(&self, i: usize) -> f64 {
        self.inv_sigma.as_ref().map_or(1.0, |w| w[i])
    }
}

impl Problem for ScanProblem<'_> {
    fn n_params(&self) -> usize {
        6
    }

    fn n_residuals(&self) -> usize {
        self.v.len()
    }

    fn feasible(&self, p: &[f64]) -> bool {
        p.iter().all(|x| x.is_finite())
            && p[0] > 0.0
            && p[0] < 1.0
            && p[1] >= 0.0
            && p[1] < 1.0
            && p[2] > 0.0
    }

    fn residual(&self, i: usize, p: &[f64]) -> f64 {
        let tau = self.tau[i];
        let phi = p[3] + tau * (p[4] + tau * p[5]);
        let (n, d, _) = reflection_parts((2.0 * phi).cos(), p[0], p[1]);
        (p[2] * n / d - self.v[i]) * self.weight(i)
    }

    fn residual_grad(&self, i: usize, p: &[f64], g: &mut [f64]) -> f64 {
        let (r_sq, loss, i0) = (p[0], p[1], p[2]);
        let tau = self.tau[i];
        let phi = p[3] + tau * (p[4] + tau * p[5]);
        let (s2, c2) = (2.0 * phi).sin_cos();
        let (n, d, pr) = reflection_parts(c2, r_sq, loss);
        let d2 = d * d;
        let w = self.weight(i);

        let dp_dr = (1.0 - loss) / (2.0 * pr);
        let dp_dl = -r_sq / (2.0 * pr);
        let dn_dr = 1.0 - 2.0 * c2 * dp_dr;
        let dd_dr = (1.0 - loss) - 2.0 * c2 * dp_dr;
        let dn_dl = -1.0 - 2.0 * c2 * dp_dl;
        let dd_dl = -r_sq - 2.0 * c2 * dp_dl;
        let df_dc = 2.0 * pr * (n - d) / d2;
        let df_dphi = df_dc * (-2.0 * s2);

        g[0] = w * i0 * (dn_dr * d - n * dd_dr) / d2;
        g[1] = w * i0 * (dn_dl * d - n * dd_dl) / d2;
        g[2] = w * n / d;
        g[3] = w * i0 * df_dphi;
        g[4] = g[3] * tau;
        g[5] = g[4] * tau;
        (i0 * n / d - self.v[i]) * w
    }
}

/// Sliding-window minimum (window centered, shrinking at the edges).
fn moving_min(v: &[f64], window: usize) -> Vec<f64> {
    let n = v.len();
    let half = window / 2;
    let mut out = Vec::with_capacity(n);
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let hi = (i + half).min(n - 1);
        while next <= hi {
            while dq.back().is_some_and(|&j| v[j] >= v[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(half);
        while dq.front().is_some_and(|&j| j < lo) {
            dq.pop_front();
        }
        out.push(v[*dq.front().expect("window is never empty")]);
    }
    out
}

/// Robust point-to-point noise estimate.
pub(crate) fn sample_noise(v: &[f64]) -> f64 {
    let diffs: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    1.4826 * percentile(&diffs, 0.5) / std::f64::consts::SQRT_2
}

/// Least-squares polynomial of degree ≤ 2 through `(t, phase)` points.
pub(crate) fn fit_phase_poly(t: &[f64], phase: &[f64]) -> PhasePoly {
    let deg = (t.len() - 1).min(2);
    let ts = TimeScale::spanning(t);
    let k = deg + 1;
    let mut ata = DMatrix::<f64>::zeros(k, k);
    let mut atb = DMatrix::<f64>::zeros(k, 1);
    for (&ti, &yi) in t.iter().zip(phase) {
        let tau = ts.tau(ti);
        let row: Vec<f64> = (0..k).map(|j| tau.powi(j as i32)).collect();
        for a in 0..k {
            atb[(a, 0)] += row[a] * yi;
            for b in 0..k {
                ata[(a, b)] += row[a] * row[b];
            }
        }
    }
    let sol = ata.lu().solve(&atb).unwrap_or_else(|| DMatrix::zeros(k, 1));
    let mut a = [0.0; 3];
    for j in 0..k {
        a[j] = sol[(j, 0)];
    }
    ts.to_absolute(a)
}

/// Heuristic starting point for [`fit_reflection_scan`].
///
/// Dips are located with a moving-minimum detector (window 1 % of the trace),
/// the phase is anchored so every dip sits at a multiple of π, `i0` starts at
/// the 95th percentile and `loss_rt` is solved from the deepest dip given
/// `design_r_sq` on the over-coupled branch.
pub fn initial_guess(trace: &Trace, design_r_sq: f64) -> Result<CavityParams> {
    let (t, v) = (trace.t(), trace.v());
    let n = v.len();
    let baseline = percentile(v, 0.95);
    let noise = sample_noise(v);
    let (i_min, &v_min) = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("trace is nonempty");
    let depth = baseline - v_min;
    if !(baseline > 0.0) || depth <= (10.0 * noise).max(1e-9 * baseline.abs()) {
        return Err(Error::RankDeficient(
            "no resonance dip found; cavity parameters are unidentifiable".into(),
        ));
    }

    let window = (n / 100).max(1);
    let mins = moving_min(v, window);
    let threshold = baseline - 0.5 * depth;
    let mut dips: Vec<usize> = Vec::new();
    for i in 0..n {
        if v[i] == mins[i] && v[i] < threshold {
            match dips.last_mut() {
                Some(last) if i - *last <= window => {
                    if v[i] < v[*last] {
                        *last = i;
                    }
                }
                _ => dips.push(i),
            }
        }
    }
    if dips.is_empty() {
        dips.push(i_min);
    }

    let r = design_r_sq.sqrt();
    let floor = (v_min / baseline).clamp(0.0, 1.0);
    let s = floor.sqrt();
    let a = ((s + r) / (1.0 + s * r)).min(1.0 - 1e-9);
    let loss_rt = (1.0 - a * a).max(1e-9);

    let phase = if dips.len() >= 2 {
        let td: Vec<f64> = dips.iter().map(|&i| t[i]).collect();
        let ph: Vec<f64> = (0..dips.len()).map(|k| k as f64 * PI).collect();
        fit_phase_poly(&td, &ph)
    } else {
        // One dip: scan speed from its half-depth width.
        let half_level = baseline - 0.5 * (baseline - v[dips[0]]);
        let c = dips[0];
        let left = (0..c).rev().find(|&i| v[i] > half_level).unwrap_or(0);
        let right = (c..n).find(|&i| v[i] > half_level).unwrap_or(n - 1);
        let dt_half = 0.5 * (t[right] - t[left]);
        let ra = r * a;
        let phi_half = ((1.0 - ra) / (2.0 * ra.sqrt())).min(1.0).asin();
        let phi1 = if dt_half > 0.0 {
            phi_half / dt_half
        } else {
            0.0
        };
        PhasePoly::new(-phi1 * t[c], phi1, 0.0)
    };
    Ok(CavityParams {
        r_sq: design_r_sq,
        loss_rt,
        i0: baseline,
        phase,
    })
}

/// Fits the reflection model to a scan. `init = None` runs [`initial_guess`].
pub fn fit_reflection_scan(
    trace: &Trace,
    init: Option<&CavityParams>,
    opts: &CavityFitOptions,
) -> Result<CavityFit> {
    let init = match init {
        Some(p) => *p,
        None => initial_guess(trace, opts.design_r_sq)?,
    };
    init.validate()?;
    let (t0, t1) = (trace.t()[0], trace.t()[trace.len() - 1]);
    let span = init.phase.span(t0, t1);
    if !(span >= MIN_SCAN_RANGE) {
        return Err(Error::InsufficientPhaseRange {
            span,
            required: MIN_SCAN_RANGE,
        });
    }
    let inv_sigma = match &opts.sigma {
        None => None,
        Some(s) if s.len() != trace.len() => {
            return Err(Error::domain(format!(
                "sigma column has {} entries for {} samples",
                s.len(),
                trace.len()
            )))
        }
        Some(s) => {
            if s.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::domain("per-sample sigma must be positive"));
            }
            Some(s.iter().map(|x| 1.0 / x).collect())
        }
    };

    let ts = TimeScale::spanning(trace.t());
    let problem = ScanProblem {
        tau: trace.t().iter().map(|&t| ts.tau(t)).collect(),
        v: trace.v(),
        inv_sigma,
    };
    let a = ts.to_scaled(&init.phase);
    let start = [init.r_sq, init.loss_rt, init.i0, a[0], a[1], a[2]];
    let out = lsq::minimize(&problem, &start, &opts.lm)?;

    // Map the phase block back to absolute time.
    let mut jac = DMatrix::<f64>::identity(6, 6);
    let m: Matrix3<f64> = ts.to_absolute_matrix();
    for r in 0..3 {
        for c in 0..3 {
            jac[(3 + r, 3 + c)] = m[(r, c)];
        }
    }
    let cov = &jac * &out.covariance * jac.transpose();
    let phase = ts.to_absolute([out.params[3], out.params[4], out.params[5]]);
    let abs = [
        out.params[0],
        out.params[1],
        out.params[2],
        phase.phi0,
        phase.phi1,
        phase.phi2,
    ];
    let sig: Vec<f64> = (0..6).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();

    Ok(CavityFit {
        params: CavityParamSet::from_slice(&abs),
        sigma: CavityParamSet::from_slice(&sig),
        covariance: (0..6)
            .map(|r| (0..6).map(|c| cov[(r, c)]).collect())
            .collect(),
        residual_norm: out.residual_norm(),
        converged: true,
        iterations: out.iterations,
        termination: out.termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: reflection amplitude with explicit complex arithmetic.
    fn oracle(phi: f64, r_sq: f64, loss: f64, i0: f64) -> f64 {
        let r = r_sq.sqrt();
        let a = (1.0 - loss).sqrt();
        // e^{-2iφ}
        let (zr, zi) = ((2.0 * phi).cos(), -(2.0 * phi).sin());
        let (nr, ni) = (r - a * zr, -a * zi);
        let (dr, di) = (1.0 - r * a * zr, -r * a * zi);
        i0 * (nr * nr + ni * ni) / (dr * dr + di * di)
    }

    fn params(r_sq: f64, loss_rt: f64) -> CavityParams {
        CavityParams {
            r_sq,
            loss_rt,
            i0: 1.0,
            phase: PhasePoly::default(),
        }
    }

    #[test]
    fn lossless_cavity_reflects_everything_on_resonance() {
        for r in [0.1, 0.5, 0.83, 0.99] {
            assert!((reflection_response(0.0, &params(r, 0.0)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_against_oracle() {
        // Frozen from the oracle above: 0.9998833264044689 and 0.9489305147906666.
        let p = params(0.8279, 0.00247);
        let off = reflection_response(FRAC_PI_2, &p);
        let on = reflection_response(0.0, &p);
        assert!((off - 0.999_883_326_404_468_9).abs() < 1e-12, "{off}");
        assert!((on - 0.948_930_514_790_666_6).abs() < 1e-12, "{on}");
        for k in 0..50 {
            let phi = -3.0 + 0.13 * k as f64;
            let o = oracle(phi, 0.8279, 0.00247, 2.5);
            let m = reflection_response(phi, &CavityParams { i0: 2.5, ..p });
            assert!((o - m).abs() < 1e-12 * o);
        }
    }

    #[test]
    fn periodic_bounded_and_minimal_on_resonance() {
        let p = params(0.8279, 0.00247);
        let on = reflection_response(0.0, &p);
        for k in 0..200 {
            let phi = -5.0 + 0.05 * k as f64;
            let r = reflection_response(phi, &p);
            assert!((r - reflection_response(phi + PI, &p)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r));
            assert!(r >= on - 1e-15);
        }
    }

    #[test]
    fn dip_floor_minimal_at_critical_coupling() {
        let loss = 0.00247;
        let floors: Vec<f64> = (0..=400)
            .map(|k| 0.99 + 0.0099 * k as f64 / 400.0)
            .map(|r_sq| reflection_response(0.0, &params(r_sq, loss)))
            .collect();
        let (imin, _) = floors
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!(imin > 0 && imin < floors.len() - 1);
        assert!(floors[..imin].windows(2).all(|w| w[1] <= w[0]));
        assert!(floors[imin..].windows(2).all(|w| w[1] >= w[0]));
        // Critical coupling is r = √(1 − ℓ²).
        let r_sq_at_min = 0.99 + 0.0099 * imin as f64 / 400.0;
        assert!((r_sq_at_min - (1.0 - loss)).abs() < 5e-5);
    }

    #[test]
    fn escape_efficiency_from_measured_mirror() {
        let e = escape_efficiency(
            UncertainValue::new(0.8279, 0.0035).unwrap(),
            UncertainValue::new(0.00247, 0.00007).unwrap(),
        )
        .unwrap();
        assert!((e.value - 0.98583).abs() < 3e-5, "{e}");
        // Independent first-order propagation (finite-difference oracle).
        let f = |r: f64, l: f64| (1.0 - r) / (1.0 - r + l);
        let h = 1e-7;
        let dr = (f(0.8279 + h, 0.00247) - f(0.8279 - h, 0.00247)) / (2.0 * h);
        let dl = (f(0.8279, 0.00247 + h) - f(0.8279, 0.00247 - h)) / (2.0 * h);
        let sigma = ((dr * 0.0035).powi(2) + (dl * 0.00007).powi(2)).sqrt();
        assert!((e.sigma - sigma).abs() < 1e-9);
    }

    #[test]
    fn escape_efficiency_limits() {
        let x = |v| UncertainValue::exact(v);
        assert_eq!(escape_efficiency(x(0.9), x(0.0)).unwrap().value, 1.0);
        assert_eq!(escape_efficiency(x(0.5), x(0.5)).unwrap().value, 0.5);
        assert!(escape_efficiency(x(1.0), x(0.1)).is_err());
        assert!(escape_efficiency(x(0.5), x(-0.1)).is_err());
        // Monotonicity.
        let e = |r, l| escape_efficiency(x(r), x(l)).unwrap().value;
        assert!(e(0.8, 0.01) > e(0.8, 0.02));
        assert!(e(0.7, 0.01) > e(0.8, 0.01));
    }

    #[test]
    fn transmission_mode_matching() {
        let mm = mode_matching_from_transmission(&TransmissionPeaks {
            main_peak: 98.58,
            side_peaks: vec![1.0, 0.42],
            noise_floor: 0.1,
        })
        .unwrap();
        assert!((mm.value - 0.9858).abs() < 1e-12);
        assert!(mm.sigma > 0.0);
        let solo = TransmissionPeaks {
            main_peak: 3.0,
            side_peaks: vec![],
            noise_floor: 0.0,
        };
        assert_eq!(mode_matching_from_transmission(&solo).unwrap().value, 1.0);
        let even = TransmissionPeaks {
            main_peak: 1.0,
            side_peaks: vec![1.0],
            noise_floor: 0.0,
        };
        assert_eq!(mode_matching_from_transmission(&even).unwrap().value, 0.5);
        let bad = TransmissionPeaks {
            main_peak: 0.0,
            side_peaks: vec![],
            noise_floor: 0.0,
        };
        assert!(mode_matching_from_transmission(&bad).is_err());
    }

    #[test]
    fn dip_upscaling() {
        assert_eq!(
            upscale_dip(0.03, UncertainValue::exact(1.0)).unwrap().value,
            0.03
        );
        let u = upscale_dip(0.0243, UncertainValue::new(0.9858, 0.0023).unwrap()).unwrap();
        assert!((u.value - 0.02465).abs() < 1e-5);
        assert!(upscale_dip(0.03, UncertainValue::exact(0.0)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let tau: Vec<f64> = (0..7).map(|i| -1.0 + i as f64 / 3.0).collect();
        let v = vec![0.5; 7];
        let prob = ScanProblem {
            tau,
            v: &v,
            inv_sigma: None,
        };
        let p = [0.8279, 0.00247, 1.1, 0.2, 1.7, -0.3];
        let mut g = [0.0; 6];
        for i in 0..7 {
            prob.residual_grad(i, &p, &mut g);
            for k in 0..6 {
                let h = 1e-7 * p[k].abs().max(1e-3);
                let mut hi = p;
                let mut lo = p;
                hi[k] += h;
                lo[k] -= h;
                let fd = (prob.residual(i, &hi) - prob.residual(i, &lo)) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-5 * (1.0 + g[k].abs()),
                    "param {k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn moving_min_window() {
        assert_eq!(
            moving_min(&[3.0, 1.0, 4.0, 1.5, 5.0, 9.0], 3),
            vec![1.0, 1.0, 1.0, 1.5, 1.5, 5.0]
        );
    }
}
