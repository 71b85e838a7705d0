//! Combination of component efficiencies into detection and quantum
//! efficiency, with first-order and Monte Carlo uncertainty propagation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution, CHUNK_LEN};
use crate::uncertain::UncertainValue;

/// Generator used for Monte Carlo propagation; one stream per trial.
pub const MC_GENERATOR: &str = "chacha8/stream-per-trial";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyBudget {
    /// Total efficiency inferred from squeezing.
    pub eta_total: UncertainValue,
    pub eta_esc: UncertainValue,
    pub eta_prop: UncertainValue,
    pub eta_mm: UncertainValue,
}

impl EfficiencyBudget {
    fn terms(&self) -> [(&'static str, UncertainValue); 4] {
        [
            ("eta_total", self.eta_total),
            ("eta_esc", self.eta_esc),
            ("eta_prop", self.eta_prop),
            ("eta_mm", self.eta_mm),
        ]
    }

    /// Exponents of `η_DE = η·η_esc⁻¹·η_prop⁻¹·η_mm⁻¹`.
    pub const EXPONENTS: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

    pub fn product_terms(&self) -> Vec<(UncertainValue, f64)> {
        self.terms()
            .iter()
            .zip(Self::EXPONENTS)
            .map(|((_, u), e)| (*u, e))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, u) in self.terms() {
            u.validate()?;
            if !(u.value > 0.0 && u.value <= 1.0) {
                return Err(Error::domain(format!(
                    "{name} must lie in (0, 1], got {}",
                    u.value
                )));
            }
        }
        Ok(())
    }
}

/// Detection efficiency `η / (η_esc·η_prop·η_mm)` with independent inputs.
pub fn detection_efficiency(budget: &EfficiencyBudget) -> Result<UncertainValue> {
    budget.validate()?;
    let de = propagate_first_order(&budget.product_terms())?;
    if de.value > 1.0 + 3.0 * de.sigma {
        return Err(Error::Unphysical {
            value: de.value,
            sigma: de.sigma,
        });
    }
    Ok(de)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotoVoltages {
    pub u_tot: f64,
    pub u_dark: f64,
    /// Output a perfect photodiode would give for the same light.
    pub u_perf: f64,
}

impl PhotoVoltages {
    pub fn new(u_tot: f64, u_dark: f64, u_perf: f64) -> Result<Self> {
        let v = Self {
            u_tot,
            u_dark,
            u_perf,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_dark >= 0.0 && self.u_tot >= self.u_dark && self.u_tot.is_finite()) {
            return Err(Error::domain(format!(
                "need u_tot >= u_dark >= 0, got u_tot {} u_dark {}",
                self.u_tot, self.u_dark
            )));
        }
        if !(self.u_perf > 0.0 && self.u_perf.is_finite()) {
            return Err(Error::domain(format!(
                "u_perf must be positive, got {}",
                self.u_perf
            )));
        }
        Ok(())
    }
}

/// `(η_DE, η_QE)` from photodiode voltages.
pub fn quantum_efficiency_from_voltages(v: &PhotoVoltages) -> Result<(f64, f64)> {
    v.validate()?;
    let signal = v.u_tot - v.u_dark;
    Ok((signal / v.u_perf, signal / (v.u_perf + v.u_dark)))
}

/// `η_QE = η_DE / (1 + U_dark/U_perf)`.
pub fn quantum_efficiency_from_de(
    eta_de: UncertainValue,
    dark_ratio: UncertainValue,
) -> Result<UncertainValue> {
    eta_de.validate()?;
    dark_ratio.validate()?;
    if dark_ratio.value < 0.0 {
        return Err(Error::domain(format!(
            "dark_ratio must be >= 0, got {}",
            dark_ratio.value
        )));
    }
    let k = 1.0 + dark_ratio.value;
    let value = eta_de.value / k;
    let sigma = ((eta_de.sigma / k).powi(2) + (value * dark_ratio.sigma / k).powi(2)).sqrt();
    UncertainValue::new(value, sigma)
}

/// Efficiency if the reflected fraction `refl` were recovered: `η/(1 − refl)`.
pub fn retro_reflection_adjustment(
    eta: UncertainValue,
    refl: UncertainValue,
) -> Result<UncertainValue> {
    eta.validate()?;
    refl.validate()?;
    if !(0.0..1.0).contains(&refl.value) {
        return Err(Error::domain(format!(
            "reflectance must lie in [0, 1), got {}",
            refl.value
        )));
    }
    let k = 1.0 - refl.value;
    let value = eta.value / k;
    let sigma = ((eta.sigma / k).powi(2) + (value * refl.sigma / k).powi(2)).sqrt();
    UncertainValue::new(value, sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation, `n − 1` normalization.
    pub std_dev: f64,
    pub std_error: f64,
}

pub fn aggregate_repeats(values: &[f64]) -> Result<RepeatStats> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} values, need >= 2")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite value in repeats"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let std_dev = (ss / (n - 1) as f64).sqrt();
    Ok(RepeatStats {
        n,
        mean,
        std_dev,
        std_error: std_dev / (n as f64).sqrt(),
    })
}

fn product(terms: &[(UncertainValue, f64)], values: impl Iterator<Item = f64>) -> f64 {
    values.zip(terms).map(|(v, (_, e))| v.powf(*e)).product()
}

/// `f = Π vᵢ^eᵢ` with first-order independent propagation.
pub fn propagate_first_order(terms: &[(UncertainValue, f64)]) -> Result<UncertainValue> {
    if terms.is_empty() {
        return Err(Error::InsufficientData("no terms to propagate".into()));
    }
    for (u, e) in terms {
        u.validate()?;
        if *e < 0.0 && u.value == 0.0 {
            return Err(Error::domain("zero value raised to a negative power"));
        }
    }
    let value = product(terms, terms.iter().map(|(u, _)| u.value));
    let mut var = 0.0;
    for (i, (u, e)) in terms.iter().enumerate() {
        let others: f64 = terms
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (w, f))| w.value.powf(*f))
            .product();
        let partial = e * u.value.powf(e - 1.0) * others;
        var += (partial * u.sigma).powi(2);
    }
    if !value.is_finite() || !var.is_finite() {
        return Err(Error::domain("product is not finite for these inputs"));
    }
    UncertainValue::new(value, var.sqrt())
}

/// Relative variance each term contributes to a product, `(eᵢσᵢ/vᵢ)²`.
pub fn variance_budget(terms: &[(UncertainValue, f64)]) -> Vec<f64> {
    terms
        .iter()
        .map(|(u, e)| (e * u.sigma / u.value).powi(2))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub draws: usize,
    pub seed: u64,
    pub mean: f64,
    pub std_dev: f64,
}

#[derive(Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Self = Self {
        n: 0.0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Self) -> Self {
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Self {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

/// Gaussian Monte Carlo propagation of `Π vᵢ^eᵢ`. Trial `k` draws from its
/// own ChaCha8 stream (`seed`, stream `k`), so the result does not depend on
/// scheduling.
pub fn propagate_monte_carlo(
    terms: &[(UncertainValue, f64)],
    draws: usize,
    seed: u64,
    execution: Execution,
) -> Result<MonteCarloSummary> {
    if draws < 2 {
        return Err(Error::InsufficientData(format!("{draws} draws, need >= 2")));
    }
    for (u, _) in terms {
        u.validate()?;
    }
    let parts = exec::map_chunks(execution, draws, CHUNK_LEN, |range| {
        let mut m = Moments::EMPTY;
        for k in range {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let f = product(
                terms,
                terms.iter().map(|(u, _)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    u.value + u.sigma * z
                }),
            );
            m.push(f);
        }
        m
    });
    let m = parts.into_iter().fold(Moments::EMPTY, Moments::merge);
    if !m.mean.is_finite() || !m.m2.is_finite() {
        return Err(Error::domain(
            "Monte Carlo draws produced non-finite products",
        ));
    }
    Ok(MonteCarloSummary {
        draws,
        seed,
        mean: m.mean,
        std_dev: (m.m2 / (m.n - 1.0)).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloOptions {
    pub draws: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationInputs {
    pub budget: EfficiencyBudget,
    /// `U_dark/U_perf` at the calibration LO power.
    #[serde(default)]
    pub dark_ratio: Option<UncertainValue>,
    /// Fraction of light reflected by the photodiodes.
    #[serde(default)]
    pub reflectance: Option<UncertainValue>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloOptions>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetLine {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
    pub exponent: f64,
    /// Share of the relative variance of η_DE.
    pub variance_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub eta_total: UncertainValue,
    pub eta_esc: UncertainValue,
    pub eta_prop: UncertainValue,
    pub eta_mm: UncertainValue,
    /// Stored unclamped.
    pub eta_de: UncertainValue,
    /// `min(η_DE, 1)` for display.
    pub eta_de_display: f64,
    pub eta_qe: Option<UncertainValue>,
    pub eta_de_retro: Option<UncertainValue>,
    pub eta_qe_retro: Option<UncertainValue>,
    pub monte_carlo: Option<MonteCarloSummary>,
    pub propagation_audit: Vec<BudgetLine>,
    pub method_notes: Vec<String>,
}

pub fn method_notes() -> Vec<String> {
    [
        "eta_de = eta_total / (eta_esc * eta_prop * eta_mm)",
        "first-order propagation, independent inputs: (s_de/eta_de)^2 = sum_i (s_i/eta_i)^2",
        "eta_qe = eta_de / (1 + U_dark/U_perf)",
        "retro-reflection model (modeling choice): eta' = eta / (1 - reflectance)",
        "results above 1 by more than 3 sigma are rejected; within 3 sigma they are clamped for display only",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

/// Runs the full calibration chain on a set of inputs.
pub fn calibrate(inputs: &CalibrationInputs, execution: Execution) -> Result<CalibrationResult> {
    let b = &inputs.budget;
    let eta_de = detection_efficiency(b)?;
    let eta_qe = inputs
        .dark_ratio
        .map(|d| quantum_efficiency_from_de(eta_de, d))
        .transpose()?;
    let eta_de_retro = inputs
        .reflectance
        .map(|r| retro_reflection_adjustment(eta_de, r))
        .transpose()?;
    let eta_qe_retro = match (eta_qe, inputs.reflectance) {
        (Some(q), Some(r)) => Some(retro_reflection_adjustment(q, r)?),
        _ => None,
    };
    let terms = b.product_terms();
    let monte_carlo = inputs
        .monte_carlo
        .map(|mc| propagate_monte_carlo(&terms, mc.draws, mc.seed, execution))
        .transpose()?;
    let rel = variance_budget(&terms);
    let total: f64 = rel.iter().sum();
    let propagation_audit = b
        .terms()
        .iter()
        .zip(EfficiencyBudget::EXPONENTS)
        .zip(&rel)
        .map(|(((name, u), e), r)| BudgetLine {
            name: name.to_string(),
            value: u.value,
            sigma: u.sigma,
            exponent: e,
            variance_share: if total > 0.0 { r / total } else { 0.0 },
        })
        .collect();
    Ok(CalibrationResult {
        eta_total: b.eta_total,
        eta_esc: b.eta_esc,
        eta_prop: b.eta_prop,
        eta_mm: b.eta_mm,
        eta_de,
        eta_de_display: eta_de.value.min(1.0),
        eta_qe,
        eta_de_retro,
        eta_qe_retro,
        monte_carlo,
        propagation_audit,
        method_notes: method_notes(),
    })
}

/// Published component values of the reference calibration at 5 MHz and
/// 10 mW LO power.
pub mod reference {
    use super::*;

    const fn u(value: f64, sigma: f64) -> UncertainValue {
        UncertainValue { value, sigma }
    }

    pub const ETA_TOTAL: UncertainValue = u(0.9448, 0.0022);
    pub const ETA_ESC: UncertainValue = u(0.98583, 0.00015);
    pub const ETA_PROP: UncertainValue = u(0.9949, 0.0025);
    pub const ETA_MM: UncertainValue = u(0.9911, 0.0017);
    pub const VISIBILITY: f64 = 0.99554;
    pub const R_SQ: UncertainValue = u(0.8279, 0.0035);
    pub const LOSS_RT: UncertainValue = u(0.00247, 0.00007);
    pub const REFLECTANCE: UncertainValue = u(0.0046, 0.0006);
    pub const SQUEEZING_DB: f64 = 13.2;
    /// Measured variances read off the swept trace.
    pub const X_SQZ: f64 = 0.10;
    pub const X_ASQZ: f64 = 19.7;

    pub const ETA_DE: UncertainValue = u(0.9720, 0.0037);
    pub const ETA_QE: UncertainValue = u(0.969, 0.004);
    pub const RETRO_GAIN_PERCENT: f64 = 0.46;
    pub const PHOTON_NUMBER: f64 = 4.7;

    /// Not a measured value: chosen so `ETA_DE / (1 + ratio) = ETA_QE`.
    pub fn back_solved_dark_ratio() -> UncertainValue {
        u(ETA_DE.value / ETA_QE.value - 1.0, 0.0)
    }

    pub fn budget() -> EfficiencyBudget {
        EfficiencyBudget {
            eta_total: ETA_TOTAL,
            eta_esc: ETA_ESC,
            eta_prop: ETA_PROP,
            eta_mm: ETA_MM,
        }
    }

    pub fn inputs(mc: Option<MonteCarloOptions>) -> CalibrationInputs {
        CalibrationInputs {
            budget: budget(),
            dark_ratio: Some(back_solved_dark_ratio()),
            reflectance: Some(REFLECTANCE),
            monte_carlo: mc,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uv(v: f64, s: f64) -> UncertainValue {
        UncertainValue::new(v, s).unwrap()
    }

    #[test]
    fn published_budget() {
        let de = detection_efficiency(&reference::budget()).unwrap();
        assert!((de.value - 0.9720).abs() < 5e-4, "{de}");
        assert!((de.sigma - 0.0037).abs() < 2e-4, "{de}");
        // Independent oracle: direct relative-variance sum.
        let rel = [
            (0.0022, 0.9448),
            (0.00015, 0.98583),
            (0.0025, 0.9949),
            (0.0017, 0.9911),
        ]
        .iter()
        .map(|(s, v): &(f64, f64)| (s / v).powi(2))
        .sum::<f64>()
        .sqrt();
        assert!((de.sigma / de.value - rel).abs() < 1e-15);
    }

    #[test]
    fn unit_components_pass_through() {
        let one = UncertainValue::exact(1.0);
        let b = EfficiencyBudget {
            eta_total: uv(0.93, 0.01),
            eta_esc: one,
            eta_prop: one,
            eta_mm: one,
        };
        let de = detection_efficiency(&b).unwrap();
        assert_eq!(de.value, 0.93);
        assert!((de.sigma - 0.01).abs() < 1e-15);
    }

    #[test]
    fn unphysical_budget_rejected() {
        let b = EfficiencyBudget {
            eta_total: uv(0.99, 0.001),
            eta_esc: uv(0.9, 0.001),
            eta_prop: uv(0.99, 0.001),
            eta_mm: uv(0.99, 0.001),
        };
        assert!(matches!(
            detection_efficiency(&b),
            Err(Error::Unphysical { .. })
        ));
        let mut bad = reference::budget();
        bad.eta_mm = uv(1.2, 0.0);
        assert!(detection_efficiency(&bad).is_err());
    }

    #[test]
    fn voltages() {
        let (de, qe) =
            quantum_efficiency_from_voltages(&PhotoVoltages::new(98.0, 1.0, 100.0).unwrap())
                .unwrap();
        assert!((de - 0.97).abs() < 1e-15);
        assert!((qe - 97.0 / 101.0).abs() < 1e-15);
        let (de, qe) =
            quantum_efficiency_from_voltages(&PhotoVoltages::new(5.0, 0.0, 6.0).unwrap()).unwrap();
        assert_eq!(de, qe);
        let (de, qe) =
            quantum_efficiency_from_voltages(&PhotoVoltages::new(2.0, 2.0, 6.0).unwrap()).unwrap();
        assert_eq!((de, qe), (0.0, 0.0));
        assert!(PhotoVoltages::new(1.0, 2.0, 6.0).is_err());
        assert!(PhotoVoltages::new(3.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn quantum_from_detection() {
        let de = uv(0.9720, 0.0037);
        assert_eq!(
            quantum_efficiency_from_de(de, UncertainValue::exact(0.0)).unwrap(),
            de
        );
        let qe = quantum_efficiency_from_de(de, reference::back_solved_dark_ratio()).unwrap();
        assert!((qe.value - 0.969).abs() < 1e-12);
        assert!((qe.sigma - 0.004).abs() < 5e-4);
        let edge =
            quantum_efficiency_from_de(UncertainValue::exact(0.5), UncertainValue::exact(1.0))
                .unwrap();
        assert_eq!(edge.value, 0.25);
        assert!(quantum_efficiency_from_de(de, UncertainValue::exact(-0.1)).is_err());
    }

    #[test]
    fn retro_reflection() {
        let eta = uv(0.9720, 0.0037);
        assert_eq!(
            retro_reflection_adjustment(eta, UncertainValue::exact(0.0)).unwrap(),
            eta
        );
        let adj = retro_reflection_adjustment(eta, uv(0.0046, 0.0006)).unwrap();
        let gain = 100.0 * (adj.value - eta.value);
        assert!((0.44..=0.48).contains(&gain), "{gain}");
        let half =
            retro_reflection_adjustment(UncertainValue::exact(0.5), UncertainValue::exact(0.5))
                .unwrap();
        assert_eq!(half.value, 1.0);
        assert!(retro_reflection_adjustment(eta, UncertainValue::exact(1.0)).is_err());
    }

    #[test]
    fn repeats() {
        let s = aggregate_repeats(&[0.5, 0.5]).unwrap();
        assert_eq!((s.mean, s.std_dev), (0.5, 0.0));
        let s = aggregate_repeats(&[0.94, 0.95]).unwrap();
        assert!((s.mean - 0.945).abs() < 1e-15);
        assert!((s.std_dev - 0.01 / 2f64.sqrt()).abs() < 1e-15);
        assert!(aggregate_repeats(&[0.9]).is_err());

        use rand_distr::Normal;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = Normal::new(0.9448, 0.022).unwrap();
        let xs: Vec<f64> = (0..100).map(|_| d.sample(&mut rng)).collect();
        let s = aggregate_repeats(&xs).unwrap();
        assert!((s.mean - 0.9448).abs() < 0.007);
        assert!((s.std_error - 0.0022).abs() < 0.0005, "{s:?}");
    }

    #[test]
    fn first_order_cases() {
        let a = uv(3.0, 0.2);
        assert_eq!(propagate_first_order(&[(a, 1.0)]).unwrap(), a);
        assert!(propagate_first_order(&[(a, 1.0), (UncertainValue::exact(0.0), -1.0)]).is_err());
        // Zero numerator: derivative form still gives the right σ.
        let z = propagate_first_order(&[(uv(0.0, 0.1), 1.0), (uv(2.0, 0.0), 1.0)]).unwrap();
        assert_eq!(z.value, 0.0);
        assert!((z.sigma - 0.2).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_matches_first_order() {
        let terms = reference::budget().product_terms();
        let fo = propagate_first_order(&terms).unwrap();
        let mc = propagate_monte_carlo(&terms, 200_000, 11, Execution::Parallel).unwrap();
        assert!((mc.std_dev / fo.sigma - 1.0).abs() < 0.05, "{mc:?} vs {fo}");
        assert!((mc.mean - fo.value).abs() < 1e-4);
    }

    #[test]
    fn monte_carlo_is_schedule_independent() {
        let terms = reference::budget().product_terms();
        let a = propagate_monte_carlo(&terms, 10_000, 5, Execution::Parallel).unwrap();
        let b = propagate_monte_carlo(&terms, 10_000, 5, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let c = propagate_monte_carlo(&terms, 10_000, 6, Execution::Sequential).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn full_chain_on_reference_inputs() {
        let r = calibrate(&reference::inputs(None), Execution::Sequential).unwrap();
        assert!((r.eta_qe.unwrap().value - 0.969).abs() < 5e-4);
        let shares: f64 = r.propagation_audit.iter().map(|l| l.variance_share).sum();
        assert!((shares - 1.0).abs() < 1e-12);
        assert!(r.eta_de_retro.unwrap().value > r.eta_de.value);
    }

    proptest! {
        #[test]
        fn qe_never_exceeds_de(tot in 0.0..10.0f64, dark_frac in 0.0..1.0f64, perf in 0.1..20.0f64) {
            let dark = dark_frac * tot;
            let (de, qe) = quantum_efficiency_from_voltages(&PhotoVoltages::new(tot, dark, perf).unwrap()).unwrap();
            prop_assert!(qe <= de);
        }

        #[test]
        fn common_factor_cancels(k in 0.5..1.0f64) {
            let b = reference::budget();
            let mut scaled = b;
            scaled.eta_total.value *= k;
            scaled.eta_esc.value *= k;
            let a = detection_efficiency(&b).unwrap().value;
            let c = detection_efficiency(&scaled).unwrap().value;
            prop_assert!((a - c).abs() < 1e-14);
        }

        #[test]
        fn retro_is_increasing(r1 in 0.0..0.9f64, dr in 1e-6..0.09f64) {
            let eta = UncertainValue::exact(0.9);
            let a = retro_reflection_adjustment(eta, UncertainValue::exact(r1)).unwrap().value;
            let b = retro_reflection_adjustment(eta, UncertainValue::exact(r1 + dr)).unwrap().value;
            prop_assert!(b > a);
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn first_order_agrees_with_monte_carlo(
            v in proptest::collection::vec((0.5..1.0f64, 0.0..0.05f64), 4),
            seed in 0u64..1000,
        ) {
            let terms: Vec<(UncertainValue, f64)> = v.iter().zip(EfficiencyBudget::EXPONENTS)
                .map(|((val, rel), e)| (UncertainValue::exact(*val).with_rel(*rel), e)).collect();
            let fo = propagate_first_order(&terms).unwrap();
            prop_assume!(fo.sigma > 0.0);
            let mc = propagate_monte_carlo(&terms, 100_000, seed, Execution::Parallel).unwrap();
            prop_assert!((mc.std_dev / fo.sigma - 1.0).abs() < 0.05, "{:?} vs {}", mc, fo);
        }
    }

    trait WithRel {
        fn with_rel(self, rel: f64) -> UncertainValue;
    }

    impl WithRel for UncertainValue {
        fn with_rel(self, rel: f64) -> UncertainValue {
            UncertainValue {
                value: self.value,
                sigma: rel * self.value,
            }
        }
    }
}
