//! Configuration schemas. Every physical quantity carries its unit in the
//! key name; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use qrc_core::calibration::{
    aggregate_repeats, CalibrationInputs, EfficiencyBudget, MonteCarloOptions,
};
use qrc_core::cavity::escape_efficiency;
use qrc_core::homodyne::{mode_matching, propagation_efficiency};
use qrc_core::simulator::{CavityTruth, ProportionalityConfig, SimConfig, StateTruth, Truth};
use qrc_core::{Execution, PhaseNoise, PhasePoly, QuadraturePair, UncertainValue};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepToml {
    pub phi0_rad: f64,
    pub phi1_rad_per_s: f64,
    #[serde(default)]
    pub phi2_rad_per_s2: f64,
}

impl From<SweepToml> for PhasePoly {
    fn from(s: SweepToml) -> Self {
        PhasePoly::new(s.phi0_rad, s.phi1_rad_per_s, s.phi2_rad_per_s2)
    }
}

/// Keys shared by both trace simulations.
struct TraceKeys<'a> {
    seed: Option<u64>,
    n_points: Option<usize>,
    duration_s: Option<f64>,
    frac_noise: Option<f64>,
    sweep: &'a Option<SweepToml>,
}

impl TraceKeys<'_> {
    fn apply(&self, cfg: &mut SimConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.n_points {
            cfg.n_points = v;
        }
        if let Some(v) = self.duration_s {
            cfg.duration = v;
        }
        if let Some(v) = self.frac_noise {
            cfg.frac_noise = v;
        }
        if let Some(s) = self.sweep {
            cfg.sweep = s.clone().into();
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySimToml {
    pub seed: Option<u64>,
    pub n_points: Option<usize>,
    pub duration_s: Option<f64>,
    pub frac_noise: Option<f64>,
    pub sweep: Option<SweepToml>,
    pub r_sq: Option<f64>,
    pub loss_rt: Option<f64>,
    pub incident_power: Option<f64>,
}

impl CavitySimToml {
    fn keys(&self) -> TraceKeys<'_> {
        TraceKeys {
            seed: self.seed,
            n_points: self.n_points,
            duration_s: self.duration_s,
            frac_noise: self.frac_noise,
            sweep: &self.sweep,
        }
    }

    pub fn to_sim(&self) -> Result<SimConfig, CliError> {
        let mut cfg = SimConfig::cavity_default();
        self.keys().apply(&mut cfg);
        let Truth::Cavity(mut c) = cfg.truth else {
            unreachable!("cavity default has cavity truth")
        };
        c = CavityTruth {
            r_sq: self.r_sq.unwrap_or(c.r_sq),
            loss_rt: self.loss_rt.unwrap_or(c.loss_rt),
            i0: self.incident_power.unwrap_or(c.i0),
        };
        cfg.truth = Truth::Cavity(c);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomodyneSimToml {
    pub seed: Option<u64>,
    pub n_points: Option<usize>,
    pub duration_s: Option<f64>,
    pub frac_noise: Option<f64>,
    pub sweep: Option<SweepToml>,
    pub dark_var: Option<f64>,
    pub vacuum_var: Option<f64>,
    pub center_frequency_hz: Option<f64>,
    pub rbw_hz: Option<f64>,
    /// Squeezing of the pure state before loss. Exclusive with `pure_x_var`.
    pub squeezing_db: Option<f64>,
    pub pure_x_var: Option<f64>,
    pub eta: Option<f64>,
    pub phase_noise_rms_rad: Option<f64>,
}

impl HomodyneSimToml {
    fn keys(&self) -> TraceKeys<'_> {
        TraceKeys {
            seed: self.seed,
            n_points: self.n_points,
            duration_s: self.duration_s,
            frac_noise: self.frac_noise,
            sweep: &self.sweep,
        }
    }

    pub fn to_sim(&self) -> Result<SimConfig, CliError> {
        let mut cfg = SimConfig::homodyne_default();
        self.keys().apply(&mut cfg);
        if let Some(v) = self.dark_var {
            cfg.dark_var = v;
        }
        if let Some(v) = self.vacuum_var {
            cfg.vacuum_var = v;
        }
        if self.center_frequency_hz.is_some() {
            cfg.center_frequency_hz = self.center_frequency_hz;
        }
        if self.rbw_hz.is_some() {
            cfg.rbw_hz = self.rbw_hz;
        }
        let Truth::State(mut s) = cfg.truth else {
            unreachable!("homodyne default has state truth")
        };
        s.pure = match (self.squeezing_db, self.pure_x_var) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "give either squeezing_db or pure_x_var, not both".into(),
                ))
            }
            (Some(db), None) => QuadraturePair::pure_from_db(db)?,
            (None, Some(x)) => QuadraturePair::pure(x)?,
            (None, None) => s.pure,
        };
        if let Some(eta) = self.eta {
            s.eta = eta;
        }
        if let Some(t) = self.phase_noise_rms_rad {
            s.phase_noise = PhaseNoise::new(t)?;
        }
        cfg.truth = Truth::State(StateTruth { ..s });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProportionalityToml {
    pub seed: Option<u64>,
    pub lo_powers_mw: Option<Vec<f64>>,
    pub slope_per_mw: Option<f64>,
    pub dark: Option<f64>,
    pub frac_noise: Option<f64>,
    pub saturation_power_mw: Option<f64>,
}

impl ProportionalityToml {
    pub fn to_sim(&self) -> (Vec<f64>, ProportionalityConfig) {
        let d = ProportionalityConfig::default();
        let powers = self
            .lo_powers_mw
            .clone()
            .unwrap_or_else(|| (1..=10).map(f64::from).collect());
        let cfg = ProportionalityConfig {
            seed: self.seed.unwrap_or(d.seed),
            slope: self.slope_per_mw.unwrap_or(d.slope),
            dark: self.dark.unwrap_or(d.dark),
            frac_noise: self.frac_noise.unwrap_or(d.frac_noise),
            saturation_power: self.saturation_power_mw.or(d.saturation_power),
        };
        (powers, cfg)
    }
}

/// Total efficiency: given directly, or aggregated from repeated sweeps
/// (σ = standard error of the mean).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TotalInput {
    Direct(UncertainValue),
    Repeats {
        #[serde(rename = "repeats")]
        etas: Vec<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorInput {
    pub r_sq: UncertainValue,
    pub loss_rt: UncertainValue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EscapeInput {
    Direct(UncertainValue),
    Mirror(MirrorInput),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowersInput {
    pub p_cm_mw: UncertainValue,
    pub p_pd1_mw: UncertainValue,
    pub p_pd2_mw: UncertainValue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropagationInput {
    Direct(UncertainValue),
    Powers(PowersInput),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityInput {
    pub visibility: UncertainValue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchingInput {
    Direct(UncertainValue),
    Visibility(VisibilityInput),
}

/// `calibrate` input document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateJson {
    pub eta_total: TotalInput,
    pub eta_esc: EscapeInput,
    pub eta_prop: PropagationInput,
    pub eta_mm: MatchingInput,
    #[serde(default)]
    pub dark_ratio: Option<UncertainValue>,
    #[serde(default)]
    pub reflectance: Option<UncertainValue>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloOptions>,
}

impl CalibrateJson {
    pub fn resolve(&self) -> Result<CalibrationInputs, CliError> {
        let eta_total = match &self.eta_total {
            TotalInput::Direct(u) => *u,
            TotalInput::Repeats { etas } => {
                let s = aggregate_repeats(etas)?;
                UncertainValue::new(s.mean, s.std_error)?
            }
        };
        let eta_esc = match &self.eta_esc {
            EscapeInput::Direct(u) => *u,
            EscapeInput::Mirror(m) => escape_efficiency(m.r_sq, m.loss_rt)?,
        };
        let eta_prop = match &self.eta_prop {
            PropagationInput::Direct(u) => *u,
            PropagationInput::Powers(p) => {
                propagation_efficiency(p.p_cm_mw, p.p_pd1_mw, p.p_pd2_mw)?
            }
        };
        let eta_mm = match &self.eta_mm {
            MatchingInput::Direct(u) => *u,
            MatchingInput::Visibility(v) => mode_matching(v.visibility)?,
        };
        Ok(CalibrationInputs {
            budget: EfficiencyBudget {
                eta_total,
                eta_esc,
                eta_prop,
                eta_mm,
            },
            dark_ratio: self.dark_ratio,
            reflectance: self.reflectance,
            monte_carlo: self.monte_carlo,
        })
    }
}

pub fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<HomodyneSimToml>("eta = 0.9\netaa = 0.8").is_err());
        assert!(toml::from_str::<CavitySimToml>(
            "r_sq = 0.8\n[sweep]\nphi0_rad = 0\nphi1_rad_per_s = 7\nphi3 = 1"
        )
        .is_err());
        let ok: HomodyneSimToml = toml::from_str("seed = 4\nduration_s = 2.0\neta = 0.9").unwrap();
        let cfg = ok.to_sim().unwrap();
        assert_eq!((cfg.seed, cfg.duration), (4, 2.0));
    }

    #[test]
    fn exclusive_state_keys() {
        let both: HomodyneSimToml = toml::from_str("squeezing_db = 10\npure_x_var = 0.1").unwrap();
        assert!(both.to_sim().is_err());
    }

    #[test]
    fn derived_components_resolve() {
        let doc = r#"{
            "eta_total": {"repeats": [0.94, 0.95]},
            "eta_esc": {"r_sq": {"value": 0.8279, "sigma": 0.0035}, "loss_rt": {"value": 0.00247, "sigma": 0.00007}},
            "eta_prop": {"value": 0.9949, "sigma": 0.0025},
            "eta_mm": {"visibility": {"value": 0.99554, "sigma": 0.00085}}
        }"#;
        let inputs = serde_json::from_str::<CalibrateJson>(doc)
            .unwrap()
            .resolve()
            .unwrap();
        assert!((inputs.budget.eta_total.value - 0.945).abs() < 1e-12);
        assert!((inputs.budget.eta_esc.value - 0.98585).abs() < 1e-4);
        assert!((inputs.budget.eta_mm.value - 0.9911).abs() < 1e-4);
        let typo = doc.replace("\"eta_prop\"", "\"eta_propagation\"");
        assert!(serde_json::from_str::<CalibrateJson>(&typo).is_err());
    }
}
