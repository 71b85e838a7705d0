//! Seeded synthetic cavity scans, homodyne sweeps and LO-power series from
//! known ground truth.
//!
//! Noise is multiplicative Gaussian, `v = model·(1 + ε)`, `ε ~ N(0, frac_noise²)`.
//! All draws come sequentially from one ChaCha8 generator seeded with
//! `SimConfig::seed` (normals by ziggurat), so a config fully determines its
//! trace. Model evaluation may run in parallel; it involves no randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cavity::{reflection_response, CavityParams};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::homodyne::{sweep_model, NoiseBudget, SweepModel};
use crate::phase::PhasePoly;
use crate::quantum::{apply_loss, apply_phase_noise, PhaseNoise, QuadraturePair};
use crate::trace::{Trace, TraceMeta};

/// Recorded in every synthetic trace's metadata.
pub const GENERATOR: &str = "chacha8+ziggurat";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityTruth {
    pub r_sq: f64,
    pub loss_rt: f64,
    pub i0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateTruth {
    pub pure: QuadraturePair,
    pub eta: f64,
    #[serde(default = "PhaseNoise::none")]
    pub phase_noise: PhaseNoise,
}

impl StateTruth {
    /// Variances the detector sees, before noise.
    pub fn measured(&self) -> Result<QuadraturePair> {
        Ok(apply_phase_noise(
            apply_loss(self.pure, self.eta)?,
            self.phase_noise,
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    Cavity(CavityTruth),
    State(StateTruth),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_points: usize,
    /// Seconds.
    pub duration: f64,
    pub frac_noise: f64,
    pub dark_var: f64,
    pub vacuum_var: f64,
    pub sweep: PhasePoly,
    pub truth: Truth,
    #[serde(default)]
    pub center_frequency_hz: Option<f64>,
    #[serde(default)]
    pub rbw_hz: Option<f64>,
    #[serde(default)]
    pub execution: Execution,
}

impl SimConfig {
    /// Homodyne defaults: 13.2 dB pure state, η = 0.945, 32 001 points at
    /// 5 MHz / 300 kHz RBW, about four fringes.
    pub fn homodyne_default() -> Self {
        Self {
            seed: 1,
            n_points: 32_001,
            duration: 1.0,
            frac_noise: 0.02,
            dark_var: 0.05,
            vacuum_var: 1.0,
            sweep: PhasePoly::new(0.3, 12.0, 0.8),
            truth: Truth::State(StateTruth {
                pure: QuadraturePair::pure(0.0479).expect("valid pure state"),
                eta: 0.945,
                phase_noise: PhaseNoise::none(),
            }),
            center_frequency_hz: Some(5e6),
            rbw_hz: Some(3e5),
            execution: Execution::default(),
        }
    }

    /// Cavity defaults: reference mirror and loss, about 2.5 free spectral ranges.
    pub fn cavity_default() -> Self {
        Self {
            seed: 1,
            n_points: 10_001,
            duration: 1.0,
            frac_noise: 0.002,
            dark_var: 0.0,
            vacuum_var: 1.0,
            sweep: PhasePoly::new(-0.4, 7.5, 0.5),
            truth: Truth::Cavity(CavityTruth {
                r_sq: 0.8279,
                loss_rt: 0.00247,
                i0: 1.0,
            }),
            center_frequency_hz: None,
            rbw_hz: None,
            execution: Execution::default(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::domain(format!(
                "n_points must be >= 2, got {}",
                self.n_points
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::domain(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.frac_noise >= 0.0 && self.frac_noise.is_finite()) {
            return Err(Error::domain(format!(
                "frac_noise must be >= 0, got {}",
                self.frac_noise
            )));
        }
        match &self.truth {
            Truth::Cavity(c) => self.cavity_params(c).validate(),
            Truth::State(s) => {
                if !s.pure.is_pure() {
                    return Err(Error::domain("state truth must be a pure pair (x·y = 1)"));
                }
                self.budget()?;
                s.measured().map(|_| ())
            }
        }
    }

    pub fn budget(&self) -> Result<NoiseBudget> {
        NoiseBudget::new(self.vacuum_var, self.dark_var)
    }

    fn cavity_params(&self, c: &CavityTruth) -> CavityParams {
        CavityParams {
            r_sq: c.r_sq,
            loss_rt: c.loss_rt,
            i0: c.i0,
            phase: self.sweep,
        }
    }

    fn times(&self) -> Vec<f64> {
        let step = self.duration / (self.n_points - 1) as f64;
        (0..self.n_points).map(|i| i as f64 * step).collect()
    }

    fn meta(&self, label: &str) -> TraceMeta {
        TraceMeta {
            label: Some(label.into()),
            center_frequency_hz: self.center_frequency_hz,
            rbw_hz: self.rbw_hz,
            units: Some("linear".into()),
            seed: Some(self.seed),
            generator: Some(GENERATOR.into()),
            extra: Vec::new(),
        }
    }
}

/// `n` standard-normal draws from the config seed, in order.
fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn noisy(cfg: &SimConfig, model: impl Fn(usize) -> f64 + Sync + Send, offset: f64) -> Vec<f64> {
    let mut v = vec![0.0; cfg.n_points];
    exec::fill(cfg.execution, &mut v, model);
    if cfg.frac_noise > 0.0 {
        for (x, z) in v.iter_mut().zip(normals(cfg.seed, cfg.n_points)) {
            *x *= 1.0 + cfg.frac_noise * z;
        }
    }
    v.iter_mut().for_each(|x| *x += offset);
    v
}

/// Reflected power of a scanned resonator.
pub fn simulate_cavity_scan(cfg: &SimConfig) -> Result<Trace> {
    cfg.validate()?;
    let Truth::Cavity(c) = &cfg.truth else {
        return Err(Error::domain("cavity scan needs a cavity truth"));
    };
    let params = cfg.cavity_params(c);
    let t = cfg.times();
    let v = noisy(
        cfg,
        |i| reflection_response(params.phase.eval(t[i]), &params),
        0.0,
    );
    Trace::new(t, v, cfg.meta("cavity-scan"))
}

/// Raw zero-span noise power of a phase-swept homodyne measurement:
/// `model·(vacuum_var − dark_var)·(1 + ε) + dark_var`.
pub fn simulate_homodyne_sweep(cfg: &SimConfig) -> Result<Trace> {
    cfg.validate()?;
    let Truth::State(s) = &cfg.truth else {
        return Err(Error::domain("homodyne sweep needs a state truth"));
    };
    let m = s.measured()?;
    let model = SweepModel {
        x_sqz: m.x_var(),
        x_asqz: m.y_var(),
        phase: cfg.sweep,
    };
    let scale = cfg.vacuum_var - cfg.dark_var;
    let t = cfg.times();
    let v = noisy(cfg, |i| sweep_model(t[i], &model) * scale, cfg.dark_var);
    Trace::new(t, v, cfg.meta("homodyne-sweep"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProportionalityConfig {
    pub seed: u64,
    /// Noise power per unit LO power in the linear regime.
    pub slope: f64,
    pub dark: f64,
    pub frac_noise: f64,
    /// `None` means no saturation.
    #[serde(default)]
    pub saturation_power: Option<f64>,
}

impl Default for ProportionalityConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            slope: 1.0,
            dark: 0.0,
            frac_noise: 0.0,
            saturation_power: None,
        }
    }
}

/// `(p, a·p/(1 + p/p_sat) + dark + ε)` for every LO power `p`.
pub fn simulate_proportionality(
    powers: &[f64],
    cfg: &ProportionalityConfig,
) -> Result<Vec<(f64, f64)>> {
    if powers.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(Error::domain("LO powers must be positive"));
    }
    if let Some(ps) = cfg.saturation_power {
        if !(ps > 0.0) {
            return Err(Error::domain(format!(
                "saturation power must be positive, got {ps}"
            )));
        }
    }
    if !(cfg.frac_noise >= 0.0) {
        return Err(Error::domain("frac_noise must be >= 0"));
    }
    let z = normals(cfg.seed, powers.len());
    Ok(powers
        .iter()
        .zip(z)
        .map(|(&p, z)| {
            let sat = cfg.saturation_power.map_or(1.0, |ps| 1.0 + p / ps);
            let clean = cfg.slope * p / sat + cfg.dark;
            (p, clean * (1.0 + cfg.frac_noise * z))
        })
        .collect())
}
