//! Variance algebra of single-mode squeezed vacuum under loss and phase noise.
//!
//! Quadrature variances are normalized to the vacuum (ground state) variance,
//! so the vacuum is `(1, 1)` and every state satisfies `Δ²X · Δ²Y ≥ 1`, with
//! equality for pure states. Variances are stored as plain positive reals;
//! decibels appear only through [`var_to_db`] / [`db_to_var`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `x·y = 1` for a pair to count as pure.
pub const PURITY_TOLERANCE: f64 = 1e-6;

/// `|x + y − 2|` below this makes the efficiency inversion singular.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Slack above unity accepted (and clamped) when inverting for η.
const EFFICIENCY_SLACK: f64 = 1e-9;

/// Vacuum-normalized variances of the squeezed and anti-squeezed quadratures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct QuadraturePair {
    x_var: f64,
    y_var: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    x_var: f64,
    y_var: f64,
}

impl TryFrom<RawPair> for QuadraturePair {
    type Error = Error;
    fn try_from(raw: RawPair) -> Result<Self> {
        QuadraturePair::new(raw.x_var, raw.y_var)
    }
}

impl From<QuadraturePair> for RawPair {
    fn from(p: QuadraturePair) -> Self {
        RawPair {
            x_var: p.x_var,
            y_var: p.y_var,
        }
    }
}

impl QuadraturePair {
    pub fn new(x_var: f64, y_var: f64) -> Result<Self> {
        if !(x_var > 0.0 && x_var.is_finite() && y_var > 0.0 && y_var.is_finite()) {
            return Err(Error::domain(format!(
                "quadrature variances must be finite and positive, got ({x_var}, {y_var})"
            )));
        }
        Ok(Self { x_var, y_var })
    }

    /// The minimum-uncertainty pair `(v, 1/v)`.
    pub fn pure(x_var: f64) -> Result<Self> {
        Self::new(x_var, 1.0 / x_var)
    }

    /// Pure state squeezed by `db` decibels below vacuum.
    pub fn pure_from_db(db: f64) -> Result<Self> {
        Self::pure(db_to_var(db))
    }

    pub const fn vacuum() -> Self {
        Self {
            x_var: 1.0,
            y_var: 1.0,
        }
    }

    pub fn x_var(&self) -> f64 {
        self.x_var
    }

    pub fn y_var(&self) -> f64 {
        self.y_var
    }

    pub fn is_pure(&self) -> bool {
        (self.x_var * self.y_var - 1.0).abs() <= PURITY_TOLERANCE
    }

    /// Squeezing of the X quadrature in dB (positive below vacuum).
    pub fn squeezing_db(&self) -> f64 {
        -10.0 * self.x_var.log10()
    }

    /// Anti-squeezing of the Y quadrature in dB (positive above vacuum).
    pub fn anti_squeezing_db(&self) -> f64 {
        10.0 * self.y_var.log10()
    }
}

/// RMS fluctuation of the readout phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoise {
    theta_rms: f64,
}

impl PhaseNoise {
    pub fn new(theta_rms: f64) -> Result<Self> {
        if !(theta_rms >= 0.0 && theta_rms.is_finite()) {
            return Err(Error::domain(format!(
                "theta_rms must be >= 0, got {theta_rms}"
            )));
        }
        Ok(Self { theta_rms })
    }

    pub const fn none() -> Self {
        Self { theta_rms: 0.0 }
    }

    pub fn theta_rms(&self) -> f64 {
        self.theta_rms
    }

    /// `E[cos²θ]` for `θ ~ Normal(0, θ_rms²)`.
    pub fn mean_cos_sq(&self) -> f64 {
        0.5 * (1.0 + (-2.0 * self.theta_rms * self.theta_rms).exp())
    }
}

fn check_efficiency(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!(
            "efficiency must lie in [0, 1], got {eta}"
        )));
    }
    Ok(())
}

/// Sends a state through a beam-splitter loss channel of transmission `eta`.
pub fn apply_loss(pure: QuadraturePair, eta: f64) -> Result<QuadraturePair> {
    check_efficiency(eta)?;
    QuadraturePair::new(
        eta * pure.x_var + (1.0 - eta),
        eta * pure.y_var + (1.0 - eta),
    )
}

fn check_squeezed(measured: &QuadraturePair) -> Result<f64> {
    let (x, y) = (measured.x_var, measured.y_var);
    let denom = x + y - 2.0;
    if denom.abs() < DEGENERACY_TOLERANCE {
        return Err(Error::Degenerate(format!(
            "Δ²X + Δ²Y = 2 for ({x}, {y}); the state carries no squeezing information"
        )));
    }
    if !(x < 1.0 && y > 1.0) {
        return Err(Error::domain(format!(
            "expected a squeezed measurement with Δ²X < 1 < Δ²Y, got ({x}, {y})"
        )));
    }
    Ok(denom)
}

/// Total efficiency of the channel that turned a pure state into `measured`.
pub fn infer_efficiency(measured: QuadraturePair) -> Result<f64> {
    let denom = check_squeezed(&measured)?;
    let (x, y) = (measured.x_var, measured.y_var);
    let eta = (x + y - 1.0 - x * y) / denom;
    if !(eta > 0.0 && eta <= 1.0 + EFFICIENCY_SLACK) {
        return Err(Error::domain(format!(
            "inferred efficiency {eta} lies outside (0, 1] for ({x}, {y})"
        )));
    }
    Ok(eta.min(1.0))
}

/// Gradient of [`infer_efficiency`] with respect to `(Δ²X, Δ²Y)`.
pub fn efficiency_gradient(measured: QuadraturePair) -> Result<[f64; 2]> {
    let denom = check_squeezed(&measured)?;
    let (x, y) = (measured.x_var, measured.y_var);
    let num = x + y - 1.0 - x * y;
    let d2 = denom * denom;
    Ok([
        ((1.0 - y) * denom - num) / d2,
        ((1.0 - x) * denom - num) / d2,
    ])
}

/// The pure state that, after the inferred loss, yields `measured`.
pub fn infer_pure_state(measured: QuadraturePair) -> Result<QuadraturePair> {
    let eta = infer_efficiency(measured)?;
    let x = (measured.x_var - (1.0 - eta)) / eta;
    let y = (measured.y_var - (1.0 - eta)) / eta;
    let pure = QuadraturePair::new(x, y)?;
    debug_assert!((x * y - 1.0).abs() < 1e-6);
    Ok(pure)
}

pub fn uncertainty_product(measured: QuadraturePair) -> f64 {
    measured.x_var * measured.y_var
}

/// Mean photon number of a pure squeezed vacuum state.
pub fn photon_number(pure: QuadraturePair) -> Result<f64> {
    if !pure.is_pure() {
        return Err(Error::domain(format!(
            "photon number needs a pure pair, got product {}",
            uncertainty_product(pure)
        )));
    }
    Ok(((pure.x_var + pure.y_var) / 4.0 - 0.5).max(0.0))
}

/// Sensitivity of the measured uncertainty product to the total efficiency,
/// weighted by the squared detection efficiency.
pub fn precision_scaling(eta: f64, eta_de: f64, n: f64) -> Result<f64> {
    check_efficiency(eta)?;
    check_efficiency(eta_de)?;
    if !(n >= 0.0) {
        return Err(Error::domain(format!(
            "photon number must be >= 0, got {n}"
        )));
    }
    Ok(eta_de * eta_de * (4.0 - 8.0 * eta).abs() * n)
}

/// Averages the measured variances over Gaussian readout-phase jitter.
pub fn apply_phase_noise(measured: QuadraturePair, noise: PhaseNoise) -> QuadraturePair {
    if noise.theta_rms == 0.0 {
        return measured;
    }
    let c = noise.mean_cos_sq();
    let s = 1.0 - c;
    let (x, y) = (measured.x_var, measured.y_var);
    // Both stay positive as convex combinations of positive numbers.
    QuadraturePair {
        x_var: x * c + y * s,
        y_var: y * c + x * s,
    }
}

pub fn var_to_db(var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::domain(format!(
            "variance must be positive, got {var}"
        )));
    }
    Ok(-10.0 * var.log10())
}

pub fn db_to_var(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}
