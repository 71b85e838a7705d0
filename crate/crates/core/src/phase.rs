use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

/// Quadratic phase trajectory `φ(t) = φ₀ + φ₁ t + φ₂ t²` of a scanned actuator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePoly {
    /// rad
    pub phi0: f64,
    /// rad/s
    pub phi1: f64,
    /// rad/s²
    pub phi2: f64,
}

impl PhasePoly {
    pub const fn new(phi0: f64, phi1: f64, phi2: f64) -> Self {
        Self { phi0, phi1, phi2 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.phi0 + t * (self.phi1 + t * self.phi2)
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.phi1 + 2.0 * self.phi2 * t
    }

    /// Absolute phase swept between `t0` and `t1`.
    pub fn span(&self, t0: f64, t1: f64) -> f64 {
        (self.eval(t1) - self.eval(t0)).abs()
    }
}

/// Affine time normalization `τ = (t − center) / half_width` used inside the
/// fitters to keep the polynomial columns well conditioned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct TimeScale {
    pub center: f64,
    pub half_width: f64,
}

impl TimeScale {
    pub fn spanning(t: &[f64]) -> Self {
        let (lo, hi) = (t[0], t[t.len() - 1]);
        let half_width = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
        Self {
            center: 0.5 * (lo + hi),
            half_width,
        }
    }

    pub fn tau(&self, t: f64) -> f64 {
        (t - self.center) / self.half_width
    }

    /// Linear map from scaled coefficients `(a₀, a₁, a₂)` to `(φ₀, φ₁, φ₂)`.
    pub fn to_absolute_matrix(self) -> Matrix3<f64> {
        let (c, h) = (self.center, self.half_width);
        Matrix3::new(
            1.0,
            -c / h,
            c * c / (h * h),
            0.0,
            1.0 / h,
            -2.0 * c / (h * h),
            0.0,
            0.0,
            1.0 / (h * h),
        )
    }

    pub fn to_absolute(self, a: [f64; 3]) -> PhasePoly {
        let v = self.to_absolute_matrix() * nalgebra::Vector3::from(a);
        PhasePoly::new(v[0], v[1], v[2])
    }

    pub fn to_scaled(self, p: &PhasePoly) -> [f64; 3] {
        let inv = self
            .to_absolute_matrix()
            .try_inverse()
            .expect("time scale matrix is upper triangular with nonzero diagonal");
        let v = inv * nalgebra::Vector3::new(p.phi0, p.phi1, p.phi2);
        [v[0], v[1], v[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_and_absolute_agree() {
        let ts = TimeScale::spanning(&[0.2, 0.7, 1.7]);
        let a = [0.3, 4.0, -0.5];
        let p = ts.to_absolute(a);
        for t in [0.2, 0.9, 1.7] {
            let tau = ts.tau(t);
            let scaled = a[0] + a[1] * tau + a[2] * tau * tau;
            assert!((p.eval(t) - scaled).abs() < 1e-12);
        }
        let back = ts.to_scaled(&p);
        for (x, y) in back.iter().zip(a) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn span_and_rate() {
        let p = PhasePoly::new(1.0, 2.0, 0.5);
        assert_eq!(p.eval(0.0), 1.0);
        assert_eq!(p.rate(1.0), 3.0);
        assert_eq!(p.span(0.0, 2.0), 6.0);
    }
}
