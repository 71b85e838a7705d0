use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar with its one-standard-deviation uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainValue {
    pub value: f64,
    pub sigma: f64,
}

impl UncertainValue {
    pub fn new(value: f64, sigma: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::domain(format!("value must be finite, got {value}")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::domain(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self { value, sigma })
    }

    /// A value known exactly.
    pub const fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    pub fn relative_sigma(&self) -> f64 {
        self.sigma / self.value.abs()
    }

    /// Checks the invariants of a deserialized value.
    pub fn validate(&self) -> Result<()> {
        Self::new(self.value, self.sigma).map(|_| ())
    }
}

impl fmt::Display for UncertainValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {}", self.value, self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_sigma() {
        assert!(UncertainValue::new(1.0, -1e-3).is_err());
        assert!(UncertainValue::new(1.0, f64::NAN).is_err());
        assert!(UncertainValue::new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn roundtrips_through_json() {
        let v = UncertainValue::new(0.9448, 0.0022).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"value":0.9448,"sigma":0.0022}"#);
        let back: UncertainValue = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<UncertainValue>(r#"{"value":1,"sigma":0,"x":1}"#).is_err());
    }
}
