//! Absolute photodiode efficiency calibration from squeezed light.
//!
//! The crate models lossy squeezed-vacuum states ([`quantum`]), fits
//! resonator reflection scans ([`cavity`]) and phase-swept homodyne traces
//! ([`homodyne`]), combines component efficiencies with uncertainty
//! propagation ([`calibration`]) and generates seeded synthetic data with
//! known ground truth ([`simulator`]).
//!
//! Trace-length loops run on rayon when the `parallel` feature is enabled
//! and [`Execution::Parallel`] is selected; results are bit-identical to the
//! sequential path.

// `!(x > 0.0)` is how validation rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cavity;
pub mod error;
pub mod exec;
pub mod homodyne;
pub mod lsq;
pub mod phase;
pub mod quantum;
pub mod simulator;
pub mod trace;
pub mod uncertain;

pub use error::{Error, Result};
pub use exec::Execution;
pub use phase::PhasePoly;
pub use quantum::{PhaseNoise, QuadraturePair};
pub use trace::{Trace, TraceMeta};
pub use uncertain::UncertainValue;
