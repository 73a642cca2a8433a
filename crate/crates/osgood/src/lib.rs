//! Numerical laboratory for sharp Osgood-type uniqueness and blow-up
//! conditions: moduli with series classification, extremal piecewise
//! log-linear fields, an embedded Runge-Kutta integrator with dense output
//! and level-crossing events, and closed-form envelope verification.

pub mod asymptote;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod events;
pub mod fields;
pub mod integrator;
pub mod modulus;
pub mod report;

pub use error::{OsgoodError, Result};
