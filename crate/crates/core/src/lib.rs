//! Direct quantum detector tomography with weak values.
//!
//! The crate simulates weak-measurement experiments on a d-dimensional
//! system coupled to a qubit meter, extracts complex weak values from the
//! meter statistics, reconstructs the POVM of the measurement apparatus
//! directly from those weak values, and cross-validates the result against
//! a conventional probe-state tomography oracle.
//!
//! Module map:
//! - [`linalg`]: dense complex matrices, Hermitian eigensolver, fidelity,
//!   mutually unbiased bases.
//! - [`povm`]: POVM model, validation, retrodiction, built-in fixtures.
//! - [`sim`]: exact forward simulation and seeded finite-shot sampling.
//! - [`weakval`]: per-g estimator and the multi-g least-squares fit.
//! - [`direct`]: element assembly from weak values, Dirac-table inversion,
//!   physicality adjustment.
//! - [`probe`]: conventional detector tomography for cross-validation.
//! - [`pipeline`]: end-to-end orchestration used by the CLI and the tests.

pub mod direct;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod povm;
pub mod probe;
pub mod random;
pub mod sim;
pub mod weakval;

pub use error::{Error, Result};
pub use linalg::{c64, Ket, Operator, C64};
pub use povm::Povm;

/// Format a float with 12 significant digits for text artifacts.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.11e}")
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(0.25), "2.50000000000e-1");
        let round_trip: f64 = fmt_sig(std::f64::consts::PI).parse().unwrap();
        assert!((round_trip - std::f64::consts::PI).abs() < 1e-11);
    }
}
