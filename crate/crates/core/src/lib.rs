//! Numerical laboratory for Gaussian random fields conditioned on a large
//! quadratic form.
//!
//! The pipeline is:
//!
//! 1. [`grid`]: a box domain with trapezoidal weights and the discrete L²
//!    inner product.
//! 2. [`operators`]: the covariance operator `C` (eigendecomposed in
//!    weighted coordinates) and quadratic-form operators `O`, including the
//!    point intensity `|φ(0)|²` and the local helicity `v(0)·curl v(0)`.
//! 3. [`spectral`]: the signed spectrum of `M = C^{1/2} O C^{1/2}`, its
//!    equivalence with the restricted `C O` eigenproblem and the fundamental
//!    basis `C^{1/2}|λ_{±1}⟩`.
//! 4. [`sampling`]: Karhunen–Loève sampling in the `M` eigenbasis, rejection
//!    and exponentially tilted conditional ensembles.
//! 5. [`tails`]: the law of `Q = Σ λ_n |t_n|²` by characteristic-function
//!    inversion, closed forms, asymptotics and lower bounds.
//! 6. [`concentration`] and [`exemplars`]: decay curves of the mismatch
//!    probability and the two closed-form case studies.

pub mod concentration;
mod error;
pub mod exemplars;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod sampling;
pub mod spectral;
pub mod tails;

pub use error::{Error, Result};
pub use grid::{Field, FieldKind, Grid};
pub use num_complex::Complex64;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use std::fmt;

/// Branch of the signed spectrum, and the sign of the conditioning event
/// `±⟨φ|O|φ⟩ > u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

impl std::str::FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" | "positive" => Ok(Sign::Plus),
            "-" | "minus" | "negative" => Ok(Sign::Minus),
            other => Err(Error::InvalidArgument(format!("unknown sign {other:?}"))),
        }
    }
}
