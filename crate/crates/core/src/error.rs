//! Error types shared across the library.

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its admissible domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A carbon price or penalty violates the standing feasibility condition
    /// for a firm (`rate * rho < bau emissions` and `rate < pi0`).
    #[error("infeasible rate for firm {firm}: {reason}")]
    Infeasible { firm: String, reason: String },

    /// The certificate supply lies outside the clearing window.
    #[error(
        "certificate supply {supply:.6e} outside the clearing window [{lower:.6e}, {upper:.6e})"
    )]
    SupplyOutsideWindow { supply: f64, lower: f64, upper: f64 },

    /// The admissible set for the certificate supply is empty.
    #[error("empty clearing window: lower bound {lower:.6e} >= upper bound {upper:.6e}")]
    EmptyWindow { lower: f64, upper: f64 },

    /// A root-finding or fixed-point solve failed.
    #[error("solver failure: {0}")]
    Solver(String),

    /// A penalty or tax calibration could not reach its target.
    #[error("calibration failure: {0}")]
    Calibration(String),

    /// A scenario file could not be parsed or validated.
    #[error("scenario error: {0}")]
    Scenario(String),

    /// Scheme accounts built from different portfolios cannot be compared.
    #[error("comparison error: {0}")]
    Comparison(String),
}

pub type Result<T> = std::result::Result<T, Error>;
