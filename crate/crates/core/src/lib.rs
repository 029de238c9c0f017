//! Equilibrium comparison of carbon tax and cap-and-trade schemes.
//!
//! The library models a one-period economy of profit-maximizing firms whose
//! production emits carbon. A regulator prices emissions either through a
//! tax or by auctioning a fixed supply of allowance certificates, with firms
//! buying certificates directly on the spot market or through financial
//! intermediaries quoting firm-specific prices. Emissions can be
//! deterministic in output or carry a multiplicative random factor, in which
//! case certificate demand is driven by quantile (value-at-risk) coverage
//! and penalties by expected shortfall.
//!
//! The crate exposes closed-form firm optima, market-clearing solvers for
//! both regimes, wealth and GDP accounting across schemes, brute-force
//! verification oracles, and TOML scenario input with reporting, all wired
//! into the `carbon-pricing` command-line tool.

// Negated comparisons such as `!(x > 0.0)` are used throughout as parameter
// guards because they also reject NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accounting;
pub mod clearing;
pub mod error;
pub mod firm;
pub mod oracle;
pub mod report;
pub mod risk;
pub mod scenario;

pub use error::{Error, Result};

// Compile and run the code blocks of the guide (book/) as doc-tests so the
// chapters stay in sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/firms.md")]
    mod firms {}
    #[doc = include_str!("../../../book/src/markets.md")]
    mod markets {}
    #[doc = include_str!("../../../book/src/uncertainty.md")]
    mod uncertainty {}
    #[doc = include_str!("../../../book/src/accounting.md")]
    mod accounting {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
