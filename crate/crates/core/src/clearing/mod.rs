//! Certificate-market clearing for deterministic and random emissions.

pub mod det;
pub mod rand;

pub use det::{
    aggregate_demand, direct_demand, equilibrium_spot, feasibility_window, intermediated_response,
    AccessMode, AccessProfile, ClearingResult, CornerFlag, FeasibilityWindow,
    IntermediatedResponse,
};
pub use rand::{
    calibrate_lambda, calibrate_tau_random, equilibrium_emissions, equilibrium_spot_random,
    intermediated_price_random, regulator_wealth_random, symmetric_intermediated_closed_form,
    RandomClearingProblem, SymmetricEquilibrium,
};
