//! Firm-level optimization: business-as-usual baselines and closed-form
//! optima under tax and certificate-market pricing, deterministic and with
//! random emissions.
//!
//! A firm produces `q` units for raw wealth `pi0 q - pi1 q^2 / 2`, emits one
//! ton per unit, and can shrink emissions to `e^{-a} q` at green cost
//! `(gamma/2) ((1 - e^{-a}) q)^2`. Abatement is represented throughout by the
//! factor `e^{-a}` rather than the effort `a`, since every formula involves
//! the factor only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::EmissionDistribution;

/// Production and abatement primitives of one firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyParams {
    /// Opaque identifier, e.g. `"B1"`.
    pub id: String,
    /// Free-text group tag, e.g. `"Brown"`.
    pub label: String,
    /// Linear wealth coefficient, euro per ton.
    pub pi0: f64,
    /// Quadratic wealth coefficient, euro per ton^2.
    pub pi1: f64,
    /// Green cost factor, euro per ton^2.
    pub gamma: f64,
}

impl CompanyParams {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        pi0: f64,
        pi1: f64,
        gamma: f64,
    ) -> Result<Self> {
        let p = CompanyParams {
            id: id.into(),
            label: label.into(),
            pi0,
            pi1,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("pi0", self.pi0), ("pi1", self.pi1), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("firm {}: must be positive and finite, got {v}", self.id),
                });
            }
        }
        Ok(())
    }

    /// Emission factor `rho = 1/pi1 + 1/gamma`: price sensitivity of emissions.
    pub fn rho(&self) -> f64 {
        1.0 / self.pi1 + 1.0 / self.gamma
    }

    /// Variance-adjusted emission factor `1/pi1 + 1/(gamma sigma2)`.
    pub fn rho_hat(&self, sigma2: f64) -> f64 {
        1.0 / self.pi1 + 1.0 / (self.gamma * sigma2)
    }

    /// Wealth-maximizing production with no carbon constraint.
    pub fn q_bau(&self) -> f64 {
        self.pi0 / self.pi1
    }

    /// Business-as-usual emissions (one ton per production unit).
    pub fn bau_emissions(&self) -> f64 {
        self.q_bau()
    }

    /// Business-as-usual wealth `pi0^2 / (2 pi1)`.
    pub fn bau_wealth(&self) -> f64 {
        self.pi0 * self.pi0 / (2.0 * self.pi1)
    }
}

/// A firm's optimal decision and the resulting accounting quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyOutcome {
    /// Production, tons.
    pub q: f64,
    /// `e^{-a}` at the optimum, in `(0, 1]`.
    pub abatement_factor: f64,
    /// Certificate demand, tons; zero under the tax scheme.
    pub delta: f64,
    /// (Expected) emissions, tons.
    pub emissions: f64,
    /// (Expected) net wealth, euro.
    pub wealth: f64,
    /// Green-technology cost at the optimum, euro; accrues to the tech provider.
    pub green_cost: f64,
    /// The carbon price the firm faces: tax rate or effective certificate price.
    pub carbon_price: f64,
}

impl CompanyOutcome {
    /// Abatement effort `a = -ln(factor)`, exposed on demand.
    pub fn abatement_effort(&self) -> f64 {
        -self.abatement_factor.ln()
    }
}

/// Which rate a feasibility check applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// Tax rate `tau`.
    Tax,
    /// Market penalty `lambda`.
    Market,
}

/// Result of the standing-assumption check `rate * rho < E_bau` (strict).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feasibility {
    /// Feasible; `slack = E_bau - rate * rho > 0`.
    Ok { slack: f64 },
    /// Violated; `excess = rate * rho - E_bau >= 0`.
    Violation { excess: f64 },
}

impl Feasibility {
    pub fn is_ok(&self) -> bool {
        matches!(self, Feasibility::Ok { .. })
    }
}

/// Checks the standing assumption for a tax rate or penalty. The stochastic
/// variant (`sigma2 > 1`) tests `rate * rho_hat < E_bau` instead.
pub fn check_feasibility(
    params: &CompanyParams,
    rate: f64,
    _kind: RateKind,
    sigma2: f64,
) -> Feasibility {
    let rho = if sigma2 > 1.0 {
        params.rho_hat(sigma2)
    } else {
        params.rho()
    };
    let burden = rate * rho;
    let limit = params.bau_emissions();
    // rate < pi0 keeps production positive; not implied by the rho bound
    if burden < limit && rate < params.pi0 {
        Feasibility::Ok {
            slack: limit - burden,
        }
    } else {
        Feasibility::Violation {
            excess: (burden - limit).max(rate - params.pi0),
        }
    }
}

fn require_feasible(params: &CompanyParams, rate: f64, kind: RateKind, sigma2: f64) -> Result<f64> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "rate",
            reason: format!("carbon rate must be non-negative, got {rate}"),
        });
    }
    let rho = if sigma2 > 1.0 {
        params.rho_hat(sigma2)
    } else {
        params.rho()
    };
    match check_feasibility(params, rate, kind, sigma2) {
        Feasibility::Ok { .. } => Ok(rho),
        Feasibility::Violation { excess } => Err(Error::Infeasible {
            firm: params.id.clone(),
            reason: format!(
                "rate {rate} violates the standing assumption (excess {excess:.6e}); \
                 requires rate * rho < bau emissions and rate < pi0"
            ),
        }),
    }
}

/// Business-as-usual outcome: no carbon cost, no abatement.
pub fn bau_outcome(params: &CompanyParams) -> Result<CompanyOutcome> {
    params.validate()?;
    let q = params.q_bau();
    Ok(CompanyOutcome {
        q,
        abatement_factor: 1.0,
        delta: 0.0,
        emissions: q,
        wealth: params.bau_wealth(),
        green_cost: 0.0,
        carbon_price: 0.0,
    })
}

/// Green-technology cost `(gamma sigma2 / 2) ((1 - factor) q)^2`.
pub fn green_cost(params: &CompanyParams, q: f64, abatement_factor: f64, sigma2: f64) -> f64 {
    let reduced = (1.0 - abatement_factor) * q;
    params.gamma * sigma2 / 2.0 * reduced * reduced
}

fn priced_optimum(
    params: &CompanyParams,
    effective_rate: f64,
    rho: f64,
    sigma2: f64,
) -> CompanyOutcome {
    let q = params.q_bau() - effective_rate / params.pi1;
    let emissions = params.bau_emissions() - effective_rate * rho;
    let abatement_factor = if effective_rate == 0.0 {
        1.0
    } else {
        emissions / q
    };
    let wealth = params.bau_wealth()
        - effective_rate * (params.bau_emissions() - effective_rate * rho / 2.0);
    CompanyOutcome {
        q,
        abatement_factor,
        delta: 0.0,
        emissions,
        wealth,
        green_cost: green_cost(params, q, abatement_factor, sigma2),
        carbon_price: 0.0,
    }
}

/// Optimal response to a tax rate `tau` with deterministic emissions.
pub fn tax_optimum(params: &CompanyParams, tau: f64) -> Result<CompanyOutcome> {
    params.validate()?;
    let rho = require_feasible(params, tau, RateKind::Tax, 1.0)?;
    let mut out = priced_optimum(params, tau, rho, 1.0);
    out.carbon_price = tau;
    Ok(out)
}

/// Optimal response to a certificate price with deterministic emissions.
///
/// Identical to [`tax_optimum`] at `tau = price`, except that the firm holds
/// certificates exactly covering its emissions (`delta = emissions`) and pays
/// no penalty.
pub fn market_optimum(params: &CompanyParams, price: f64, penalty: f64) -> Result<CompanyOutcome> {
    params.validate()?;
    if !(price > 0.0 && price < penalty) {
        return Err(Error::InvalidParameter {
            name: "price",
            reason: format!("certificate price must satisfy 0 < price < penalty, got price {price}, penalty {penalty}"),
        });
    }
    let rho = require_feasible(params, price, RateKind::Market, 1.0)?;
    let mut out = priced_optimum(params, price, rho, 1.0);
    out.delta = out.emissions;
    out.carbon_price = price;
    Ok(out)
}

/// Optimal response to a tax rate with random emissions of second moment
/// `sigma2 >= 1`. Same formulas as [`tax_optimum`] with `rho` replaced by
/// `rho_hat` and the green cost scaled by `sigma2`.
pub fn tax_optimum_random(params: &CompanyParams, tau: f64, sigma2: f64) -> Result<CompanyOutcome> {
    params.validate()?;
    check_sigma2(sigma2)?;
    let rho_hat = require_feasible(params, tau, RateKind::Tax, sigma2)?;
    let mut out = priced_optimum(params, tau, rho_hat, sigma2);
    out.carbon_price = tau;
    Ok(out)
}

/// Optimal response to a certificate price with random emissions.
///
/// With `eps = price / penalty`, the market problem reduces to a tax problem
/// at the effective rate `price * ES_eps(X)`; the certificate demand is
/// `VaR_eps(X)` times the expected emissions.
pub fn market_optimum_random(
    params: &CompanyParams,
    price: f64,
    penalty: f64,
    dist: &EmissionDistribution,
) -> Result<CompanyOutcome> {
    params.validate()?;
    if !(price > 0.0 && price < penalty) {
        return Err(Error::InvalidParameter {
            name: "price",
            reason: format!("certificate price must satisfy 0 < price < penalty, got price {price}, penalty {penalty}"),
        });
    }
    let sigma2 = dist.sigma2();
    let eps = price / penalty;
    let es = dist.es(eps)?;
    let var = dist.var(eps)?;
    let effective = price * es;
    let rho_hat = require_feasible(params, effective, RateKind::Market, sigma2)?;
    let mut out = priced_optimum(params, effective, rho_hat, sigma2);
    out.delta = var * out.emissions;
    out.carbon_price = price;
    Ok(out)
}

/// Expected emissions at certificate price `price`, allowing the infeasible
/// (negative) range; used by the clearing solvers to keep demand continuous.
pub(crate) fn expected_emissions_raw(
    params: &CompanyParams,
    price: f64,
    penalty: f64,
    dist: &EmissionDistribution,
) -> Result<f64> {
    let eps = price / penalty;
    let effective = price * dist.es(eps)?;
    Ok(params.bau_emissions() - effective * params.rho_hat(dist.sigma2()))
}

/// Certificate demand `VaR_{P/penalty}(X) * E_mar(P)`, not floored.
pub(crate) fn demand_raw(
    params: &CompanyParams,
    price: f64,
    penalty: f64,
    dist: &EmissionDistribution,
) -> Result<f64> {
    let var = dist.var(price / penalty)?;
    Ok(var * expected_emissions_raw(params, price, penalty, dist)?)
}

/// Slope of the certificate demand in the price:
/// `E_mar / (penalty * G'(VaR)) - rho_hat * VaR^2 <= 0`.
pub fn demand_derivative_random(
    params: &CompanyParams,
    price: f64,
    penalty: f64,
    dist: &EmissionDistribution,
) -> Result<f64> {
    if !(price > 0.0 && price < penalty) {
        return Err(Error::InvalidParameter {
            name: "price",
            reason: format!(
                "demand slope needs 0 < price < penalty, got price {price}, penalty {penalty}"
            ),
        });
    }
    let var = dist.var(price / penalty)?;
    let g_prime = dist.survival_derivative(var)?;
    if g_prime == 0.0 {
        return Err(Error::Solver(format!(
            "survival derivative vanishes at VaR {var}; demand slope is singular"
        )));
    }
    let e_mar = expected_emissions_raw(params, price, penalty, dist)?;
    Ok(e_mar / (penalty * g_prime) - params.rho_hat(dist.sigma2()) * var * var)
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2.is_finite() && sigma2 >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("second moment must be >= 1, got {sigma2}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn b1() -> CompanyParams {
        CompanyParams::new("B1", "Brown", 475.65, 1.13e-6, 1.0e-5).unwrap()
    }

    fn b3() -> CompanyParams {
        CompanyParams::new("B3", "Brown", 665.91, 2.22e-6, 5.0e-6).unwrap()
    }

    #[test]
    fn bau_matches_case_study() {
        let out = bau_outcome(&b1()).unwrap();
        assert!((out.emissions / 1e6 - 420.0).abs() < 1.0);
        assert!((out.wealth / 1e9 - 100.0).abs() < 0.5);
        assert_eq!(out.abatement_factor, 1.0);
        assert_eq!(out.delta, 0.0);
        assert_eq!(out.green_cost, 0.0);
    }

    #[test]
    fn bau_trivial_substitution() {
        let p = CompanyParams::new("t", "t", 2.0, 1.0, 1.0).unwrap();
        let out = bau_outcome(&p).unwrap();
        assert_relative_eq!(out.q, 2.0);
        assert_relative_eq!(out.wealth, 2.0);
    }

    #[test]
    fn feasibility_boundary_and_zero() {
        let p = b1();
        assert!(check_feasibility(&p, 0.0, RateKind::Tax, 1.0).is_ok());
        assert!(check_feasibility(&p, 310.6, RateKind::Tax, 1.0).is_ok());
        let boundary = p.bau_emissions() / p.rho();
        assert!(!check_feasibility(&p, boundary, RateKind::Tax, 1.0).is_ok());
    }

    #[test]
    fn zero_tax_is_bau() {
        let p = b1();
        assert_eq!(tax_optimum(&p, 0.0).unwrap(), bau_outcome(&p).unwrap());
    }

    #[test]
    fn tax_market_equivalence_at_equal_price() {
        let p = b3();
        let tax = tax_optimum(&p, 310.6).unwrap();
        let mar = market_optimum(&p, 310.6, 450.0).unwrap();
        assert_eq!(tax.wealth, mar.wealth);
        assert_eq!(tax.emissions, mar.emissions);
        assert_eq!(mar.delta, mar.emissions);
        assert_eq!(tax.delta, 0.0);
    }

    #[test]
    fn market_demand_b3() {
        let p = b3();
        let out = market_optimum(&p, 310.6, 450.0).unwrap();
        assert_relative_eq!(
            out.delta,
            p.bau_emissions() - 310.6 * p.rho(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn market_rejects_price_at_or_above_penalty() {
        let p = b1();
        assert!(market_optimum(&p, 450.0, 450.0).is_err());
        assert!(market_optimum(&p, 500.0, 450.0).is_err());
    }

    #[test]
    fn sigma2_one_reduces_to_deterministic() {
        let p = b1();
        let det = tax_optimum(&p, 200.0).unwrap();
        let rand = tax_optimum_random(&p, 200.0, 1.0).unwrap();
        assert_relative_eq!(det.wealth, rand.wealth, max_relative = 1e-12);
        assert_relative_eq!(det.emissions, rand.emissions, max_relative = 1e-12);
    }

    #[test]
    fn market_random_is_tax_at_effective_rate() {
        let p = b1();
        let dist = EmissionDistribution::lognormal(1.0).unwrap();
        let (price, penalty) = (150.0, 480.0);
        let out = market_optimum_random(&p, price, penalty, &dist).unwrap();
        let effective = price * dist.es(price / penalty).unwrap();
        let tax = tax_optimum_random(&p, effective, dist.sigma2()).unwrap();
        assert_relative_eq!(out.wealth, tax.wealth, max_relative = 1e-12);
        assert_relative_eq!(out.emissions, tax.emissions, max_relative = 1e-12);
        let var = dist.var(price / penalty).unwrap();
        assert_relative_eq!(out.delta, var * out.emissions, max_relative = 1e-12);
    }

    #[test]
    fn effective_tax_factor_paper_setup() {
        // price/penalty = G(1/1.05) gives ES ~ 2.174
        let dist = EmissionDistribution::lognormal(1.0).unwrap();
        let eps = dist.survival(1.0 / 1.05).unwrap();
        assert!((dist.es(eps).unwrap() - 2.174).abs() < 2e-3);
    }

    #[test]
    fn demand_slope_matches_finite_difference() {
        let p = b1();
        let dist = EmissionDistribution::lognormal(1.0).unwrap();
        let (price, penalty) = (200.0, 483.0);
        let slope = demand_derivative_random(&p, price, penalty, &dist).unwrap();
        let h = price * 1e-6;
        let up = market_optimum_random(&p, price + h, penalty, &dist)
            .unwrap()
            .delta;
        let dn = market_optimum_random(&p, price - h, penalty, &dist)
            .unwrap()
            .delta;
        let fd = (up - dn) / (2.0 * h);
        assert_relative_eq!(slope, fd, max_relative = 1e-5);
        assert!(slope <= 0.0);
    }

    #[test]
    fn green_cost_quadratic_homogeneity() {
        let p = b1();
        let base = green_cost(&p, 100.0, 0.8, 1.0);
        let doubled = green_cost(&p, 200.0, 0.8, 1.0);
        assert_relative_eq!(doubled, 4.0 * base, max_relative = 1e-12);
        assert_eq!(green_cost(&p, 100.0, 1.0, 1.0), 0.0);
    }
}
