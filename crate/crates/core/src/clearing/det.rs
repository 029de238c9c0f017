//! Deterministic certificate-market clearing: per-firm responses given a
//! spot price, feasibility windows on the certificate supply, and the
//! closed-form equilibrium spot prices for spot, purely intermediated, and
//! hybrid access structures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::firm::CompanyParams;

/// How a firm accesses the certificate market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    /// Bids at the regulator's auction at the spot price.
    Direct,
    /// Buys from a wealth-maximizing financial intermediary.
    Intermediated,
}

/// Per-firm market-access modes, aligned with the portfolio order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessProfile(pub Vec<AccessMode>);

impl AccessProfile {
    pub fn all_direct(n: usize) -> Self {
        AccessProfile(vec![AccessMode::Direct; n])
    }

    pub fn all_intermediated(n: usize) -> Self {
        AccessProfile(vec![AccessMode::Intermediated; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mode(&self, i: usize) -> AccessMode {
        self.0[i]
    }
}

/// Corner status of one firm's response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CornerFlag {
    Interior,
    /// The intermediated price is capped at the penalty rate.
    PriceCappedAtPenalty,
}

/// An accepted market-clearing solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearingResult {
    /// Equilibrium spot price.
    pub spot: f64,
    /// Effective certificate price per firm (`spot` for direct firms).
    pub effective_prices: Vec<f64>,
    /// Certificate demand per firm.
    pub demands: Vec<f64>,
    /// (Expected) emissions per firm; equals demand in the deterministic case.
    pub expected_emissions: Vec<f64>,
    /// `sum(demands) - supply`.
    pub residual: f64,
    pub corner_flags: Vec<CornerFlag>,
}

impl ClearingResult {
    pub fn total_demand(&self) -> f64 {
        self.demands.iter().sum()
    }

    pub fn total_emissions(&self) -> f64 {
        self.expected_emissions.iter().sum()
    }
}

/// A direct participant's demand at spot price `spot`, floored at zero.
pub fn direct_demand(params: &CompanyParams, spot: f64) -> f64 {
    (params.bau_emissions() - spot * params.rho()).max(0.0)
}

/// An intermediary's optimal quote and the induced demand for one firm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediatedResponse {
    /// Quoted price `min((spot + E_bau/rho) / 2, penalty)`.
    pub price: f64,
    /// Demand `max((E_bau - spot rho) / 2, E_bau - penalty rho)`.
    pub demand: f64,
    /// True iff the penalty cap binds.
    pub corner: bool,
}

/// Optimal intermediated price and demand for a given spot price.
pub fn intermediated_response(
    params: &CompanyParams,
    spot: f64,
    penalty: f64,
) -> Result<IntermediatedResponse> {
    if !(spot > 0.0 && spot <= penalty) {
        return Err(Error::InvalidParameter {
            name: "spot",
            reason: format!(
                "spot must satisfy 0 < spot <= penalty, got spot {spot}, penalty {penalty}"
            ),
        });
    }
    let rho = params.rho();
    let e_bau = params.bau_emissions();
    let interior_price = 0.5 * (spot + e_bau / rho);
    let corner = interior_price > penalty;
    let price = interior_price.min(penalty);
    let demand = (0.5 * (e_bau - spot * rho)).max(e_bau - penalty * rho);
    Ok(IntermediatedResponse {
        price,
        demand,
        corner,
    })
}

/// Clearing window for the certificate supply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityWindow {
    /// Lower bound of the clearing window (`clear(penalty)`).
    pub a_min: f64,
    /// Exclusive upper bound (`clear(0+)`).
    pub a_max: f64,
    /// Tighter lower bound below which some intermediated firm hits the
    /// penalty cap; clamped at zero.
    pub interior_a_min: f64,
}

fn check_portfolio(portfolio: &[CompanyParams], access: &AccessProfile) -> Result<()> {
    if portfolio.is_empty() {
        return Err(Error::InvalidParameter {
            name: "portfolio",
            reason: "portfolio must be non-empty".into(),
        });
    }
    if access.len() != portfolio.len() {
        return Err(Error::InvalidParameter {
            name: "access",
            reason: format!(
                "access profile covers {} firms but portfolio has {}",
                access.len(),
                portfolio.len()
            ),
        });
    }
    for p in portfolio {
        p.validate()?;
    }
    Ok(())
}

/// Aggregate certificate demand at spot price `spot` under the given access
/// profile, including penalty-cap corners.
pub fn aggregate_demand(
    portfolio: &[CompanyParams],
    spot: f64,
    penalty: f64,
    access: &AccessProfile,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, p) in portfolio.iter().enumerate() {
        total += match access.mode(i) {
            AccessMode::Direct => direct_demand(p, spot),
            AccessMode::Intermediated => intermediated_response(p, spot, penalty)?.demand,
        };
    }
    Ok(total)
}

/// Computes the admissible certificate-supply window for the portfolio.
///
/// The penalty must satisfy the standing assumption for every firm; violators
/// are reported together.
pub fn feasibility_window(
    portfolio: &[CompanyParams],
    penalty: f64,
    access: &AccessProfile,
) -> Result<FeasibilityWindow> {
    check_portfolio(portfolio, access)?;
    let violators: Vec<&str> = portfolio
        .iter()
        .filter(|p| penalty * p.rho() >= p.bau_emissions() || penalty >= p.pi0)
        .map(|p| p.id.as_str())
        .collect();
    if !violators.is_empty() {
        return Err(Error::Infeasible {
            firm: violators.join(", "),
            reason: format!("penalty {penalty} violates the standing assumption"),
        });
    }

    let mut a_min = 0.0; // clear(penalty) = E_bau - penalty * rho under feasibility
    let mut a_max = 0.0; // lim_{S -> 0+} clear(S)
    let mut max_ratio_b: f64 = f64::NEG_INFINITY;
    for (i, p) in portfolio.iter().enumerate() {
        let e = p.bau_emissions();
        let rho = p.rho();
        a_min += e - penalty * rho;
        match access.mode(i) {
            AccessMode::Direct => a_max += e,
            AccessMode::Intermediated => {
                a_max += (0.5 * e).max(e - penalty * rho);
                max_ratio_b = max_ratio_b.max(e / rho);
            }
        }
    }
    if a_min >= a_max {
        return Err(Error::EmptyWindow {
            lower: a_min,
            upper: a_max,
        });
    }

    // interior bound: demand at the largest spot price for which every
    // intermediated quote stays below the penalty cap
    let interior_a_min = if max_ratio_b.is_finite() {
        let s_cap = 2.0 * penalty - max_ratio_b;
        if s_cap >= penalty {
            a_min
        } else if s_cap <= 0.0 {
            a_max // no interior region
        } else {
            let mut bound = 0.0;
            for (i, p) in portfolio.iter().enumerate() {
                let e = p.bau_emissions();
                let rho = p.rho();
                bound += match access.mode(i) {
                    AccessMode::Direct => e - s_cap * rho,
                    AccessMode::Intermediated => 0.5 * (e - s_cap * rho),
                };
            }
            bound
        }
    } else {
        a_min
    }
    .max(0.0);

    Ok(FeasibilityWindow {
        a_min: a_min.max(0.0),
        a_max,
        interior_a_min,
    })
}

/// Solves for the equilibrium spot price clearing `supply` certificates.
///
/// Inside the interior window the closed form
/// `S = (2 (E_bau - A) - sum_b E_bau_b) / (2 rho - sum_b rho_b)` applies
/// (specializing to `(E_bau - A)/rho` all-direct and `(E_bau - 2A)/rho`
/// all-intermediated). In the corner band `[a_min, interior_a_min)` the
/// piecewise-linear clearing condition is solved by bisection instead.
pub fn equilibrium_spot(
    portfolio: &[CompanyParams],
    supply: f64,
    penalty: f64,
    access: &AccessProfile,
) -> Result<ClearingResult> {
    let window = feasibility_window(portfolio, penalty, access)?;
    if !(supply >= window.a_min && supply < window.a_max) {
        return Err(Error::SupplyOutsideWindow {
            supply,
            lower: window.a_min,
            upper: window.a_max,
        });
    }

    let spot = if supply >= window.interior_a_min {
        let mut e_total = 0.0;
        let mut rho_total = 0.0;
        let mut e_b = 0.0;
        let mut rho_b = 0.0;
        for (i, p) in portfolio.iter().enumerate() {
            e_total += p.bau_emissions();
            rho_total += p.rho();
            if access.mode(i) == AccessMode::Intermediated {
                e_b += p.bau_emissions();
                rho_b += p.rho();
            }
        }
        (2.0 * (e_total - supply) - e_b) / (2.0 * rho_total - rho_b)
    } else {
        bisect_clearing(portfolio, supply, penalty, access)?
    };

    build_result(portfolio, spot, supply, penalty, access)
}

fn bisect_clearing(
    portfolio: &[CompanyParams],
    supply: f64,
    penalty: f64,
    access: &AccessProfile,
) -> Result<f64> {
    // clear(S) is strictly decreasing and piecewise linear on (0, penalty]
    let mut lo = penalty * 1e-15;
    let mut hi = penalty;
    let tol = penalty * 1e-12;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let excess = aggregate_demand(portfolio, mid, penalty, access)? - supply;
        if excess > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn build_result(
    portfolio: &[CompanyParams],
    spot: f64,
    supply: f64,
    penalty: f64,
    access: &AccessProfile,
) -> Result<ClearingResult> {
    if !(spot > 0.0 && spot <= penalty) {
        return Err(Error::Solver(format!(
            "clearing spot price {spot} escaped (0, {penalty}]"
        )));
    }
    let n = portfolio.len();
    let mut prices = Vec::with_capacity(n);
    let mut demands = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for (i, p) in portfolio.iter().enumerate() {
        match access.mode(i) {
            AccessMode::Direct => {
                prices.push(spot);
                demands.push(direct_demand(p, spot));
                flags.push(CornerFlag::Interior);
            }
            AccessMode::Intermediated => {
                let r = intermediated_response(p, spot, penalty)?;
                prices.push(r.price);
                demands.push(r.demand);
                flags.push(if r.corner {
                    CornerFlag::PriceCappedAtPenalty
                } else {
                    CornerFlag::Interior
                });
            }
        }
    }
    let total: f64 = demands.iter().sum();
    let residual = total - supply;
    if residual.abs() > 1e-9 * supply.max(1.0) {
        return Err(Error::Solver(format!(
            "clearing residual {residual:.6e} exceeds tolerance for supply {supply:.6e}"
        )));
    }
    Ok(ClearingResult {
        spot,
        effective_prices: prices,
        expected_emissions: demands.clone(),
        demands,
        residual,
        corner_flags: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firm::CompanyParams;
    use approx::assert_relative_eq;

    pub(crate) fn table2() -> Vec<CompanyParams> {
        vec![
            CompanyParams::new("B1", "Brown", 475.65, 1.13e-6, 10e-6).unwrap(),
            CompanyParams::new("B2", "Brown", 605.38, 1.83e-6, 30e-6).unwrap(),
            CompanyParams::new("B3", "Brown", 665.91, 2.22e-6, 5e-6).unwrap(),
            CompanyParams::new("G1", "Green", 739.90, 2.74e-6, 10e-6).unwrap(),
            CompanyParams::new("G2", "Green", 832.39, 3.46e-6, 30e-6).unwrap(),
            CompanyParams::new("G3", "Green", 951.31, 4.52e-6, 5e-6).unwrap(),
        ]
    }

    fn cap(portfolio: &[CompanyParams]) -> f64 {
        0.4 * portfolio.iter().map(|p| p.bau_emissions()).sum::<f64>()
    }

    // penalty chosen inside both the standing-assumption and interior windows
    const PENALTY: f64 = 426.0;

    #[test]
    fn direct_demand_limits() {
        let p = &table2()[0];
        assert_relative_eq!(
            direct_demand(p, 1e-9),
            p.bau_emissions(),
            max_relative = 1e-6
        );
        assert_relative_eq!(direct_demand(p, p.bau_emissions() / p.rho()), 0.0);
        assert_eq!(direct_demand(p, 1e9), 0.0);
    }

    #[test]
    fn intermediated_zero_margin_boundary() {
        // a loose penalty keeps the zero-margin spot inside the admissible range
        let p = &table2()[0];
        let s = p.bau_emissions() / p.rho();
        let r = intermediated_response(p, s, 500.0).unwrap();
        assert_relative_eq!(r.price, s, max_relative = 1e-12);
        assert_relative_eq!(r.demand, 0.0, epsilon = 1e-3);
        assert!(!r.corner);
    }

    #[test]
    fn intermediated_halves_direct_demand_interior() {
        for p in table2() {
            let s = 100.0;
            let r = intermediated_response(&p, s, PENALTY).unwrap();
            if !r.corner {
                assert_relative_eq!(r.demand, 0.5 * direct_demand(&p, s), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn all_direct_window_single_firm() {
        let p = vec![table2()[0].clone()];
        let penalty = 300.0;
        let w = feasibility_window(&p, penalty, &AccessProfile::all_direct(1)).unwrap();
        let e = p[0].bau_emissions();
        assert_relative_eq!(w.a_min, e - penalty * p[0].rho(), max_relative = 1e-12);
        assert_relative_eq!(w.a_max, e, max_relative = 1e-12);
        assert_relative_eq!(w.interior_a_min, w.a_min, max_relative = 1e-12);
    }

    #[test]
    fn intermediated_window_contains_case_study_cap() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let w = feasibility_window(
            &portfolio,
            PENALTY,
            &AccessProfile::all_intermediated(portfolio.len()),
        )
        .unwrap();
        assert!(
            w.interior_a_min <= a && a < w.a_max,
            "window {w:?} misses cap {a}"
        );
    }

    #[test]
    fn infeasible_penalty_lists_firms() {
        let portfolio = table2();
        let err = feasibility_window(
            &portfolio,
            1000.0,
            &AccessProfile::all_direct(portfolio.len()),
        )
        .unwrap_err();
        assert!(err.to_string().contains("B1"));
    }

    #[test]
    fn spot_scheme_equilibrium_case_study() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let access = AccessProfile::all_direct(portfolio.len());
        let r = equilibrium_spot(&portfolio, a, 400.0, &access).unwrap();
        assert!((r.spot - 310.6).abs() < 0.2, "spot {}", r.spot);
        assert!(r.residual.abs() <= 1e-9 * a);
        // regulator auction revenue
        assert!((r.spot * a / 1e9 - 220.0).abs() < 1.0);
        // B1 demand matches the tax-scheme emissions column
        assert!((r.demands[0] / 1e6 - 115.0).abs() < 1.0);
    }

    #[test]
    fn intermediated_equilibrium_case_study() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let access = AccessProfile::all_intermediated(portfolio.len());
        let r = equilibrium_spot(&portfolio, a, PENALTY, &access).unwrap();
        assert!((r.spot - 103.5).abs() < 0.2, "spot {}", r.spot);
        assert!((r.spot * a / 1e9 - 73.0).abs() < 1.0);
        assert!(r.corner_flags.iter().all(|f| *f == CornerFlag::Interior));
    }

    #[test]
    fn hybrid_degenerates_to_all_direct() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let all_direct = AccessProfile::all_direct(portfolio.len());
        let direct = equilibrium_spot(&portfolio, a, 400.0, &all_direct).unwrap();
        // "hybrid" with an empty intermediated set is the same computation
        let e: f64 = portfolio.iter().map(|p| p.bau_emissions()).sum();
        let rho: f64 = portfolio.iter().map(|p| p.rho()).sum();
        assert_relative_eq!(direct.spot, (e - a) / rho, max_relative = 1e-12);
    }

    #[test]
    fn spot_price_ordering_across_access_structures() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let n = portfolio.len();
        let s_direct = equilibrium_spot(&portfolio, a, PENALTY, &AccessProfile::all_direct(n))
            .unwrap()
            .spot;
        let s_inter =
            equilibrium_spot(&portfolio, a, PENALTY, &AccessProfile::all_intermediated(n))
                .unwrap()
                .spot;
        let mut mixed = vec![AccessMode::Direct; n];
        mixed[0] = AccessMode::Intermediated;
        mixed[2] = AccessMode::Intermediated;
        let s_hybrid = equilibrium_spot(&portfolio, a, PENALTY, &AccessProfile(mixed))
            .unwrap()
            .spot;
        assert!(s_inter < s_hybrid && s_hybrid < s_direct);
    }

    #[test]
    fn closed_form_matches_bisection() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let access = AccessProfile::all_intermediated(portfolio.len());
        let closed = equilibrium_spot(&portfolio, a, PENALTY, &access)
            .unwrap()
            .spot;
        let bisect = super::bisect_clearing(&portfolio, a, PENALTY, &access).unwrap();
        assert_relative_eq!(closed, bisect, max_relative = 1e-9);
    }

    #[test]
    fn corner_band_cleared_by_bisection() {
        // push the supply below the interior bound so a penalty corner binds
        let portfolio = table2();
        let access = AccessProfile::all_intermediated(portfolio.len());
        let w = feasibility_window(&portfolio, PENALTY, &access).unwrap();
        assert!(w.a_min < w.interior_a_min);
        let a = 0.5 * (w.a_min + w.interior_a_min);
        let r = equilibrium_spot(&portfolio, a, PENALTY, &access).unwrap();
        assert!(r.residual.abs() <= 1e-9 * a);
        assert!(r.corner_flags.contains(&CornerFlag::PriceCappedAtPenalty));
    }

    #[test]
    fn supply_outside_window_rejected() {
        let portfolio = table2();
        let access = AccessProfile::all_direct(portfolio.len());
        let e: f64 = portfolio.iter().map(|p| p.bau_emissions()).sum();
        match equilibrium_spot(&portfolio, e * 1.1, 400.0, &access) {
            Err(Error::SupplyOutsideWindow { .. }) => {}
            other => panic!("expected window error, got {other:?}"),
        }
    }
}
