//! Certificate-market clearing with random emissions: the per-firm
//! intermediated-price first-order condition, the outer equilibrium spot
//! root-find, symmetric closed forms, and penalty calibration to an expected
//! emissions target.

use crate::clearing::det::{AccessMode, AccessProfile, ClearingResult, CornerFlag};
use crate::error::{Error, Result};
use crate::firm::{self, CompanyParams};
use crate::risk::EmissionDistribution;

/// One stochastic clearing instance.
#[derive(Debug, Clone)]
pub struct RandomClearingProblem<'a> {
    pub portfolio: &'a [CompanyParams],
    /// Certificates auctioned (`A`).
    pub certificates: f64,
    /// Expected emissions tolerated by the regulator (`> certificates`).
    pub emissions_target: f64,
    /// Penalty rate per ton of uncovered emissions.
    pub penalty: f64,
    pub dist: &'a EmissionDistribution,
    pub access: &'a AccessProfile,
}

impl RandomClearingProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.portfolio.is_empty() {
            return Err(Error::InvalidParameter {
                name: "portfolio",
                reason: "portfolio must be non-empty".into(),
            });
        }
        if self.access.len() != self.portfolio.len() {
            return Err(Error::InvalidParameter {
                name: "access",
                reason: "access profile must cover every firm".into(),
            });
        }
        if !(self.certificates > 0.0 && self.emissions_target > self.certificates) {
            return Err(Error::InvalidParameter {
                name: "emissions_target",
                reason: format!(
                    "need emissions target {} strictly above certificates {} > 0",
                    self.emissions_target, self.certificates
                ),
            });
        }
        if !(self.penalty > 0.0) {
            return Err(Error::InvalidParameter {
                name: "penalty",
                reason: "penalty must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Certificate demand of one firm at price `price`, floored at zero.
fn demand(
    params: &CompanyParams,
    price: f64,
    penalty: f64,
    dist: &EmissionDistribution,
) -> Result<f64> {
    if price >= penalty {
        return Ok(0.0); // VaR_1 = essential infimum = 0 on (0, inf) support
    }
    Ok(firm::demand_raw(params, price, penalty, dist)?.max(0.0))
}

/// Residual of the intermediary's first-order condition
/// `delta'(P) (P - S) + delta(P)`.
fn foc_residual(
    params: &CompanyParams,
    price: f64,
    spot: f64,
    penalty: f64,
    dist: &EmissionDistribution,
) -> Result<f64> {
    let slope = firm::demand_derivative_random(params, price, penalty, dist)?;
    Ok(slope * (price - spot) + firm::demand_raw(params, price, penalty, dist)?)
}

/// Solves for the intermediated price maximizing `delta(P) (P - spot)` on
/// `[spot, penalty]`. Returns `penalty` for `spot = penalty` (singleton
/// interval); otherwise brackets the unique root of the first-order
/// condition and bisects.
pub fn intermediated_price_random(
    params: &CompanyParams,
    spot: f64,
    penalty: f64,
    dist: &EmissionDistribution,
) -> Result<f64> {
    if !(spot > 0.0 && spot <= penalty) {
        return Err(Error::InvalidParameter {
            name: "spot",
            reason: format!(
                "spot must satisfy 0 < spot <= penalty, got spot {spot}, penalty {penalty}"
            ),
        });
    }
    if penalty - spot <= penalty * 1e-12 {
        return Ok(penalty);
    }
    let mut lo = spot * (1.0 + 1e-12);
    let mut hi = penalty * (1.0 - 1e-12);
    let r_lo = foc_residual(params, lo, spot, penalty, dist)?;
    if r_lo <= 0.0 {
        // demand already non-positive just above the spot: the margin cannot
        // grow, the maximizer collapses onto the spot price
        return Ok(lo);
    }
    // scan for a sign change; the residual is continuous and starts positive
    let mut bracket = None;
    let scan = 64;
    let mut prev = lo;
    for k in 1..=scan {
        let p = lo + (hi - lo) * k as f64 / scan as f64;
        let r = foc_residual(params, p, spot, penalty, dist)?;
        if r <= 0.0 {
            bracket = Some((prev, p));
            break;
        }
        prev = p;
    }
    let (mut a, mut b) = bracket.ok_or_else(|| {
        Error::Solver(format!(
            "intermediary FOC for firm {} does not change sign on [{spot}, {penalty}]",
            params.id
        ))
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let r = foc_residual(params, mid, spot, penalty, dist)?;
        if r > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= penalty * 1e-14 {
            break;
        }
    }
    lo = a;
    hi = b;
    Ok(0.5 * (lo + hi))
}

fn effective_price(
    params: &CompanyParams,
    spot: f64,
    penalty: f64,
    dist: &EmissionDistribution,
    mode: AccessMode,
) -> Result<f64> {
    match mode {
        AccessMode::Direct => Ok(spot),
        AccessMode::Intermediated => intermediated_price_random(params, spot, penalty, dist),
    }
}

fn aggregate_demand_random(problem: &RandomClearingProblem<'_>, spot: f64) -> Result<f64> {
    let mut total = 0.0;
    for (i, p) in problem.portfolio.iter().enumerate() {
        let price = effective_price(
            p,
            spot,
            problem.penalty,
            problem.dist,
            problem.access.mode(i),
        )?;
        total += demand(p, price, problem.penalty, problem.dist)?;
    }
    Ok(total)
}

/// Solves the stochastic clearing problem: the unique spot price in
/// `(0, penalty]` at which aggregate certificate demand equals the supply.
pub fn equilibrium_spot_random(problem: &RandomClearingProblem<'_>) -> Result<ClearingResult> {
    problem.validate()?;
    let penalty = problem.penalty;
    let supply = problem.certificates;

    let lo0 = penalty * 1e-9;
    let demand_hi = aggregate_demand_random(problem, lo0)?;
    let demand_lo = aggregate_demand_random(problem, penalty)?;
    if !(demand_lo <= supply && supply < demand_hi) {
        return Err(Error::SupplyOutsideWindow {
            supply,
            lower: demand_lo,
            upper: demand_hi,
        });
    }

    let mut lo = lo0;
    let mut hi = penalty;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if aggregate_demand_random(problem, mid)? > supply {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= penalty * 1e-14 {
            break;
        }
    }
    let spot = 0.5 * (lo + hi);

    let n = problem.portfolio.len();
    let mut prices = Vec::with_capacity(n);
    let mut demands = Vec::with_capacity(n);
    let mut emissions = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for (i, p) in problem.portfolio.iter().enumerate() {
        let price = effective_price(p, spot, penalty, problem.dist, problem.access.mode(i))?;
        let d = demand(p, price, penalty, problem.dist)?;
        let e = firm::expected_emissions_raw(p, price, penalty, problem.dist)?;
        prices.push(price);
        demands.push(d);
        emissions.push(e);
        flags.push(if price >= penalty {
            CornerFlag::PriceCappedAtPenalty
        } else {
            CornerFlag::Interior
        });
    }
    let total: f64 = demands.iter().sum();
    let residual = total - supply;
    if residual.abs() > 1e-9 * supply.max(1.0) {
        return Err(Error::Solver(format!(
            "stochastic clearing residual {residual:.6e} exceeds tolerance"
        )));
    }
    Ok(ClearingResult {
        spot,
        effective_prices: prices,
        demands,
        expected_emissions: emissions,
        residual,
        corner_flags: flags,
    })
}

/// Tax rate hitting the expected emissions target:
/// `tau = (E_bau - target) / sum(rho_hat)`.
pub fn calibrate_tau_random(portfolio: &[CompanyParams], target: f64, sigma2: f64) -> Result<f64> {
    let e_bau: f64 = portfolio.iter().map(|p| p.bau_emissions()).sum();
    if !(target > 0.0 && target < e_bau) {
        return Err(Error::InvalidParameter {
            name: "target",
            reason: format!("expected emissions target {target} must lie in (0, {e_bau})"),
        });
    }
    let rho_hat: f64 = portfolio.iter().map(|p| p.rho_hat(sigma2)).sum();
    Ok((e_bau - target) / rho_hat)
}

/// Total expected emissions at the clearing equilibrium for a given penalty.
pub fn equilibrium_emissions(
    portfolio: &[CompanyParams],
    certificates: f64,
    emissions_target: f64,
    penalty: f64,
    dist: &EmissionDistribution,
    access: &AccessProfile,
) -> Result<f64> {
    let problem = RandomClearingProblem {
        portfolio,
        certificates,
        emissions_target,
        penalty,
        dist,
        access,
    };
    Ok(equilibrium_spot_random(&problem)?.total_emissions())
}

/// Calibrates the penalty so that equilibrium expected emissions hit the
/// target within 1e-6 relative. Expected emissions decrease in the penalty;
/// the bracket starts from the spot-scheme closed-form estimate and expands
/// geometrically.
pub fn calibrate_lambda(
    portfolio: &[CompanyParams],
    certificates: f64,
    target: f64,
    dist: &EmissionDistribution,
    access: &AccessProfile,
) -> Result<f64> {
    if !(target > certificates) {
        return Err(Error::InvalidParameter {
            name: "target",
            reason: format!("target {target} must exceed certificates {certificates}"),
        });
    }
    let sigma2 = dist.sigma2();
    let tau = calibrate_tau_random(portfolio, target, sigma2)?;
    let eps = dist.survival(certificates / target)?;
    let lambda0 = tau / (eps * dist.es(eps)?);

    let emissions_at = |lambda: f64| -> Result<Option<f64>> {
        match equilibrium_emissions(portfolio, certificates, target, lambda, dist, access) {
            Ok(e) => Ok(Some(e)),
            Err(Error::SupplyOutsideWindow { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let mut lo = lambda0 / 10.0;
    let mut hi = lambda0 * 10.0;
    // emissions(lo) should overshoot the target, emissions(hi) undershoot
    let mut expansions = 0;
    let (mut e_lo, mut e_hi);
    loop {
        e_lo = emissions_at(lo)?;
        e_hi = emissions_at(hi)?;
        let lo_over = e_lo.map(|e| e > target).unwrap_or(true);
        let hi_under = e_hi.map(|e| e < target).unwrap_or(false);
        if lo_over && hi_under {
            break;
        }
        if expansions >= 4 {
            return Err(Error::Calibration(format!(
                "no penalty in [{lo:.3e}, {hi:.3e}] reaches expected emissions {target:.6e}; \
                 achievable range [{:?}, {:?}]",
                e_hi, e_lo
            )));
        }
        if !lo_over {
            lo /= 10.0;
        }
        if !hi_under {
            hi *= 10.0;
        }
        expansions += 1;
    }

    for _ in 0..200 {
        // geometric midpoint on the log axis
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        match emissions_at(mid)? {
            Some(e) if e > target => lo = mid,
            Some(_) => hi = mid,
            None => lo = mid, // infeasibly low penalty: demand window missed
        }
        if (hi - lo) <= 1e-9 * hi {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let achieved = equilibrium_emissions(portfolio, certificates, target, lambda, dist, access)?;
    if ((achieved - target) / target).abs() > 1e-6 {
        return Err(Error::Calibration(format!(
            "penalty search converged to {lambda} but emissions {achieved:.6e} miss target {target:.6e}"
        )));
    }
    Ok(lambda)
}

/// Regulator wealth under a stochastic market equilibrium: expected penalty
/// collections plus auction revenue,
/// `sum_i (ES_i - VaR_i) P_i E_mar_i + S A`.
pub fn regulator_wealth_random(
    clearing: &ClearingResult,
    penalty: f64,
    dist: &EmissionDistribution,
    certificates: f64,
) -> Result<f64> {
    let mut penalties = 0.0;
    for (price, e_mar) in clearing
        .effective_prices
        .iter()
        .zip(&clearing.expected_emissions)
    {
        let eps = (price / penalty).min(1.0);
        let es = dist.es(eps)?;
        let var = dist.var(eps)?;
        penalties += (es - var) * price * e_mar;
    }
    Ok(penalties + clearing.spot * certificates)
}

/// Closed-form symmetric (identical-firm) purely intermediated equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEquilibrium {
    pub spot: f64,
    pub intermediated_price: f64,
    /// Wealth of the intermediary serving one firm.
    pub intermediary_wealth: f64,
}

/// `N` identical firms, purely intermediated: spot and intermediated price
/// from the survival-function closed form.
pub fn symmetric_intermediated_closed_form(
    params: &CompanyParams,
    n: usize,
    certificates: f64,
    target: f64,
    penalty: f64,
    dist: &EmissionDistribution,
) -> Result<SymmetricEquilibrium> {
    let ratio = certificates / target;
    let g = dist.survival(ratio)?;
    let g_prime = dist.survival_derivative(ratio)?;
    let rho_hat_1 = params.rho_hat(dist.sigma2());
    let price = penalty * g;
    let n_f = n as f64;
    let denom_spot = penalty * n_f * rho_hat_1 * ratio * ratio - target / g_prime;
    let spot = price - penalty * certificates / denom_spot;
    let denom_wealth = penalty * rho_hat_1 * (n_f * ratio).powi(2) - n_f * target / g_prime;
    let intermediary_wealth = penalty * certificates * certificates / denom_wealth;
    Ok(SymmetricEquilibrium {
        spot,
        intermediated_price: price,
        intermediary_wealth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lognormal() -> EmissionDistribution {
        EmissionDistribution::lognormal(1.0).unwrap()
    }

    fn symmetric_firm() -> CompanyParams {
        CompanyParams::new("S1", "Sym", 475.65, 1.13e-6, 10e-6).unwrap()
    }

    #[test]
    fn singleton_interval_returns_penalty() {
        let p = symmetric_firm();
        let d = lognormal();
        assert_eq!(
            intermediated_price_random(&p, 480.0, 480.0, &d).unwrap(),
            480.0
        );
    }

    #[test]
    fn foc_price_matches_grid_argmax() {
        let p = symmetric_firm();
        let d = lognormal();
        let (spot, penalty) = (150.0, 483.0);
        let price = intermediated_price_random(&p, spot, penalty, &d).unwrap();
        // brute-force the intermediary objective
        let mut best = (0.0, f64::NEG_INFINITY);
        let grid = 100_000;
        for k in 0..=grid {
            let pr = spot + (penalty - spot) * k as f64 / grid as f64;
            let dem = demand(&p, pr, penalty, &d).unwrap();
            let w = dem * (pr - spot);
            if w > best.1 {
                best = (pr, w);
            }
        }
        assert!((price - best.0).abs() <= 2.0 * (penalty - spot) / grid as f64);
    }

    #[test]
    fn symmetric_closed_form_matches_solver() {
        let p = symmetric_firm();
        let d = lognormal();
        for n in [1usize, 2, 6] {
            let portfolio: Vec<CompanyParams> = (0..n)
                .map(|i| {
                    let mut q = p.clone();
                    q.id = format!("S{i}");
                    q
                })
                .collect();
            let a = 0.4 * portfolio.iter().map(|f| f.bau_emissions()).sum::<f64>();
            let target = 1.05 * a;
            let access = AccessProfile::all_intermediated(n);
            // the closed form presumes the penalty hits the emissions target
            let penalty = calibrate_lambda(&portfolio, a, target, &d, &access).unwrap();
            let closed =
                symmetric_intermediated_closed_form(&p, n, a, target, penalty, &d).unwrap();
            let problem = RandomClearingProblem {
                portfolio: &portfolio,
                certificates: a,
                emissions_target: target,
                penalty,
                dist: &d,
                access: &access,
            };
            let r = equilibrium_spot_random(&problem).unwrap();
            // tolerance limited by the 1e-6 relative calibration target
            assert_relative_eq!(r.spot, closed.spot, max_relative = 1e-5);
            for price in &r.effective_prices {
                assert_relative_eq!(*price, closed.intermediated_price, max_relative = 1e-5);
            }
            let wf = r.demands[0] * (r.effective_prices[0] - r.spot);
            assert_relative_eq!(wf, closed.intermediary_wealth, max_relative = 1e-5);
        }
    }

    #[test]
    fn spot_scheme_closed_form_random() {
        // all-direct: S = lambda G(A / target) once lambda is calibrated
        let p = symmetric_firm();
        let d = lognormal();
        let portfolio = vec![p.clone()];
        let a = 0.4 * p.bau_emissions();
        let target = 1.05 * a;
        let access = AccessProfile::all_direct(1);
        let lambda = calibrate_lambda(&portfolio, a, target, &d, &access).unwrap();
        let problem = RandomClearingProblem {
            portfolio: &portfolio,
            certificates: a,
            emissions_target: target,
            penalty: lambda,
            dist: &d,
            access: &access,
        };
        let r = equilibrium_spot_random(&problem).unwrap();
        let g = d.survival(a / target).unwrap();
        assert_relative_eq!(r.spot, lambda * g, max_relative = 1e-6);
        let tau = calibrate_tau_random(&portfolio, target, d.sigma2()).unwrap();
        assert_relative_eq!(r.spot, tau / d.es(g).unwrap(), max_relative = 1e-6);
        assert_relative_eq!(r.total_emissions(), target, max_relative = 1e-6);
    }

    #[test]
    fn aggregate_demand_non_increasing_in_spot() {
        let d = lognormal();
        let portfolio = vec![symmetric_firm()];
        let access = AccessProfile::all_intermediated(1);
        let problem = RandomClearingProblem {
            portfolio: &portfolio,
            certificates: 1.0,
            emissions_target: 2.0,
            penalty: 483.0,
            dist: &d,
            access: &access,
        };
        let mut prev = f64::INFINITY;
        for k in 1..40 {
            let s = 483.0 * k as f64 / 40.0;
            let dem = aggregate_demand_random(&problem, s).unwrap();
            assert!(dem <= prev + 1e-6 * prev.abs().max(1.0));
            prev = dem;
        }
    }

    #[test]
    fn degenerate_target_rejected() {
        let d = lognormal();
        let portfolio = vec![symmetric_firm()];
        let access = AccessProfile::all_direct(1);
        assert!(calibrate_lambda(&portfolio, 100.0, 100.0, &d, &access).is_err());
    }

    #[test]
    fn regulator_wealth_deterministic_limit() {
        // ES = VaR = 1 collapses the penalty term
        let clearing = ClearingResult {
            spot: 100.0,
            effective_prices: vec![],
            demands: vec![],
            expected_emissions: vec![],
            residual: 0.0,
            corner_flags: vec![],
        };
        let d = lognormal();
        let w = regulator_wealth_random(&clearing, 483.0, &d, 50.0).unwrap();
        assert_relative_eq!(w, 100.0 * 50.0);
    }
}
