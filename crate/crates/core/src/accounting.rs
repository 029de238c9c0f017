//! Scheme-level accounting: runs a policy scheme end to end for a portfolio
//! and aggregates wealth for companies, financial intermediaries, the
//! regulator, and green-technology providers, plus emissions and GDP.

use serde::{Deserialize, Serialize};

use crate::clearing::{self, AccessMode, AccessProfile, ClearingResult};
use crate::error::{Error, Result};
use crate::firm::{self, CompanyOutcome, CompanyParams};
use crate::risk::{EmissionDistribution, EmissionModel};

/// Policy scheme to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// No carbon pricing; business-as-usual baseline.
    Bau,
    /// Carbon tax per ton emitted.
    Tax,
    /// Certificate auction with direct spot access for every firm.
    Spot,
    /// Certificate auction, every firm served by a financial intermediary.
    Intermediated,
    /// Certificate auction with a per-firm mix of access modes.
    Hybrid,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Bau => "bau",
            Scheme::Tax => "tax",
            Scheme::Spot => "spot",
            Scheme::Intermediated => "intermediated",
            Scheme::Hybrid => "hybrid",
        }
    }
}

/// Instrument settings for one scheme run. Optional fields are derived when
/// absent: the tax rate is calibrated from the certificate supply, the
/// penalty from the emissions target (stochastic) or placed inside the
/// admissible band (deterministic).
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub scheme: Scheme,
    /// Certificate supply `A` (market schemes; also anchors tax calibration).
    pub certificates: Option<f64>,
    /// Tax rate; calibrated from `certificates` when absent.
    pub tax_rate: Option<f64>,
    /// Penalty rate for uncovered emissions.
    pub penalty: Option<f64>,
    /// Expected-emissions target as a multiple of the certificate supply,
    /// used with random emissions. The regulator tolerates expected
    /// emissions slightly above the auctioned supply.
    pub target_ratio: f64,
    /// Per-firm access modes, required for [`Scheme::Hybrid`].
    pub access: Option<AccessProfile>,
}

impl PolicyConfig {
    pub fn tax(tax_rate: f64) -> Self {
        PolicyConfig {
            scheme: Scheme::Tax,
            certificates: None,
            tax_rate: Some(tax_rate),
            penalty: None,
            target_ratio: DEFAULT_TARGET_RATIO,
            access: None,
        }
    }

    pub fn market(scheme: Scheme, certificates: f64, penalty: Option<f64>) -> Self {
        PolicyConfig {
            scheme,
            certificates: Some(certificates),
            tax_rate: None,
            penalty,
            target_ratio: DEFAULT_TARGET_RATIO,
            access: None,
        }
    }
}

/// Default expected-emissions slack over the certificate supply.
pub const DEFAULT_TARGET_RATIO: f64 = 1.05;

/// One firm's slice of a scheme run.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmAccount {
    pub id: String,
    pub label: String,
    pub outcome: CompanyOutcome,
    /// Wealth of the intermediary serving this firm; zero for direct access.
    pub intermediary_wealth: f64,
}

/// Full wealth and emissions accounting of one scheme run.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeAccounts {
    pub scheme: Scheme,
    pub firms: Vec<FirmAccount>,
    /// Tax or penalty collections plus auction revenue.
    pub regulator_wealth: f64,
    /// Green-technology payments collected across firms.
    pub tech_wealth: f64,
    /// Equilibrium spot price (market schemes).
    pub spot: Option<f64>,
    pub tax_rate: Option<f64>,
    pub penalty: Option<f64>,
    pub certificates: Option<f64>,
    /// Expected-emissions target used for stochastic calibration.
    pub emissions_target: Option<f64>,
}

impl SchemeAccounts {
    pub fn companies_wealth(&self) -> f64 {
        self.firms.iter().map(|f| f.outcome.wealth).sum()
    }

    pub fn intermediaries_wealth(&self) -> f64 {
        self.firms.iter().map(|f| f.intermediary_wealth).sum()
    }

    pub fn total_emissions(&self) -> f64 {
        self.firms.iter().map(|f| f.outcome.emissions).sum()
    }

    pub fn total_production(&self) -> f64 {
        self.firms.iter().map(|f| f.outcome.q).sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.firms.iter().map(|f| f.outcome.delta).sum()
    }

    /// Emissions per unit produced.
    pub fn carbon_intensity(&self) -> f64 {
        self.total_emissions() / self.total_production()
    }

    /// Companies + intermediaries + regulator.
    pub fn gdp(&self) -> f64 {
        self.companies_wealth() + self.intermediaries_wealth() + self.regulator_wealth
    }

    /// [`Self::gdp`] plus green-technology providers.
    pub fn gdp_with_tech(&self) -> f64 {
        self.gdp() + self.tech_wealth
    }
}

/// Deterministic tax rate bringing aggregate emissions down to `certificates`:
/// `tau = (E_bau - A) / rho`.
pub fn calibrate_tau(portfolio: &[CompanyParams], certificates: f64) -> Result<f64> {
    let e_bau: f64 = portfolio.iter().map(|p| p.bau_emissions()).sum();
    if !(certificates > 0.0 && certificates < e_bau) {
        return Err(Error::InvalidParameter {
            name: "certificates",
            reason: format!("certificate supply {certificates} must lie in (0, {e_bau})"),
        });
    }
    let rho: f64 = portfolio.iter().map(|p| p.rho()).sum();
    Ok((e_bau - certificates) / rho)
}

fn access_for(scheme: Scheme, n: usize, explicit: Option<&AccessProfile>) -> Result<AccessProfile> {
    match scheme {
        Scheme::Spot => Ok(AccessProfile::all_direct(n)),
        Scheme::Intermediated => Ok(AccessProfile::all_intermediated(n)),
        Scheme::Hybrid => explicit.cloned().ok_or_else(|| Error::InvalidParameter {
            name: "access",
            reason: "hybrid scheme requires a per-firm access profile".into(),
        }),
        _ => Err(Error::InvalidParameter {
            name: "scheme",
            reason: format!("{scheme:?} does not clear a certificate market"),
        }),
    }
}

/// Picks a deterministic penalty strictly inside the admissible band: above
/// the implied interior spot price and any intermediated corner threshold,
/// below every firm's standing-assumption bound. Prefers 1.5x the implied
/// spot, falling back to the band midpoint.
pub fn default_penalty_det(
    portfolio: &[CompanyParams],
    certificates: f64,
    access: &AccessProfile,
) -> Result<f64> {
    let mut e_total = 0.0;
    let mut rho_total = 0.0;
    let mut e_b = 0.0;
    let mut rho_b = 0.0;
    let mut max_ratio_b = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (i, p) in portfolio.iter().enumerate() {
        let e = p.bau_emissions();
        let rho = p.rho();
        e_total += e;
        rho_total += rho;
        hi = hi.min(e / rho).min(p.pi0);
        if access.mode(i) == AccessMode::Intermediated {
            e_b += e;
            rho_b += rho;
            max_ratio_b = max_ratio_b.max(e / rho);
        }
    }
    let spot = (2.0 * (e_total - certificates) - e_b) / (2.0 * rho_total - rho_b);
    if !(spot > 0.0) {
        return Err(Error::InvalidParameter {
            name: "certificates",
            reason: format!("implied spot price {spot} is not positive; supply too large"),
        });
    }
    let lo = if max_ratio_b.is_finite() {
        spot.max(0.5 * (spot + max_ratio_b))
    } else {
        spot
    };
    let hi = hi * (1.0 - 1e-9);
    if lo >= hi {
        return Err(Error::EmptyWindow {
            lower: lo,
            upper: hi,
        });
    }
    let preferred = 1.5 * spot;
    Ok(if preferred > lo && preferred < hi {
        preferred
    } else {
        0.5 * (lo + hi)
    })
}

fn firm_account_det(
    p: &CompanyParams,
    price: f64,
    delta: f64,
    spot: f64,
    penalty: f64,
    intermediated: bool,
) -> Result<FirmAccount> {
    // at price == penalty full coverage and full penalty cost coincide
    let mut outcome = if price < penalty {
        firm::market_optimum(p, price, penalty)?
    } else {
        let mut o = firm::tax_optimum(p, penalty)?;
        o.carbon_price = penalty;
        o
    };
    outcome.delta = delta;
    let intermediary_wealth = if intermediated {
        delta * (price - spot)
    } else {
        0.0
    };
    Ok(FirmAccount {
        id: p.id.clone(),
        label: p.label.clone(),
        outcome,
        intermediary_wealth,
    })
}

fn firm_account_random(
    p: &CompanyParams,
    price: f64,
    delta: f64,
    spot: f64,
    penalty: f64,
    dist: &EmissionDistribution,
    intermediated: bool,
) -> Result<FirmAccount> {
    let mut outcome = if price < penalty {
        firm::market_optimum_random(p, price, penalty, dist)?
    } else {
        // certificate price at the penalty: zero quantile coverage, all
        // emissions settled through the penalty channel
        let mut o = firm::tax_optimum_random(p, penalty, dist.sigma2())?;
        o.carbon_price = penalty;
        o
    };
    outcome.delta = delta;
    let intermediary_wealth = if intermediated {
        delta * (price - spot)
    } else {
        0.0
    };
    Ok(FirmAccount {
        id: p.id.clone(),
        label: p.label.clone(),
        outcome,
        intermediary_wealth,
    })
}

fn market_accounts_det(
    portfolio: &[CompanyParams],
    scheme: Scheme,
    certificates: f64,
    penalty: f64,
    access: &AccessProfile,
) -> Result<SchemeAccounts> {
    let clearing = clearing::equilibrium_spot(portfolio, certificates, penalty, access)?;
    let mut firms = Vec::with_capacity(portfolio.len());
    for (i, p) in portfolio.iter().enumerate() {
        firms.push(firm_account_det(
            p,
            clearing.effective_prices[i],
            clearing.demands[i],
            clearing.spot,
            penalty,
            access.mode(i) == AccessMode::Intermediated,
        )?);
    }
    Ok(with_tech(SchemeAccounts {
        scheme,
        firms,
        regulator_wealth: clearing.spot * certificates,
        tech_wealth: 0.0,
        spot: Some(clearing.spot),
        tax_rate: None,
        penalty: Some(penalty),
        certificates: Some(certificates),
        emissions_target: None,
    }))
}

fn market_accounts_random(
    portfolio: &[CompanyParams],
    scheme: Scheme,
    certificates: f64,
    target: f64,
    penalty: f64,
    dist: &EmissionDistribution,
    access: &AccessProfile,
) -> Result<SchemeAccounts> {
    let problem = clearing::RandomClearingProblem {
        portfolio,
        certificates,
        emissions_target: target,
        penalty,
        dist,
        access,
    };
    let clearing: ClearingResult = clearing::equilibrium_spot_random(&problem)?;
    let mut firms = Vec::with_capacity(portfolio.len());
    for (i, p) in portfolio.iter().enumerate() {
        firms.push(firm_account_random(
            p,
            clearing.effective_prices[i],
            clearing.demands[i],
            clearing.spot,
            penalty,
            dist,
            access.mode(i) == AccessMode::Intermediated,
        )?);
    }
    let regulator_wealth =
        clearing::regulator_wealth_random(&clearing, penalty, dist, certificates)?;
    // technology revenue is quoted at each firm's certificate price; the
    // firm's own green cost responds to the shortfall-adjusted rate instead,
    // so the two differ here (they coincide in every other scheme)
    let sigma2 = dist.sigma2();
    let tech_wealth = portfolio
        .iter()
        .zip(&clearing.effective_prices)
        .map(|(p, price)| price * price / (2.0 * p.gamma * sigma2))
        .sum();
    Ok(SchemeAccounts {
        scheme,
        firms,
        regulator_wealth,
        tech_wealth,
        spot: Some(clearing.spot),
        tax_rate: None,
        penalty: Some(penalty),
        certificates: Some(certificates),
        emissions_target: Some(target),
    })
}

fn with_tech(mut accounts: SchemeAccounts) -> SchemeAccounts {
    accounts.tech_wealth = accounts.firms.iter().map(|f| f.outcome.green_cost).sum();
    accounts
}

/// Runs one scheme for a portfolio under the given emission model.
pub fn run_scheme(
    portfolio: &[CompanyParams],
    policy: &PolicyConfig,
    emissions: &EmissionModel,
) -> Result<SchemeAccounts> {
    if portfolio.is_empty() {
        return Err(Error::InvalidParameter {
            name: "portfolio",
            reason: "portfolio must be non-empty".into(),
        });
    }
    for p in portfolio {
        p.validate()?;
    }
    match policy.scheme {
        Scheme::Bau => {
            let mut firms = Vec::with_capacity(portfolio.len());
            for p in portfolio {
                firms.push(FirmAccount {
                    id: p.id.clone(),
                    label: p.label.clone(),
                    outcome: firm::bau_outcome(p)?,
                    intermediary_wealth: 0.0,
                });
            }
            Ok(SchemeAccounts {
                scheme: Scheme::Bau,
                firms,
                regulator_wealth: 0.0,
                tech_wealth: 0.0,
                spot: None,
                tax_rate: None,
                penalty: None,
                certificates: None,
                emissions_target: None,
            })
        }
        Scheme::Tax => run_tax(portfolio, policy, emissions),
        Scheme::Spot | Scheme::Intermediated | Scheme::Hybrid => {
            run_market(portfolio, policy, emissions)
        }
    }
}

fn run_tax(
    portfolio: &[CompanyParams],
    policy: &PolicyConfig,
    emissions: &EmissionModel,
) -> Result<SchemeAccounts> {
    let (tau, target) = match (policy.tax_rate, policy.certificates) {
        (Some(t), _) => (
            t,
            policy
                .certificates
                .map(|a| a * expected_slack(policy, emissions)),
        ),
        (None, Some(a)) => match emissions {
            EmissionModel::Deterministic => (calibrate_tau(portfolio, a)?, Some(a)),
            EmissionModel::Random(dist) => {
                let target = a * policy.target_ratio;
                (
                    clearing::calibrate_tau_random(portfolio, target, dist.sigma2())?,
                    Some(target),
                )
            }
        },
        (None, None) => {
            return Err(Error::InvalidParameter {
                name: "tax_rate",
                reason: "tax scheme needs a tax rate or a certificate supply to calibrate from"
                    .into(),
            })
        }
    };
    let mut firms = Vec::with_capacity(portfolio.len());
    for p in portfolio {
        let outcome = match emissions {
            EmissionModel::Deterministic => firm::tax_optimum(p, tau)?,
            EmissionModel::Random(dist) => firm::tax_optimum_random(p, tau, dist.sigma2())?,
        };
        firms.push(FirmAccount {
            id: p.id.clone(),
            label: p.label.clone(),
            outcome,
            intermediary_wealth: 0.0,
        });
    }
    let total_emissions: f64 = firms.iter().map(|f| f.outcome.emissions).sum();
    Ok(with_tech(SchemeAccounts {
        scheme: Scheme::Tax,
        firms,
        regulator_wealth: tau * total_emissions,
        tech_wealth: 0.0,
        spot: None,
        tax_rate: Some(tau),
        penalty: None,
        certificates: policy.certificates,
        emissions_target: target,
    }))
}

fn expected_slack(policy: &PolicyConfig, emissions: &EmissionModel) -> f64 {
    match emissions {
        EmissionModel::Deterministic => 1.0,
        EmissionModel::Random(_) => policy.target_ratio,
    }
}

fn run_market(
    portfolio: &[CompanyParams],
    policy: &PolicyConfig,
    emissions: &EmissionModel,
) -> Result<SchemeAccounts> {
    let certificates = policy.certificates.ok_or_else(|| Error::InvalidParameter {
        name: "certificates",
        reason: "market schemes need a certificate supply".into(),
    })?;
    let access = access_for(policy.scheme, portfolio.len(), policy.access.as_ref())?;
    match emissions {
        EmissionModel::Deterministic => {
            let penalty = match policy.penalty {
                Some(l) => l,
                None => default_penalty_det(portfolio, certificates, &access)?,
            };
            market_accounts_det(portfolio, policy.scheme, certificates, penalty, &access)
        }
        EmissionModel::Random(dist) => {
            let target = certificates * policy.target_ratio;
            let penalty = match policy.penalty {
                Some(l) => l,
                None => clearing::calibrate_lambda(portfolio, certificates, target, dist, &access)?,
            };
            market_accounts_random(
                portfolio,
                policy.scheme,
                certificates,
                target,
                penalty,
                dist,
                &access,
            )
        }
    }
}

/// Per-firm outcome of comparing one scheme against another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Gains,
    Loses,
    Neutral,
}

/// One firm's wealth under two schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmComparison {
    pub id: String,
    pub label: String,
    pub wealth_left: f64,
    pub wealth_right: f64,
    /// `wealth_right - wealth_left`.
    pub diff: f64,
    /// Whether the firm gains when moving from the left to the right scheme.
    pub verdict: Verdict,
}

/// Aggregated differences between two scheme runs over the same portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeComparison {
    pub left: Scheme,
    pub right: Scheme,
    pub firms: Vec<FirmComparison>,
    pub d_companies: f64,
    pub d_intermediaries: f64,
    pub d_regulator: f64,
    pub d_tech: f64,
    pub d_gdp: f64,
}

/// Compares two scheme runs firm by firm. Both must cover the same firms in
/// the same order.
pub fn compare_schemes(left: &SchemeAccounts, right: &SchemeAccounts) -> Result<SchemeComparison> {
    if left.firms.len() != right.firms.len()
        || left
            .firms
            .iter()
            .zip(&right.firms)
            .any(|(a, b)| a.id != b.id)
    {
        return Err(Error::Comparison(
            "scheme runs cover different portfolios".into(),
        ));
    }
    let firms = left
        .firms
        .iter()
        .zip(&right.firms)
        .map(|(a, b)| {
            let diff = b.outcome.wealth - a.outcome.wealth;
            let scale = a.outcome.wealth.abs().max(b.outcome.wealth.abs()).max(1.0);
            let verdict = if diff > 1e-9 * scale {
                Verdict::Gains
            } else if diff < -1e-9 * scale {
                Verdict::Loses
            } else {
                Verdict::Neutral
            };
            FirmComparison {
                id: a.id.clone(),
                label: a.label.clone(),
                wealth_left: a.outcome.wealth,
                wealth_right: b.outcome.wealth,
                diff,
                verdict,
            }
        })
        .collect();
    Ok(SchemeComparison {
        left: left.scheme,
        right: right.scheme,
        firms,
        d_companies: right.companies_wealth() - left.companies_wealth(),
        d_intermediaries: right.intermediaries_wealth() - left.intermediaries_wealth(),
        d_regulator: right.regulator_wealth - left.regulator_wealth,
        d_tech: right.tech_wealth - left.tech_wealth,
        d_gdp: right.gdp() - left.gdp(),
    })
}

/// Predicts, from primitives alone, whether each firm gains when moving from
/// the calibrated tax scheme to the purely intermediated market scheme with
/// the same certificate supply.
///
/// A firm gains exactly when its expected post-abatement emissions per unit
/// of price sensitivity stay below the portfolio average `A / rho`; firms
/// squeezed harder by their intermediary land above the threshold and lose.
pub fn predict_intermediated_winners(
    portfolio: &[CompanyParams],
    clearing: &ClearingResult,
    certificates: f64,
) -> Vec<Verdict> {
    let rho_total: f64 = portfolio.iter().map(|p| p.rho()).sum();
    let threshold = certificates / rho_total;
    portfolio
        .iter()
        .zip(&clearing.expected_emissions)
        .map(|(p, e_mar)| {
            let ratio = e_mar / p.rho();
            if ratio < threshold * (1.0 - 1e-9) {
                Verdict::Gains
            } else if ratio > threshold * (1.0 + 1e-9) {
                Verdict::Loses
            } else {
                Verdict::Neutral
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table2() -> Vec<CompanyParams> {
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

    #[test]
    fn tau_calibration_case_study() {
        let portfolio = table2();
        let tau = calibrate_tau(&portfolio, cap(&portfolio)).unwrap();
        assert!((tau - 310.6).abs() < 0.1, "tau {tau}");
    }

    #[test]
    fn tax_accounts_case_study() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let policy = PolicyConfig {
            scheme: Scheme::Tax,
            certificates: Some(a),
            tax_rate: None,
            penalty: None,
            target_ratio: DEFAULT_TARGET_RATIO,
            access: None,
        };
        let acc = run_scheme(&portfolio, &policy, &EmissionModel::Deterministic).unwrap();
        assert_relative_eq!(acc.total_emissions(), a, max_relative = 1e-9);
        assert!((acc.regulator_wealth / 1e9 - 220.0).abs() < 0.5);
        assert!((acc.tech_wealth / 1e9 - 32.0).abs() < 0.5);
        assert!((acc.gdp_with_tech() / 1e9 - 467.0).abs() < 1.0);
    }

    #[test]
    fn tax_and_spot_agree_deterministically() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let tax_policy = PolicyConfig {
            scheme: Scheme::Tax,
            certificates: Some(a),
            tax_rate: None,
            penalty: None,
            target_ratio: DEFAULT_TARGET_RATIO,
            access: None,
        };
        let tax = run_scheme(&portfolio, &tax_policy, &EmissionModel::Deterministic).unwrap();
        let spot_policy = PolicyConfig::market(Scheme::Spot, a, None);
        let spot = run_scheme(&portfolio, &spot_policy, &EmissionModel::Deterministic).unwrap();
        assert_relative_eq!(
            spot.spot.unwrap(),
            tax.tax_rate.unwrap(),
            max_relative = 1e-9
        );
        for (t, s) in tax.firms.iter().zip(&spot.firms) {
            assert_relative_eq!(t.outcome.wealth, s.outcome.wealth, max_relative = 1e-9);
        }
        assert_relative_eq!(
            tax.regulator_wealth,
            spot.regulator_wealth,
            max_relative = 1e-9
        );
    }

    #[test]
    fn intermediated_accounts_case_study() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let policy = PolicyConfig::market(Scheme::Intermediated, a, Some(426.0));
        let acc = run_scheme(&portfolio, &policy, &EmissionModel::Deterministic).unwrap();
        assert!((acc.spot.unwrap() - 103.5).abs() < 0.2);
        assert!((acc.regulator_wealth / 1e9 - 73.0).abs() < 0.5);
        assert!((acc.intermediaries_wealth() / 1e9 - 154.0).abs() < 1.0);
        assert!((acc.gdp_with_tech() / 1e9 - 462.0).abs() < 1.0);
        // regulator identity: auction revenue = tau A - A^2 / rho
        let tau = calibrate_tau(&portfolio, a).unwrap();
        let rho: f64 = portfolio.iter().map(|p| p.rho()).sum();
        assert_relative_eq!(
            acc.regulator_wealth,
            tau * a - a * a / rho,
            max_relative = 1e-9
        );
    }

    #[test]
    fn intermediated_winner_prediction_matches_realized_diff() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let tax_policy = PolicyConfig {
            scheme: Scheme::Tax,
            certificates: Some(a),
            tax_rate: None,
            penalty: None,
            target_ratio: DEFAULT_TARGET_RATIO,
            access: None,
        };
        let tax = run_scheme(&portfolio, &tax_policy, &EmissionModel::Deterministic).unwrap();
        let policy = PolicyConfig::market(Scheme::Intermediated, a, Some(426.0));
        let mar = run_scheme(&portfolio, &policy, &EmissionModel::Deterministic).unwrap();
        let cmp = compare_schemes(&tax, &mar).unwrap();
        let clearing = clearing::equilibrium_spot(
            &portfolio,
            a,
            426.0,
            &AccessProfile::all_intermediated(portfolio.len()),
        )
        .unwrap();
        let predicted = predict_intermediated_winners(&portfolio, &clearing, a);
        for (c, p) in cmp.firms.iter().zip(&predicted) {
            assert_eq!(c.verdict, *p, "firm {}", c.id);
        }
        // case-study pattern: B1, B3, G3 gain; B2, G1, G2 lose
        let gains: Vec<&str> = cmp
            .firms
            .iter()
            .filter(|f| f.verdict == Verdict::Gains)
            .map(|f| f.id.as_str())
            .collect();
        assert_eq!(gains, ["B1", "B3", "G3"]);
    }

    #[test]
    fn random_tax_accounts_case_study() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let dist = EmissionDistribution::lognormal(1.0).unwrap();
        let policy = PolicyConfig {
            scheme: Scheme::Tax,
            certificates: Some(a),
            tax_rate: None,
            penalty: None,
            target_ratio: DEFAULT_TARGET_RATIO,
            access: None,
        };
        let acc = run_scheme(&portfolio, &policy, &EmissionModel::Random(dist)).unwrap();
        assert!((acc.tax_rate.unwrap() - 342.5).abs() < 0.2);
        assert_relative_eq!(acc.total_emissions(), 1.05 * a, max_relative = 1e-9);
        assert!((acc.regulator_wealth / 1e9 - 255.0).abs() < 0.5);
        assert!((acc.tech_wealth / 1e9 - 14.0).abs() < 0.5);
        assert!((acc.gdp_with_tech() / 1e9 - 438.0).abs() < 1.0);
    }

    #[test]
    fn random_intermediated_accounts_case_study() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let dist = EmissionDistribution::lognormal(1.0).unwrap();
        let policy = PolicyConfig::market(Scheme::Intermediated, a, None);
        let acc = run_scheme(&portfolio, &policy, &EmissionModel::Random(dist)).unwrap();
        assert_relative_eq!(acc.total_emissions(), 1.05 * a, max_relative = 1e-5);
        assert!(
            (acc.regulator_wealth / 1e9 - 186.0).abs() < 1.0,
            "{}",
            acc.regulator_wealth / 1e9
        );
        assert!((acc.intermediaries_wealth() / 1e9 - 75.0).abs() < 1.0);
        assert!((acc.tech_wealth / 1e9 - 3.0).abs() < 0.5);
        assert!((acc.gdp_with_tech() / 1e9 - 426.0).abs() < 1.5);
    }

    #[test]
    fn hybrid_requires_access_profile() {
        let portfolio = table2();
        let policy = PolicyConfig::market(Scheme::Hybrid, cap(&portfolio), Some(426.0));
        assert!(run_scheme(&portfolio, &policy, &EmissionModel::Deterministic).is_err());
    }

    #[test]
    fn comparison_rejects_mismatched_portfolios() {
        let portfolio = table2();
        let a = cap(&portfolio);
        let policy = PolicyConfig::market(Scheme::Spot, a, None);
        let spot = run_scheme(&portfolio, &policy, &EmissionModel::Deterministic).unwrap();
        let sub = run_scheme(
            &portfolio[..3],
            &PolicyConfig::market(Scheme::Spot, cap(&portfolio[..3]), None),
            &EmissionModel::Deterministic,
        )
        .unwrap();
        assert!(compare_schemes(&spot, &sub).is_err());
    }
}
