//! Brute-force verification oracles. Everything here re-optimizes raw wealth
//! objectives on grids (with Monte-Carlo expectation in the stochastic case)
//! without touching the closed forms, so the analytic results can be checked
//! against an independent computation.

use crate::clearing::{AccessProfile, ClearingResult};
use crate::error::{Error, Result};
use crate::firm::{self, CompanyOutcome, CompanyParams};
use crate::risk::{EmissionDistribution, EmissionModel};

/// Grid and Monte-Carlo settings for the oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Grid points per axis.
    pub grid_points: usize,
    /// Zoom passes after the coarse grid.
    pub refinement_rounds: usize,
    /// Monte-Carlo paths for stochastic expectations.
    pub mc_paths: usize,
    pub mc_seed: u64,
    /// Relative tolerance the caller intends to verify against.
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            grid_points: 201,
            refinement_rounds: 1,
            mc_paths: 100_000,
            mc_seed: 7,
            tolerance: 1e-6,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 51 {
            return Err(Error::InvalidParameter {
                name: "grid_points",
                reason: format!(
                    "need at least 51 grid points per axis, got {}",
                    self.grid_points
                ),
            });
        }
        if self.refinement_rounds < 1 {
            return Err(Error::InvalidParameter {
                name: "refinement_rounds",
                reason: "need at least one refinement round".into(),
            });
        }
        if self.mc_paths < 10_000 {
            return Err(Error::InvalidParameter {
                name: "mc_paths",
                reason: format!(
                    "need at least 10000 Monte-Carlo paths, got {}",
                    self.mc_paths
                ),
            });
        }
        Ok(())
    }
}

/// Carbon pricing faced by the firm under verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pricing {
    Tax { tau: f64 },
    Market { price: f64, penalty: f64 },
}

/// Oracle optimum plus the Monte-Carlo uncertainty of its wealth estimate
/// (zero in deterministic mode).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub outcome: CompanyOutcome,
    pub wealth_std_error: f64,
}

/// Sample statistics that the expected wealth depends on.
struct SampleStats {
    /// The draws themselves, for the standard-error pass.
    sample: Vec<f64>,
    mean: f64,
    second_moment: f64,
    /// Empirical quantile at the market coverage level, if any.
    var: f64,
    /// Mean positive part above `var`.
    tail: f64,
}

fn sample_stats(
    dist: &EmissionDistribution,
    cfg: &OracleConfig,
    eps: Option<f64>,
) -> Result<SampleStats> {
    let sample = dist.mc_sample(cfg.mc_paths, cfg.mc_seed)?;
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let second_moment = sample.iter().map(|x| x * x).sum::<f64>() / n;
    let (var, tail) = match eps {
        Some(eps) => {
            let mut sorted = sample.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = ((1.0 - eps) * n).ceil() as usize;
            let v = sorted[k.saturating_sub(1).min(sorted.len() - 1)];
            let t = sample.iter().map(|x| (x - v).max(0.0)).sum::<f64>() / n;
            (v, t)
        }
        None => (0.0, 0.0),
    };
    Ok(SampleStats {
        sample,
        mean,
        second_moment,
        var,
        tail,
    })
}

/// Expected wealth at `(q, factor)` given precomputed sample statistics; the
/// certificate demand is resolved analytically inside.
fn objective(
    params: &CompanyParams,
    pricing: Pricing,
    stats: Option<&SampleStats>,
    q: f64,
    factor: f64,
) -> f64 {
    let raw = params.pi0 * q - params.pi1 * q * q / 2.0;
    let reduced = (1.0 - factor) * q;
    match stats {
        None => {
            let green = params.gamma / 2.0 * reduced * reduced;
            let carbon = match pricing {
                Pricing::Tax { tau } => tau * factor * q,
                // full coverage or full penalty, whichever channel is cheaper
                Pricing::Market { price, penalty } => price.min(penalty) * factor * q,
            };
            raw - green - carbon
        }
        Some(s) => {
            let green = params.gamma / 2.0 * reduced * reduced * s.second_moment;
            let carbon = match pricing {
                Pricing::Tax { tau } => tau * factor * q * s.mean,
                Pricing::Market { price, penalty } => {
                    // delta = factor * q * empirical quantile
                    factor * q * (price * s.var + penalty * s.tail)
                }
            };
            raw - green - carbon
        }
    }
}

/// Grid-refinement maximization of the raw wealth objective over production
/// and abatement factor, with Monte-Carlo expectations in stochastic mode.
pub fn oracle_firm_optimum(
    params: &CompanyParams,
    pricing: Pricing,
    model: &EmissionModel,
    cfg: &OracleConfig,
) -> Result<OracleOutcome> {
    cfg.validate()?;
    params.validate()?;
    let stats = match model {
        EmissionModel::Deterministic => None,
        EmissionModel::Random(dist) => {
            let eps = match pricing {
                Pricing::Tax { .. } => None,
                Pricing::Market { price, penalty } => Some((price / penalty).clamp(0.0, 1.0)),
            };
            Some(sample_stats(dist, cfg, eps)?)
        }
    };

    let g = cfg.grid_points;
    let (mut q_lo, mut q_hi) = (0.0, 1.2 * params.q_bau());
    let (mut f_lo, mut f_hi) = (1e-9, 1.0);
    let mut best = (0.0, 1.0, f64::NEG_INFINITY);
    for _round in 0..=cfg.refinement_rounds {
        let dq = (q_hi - q_lo) / (g - 1) as f64;
        let df = (f_hi - f_lo) / (g - 1) as f64;
        best = (q_lo, f_lo, f64::NEG_INFINITY);
        for i in 0..g {
            let q = q_lo + dq * i as f64;
            for j in 0..g {
                let f = f_lo + df * j as f64;
                let w = objective(params, pricing, stats.as_ref(), q, f);
                if w > best.2 {
                    best = (q, f, w);
                }
            }
        }
        // zoom to a 4-cell window around the incumbent
        q_lo = (best.0 - 2.0 * dq).max(0.0);
        q_hi = (best.0 + 2.0 * dq).min(1.2 * params.q_bau());
        f_lo = (best.1 - 2.0 * df).max(1e-9);
        f_hi = (best.1 + 2.0 * df).min(1.0);
    }

    let (q, factor, wealth) = best;
    let (delta, emissions, green_cost, carbon_price, std_error) = match (&stats, pricing) {
        (None, Pricing::Tax { tau }) => (
            0.0,
            factor * q,
            params.gamma / 2.0 * ((1.0 - factor) * q).powi(2),
            tau,
            0.0,
        ),
        (None, Pricing::Market { price, .. }) => (
            factor * q,
            factor * q,
            params.gamma / 2.0 * ((1.0 - factor) * q).powi(2),
            price,
            0.0,
        ),
        (Some(s), _) => {
            let reduced = (1.0 - factor) * q;
            let green = params.gamma / 2.0 * reduced * reduced * s.second_moment;
            let (delta, price) = match pricing {
                Pricing::Tax { tau } => (0.0, tau),
                Pricing::Market { price, .. } => (factor * q * s.var, price),
            };
            // per-path wealth for the standard error of the MC mean
            let raw = params.pi0 * q - params.pi1 * q * q / 2.0;
            let n = s.sample.len() as f64;
            let per_path = |x: f64| {
                let green_x = params.gamma / 2.0 * (reduced * x).powi(2);
                let carbon_x = match pricing {
                    Pricing::Tax { tau } => tau * factor * q * x,
                    Pricing::Market { price, penalty } => {
                        price * delta + penalty * (factor * q * x - delta).max(0.0)
                    }
                };
                raw - green_x - carbon_x
            };
            let mean_w = s.sample.iter().map(|&x| per_path(x)).sum::<f64>() / n;
            let var_w = s
                .sample
                .iter()
                .map(|&x| {
                    let d = per_path(x) - mean_w;
                    d * d
                })
                .sum::<f64>()
                / (n - 1.0);
            (delta, factor * q * s.mean, green, price, (var_w / n).sqrt())
        }
    };
    Ok(OracleOutcome {
        outcome: CompanyOutcome {
            q,
            abatement_factor: factor,
            delta,
            emissions,
            wealth,
            green_cost,
            carbon_price,
        },
        wealth_std_error: std_error,
    })
}

/// Grid argmax of the intermediary objective `delta(P) (P - spot)` over
/// `[spot, penalty]`, with zoom refinement.
pub fn oracle_intermediary_price(
    params: &CompanyParams,
    spot: f64,
    penalty: f64,
    model: &EmissionModel,
    cfg: &OracleConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !(spot > 0.0 && spot < penalty) {
        return Err(Error::InvalidParameter {
            name: "spot",
            reason: format!("need 0 < spot < penalty, got spot {spot}, penalty {penalty}"),
        });
    }
    let demand_at = |p: f64| -> Result<f64> {
        Ok(match model {
            EmissionModel::Deterministic => (params.bau_emissions() - p * params.rho())
                .max(params.bau_emissions() - penalty * params.rho()),
            EmissionModel::Random(dist) => {
                if p >= penalty {
                    0.0
                } else {
                    firm::demand_raw(params, p, penalty, dist)?.max(0.0)
                }
            }
        })
    };
    let g = cfg.grid_points;
    let (mut lo, mut hi) = (spot, penalty);
    let mut best = (spot, f64::NEG_INFINITY);
    for _round in 0..=cfg.refinement_rounds {
        let dp = (hi - lo) / (g - 1) as f64;
        best = (lo, f64::NEG_INFINITY);
        for i in 0..g {
            let p = lo + dp * i as f64;
            let w = demand_at(p)? * (p - spot);
            if w > best.1 {
                best = (p, w);
            }
        }
        lo = (best.0 - 2.0 * dp).max(spot);
        hi = (best.0 + 2.0 * dp).min(penalty);
    }
    Ok(best.0)
}

/// Recomputes aggregate certificate demand at the result's prices through the
/// firm-level optima and returns `sum(delta) - supply`.
pub fn oracle_clearing_residual(
    portfolio: &[CompanyParams],
    result: &ClearingResult,
    supply: f64,
    penalty: f64,
    access: &AccessProfile,
    model: &EmissionModel,
) -> Result<f64> {
    let _ = access;
    let mut total = 0.0;
    for (p, &price) in portfolio.iter().zip(&result.effective_prices) {
        total += match model {
            EmissionModel::Deterministic => {
                if price < penalty {
                    firm::market_optimum(p, price, penalty)?.delta
                } else {
                    let o = firm::tax_optimum(p, penalty)?;
                    o.emissions
                }
            }
            EmissionModel::Random(dist) => {
                if price < penalty {
                    firm::market_optimum_random(p, price, penalty, dist)?.delta
                } else {
                    0.0
                }
            }
        };
    }
    Ok(total - supply)
}
