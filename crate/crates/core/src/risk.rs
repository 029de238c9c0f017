//! Emission-uncertainty models: survival function, value-at-risk, expected
//! shortfall, and reproducible Monte-Carlo sampling.
//!
//! All distributions are normalized to mean one, so a firm's random emissions
//! are `e^{-a} q X` with `E[X] = 1`. The lognormal family carries closed forms
//! for every risk measure; empirical distributions fall back to sample
//! statistics with the left-continuous (inf-based) quantile convention.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal density.
pub fn phi_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Emission reference level: deterministic (`X = 1`) or a mean-one
/// distribution.
#[derive(Debug, Clone)]
pub enum EmissionModel {
    Deterministic,
    Random(EmissionDistribution),
}

impl EmissionModel {
    pub fn is_random(&self) -> bool {
        matches!(self, EmissionModel::Random(_))
    }

    /// Second moment `E[X^2]`; 1 in the deterministic case.
    pub fn sigma2(&self) -> f64 {
        match self {
            EmissionModel::Deterministic => 1.0,
            EmissionModel::Random(d) => d.sigma2(),
        }
    }

    pub fn distribution(&self) -> Option<&EmissionDistribution> {
        match self {
            EmissionModel::Deterministic => None,
            EmissionModel::Random(d) => Some(d),
        }
    }
}

/// A positive, continuous, mean-one emission multiplier.
#[derive(Debug, Clone)]
pub enum EmissionDistribution {
    /// `X = exp(-s^2/2 + s Z)` with `Z` standard normal; the location is
    /// forced to `-s^2/2` so that `E[X] = 1`.
    Lognormal { s: f64 },
    /// Sorted sample, mean one within 1e-9. Risk measures are best-effort
    /// sample statistics; smoothness-sensitive solvers should prefer a
    /// parametric model.
    Empirical { sample: std::sync::Arc<Vec<f64>> },
}

impl EmissionDistribution {
    /// Mean-one lognormal with log-scale `s > 0`.
    pub fn lognormal(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParameter {
                name: "s",
                reason: format!("lognormal scale must be positive and finite, got {s}"),
            });
        }
        Ok(EmissionDistribution::Lognormal { s })
    }

    /// Empirical distribution over a positive sample with mean one.
    pub fn empirical(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InvalidParameter {
                name: "sample",
                reason: "empirical sample must be non-empty".into(),
            });
        }
        if sample.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "sample",
                reason: "empirical sample must be strictly positive and finite".into(),
            });
        }
        let mean = sample.iter().sum::<f64>() / sample.len() as f64;
        if (mean - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "sample",
                reason: format!("sample mean must be 1 within 1e-9, got {mean}"),
            });
        }
        sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmissionDistribution::Empirical {
            sample: std::sync::Arc::new(sample),
        })
    }

    /// Second moment `E[X^2] = 1 + Var(X) >= 1`.
    pub fn sigma2(&self) -> f64 {
        match self {
            EmissionDistribution::Lognormal { s } => (s * s).exp(),
            EmissionDistribution::Empirical { sample } => {
                sample.iter().map(|x| x * x).sum::<f64>() / sample.len() as f64
            }
        }
    }

    /// Survival function `G(t) = P[X > t]`, `t > 0`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        check_positive("t", t)?;
        Ok(match self {
            EmissionDistribution::Lognormal { s } => phi((-t.ln() - s * s / 2.0) / s),
            EmissionDistribution::Empirical { sample } => {
                let above = sample.partition_point(|x| *x <= t);
                (sample.len() - above) as f64 / sample.len() as f64
            }
        })
    }

    /// Derivative of the survival function, `G'(t) = -density(t) < 0`.
    ///
    /// Empirical distributions use a Gaussian kernel density estimate with
    /// Silverman bandwidth.
    pub fn survival_derivative(&self, t: f64) -> Result<f64> {
        check_positive("t", t)?;
        Ok(match self {
            EmissionDistribution::Lognormal { s } => -phi_pdf((t.ln() + s * s / 2.0) / s) / (s * t),
            EmissionDistribution::Empirical { sample } => {
                let n = sample.len() as f64;
                let mean = sample.iter().sum::<f64>() / n;
                let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let h = (1.06 * var.sqrt() * n.powf(-0.2)).max(1e-6);
                let density = sample
                    .iter()
                    .map(|x| (-((t - x) / h).powi(2) / 2.0).exp())
                    .sum::<f64>()
                    / (n * h * SQRT_2PI);
                -density
            }
        })
    }

    /// Lower-tail value-at-risk `VaR_eps(X) = inf { y : P[X <= y] >= 1 - eps }`.
    pub fn var(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        Ok(match self {
            EmissionDistribution::Lognormal { s } => {
                if eps >= 1.0 {
                    // left endpoint of the support
                    0.0
                } else {
                    (-s * phi_inv(eps) - s * s / 2.0).exp()
                }
            }
            EmissionDistribution::Empirical { sample } => {
                let n = sample.len();
                // smallest order statistic whose empirical CDF reaches 1 - eps
                let need = ((1.0 - eps) * n as f64).ceil() as usize;
                sample[need.saturating_sub(1).min(n - 1)]
            }
        })
    }

    /// Expected shortfall `ES_eps(X) = (1/eps) \int_0^eps VaR_u(X) du`; the
    /// mean of the upper `eps`-tail. `ES_1 = E[X] = 1`.
    pub fn es(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        Ok(match self {
            EmissionDistribution::Lognormal { s } => {
                if eps >= 1.0 {
                    1.0
                } else {
                    phi(phi_inv(eps) + s) / eps
                }
            }
            EmissionDistribution::Empirical { sample } => {
                let var = self.var(eps)?;
                let n = sample.len() as f64;
                let excess = sample.iter().map(|x| (x - var).max(0.0)).sum::<f64>() / n;
                var + excess / eps
            }
        })
    }

    /// Reproducible sample of size `n`: the same `(n, seed)` always produces
    /// the identical sequence, independent of threading.
    pub fn mc_sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        use rand::{Rng, SeedableRng};
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "sample size must be at least 1".into(),
            });
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let out = match self {
            EmissionDistribution::Lognormal { s } => (0..n)
                .map(|_| {
                    // inverse-transform sampling keeps the stream platform-stable
                    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                    (-s * s / 2.0 + s * phi_inv(u)).exp()
                })
                .collect(),
            EmissionDistribution::Empirical { sample } => (0..n)
                .map(|_| sample[rng.gen_range(0..sample.len())])
                .collect(),
        };
        Ok(out)
    }
}

fn check_positive(name: &'static str, t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {t}"),
        });
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("probability level must lie in (0, 1], got {eps}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lognormal() -> EmissionDistribution {
        EmissionDistribution::lognormal(1.0).unwrap()
    }

    #[test]
    fn survival_at_median() {
        let d = lognormal();
        assert_relative_eq!(d.survival((-0.5f64).exp()).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn survival_near_paper_threshold() {
        // G(1/1.05) = Phi(ln(1.05) - 1/2)
        let d = lognormal();
        let g = d.survival(1.0 / 1.05).unwrap();
        assert_relative_eq!(g, phi((1.05f64).ln() - 0.5), epsilon = 1e-12);
        assert!((g - 0.3259).abs() < 5e-4);
    }

    #[test]
    fn survival_derivative_matches_finite_difference() {
        let d = lognormal();
        for t in [0.3, (-0.5f64).exp(), 1.0, 2.5] {
            let h = 1e-6;
            let fd = (d.survival(t + h).unwrap() - d.survival(t - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(d.survival_derivative(t).unwrap(), fd, epsilon = 1e-6);
            assert!(d.survival_derivative(t).unwrap() < 0.0);
        }
        // value at the median: -phi(0)/e^{-1/2}
        let t = (-0.5f64).exp();
        assert_relative_eq!(
            d.survival_derivative(t).unwrap(),
            -phi_pdf(0.0) / t,
            epsilon = 1e-12
        );
    }

    #[test]
    fn var_closed_forms() {
        let d = lognormal();
        assert_relative_eq!(d.var(0.5).unwrap(), (-0.5f64).exp(), epsilon = 1e-12);
        // VaR(G(t)) = t on the support
        for t in [0.4, 1.0, 1.7] {
            let g = d.survival(t).unwrap();
            assert_relative_eq!(d.var(g).unwrap(), t, epsilon = 1e-9);
        }
        assert!((d.var(0.3259).unwrap() - 0.9524).abs() < 5e-4);
    }

    #[test]
    fn es_closed_forms() {
        let d = lognormal();
        assert_relative_eq!(d.es(1.0).unwrap(), 1.0, epsilon = 1e-12);
        let eps = 0.3259;
        assert!((d.es(eps).unwrap() - 2.174).abs() < 2e-3);
        // oce decomposition ES = VaR + E[(X - VaR)^+]/eps against MC
        let sample = d.mc_sample(1_000_000, 7).unwrap();
        let var = d.var(eps).unwrap();
        let excess: f64 =
            sample.iter().map(|x| (x - var).max(0.0)).sum::<f64>() / sample.len() as f64;
        let mc = var + excess / eps;
        let se = {
            let m = excess;
            let v = sample
                .iter()
                .map(|x| ((x - var).max(0.0) - m).powi(2))
                .sum::<f64>()
                / sample.len() as f64;
            (v / sample.len() as f64).sqrt() / eps
        };
        assert!((d.es(eps).unwrap() - mc).abs() < 3.0 * se + 1e-9);
    }

    #[test]
    fn mc_sample_reproducible_and_calibrated() {
        let d = lognormal();
        let a = d.mc_sample(1_000_000, 42).unwrap();
        let b = d.mc_sample(1_000_000, 42).unwrap();
        assert_eq!(a.first(), b.first());
        assert_eq!(a.last(), b.last());
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let m2 = a.iter().map(|x| x * x).sum::<f64>() / n;
        let sd = (d.sigma2() - 1.0f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / n.sqrt());
        // second moment of lognormal(-1/2, 1) is e; its sampling error is wide
        let m4 = std::f64::consts::E.powi(2) * ((4.0f64).exp() - 1.0);
        assert!((m2 - std::f64::consts::E).abs() < 3.0 * (m4 / n).sqrt());
    }

    #[test]
    fn empirical_survival_close_to_lognormal() {
        let d = lognormal();
        let sample = d.mc_sample(1_000_000, 11).unwrap();
        let mean = sample.iter().sum::<f64>() / sample.len() as f64;
        let normalized: Vec<f64> = sample.iter().map(|x| x / mean).collect();
        let e = EmissionDistribution::empirical(normalized).unwrap();
        let g = e.survival(1.0).unwrap();
        let g_true = phi(-0.5);
        let se = (g_true * (1.0 - g_true) / 1e6).sqrt();
        assert!((g - g_true).abs() < 4.0 * se);
    }

    #[test]
    fn domain_errors() {
        let d = lognormal();
        assert!(d.survival(0.0).is_err());
        assert!(d.survival(-1.0).is_err());
        assert!(d.var(0.0).is_err());
        assert!(d.var(1.5).is_err());
        assert!(d.es(-0.1).is_err());
        assert!(d.mc_sample(0, 1).is_err());
        assert!(EmissionDistribution::lognormal(0.0).is_err());
        assert!(EmissionDistribution::empirical(vec![2.0, 2.0]).is_err());
    }
}
