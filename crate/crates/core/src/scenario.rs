//! Scenario files: TOML descriptions of a firm portfolio, policy settings,
//! and emission model, with the case-study scenarios bundled into the
//! binary. Quadratic coefficients are written in units of 1e-6 euro per
//! squared ton and scaled at load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::accounting::{PolicyConfig, Scheme, DEFAULT_TARGET_RATIO};
use crate::clearing::{AccessMode, AccessProfile};
use crate::error::{Error, Result};
use crate::firm::CompanyParams;
use crate::oracle::OracleConfig;
use crate::risk::{EmissionDistribution, EmissionModel};

/// Scale factor applied to `pi1` and `gamma` fields at load.
pub const COEFFICIENT_SCALE: f64 = 1e-6;

/// Bundled scenario sources, addressable by name from the CLI.
pub const BUNDLED: &[(&str, &str)] = &[
    (
        "paper_table2",
        include_str!("../scenarios/paper_table2.toml"),
    ),
    (
        "paper_table2_random",
        include_str!("../scenarios/paper_table2_random.toml"),
    ),
];

/// One firm as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmSpec {
    pub id: String,
    pub label: String,
    /// Euro per ton.
    pub pi0: f64,
    /// Units of 1e-6 euro per squared ton.
    pub pi1: f64,
    /// Units of 1e-6 euro per squared ton.
    pub gamma: f64,
    /// Market access for hybrid runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub access: Option<AccessMode>,
}

/// Policy settings as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    /// Default scheme when the CLI does not override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// Certificate supply as a fraction of business-as-usual emissions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_fraction: Option<f64>,
    /// Absolute certificate supply in tons; mutually exclusive with
    /// `cap_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificates: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tax_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    /// Expected-emissions target over the certificate supply (stochastic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_hat_ratio: Option<f64>,
}

/// Emission model as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmissionsSpec {
    Deterministic,
    /// Mean-one lognormal factor with log-standard-deviation `s`.
    Lognormal {
        s: f64,
    },
}

/// Oracle settings override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement_rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// A parsed and validated scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub firms: Vec<FirmSpec>,
    pub policy: PolicySpec,
    pub emissions: EmissionsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
}

impl Scenario {
    /// Parses a scenario from TOML source.
    pub fn from_toml(src: &str) -> Result<Scenario> {
        let s: Scenario =
            toml::from_str(src).map_err(|e| Error::Scenario(format!("parse error: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    /// Loads a scenario from a file path.
    pub fn load(path: &Path) -> Result<Scenario> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_toml(&src)
    }

    /// Resolves a CLI scenario argument: a bundled name or a file path.
    pub fn resolve(arg: &str) -> Result<Scenario> {
        if let Some((_, src)) = BUNDLED.iter().find(|(name, _)| *name == arg) {
            return Scenario::from_toml(src);
        }
        let path = Path::new(arg);
        if path.exists() {
            return Scenario::load(path);
        }
        Err(Error::Scenario(format!(
            "`{arg}` is neither a bundled scenario ({}) nor an existing file",
            BUNDLED
                .iter()
                .map(|(n, _)| *n)
                .collect::<Vec<_>>()
                .join(", ")
        )))
    }

    /// Serializes back to TOML (inverse of [`Scenario::from_toml`]).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Scenario(format!("serialize error: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.firms.is_empty() {
            return Err(Error::Scenario("scenario has no firms".into()));
        }
        let mut ids: Vec<&str> = self.firms.iter().map(|f| f.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.firms.len() {
            return Err(Error::Scenario("duplicate firm ids".into()));
        }
        for f in &self.firms {
            for (name, v) in [("pi0", f.pi0), ("pi1", f.pi1), ("gamma", f.gamma)] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Scenario(format!(
                        "firm {}: {name} must be positive and finite, got {v}",
                        f.id
                    )));
                }
            }
        }
        if let Some(c) = self.policy.cap_fraction {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::Scenario(format!(
                    "cap_fraction must lie in (0, 1), got {c}"
                )));
            }
            if self.policy.certificates.is_some() {
                return Err(Error::Scenario(
                    "set either cap_fraction or certificates, not both".into(),
                ));
            }
        }
        if let Some(a) = self.policy.certificates {
            if !(a > 0.0) {
                return Err(Error::Scenario(format!(
                    "certificates must be positive, got {a}"
                )));
            }
        }
        match &self.emissions {
            EmissionsSpec::Deterministic => {}
            EmissionsSpec::Lognormal { s } => {
                if !(s.is_finite() && *s > 0.0) {
                    return Err(Error::Scenario(format!(
                        "lognormal s must be positive, got {s}"
                    )));
                }
                let ratio = self.policy.a_hat_ratio.unwrap_or(DEFAULT_TARGET_RATIO);
                if !(ratio > 1.0) {
                    return Err(Error::Scenario(format!(
                        "a_hat_ratio must exceed 1 for random emissions, got {ratio}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Firms with the 1e-6 coefficient scaling applied.
    pub fn portfolio(&self) -> Result<Vec<CompanyParams>> {
        self.firms
            .iter()
            .map(|f| {
                CompanyParams::new(
                    f.id.clone(),
                    f.label.clone(),
                    f.pi0,
                    f.pi1 * COEFFICIENT_SCALE,
                    f.gamma * COEFFICIENT_SCALE,
                )
            })
            .collect()
    }

    pub fn emission_model(&self) -> Result<EmissionModel> {
        Ok(match &self.emissions {
            EmissionsSpec::Deterministic => EmissionModel::Deterministic,
            EmissionsSpec::Lognormal { s } => {
                EmissionModel::Random(EmissionDistribution::lognormal(*s)?)
            }
        })
    }

    /// Certificate supply in tons, if the policy defines one.
    pub fn certificates(&self) -> Result<Option<f64>> {
        if let Some(a) = self.policy.certificates {
            return Ok(Some(a));
        }
        if let Some(c) = self.policy.cap_fraction {
            let e_bau: f64 = self.portfolio()?.iter().map(|p| p.bau_emissions()).sum();
            return Ok(Some(c * e_bau));
        }
        Ok(None)
    }

    /// Builds the policy configuration for a scheme, defaulting to the
    /// scenario's own scheme when `scheme` is `None`.
    pub fn policy_config(&self, scheme: Option<Scheme>) -> Result<PolicyConfig> {
        let scheme = scheme.or(self.policy.scheme).ok_or_else(|| {
            Error::Scenario("no scheme given on the command line or in the scenario".into())
        })?;
        let access = if scheme == Scheme::Hybrid {
            let modes: Option<Vec<AccessMode>> = self.firms.iter().map(|f| f.access).collect();
            Some(AccessProfile(modes.ok_or_else(|| {
                Error::Scenario("hybrid scheme requires an access mode on every firm".into())
            })?))
        } else {
            None
        };
        Ok(PolicyConfig {
            scheme,
            certificates: self.certificates()?,
            tax_rate: self.policy.tax_rate,
            penalty: self.policy.penalty,
            target_ratio: self.policy.a_hat_ratio.unwrap_or(DEFAULT_TARGET_RATIO),
            access,
        })
    }

    pub fn oracle_config(&self) -> OracleConfig {
        let d = OracleConfig::default();
        match &self.oracle {
            None => d,
            Some(o) => OracleConfig {
                grid_points: o.grid_points.unwrap_or(d.grid_points),
                refinement_rounds: o.refinement_rounds.unwrap_or(d.refinement_rounds),
                mc_paths: o.mc_paths.unwrap_or(d.mc_paths),
                mc_seed: o.mc_seed.unwrap_or(d.mc_seed),
                tolerance: o.tolerance.unwrap_or(d.tolerance),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_case_study_loads() {
        let s = Scenario::resolve("paper_table2").unwrap();
        assert_eq!(s.firms.len(), 6);
        assert_eq!(s.firms[0].id, "B1");
        assert_eq!(s.firms[0].pi0, 475.65);
        let portfolio = s.portfolio().unwrap();
        assert!((portfolio[0].pi1 - 1.13e-6).abs() < 1e-18);
        let a = s.certificates().unwrap().unwrap();
        assert!((a / 1e6 - 709.1).abs() < 0.5);
    }

    #[test]
    fn bundled_random_case_study_loads() {
        let s = Scenario::resolve("paper_table2_random").unwrap();
        match s.emissions {
            EmissionsSpec::Lognormal { s } => assert_eq!(s, 1.0),
            _ => panic!("expected lognormal emissions"),
        }
        let policy = s.policy_config(None).unwrap();
        assert_eq!(policy.scheme, Scheme::Intermediated);
        assert_eq!(policy.target_ratio, 1.05);
    }

    #[test]
    fn unknown_keys_rejected() {
        let src = r#"
name = "x"
reduction_target = 0.4
[policy]
[emissions]
kind = "deterministic"
[[firms]]
id = "F"
label = "L"
pi0 = 1.0
pi1 = 1.0
gamma = 1.0
"#;
        let err = Scenario::from_toml(src).unwrap_err();
        assert!(err.to_string().contains("reduction_target"), "{err}");
    }

    #[test]
    fn missing_firms_rejected() {
        let src = r#"
name = "x"
firms = []
[policy]
[emissions]
kind = "deterministic"
"#;
        assert!(Scenario::from_toml(src).is_err());
    }

    #[test]
    fn round_trip_is_idempotent() {
        let s = Scenario::resolve("paper_table2_random").unwrap();
        let again = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn hybrid_needs_access_on_every_firm() {
        let mut s = Scenario::resolve("paper_table2").unwrap();
        assert!(s.policy_config(Some(Scheme::Hybrid)).is_err());
        for f in &mut s.firms {
            f.access = Some(AccessMode::Direct);
        }
        s.firms[0].access = Some(AccessMode::Intermediated);
        let p = s.policy_config(Some(Scheme::Hybrid)).unwrap();
        let access = p.access.unwrap();
        assert_eq!(access.mode(0), AccessMode::Intermediated);
        assert_eq!(access.mode(1), AccessMode::Direct);
    }

    #[test]
    fn bad_cap_fraction_rejected() {
        let mut s = Scenario::resolve("paper_table2").unwrap();
        s.policy.cap_fraction = Some(1.5);
        assert!(s.validate().is_err());
    }
}
