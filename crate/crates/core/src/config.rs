//! Run configuration file (TOML).
//!
//! ```toml
//! report_dt_us = 1.0
//!
//! [control]
//! layers = 3
//! restarts = 20
//! budget = 2000
//! seed = 0
//! dt_us = 0.01
//! readout_horizon_us = 40.0
//!
//! [control.bounds]
//! tau_us = [0.1, 10.0]
//! amplitude = [0.0, 20.0]
//!
//! [policy]
//! internal = "star"
//!
//! [[policy.couplings]]
//! constraint = "c1"
//! from = { variable = "x1", value = 0 }
//! to = { variable = "x2", value = 1 }
//! ```
//!
//! Every key is optional. Listing any coupling replaces the default
//! diagonal chain for all constraints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::ControlConfig;
use crate::encoding::{CouplingPolicy, ExplicitCoupling, ExternalRule, InternalTopology};
use crate::model::Problem;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unknown constraint `{0}`")]
    UnknownConstraint(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("value {value} lies outside the domain of `{variable}`")]
    ValueOutOfDomain { variable: String, value: i64 },
    #[error("report_dt_us must be positive")]
    ReportStep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    pub variable: String,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedCoupling {
    pub constraint: String,
    pub from: Endpoint,
    pub to: Endpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub internal: InternalTopology,
    pub couplings: Vec<NamedCoupling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Spacing of reported samples; a multiple of `control.dt_us`.
    pub report_dt_us: f64,
    pub control: ControlConfig,
    pub policy: PolicyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            report_dt_us: 1.0,
            control: ControlConfig::default(),
            policy: PolicyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: RunConfig = toml::from_str(text)?;
        if !(c.report_dt_us > 0.0 && c.report_dt_us.is_finite()) {
            return Err(ConfigError::ReportStep);
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Resolves names against `p`.
    pub fn coupling_policy(&self, p: &Problem) -> Result<CouplingPolicy, ConfigError> {
        if self.policy.couplings.is_empty() {
            return Ok(CouplingPolicy {
                internal: self.policy.internal,
                external: ExternalRule::DiagonalChain,
            });
        }
        let endpoint = |e: &Endpoint| -> Result<(usize, usize), ConfigError> {
            let v = p
                .variable_index(&e.variable)
                .ok_or_else(|| ConfigError::UnknownVariable(e.variable.clone()))?;
            let d = p.variables()[v].domain;
            if !d.contains(e.value) {
                return Err(ConfigError::ValueOutOfDomain {
                    variable: e.variable.clone(),
                    value: e.value,
                });
            }
            Ok((v, (e.value - d.lo) as usize))
        };
        let list = self
            .policy
            .couplings
            .iter()
            .map(|c| {
                Ok(ExplicitCoupling {
                    constraint: p
                        .constraint_index(&c.constraint)
                        .ok_or_else(|| ConfigError::UnknownConstraint(c.constraint.clone()))?,
                    from: endpoint(&c.from)?,
                    to: endpoint(&c.to)?,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(CouplingPolicy {
            internal: self.policy.internal,
            external: ExternalRule::Explicit(list),
        })
    }
}
