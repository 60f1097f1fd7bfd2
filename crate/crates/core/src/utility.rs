//! Parametric utility families `u(a, e)` over a scalar action `a ∈ [0, L]`
//! and a scalar local aggregate `e`.
//!
//! Each family is continuous in `(a, e)` and quasi-concave in `a`. Per-agent
//! heterogeneity enters through the parameters, which are stored as one
//! [`StepProfile`] per scalar parameter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, StepProfile};
use crate::lq;
use crate::optimize::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityFamily {
    /// Linear-quadratic utility with a flat top of width one; parameter `lambda`.
    LqPlateau,
    /// `−(a − bias − weight·e)² / 2`.
    Quadratic,
    /// `scale·ln(1 + a) + weight·e·a − cost·a² / 2`.
    LogBenefit,
}

impl UtilityFamily {
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            UtilityFamily::LqPlateau => &["lambda"],
            UtilityFamily::Quadratic => &["bias", "weight"],
            UtilityFamily::LogBenefit => &["scale", "weight", "cost"],
        }
    }
}

/// The utility of a single agent: a family with its scalar parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentUtility {
    LqPlateau { lambda: f64 },
    Quadratic { bias: f64, weight: f64 },
    LogBenefit { scale: f64, weight: f64, cost: f64 },
}

impl AgentUtility {
    pub fn from_params(family: UtilityFamily, p: &[f64]) -> Result<Self> {
        let expected = family.param_names().len();
        if p.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "{family:?} takes {expected} parameters, got {}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite utility parameter in {p:?}"
            )));
        }
        let u = match family {
            UtilityFamily::LqPlateau => AgentUtility::LqPlateau { lambda: p[0] },
            UtilityFamily::Quadratic => AgentUtility::Quadratic {
                bias: p[0],
                weight: p[1],
            },
            UtilityFamily::LogBenefit => AgentUtility::LogBenefit {
                scale: p[0],
                weight: p[1],
                cost: p[2],
            },
        };
        u.validate()?;
        Ok(u)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            AgentUtility::LqPlateau { lambda } if lambda < 0.0 => Err(Error::InvalidParameter(
                format!("lambda = {lambda} must be >= 0"),
            )),
            AgentUtility::LogBenefit { scale, cost, .. } if scale < 0.0 || cost < 0.0 => {
                Err(Error::InvalidParameter(format!(
                    "log-benefit utility needs scale >= 0 and cost >= 0, got {scale}, {cost}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> UtilityFamily {
        match self {
            AgentUtility::LqPlateau { .. } => UtilityFamily::LqPlateau,
            AgentUtility::Quadratic { .. } => UtilityFamily::Quadratic,
            AgentUtility::LogBenefit { .. } => UtilityFamily::LogBenefit,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            AgentUtility::LqPlateau { lambda } => vec![lambda],
            AgentUtility::Quadratic { bias, weight } => vec![bias, weight],
            AgentUtility::LogBenefit {
                scale,
                weight,
                cost,
            } => vec![scale, weight, cost],
        }
    }

    pub fn value(&self, a: f64, e: f64) -> f64 {
        match *self {
            AgentUtility::LqPlateau { lambda } => lq::plateau_utility(a, e, lambda),
            AgentUtility::Quadratic { bias, weight } => -0.5 * (a - bias - weight * e).powi(2),
            AgentUtility::LogBenefit {
                scale,
                weight,
                cost,
            } => scale * a.ln_1p() + weight * e * a - 0.5 * cost * a * a,
        }
    }

    /// The argmax set over `[0, cap]` when the family has it in closed form.
    pub fn best_response_set(&self, e: f64, cap: f64) -> Option<Interval> {
        match *self {
            AgentUtility::LqPlateau { lambda } => Some(lq::plateau_best_response(e, lambda, cap)),
            AgentUtility::Quadratic { bias, weight } => {
                Some(Interval::point((bias + weight * e).clamp(0.0, cap)))
            }
            AgentUtility::LogBenefit { .. } => None,
        }
    }
}

/// A parameter value in a descriptor: one number for all agents, or one per
/// grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Profile(Vec<f64>),
}

/// `{"family": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityDescriptor {
    pub family: UtilityFamily,
    #[serde(default)]
    pub params: BTreeMap<String, ParamValue>,
}

/// Per-agent utilities of a game: a family plus one step profile per scalar
/// parameter, all on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    family: UtilityFamily,
    params: Vec<StepProfile>,
}

impl UtilitySpec {
    /// Builds a spec from parameter profiles in [`UtilityFamily::param_names`]
    /// order. Every agent's parameters are validated.
    pub fn new(family: UtilityFamily, params: Vec<StepProfile>) -> Result<Self> {
        let names = family.param_names();
        if params.len() != names.len() {
            return Err(Error::InvalidParameter(format!(
                "{family:?} takes parameters {names:?}, got {} profiles",
                params.len()
            )));
        }
        let n = params[0].len();
        if params.iter().any(|p| p.len() != n) {
            return Err(Error::InvalidParameter(
                "utility parameter profiles must share one grid".into(),
            ));
        }
        let spec = Self { family, params };
        for i in 0..n {
            spec.agent(i)?;
        }
        Ok(spec)
    }

    /// The same utility for every agent.
    pub fn uniform(agent: AgentUtility, grid: GridSpec) -> Self {
        Self {
            family: agent.family(),
            params: agent
                .params()
                .into_iter()
                .map(|v| StepProfile::constant(grid, v))
                .collect(),
        }
    }

    pub fn lq_plateau(lambda: f64, grid: GridSpec) -> Result<Self> {
        let agent = AgentUtility::from_params(UtilityFamily::LqPlateau, &[lambda])?;
        Ok(Self::uniform(agent, grid))
    }

    /// Collects per-player utilities `v(i)` into parameter profiles; every
    /// player must use the same family.
    pub fn from_agents(agents: &[AgentUtility]) -> Result<Self> {
        let first = agents
            .first()
            .ok_or_else(|| Error::InvalidParameter("no players".into()))?;
        let family = first.family();
        if agents.iter().any(|a| a.family() != family) {
            return Err(Error::InvalidParameter(
                "players must share a utility family".into(),
            ));
        }
        let k = family.param_names().len();
        let params = (0..k)
            .map(|p| StepProfile::new(agents.iter().map(|a| a.params()[p]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(family, params)
    }

    pub fn from_descriptor(desc: &UtilityDescriptor, grid: GridSpec) -> Result<Self> {
        let n = grid.n_cells();
        for key in desc.params.keys() {
            if !desc.family.param_names().contains(&key.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "unknown parameter '{key}' for {:?}",
                    desc.family
                )));
            }
        }
        let params = desc
            .family
            .param_names()
            .iter()
            .map(|name| match desc.params.get(*name) {
                Some(ParamValue::Scalar(v)) => Ok(StepProfile::constant(grid, *v)),
                Some(ParamValue::Profile(values)) => StepProfile::new(values.clone())?.refine(n),
                None => Err(Error::InvalidParameter(format!(
                    "missing parameter '{name}' for {:?}",
                    desc.family
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(desc.family, params)
    }

    pub fn to_descriptor(&self) -> UtilityDescriptor {
        let params = self
            .family
            .param_names()
            .iter()
            .zip(&self.params)
            .map(|(name, p)| {
                let v = if p.values().iter().all(|&x| x == p.get(0)) {
                    ParamValue::Scalar(p.get(0))
                } else {
                    ParamValue::Profile(p.values().to_vec())
                };
                (name.to_string(), v)
            })
            .collect();
        UtilityDescriptor {
            family: self.family,
            params,
        }
    }

    pub fn family(&self) -> UtilityFamily {
        self.family
    }

    pub fn params(&self) -> &[StepProfile] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&StepProfile> {
        let idx = self.family.param_names().iter().position(|n| *n == name)?;
        Some(&self.params[idx])
    }

    pub fn n_cells(&self) -> usize {
        self.params[0].len()
    }

    pub fn agent(&self, cell: usize) -> Result<AgentUtility> {
        let p: Vec<f64> = self.params.iter().map(|p| p.get(cell)).collect();
        AgentUtility::from_params(self.family, &p)
    }

    pub fn agents(&self) -> Result<Vec<AgentUtility>> {
        (0..self.n_cells()).map(|i| self.agent(i)).collect()
    }

    pub fn refine(&self, n_cells: usize) -> Result<Self> {
        Ok(Self {
            family: self.family,
            params: self
                .params
                .iter()
                .map(|p| p.refine(n_cells))
                .collect::<Result<_>>()?,
        })
    }

    /// Interval averaging of every parameter profile onto `n_cells` cells.
    pub fn average_to(&self, n_cells: usize) -> Result<Self> {
        let params = self
            .params
            .iter()
            .map(|p| p.average_to(n_cells))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.family, params)
    }

    /// Sum over parameters of the L1 distance between parameter profiles,
    /// compared on a common refinement.
    pub fn l1_distance(&self, other: &UtilitySpec, max_cells: usize) -> Result<f64> {
        if self.family != other.family {
            return Err(Error::InvalidParameter("utility families differ".into()));
        }
        let mut total = 0.0;
        for (a, b) in self.params.iter().zip(&other.params) {
            let (a, b) = a.align(b, max_cells)?;
            total += a
                .values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / a.len() as f64;
        }
        Ok(total)
    }
}
