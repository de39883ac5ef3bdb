//! JSON experiment configuration. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use crate::density::{make_bump, BaseGaussian, NikolskiiParams, OmegaSpec, PerturbedDensity, TrueDensity};
use crate::error::{Error, Result};
use crate::estimator::BandwidthPolicy;
use crate::kernel::Kernel1D;
use crate::quadrature::GridSpec;

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Base,
    Perturbed,
}

/// `{type, d, sigma, beta, C, p, m, omega}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(rename = "type")]
    pub kind: DensityKind,
    pub d: usize,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "two")]
    pub beta: f64,
    #[serde(rename = "C", default = "one")]
    pub c: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<String>,
}

impl DensityConfig {
    pub fn base(d: usize, sigma: f64) -> Self {
        Self {
            kind: DensityKind::Base,
            d,
            sigma,
            beta: 2.0,
            c: 1.0,
            p: 2.0,
            m: None,
            omega: None,
        }
    }

    pub fn params(&self) -> Result<NikolskiiParams> {
        NikolskiiParams::new(self.beta, self.c, self.p)
    }

    /// Same configuration at another dimension.
    pub fn with_dim(&self, d: usize) -> Self {
        Self { d, ..self.clone() }
    }

    pub fn build(&self) -> Result<TrueDensity> {
        let params = self.params()?;
        let base = BaseGaussian::new(self.d, self.sigma)?;
        match self.kind {
            DensityKind::Base => {
                if self.m.is_some() || self.omega.is_some() {
                    return Err(Error::Config("m and omega only apply to type \"perturbed\"".into()));
                }
                Ok(TrueDensity::Base(base))
            }
            DensityKind::Perturbed => {
                let m = self
                    .m
                    .ok_or_else(|| Error::Config("type \"perturbed\" requires m".into()))?;
                let spec = OmegaSpec::parse(self.omega.as_deref().unwrap_or("ones"))?;
                let cells = crate::density::cell_count(m, self.d)?;
                let omega = spec.resolve(cells)?;
                let bump = make_bump(params.beta)?;
                Ok(TrueDensity::Perturbed(PerturbedDensity::new(base, params, m, omega, bump)?))
            }
        }
    }
}

/// How L^p errors are integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Integration {
    Grid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid: Option<GridSpec>,
    },
    Mc {
        n_mc: usize,
        #[serde(default = "default_proposal_scale")]
        proposal_scale: f64,
    },
}

fn default_proposal_scale() -> f64 {
    1.5
}

impl Default for Integration {
    fn default() -> Self {
        Self::Grid { grid: None }
    }
}

impl Integration {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Grid { .. } => "grid",
            Self::Mc { .. } => "mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCell {
    pub n: usize,
    pub d: usize,
}

/// Shared settings of a rate sweep plus its (n, d) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub density: DensityConfig,
    pub kernel: String,
    pub bandwidth: BandwidthPolicy,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub integration: Integration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_part: Option<bool>,
    pub grid: Vec<SweepCell>,
    #[serde(default)]
    pub seed: u64,
}

fn default_replicates() -> usize {
    50
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.grid.is_empty() {
            problems.push("grid: must list at least one {n, d} cell".to_string());
        }
        for (i, cell) in self.grid.iter().enumerate() {
            if cell.n == 0 {
                problems.push(format!("grid[{i}].n: must be at least 1"));
            }
            if cell.d == 0 {
                problems.push(format!("grid[{i}].d: must be at least 1"));
            }
        }
        if self.replicates < 2 {
            problems.push(format!("replicates: need at least 2, got {}", self.replicates));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            problems.push(format!("p: must be a finite value >= 1, got {}", self.p));
        }
        if let Err(e) = Kernel1D::from_name(&self.kernel) {
            problems.push(format!("kernel: {e}"));
        }
        if let Err(e) = self.density.params() {
            problems.push(format!("density: {e}"));
        }
        match self.bandwidth {
            BandwidthPolicy::Oracle { a } if !(a > 0.0) => problems.push(format!("bandwidth.A: must be positive, got {a}")),
            BandwidthPolicy::Fixed { h_fixed } if !(h_fixed > 0.0) => {
                problems.push(format!("bandwidth.h_fixed: must be positive, got {h_fixed}"))
            }
            _ => {}
        }
        match self.integration {
            Integration::Grid { grid: Some(g) } => {
                if let Err(e) = g.validate() {
                    problems.push(format!("integration.grid: {e}"));
                }
            }
            Integration::Mc { n_mc, proposal_scale } => {
                if n_mc < 2 {
                    problems.push(format!("integration.n_mc: need at least 2, got {n_mc}"));
                }
                if !(proposal_scale > 0.0) {
                    problems.push(format!("integration.proposal_scale: must be positive, got {proposal_scale}"));
                }
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Parses a config from JSON, mapping serde failures to [`Error::Config`].
pub fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}
