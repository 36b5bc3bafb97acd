//! Scenario files: the JSON description of a joint model, a basis
//! configuration, the bid curves, and the procurement problem.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::basis::MonomialFilter;
use crate::copula::{GaussianCopula, JointModel};
use crate::distributions::Marginal;
use crate::error::{Error, Result};
use crate::pce::{BidFunction, Zone};
use crate::procurement::ProcurementSpec;
use crate::quadrature::DEFAULT_NODE_BUDGET;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisConfig {
    pub max_degree: u32,
    #[serde(default)]
    pub groups: Vec<Vec<usize>>,
    #[serde(default)]
    pub whitelist: Vec<Vec<u32>>,
    /// Upper bound on the basis condition number before whitening is refused.
    #[serde(default = "default_condition_limit")]
    pub condition_limit: f64,
}

fn default_condition_limit() -> f64 {
    1e12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Nodes per latent dimension.
    pub k: usize,
    #[serde(default = "default_node_budget")]
    pub node_budget: u64,
}

fn default_node_budget() -> u64 {
    DEFAULT_NODE_BUDGET
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_bins() -> usize {
    80
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub marginals: Vec<Marginal>,
    /// Correlation matrix of the Gaussian copula, row-major.
    pub correlation: Vec<f64>,
    pub basis: BasisConfig,
    pub quadrature: QuadratureConfig,
    pub bids: Vec<BidFunction>,
    pub procurement: ProcurementSpec,
    pub validation: ValidationConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Configuration(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::Configuration(
                "scenario declares no marginals".into(),
            ));
        }
        for m in &self.marginals {
            m.validate()?;
        }
        if self.correlation.len() != d * d {
            return Err(Error::Configuration(format!(
                "correlation has {} entries, expected {}×{}",
                self.correlation.len(),
                d,
                d
            )));
        }
        if self.basis.max_degree == 0 {
            return Err(Error::Configuration("basis.max_degree must be ≥ 1".into()));
        }
        for g in &self.basis.groups {
            if let Some(&i) = g.iter().find(|&&i| i >= d) {
                return Err(Error::Configuration(format!(
                    "basis group references variable {i}, but dimension is {d}"
                )));
            }
        }
        for w in &self.basis.whitelist {
            if w.len() != d {
                return Err(Error::Configuration(format!(
                    "whitelist exponent vector has length {}, expected {d}",
                    w.len()
                )));
            }
        }
        if self.quadrature.k == 0 {
            return Err(Error::Configuration("quadrature.k must be ≥ 1".into()));
        }
        if self.bids.is_empty() {
            return Err(Error::Configuration("scenario declares no bids".into()));
        }
        for bid in &self.bids {
            bid.validate(d)?;
        }
        self.procurement.validate()?;
        if self.procurement.n_bids() != self.bids.len() {
            return Err(Error::Configuration(format!(
                "procurement expects {} bids but scenario declares {}",
                self.procurement.n_bids(),
                self.bids.len()
            )));
        }
        // Bid ordering must match the zone split: the first n_x belong to X.
        for (i, bid) in self.bids.iter().enumerate() {
            let expected = if i < self.procurement.n_x {
                Zone::X
            } else {
                Zone::Y
            };
            if bid.zone != expected {
                return Err(Error::Configuration(format!(
                    "bid '{}' at position {i} is in zone {:?}, expected {:?}",
                    bid.id, bid.zone, expected
                )));
            }
        }
        let mut ids: Vec<&str> = self.bids.iter().map(|b| b.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.bids.len() {
            return Err(Error::Configuration("duplicate bid ids".into()));
        }
        if self.validation.n == 0 {
            return Err(Error::Configuration("validation.n must be ≥ 1".into()));
        }
        if self.validation.histogram_bins == 0 {
            return Err(Error::Configuration(
                "validation.histogram_bins must be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.correlation)
    }

    pub fn joint_model(&self) -> Result<JointModel> {
        let copula = GaussianCopula::new(self.correlation_matrix())?;
        JointModel::new(copula, self.marginals.clone())
    }

    pub fn monomial_filter(&self) -> MonomialFilter {
        MonomialFilter {
            groups: self.basis.groups.clone(),
            whitelist: self.basis.whitelist.clone(),
        }
    }
}
