//! PCE coefficients of bid functions by projection onto the orthonormal
//! basis, output moment recovery, weighted-sum combination, and expansion
//! error measurement against the true functions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{MomentTable, OrthonormalBasis};
use crate::copula::JointModel;
use crate::error::{Error, Result};

/// Market zone of a bid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    X,
    Y,
}

/// A single polynomial term of a bid function: coefficient times a sparse
/// monomial given as (variable index, power) pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BidTerm {
    pub coeff: f64,
    #[serde(default)]
    pub powers: Vec<(usize, u32)>,
}

/// Polynomial bid function E_i(ξ) with its zone and cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BidFunction {
    pub id: String,
    pub zone: Zone,
    pub cost: f64,
    pub terms: Vec<BidTerm>,
}

impl BidFunction {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Validation(format!(
                "bid '{}' has no terms",
                self.id
            )));
        }
        if self.cost < 0.0 {
            return Err(Error::Validation(format!(
                "bid '{}' has negative cost {}",
                self.id, self.cost
            )));
        }
        for term in &self.terms {
            for &(var, _) in &term.powers {
                if var >= dim {
                    return Err(Error::Validation(format!(
                        "bid '{}' references variable {var} outside dimension {dim}",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Indices of the variables the bid depends on.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .terms
            .iter()
            .flat_map(|t| t.powers.iter().map(|&(v, _)| v))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.powers.iter().map(|&(_, p)| p).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.powers
                        .iter()
                        .map(|&(v, p)| xi[v].powi(p as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Dense exponent vector of one term.
    fn term_exponents(&self, term: &BidTerm, dim: usize) -> Vec<u32> {
        let mut e = vec![0u32; dim];
        for &(v, p) in &term.powers {
            e[v] += p;
        }
        e
    }
}

/// Per-bid expansion coefficients (matrix A plus the mean row a₀).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PceMatrix {
    pub bid_ids: Vec<String>,
    /// Mean coefficients a₀ per bid.
    pub a0: Vec<f64>,
    /// (M−1) × Z matrix of higher coefficients a_l (l ≥ 1) per bid column.
    pub higher: Vec<Vec<f64>>,
    pub basis_ref: String,
}

impl PceMatrix {
    pub fn from_columns(
        bid_ids: Vec<String>,
        columns: &[Vec<f64>],
        basis_ref: String,
    ) -> Result<Self> {
        let z = columns.len();
        if z == 0 || bid_ids.len() != z {
            return Err(Error::Parameter(
                "coefficient columns and bid ids must be non-empty and match".into(),
            ));
        }
        let m = columns[0].len();
        if m == 0 || columns.iter().any(|c| c.len() != m) {
            return Err(Error::Parameter(
                "coefficient columns must share a common non-zero length".into(),
            ));
        }
        let a0 = columns.iter().map(|c| c[0]).collect();
        let higher = (1..m)
            .map(|l| columns.iter().map(|c| c[l]).collect())
            .collect();
        Ok(Self {
            bid_ids,
            a0,
            higher,
            basis_ref,
        })
    }

    pub fn n_bids(&self) -> usize {
        self.a0.len()
    }

    pub fn n_higher(&self) -> usize {
        self.higher.len()
    }

    /// Matrix A of higher coefficients as an L × Z dense matrix.
    pub fn higher_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_higher(), self.n_bids(), |l, j| self.higher[l][j])
    }
}

/// Projection coefficients a_l = E[q·ψ_l] = Σ_j B_lj E[q·m_j], with every
/// monomial expectation evaluated on its own effective dimension through the
/// shared moment cache.
pub fn expand(
    q: &BidFunction,
    basis: &OrthonormalBasis,
    model: &JointModel,
    k: usize,
    budget: u64,
    cache: &mut MomentTable,
) -> Result<Vec<f64>> {
    let dim = model.dim();
    q.validate(dim)?;
    if basis.dim() != dim {
        return Err(Error::Parameter(format!(
            "basis dimension {} does not match model dimension {}",
            basis.dim(),
            dim
        )));
    }
    let m = basis.len();
    // E[q·m_j] for every monomial in the basis.
    let mut raw = vec![0.0; m];
    for (j, mono) in basis.monomials.iter().enumerate() {
        let mut acc = 0.0;
        for term in &q.terms {
            let term_expo = q.term_exponents(term, dim);
            let prod: Vec<u32> = term_expo
                .iter()
                .zip(&mono.exponents)
                .map(|(a, b)| a + b)
                .collect();
            acc += term.coeff * cache.expectation(&prod, model, k, budget)?;
        }
        if !acc.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite expectation while expanding bid '{}'",
                q.id
            )));
        }
        raw[j] = acc;
    }
    let mut coeffs = vec![0.0; m];
    for l in 0..m {
        let mut s = 0.0;
        for j in 0..=l {
            s += basis.coeffs[(l, j)] * raw[j];
        }
        coeffs[l] = s;
    }
    Ok(coeffs)
}

/// Default projection quadrature order: ⌈(deg(q) + ν)/2⌉ + 1.
pub fn default_projection_order(q: &BidFunction, basis_degree: u32) -> usize {
    ((q.degree() + basis_degree).div_ceil(2) + 1) as usize
}

/// Mean and standard deviation recovered from expansion coefficients:
/// μ = a₀, σ = ‖[a₁, …]‖₂.
pub fn moments(coeffs: &[f64]) -> (f64, f64) {
    let mean = coeffs[0];
    let sigma = coeffs[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
    (mean, sigma)
}

/// Coefficients of the weighted sum Σ z_j E_j: ā_l = Σ_j z_j a_l^j.
pub fn combine(weights: &[f64], pce: &PceMatrix) -> Result<Vec<f64>> {
    if weights.len() != pce.n_bids() {
        return Err(Error::Parameter(format!(
            "weight count {} does not match bid count {}",
            weights.len(),
            pce.n_bids()
        )));
    }
    let mut out = Vec::with_capacity(1 + pce.n_higher());
    out.push(
        pce.a0
            .iter()
            .zip(weights)
            .map(|(a, z)| a * z)
            .sum::<f64>(),
    );
    for row in &pce.higher {
        out.push(row.iter().zip(weights).map(|(a, z)| a * z).sum::<f64>());
    }
    Ok(out)
}

/// Max relative error of the expansion against the true bid function over n
/// copula samples; deterministic for a given seed.
pub fn expansion_error(
    q: &BidFunction,
    coeffs: &[f64],
    basis: &OrthonormalBasis,
    model: &JointModel,
    n: usize,
    seed: u64,
) -> Result<f64> {
    const FLOOR: f64 = 1e-12;
    let samples = model.sample(n, seed)?;
    let d = model.dim();
    let mut xi = vec![0.0; d];
    let mut worst = 0.0f64;
    for row in 0..n {
        for i in 0..d {
            xi[i] = samples[(row, i)];
        }
        let truth = q.eval(&xi);
        let psi = basis.evaluate(&xi);
        let approx: f64 = coeffs.iter().zip(&psi).map(|(a, p)| a * p).sum();
        let rel = (truth - approx).abs() / truth.abs().max(FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}
