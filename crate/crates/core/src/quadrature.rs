//! Gauss-Hermite and Gauss-Legendre rules via Golub-Welsch, tensor grids,
//! and expectation evaluation under the Gaussian-copula joint PDF using the
//! latent-space change of variables with Cholesky coloring.

use nalgebra::DMatrix;

use crate::copula::GaussianCopula;
use crate::distributions::Marginal;
use crate::error::{Error, Result};
use crate::linalg::KahanSum;

pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;
const MAX_ORDER: usize = 64;

/// One-dimensional quadrature rule; weights sum to 1.
#[derive(Debug, Clone)]
pub struct QuadratureRule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Golub-Welsch nodes from the Jacobi matrix eigenvalues, polished by Newton
/// iteration on the orthogonal-polynomial recurrence; weights from the
/// Christoffel function. `mu0` is the total mass of the weight function.
fn golub_welsch(diag: Vec<f64>, off: Vec<f64>, mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let k = diag.len();
    let mut jacobi = DMatrix::zeros(k, k);
    for i in 0..k {
        jacobi[(i, i)] = diag[i];
    }
    for (i, &b) in off.iter().enumerate() {
        jacobi[(i, i + 1)] = b;
        jacobi[(i + 1, i)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Orthonormal polynomials p_0..p_k and their derivatives at x via the
    // three-term recurrence; the last divisor is taken as 1, which rescales
    // p_k without moving its roots.
    let eval = |x: f64| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; k + 1];
        let mut dp = vec![0.0; k + 1];
        p[0] = 1.0;
        for j in 0..k {
            let bj = if j == 0 { 0.0 } else { off[j - 1] };
            let bj1 = off.get(j).copied().unwrap_or(1.0);
            let pm1 = if j == 0 { 0.0 } else { p[j - 1] };
            let dpm1 = if j == 0 { 0.0 } else { dp[j - 1] };
            p[j + 1] = ((x - diag[j]) * p[j] - bj * pm1) / bj1;
            dp[j + 1] = (p[j] + (x - diag[j]) * dp[j] - bj * dpm1) / bj1;
        }
        (p, dp)
    };

    let mut weights = vec![0.0; k];
    for (i, node) in nodes.iter_mut().enumerate() {
        for _ in 0..3 {
            let (p, dp) = eval(*node);
            if dp[k] == 0.0 {
                break;
            }
            let step = p[k] / dp[k];
            *node -= step;
            if step.abs() < 1e-15 * (1.0 + node.abs()) {
                break;
            }
        }
        let (p, _) = eval(*node);
        let sum_sq: f64 = p[..k].iter().map(|v| v * v).sum();
        weights[i] = mu0 / sum_sq;
    }
    (nodes, weights)
}

fn check_order(k: usize) -> Result<()> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::Parameter(format!(
            "quadrature order must be in 1..={MAX_ORDER}, got {k}"
        )));
    }
    Ok(())
}

/// Probabilist Gauss-Hermite rule: exact for polynomials of degree ≤ 2k−1
/// against the standard normal PDF. Recurrence: b_i = √i.
pub fn gauss_hermite(k: usize) -> Result<QuadratureRule1D> {
    check_order(k)?;
    if k == 1 {
        return Ok(QuadratureRule1D {
            nodes: vec![0.0],
            weights: vec![1.0],
        });
    }
    let off: Vec<f64> = (1..k).map(|i| (i as f64).sqrt()).collect();
    let (mut nodes, mut weights) = golub_welsch(vec![0.0; k], off, 1.0);
    // Enforce exact symmetry about the origin.
    for i in 0..k / 2 {
        let j = k - 1 - i;
        let node = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -node;
        nodes[j] = node;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(QuadratureRule1D { nodes, weights })
}

/// Gauss-Legendre rule on [0, 1] with unit weight function: exact for
/// polynomials of degree ≤ 2k−1; weights sum to 1.
pub fn gauss_legendre_unit(k: usize) -> Result<QuadratureRule1D> {
    check_order(k)?;
    if k == 1 {
        return Ok(QuadratureRule1D {
            nodes: vec![0.5],
            weights: vec![1.0],
        });
    }
    let off: Vec<f64> = (1..k)
        .map(|i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        })
        .collect();
    let (nodes, weights) = golub_welsch(vec![0.0; k], off, 2.0);
    // Map [-1, 1] to [0, 1]; the weight total on [-1,1] is 2, on [0,1] it is 1.
    let total: f64 = weights.iter().sum();
    Ok(QuadratureRule1D {
        nodes: nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights: weights.iter().map(|w| w / total).collect(),
    })
}

/// Full tensor product of a 1-d rule over `dim` dimensions, N = k^dim nodes
/// in row-major order.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    /// N × dim node matrix.
    pub nodes: DMatrix<f64>,
    pub weights: Vec<f64>,
}

pub fn grid_size(k: usize, dim: usize, budget: u64) -> Result<u64> {
    let mut n: u64 = 1;
    for _ in 0..dim {
        n = n.checked_mul(k as u64).unwrap_or(u64::MAX);
        if n > budget {
            return Err(Error::NodeBudget {
                nodes: n,
                budget,
                context: format!(" (k={k}, d_I={dim})"),
            });
        }
    }
    Ok(n)
}

pub fn tensor_grid(rule: &QuadratureRule1D, dim: usize, budget: u64) -> Result<TensorGrid> {
    let k = rule.nodes.len();
    let n = grid_size(k, dim, budget)? as usize;
    let mut nodes = DMatrix::zeros(n, dim);
    let mut weights = vec![0.0; n];
    let mut idx = vec![0usize; dim];
    for row in 0..n {
        let mut w = 1.0;
        for (col, &i) in idx.iter().enumerate() {
            nodes[(row, col)] = rule.nodes[i];
            w *= rule.weights[i];
        }
        weights[row] = w;
        // Row-major increment: last dimension varies fastest.
        for col in (0..dim).rev() {
            idx[col] += 1;
            if idx[col] < k {
                break;
            }
            idx[col] = 0;
        }
    }
    Ok(TensorGrid { nodes, weights })
}

/// Expectation E[g(ξ_dims)] under the Gaussian-copula joint model, evaluated
/// by tensor-grid Gauss-Hermite quadrature in the latent space:
/// Σ_n w_n · g(F⁻¹(Φ(L z_n))) with L the Cholesky factor of the Σ-submatrix
/// restricted to `dims`. The integrand receives values ordered as `dims`.
pub fn integrate_copula<F>(
    g: F,
    dims: &[usize],
    copula: &GaussianCopula,
    marginals: &[Marginal],
    k: usize,
    budget: u64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if marginals.len() != copula.dim() {
        return Err(Error::Parameter(format!(
            "marginal count {} does not match copula dimension {}",
            marginals.len(),
            copula.dim()
        )));
    }
    let sub = copula.marginalize(dims)?;
    let l = sub.chol();
    let d = dims.len();
    let rule = gauss_hermite(k)?;
    let n = grid_size(k, d, budget)? as usize;

    let mut idx = vec![0usize; d];
    let mut z = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut acc = KahanSum::default();
    for _ in 0..n {
        let mut w = 1.0;
        for (col, &i) in idx.iter().enumerate() {
            z[col] = rule.nodes[i];
            w *= rule.weights[i];
        }
        for i in 0..d {
            let y: f64 = (0..=i).map(|c| l[(i, c)] * z[c]).sum();
            xi[i] = marginals[dims[i]].from_latent(y)?;
        }
        let val = g(&xi);
        if !val.is_finite() {
            return Err(Error::NonFiniteIntegrand { node: xi.clone() });
        }
        acc.add(w * val);
        for col in (0..d).rev() {
            idx[col] += 1;
            if idx[col] < k {
                break;
            }
            idx[col] = 0;
        }
    }
    Ok(acc.value())
}
