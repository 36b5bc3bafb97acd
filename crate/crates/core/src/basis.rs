//! Orthonormal polynomial basis under the dependent joint PDF: monomial set
//! generation with group filtering, moment table of monomial expectations via
//! dimension-reduced quadrature, Gram matrix assembly and Cholesky whitening.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::copula::JointModel;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, invert_lower};
use crate::quadrature::{grid_size, integrate_copula};

/// Multivariate monomial ξ^e, stored as a dense exponent vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn constant(d: usize) -> Self {
        Self {
            exponents: vec![0; d],
        }
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn support(&self) -> Vec<usize> {
        self.exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn product(&self, other: &Monomial) -> Monomial {
        Monomial {
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| xi[i].powi(e as i32))
            .product()
    }
}

/// Restriction of the monomial set to physically relevant terms.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MonomialFilter {
    /// Variable groups (e.g. per location). When non-empty, monomials of
    /// degree ≥ 2 are kept only if their support lies within one group.
    pub groups: Vec<Vec<usize>>,
    /// Exponent vectors kept regardless of the group rule.
    pub whitelist: Vec<Vec<u32>>,
}

impl MonomialFilter {
    pub fn none() -> Self {
        Self::default()
    }

    fn keeps(&self, m: &Monomial) -> bool {
        if self.groups.is_empty() || m.degree() <= 1 {
            return true;
        }
        let support = m.support();
        if self
            .groups
            .iter()
            .any(|g| support.iter().all(|i| g.contains(i)))
        {
            return true;
        }
        self.whitelist.iter().any(|w| *w == m.exponents)
    }
}

/// All monomials of total degree ≤ `max_degree` passing the filter, in graded
/// lexicographic order with the constant first.
pub fn generate_monomials(
    d: usize,
    max_degree: u32,
    filter: &MonomialFilter,
) -> Result<Vec<Monomial>> {
    if d == 0 || max_degree == 0 {
        return Err(Error::Configuration(format!(
            "monomial generation requires d ≥ 1 and degree ≥ 1, got d={d}, degree={max_degree}"
        )));
    }
    let mut all = Vec::new();
    let mut current = vec![0u32; d];
    enumerate(&mut current, 0, max_degree, &mut all);
    all.sort_by(|a, b| {
        a.degree()
            .cmp(&b.degree())
            .then_with(|| a.exponents.cmp(&b.exponents))
    });
    let kept: Vec<Monomial> = all.into_iter().filter(|m| filter.keeps(m)).collect();
    if kept.is_empty() {
        return Err(Error::Configuration(
            "monomial filter removed every monomial".into(),
        ));
    }
    Ok(kept)
}

fn enumerate(current: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Monomial>) {
    if pos == current.len() {
        out.push(Monomial {
            exponents: current.clone(),
        });
        return;
    }
    for e in 0..=remaining {
        current[pos] = e;
        enumerate(current, pos + 1, remaining - e, out);
    }
    current[pos] = 0;
}

/// Cache of monomial expectations E[ξ^e] under the joint model, keyed by the
/// exponent vector so products sharing α+β are integrated once.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MomentTable {
    moments: BTreeMap<Vec<u32>, f64>,
}

impl MomentTable {
    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    pub fn get(&self, exponents: &[u32]) -> Option<f64> {
        self.moments.get(exponents).copied()
    }

    pub fn insert(&mut self, exponents: Vec<u32>, value: f64) {
        self.moments.insert(exponents, value);
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.moments.iter()
    }

    /// E[ξ^e], computing and caching it on first use. The integral runs on
    /// the support of the exponent vector only (effective dimension d_I).
    pub fn expectation(
        &mut self,
        exponents: &[u32],
        model: &JointModel,
        k: usize,
        budget: u64,
    ) -> Result<f64> {
        if let Some(v) = self.moments.get(exponents) {
            return Ok(*v);
        }
        let mono = Monomial {
            exponents: exponents.to_vec(),
        };
        let support = mono.support();
        let value = if support.is_empty() {
            1.0
        } else {
            grid_size(k, support.len(), budget).map_err(|e| match e {
                Error::NodeBudget { nodes, budget, .. } => Error::NodeBudget {
                    nodes,
                    budget,
                    context: format!(" while integrating monomial {exponents:?}"),
                },
                other => other,
            })?;
            let powers: Vec<i32> = support.iter().map(|&i| exponents[i] as i32).collect();
            integrate_copula(
                |xi| {
                    xi.iter()
                        .zip(&powers)
                        .map(|(x, &p)| x.powi(p))
                        .product::<f64>()
                },
                &support,
                &model.copula,
                &model.marginals,
                k,
                budget,
            )?
        };
        self.moments.insert(exponents.to_vec(), value);
        Ok(value)
    }
}

/// Expectations of all pairwise monomial products of `set`.
pub fn moment_table(
    set: &[Monomial],
    model: &JointModel,
    k: usize,
    budget: u64,
) -> Result<MomentTable> {
    let mut table = MomentTable::default();
    for (a, ma) in set.iter().enumerate() {
        for mb in &set[a..] {
            let prod = ma.product(mb);
            table.expectation(&prod.exponents, model, k, budget)?;
        }
    }
    Ok(table)
}

/// Gram matrix G_ab = E[m_a · m_b], read from the moment table.
pub fn gram_matrix(set: &[Monomial], table: &MomentTable) -> Result<DMatrix<f64>> {
    let m = set.len();
    let mut g = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let prod = set[a].product(&set[b]);
            let v = table.get(&prod.exponents).ok_or_else(|| {
                Error::Internal(format!(
                    "moment table missing entry for exponents {:?}",
                    prod.exponents
                ))
            })?;
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    Ok(g)
}

/// Basis polynomials ψ_l = Σ_j B_lj m_j with B·G·Bᵀ = I.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    pub monomials: Vec<Monomial>,
    /// Lower-triangular whitening matrix B = R⁻¹ where G = R·Rᵀ.
    pub coeffs: DMatrix<f64>,
    pub gram_residual: f64,
    /// Gram condition number estimate (ratio of extreme eigenvalues).
    pub condition: f64,
}

impl OrthonormalBasis {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.monomials.first().map_or(0, |m| m.exponents.len())
    }

    /// Evaluate all ψ_l at a point; the first entry is always 1.
    pub fn evaluate(&self, xi: &[f64]) -> Vec<f64> {
        let mono: Vec<f64> = self.monomials.iter().map(|m| m.eval(xi)).collect();
        let mut out = vec![0.0; mono.len()];
        for l in 0..mono.len() {
            let mut s = 0.0;
            for j in 0..=l {
                s += self.coeffs[(l, j)] * mono[j];
            }
            out[l] = s;
        }
        out
    }
}

/// Whitening by Cholesky of the Gram matrix.
pub fn orthonormalize(
    gram: &DMatrix<f64>,
    set: &[Monomial],
    condition_limit: f64,
) -> Result<OrthonormalBasis> {
    if gram.nrows() != set.len() {
        return Err(Error::Parameter(format!(
            "Gram size {} does not match monomial count {}",
            gram.nrows(),
            set.len()
        )));
    }
    let eig = gram.clone().symmetric_eigen();
    let mut min_ev = f64::INFINITY;
    let mut max_ev = f64::NEG_INFINITY;
    for &ev in eig.eigenvalues.iter() {
        min_ev = min_ev.min(ev);
        max_ev = max_ev.max(ev);
    }
    let condition = if min_ev > 0.0 {
        max_ev / min_ev
    } else {
        f64::INFINITY
    };
    if !(condition <= condition_limit) {
        return Err(Error::Numerical(format!(
            "Gram matrix condition estimate {condition:.3e} exceeds the limit {condition_limit:.3e}"
        )));
    }
    let r = cholesky_lower(gram).map_err(|pivot| Error::IllConditionedBasis { pivot })?;
    let coeffs = invert_lower(&r);
    let residual_matrix = &coeffs * gram * coeffs.transpose();
    let mut gram_residual = 0.0f64;
    for i in 0..set.len() {
        for j in 0..set.len() {
            let expect = if i == j { 1.0 } else { 0.0 };
            gram_residual = gram_residual.max((residual_matrix[(i, j)] - expect).abs());
        }
    }
    Ok(OrthonormalBasis {
        monomials: set.to_vec(),
        coeffs,
        gram_residual,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::GaussianCopula;
    use crate::distributions::Marginal;
    use crate::quadrature::DEFAULT_NODE_BUDGET;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn std_normal_model(d: usize, sigma: Option<DMatrix<f64>>) -> JointModel {
        let copula = match sigma {
            Some(s) => GaussianCopula::new(s).unwrap(),
            None => GaussianCopula::identity(d),
        };
        JointModel::new(
            copula,
            vec![
                Marginal::Normal {
                    mean: 0.0,
                    std: 1.0
                };
                d
            ],
        )
        .unwrap()
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(
            generate_monomials(8, 1, &MonomialFilter::none()).unwrap().len(),
            9
        );
        let m22 = generate_monomials(2, 2, &MonomialFilter::none()).unwrap();
        assert_eq!(m22.len(), 6);
        assert_eq!(m22[0].exponents, vec![0, 0]);
        assert_eq!(
            generate_monomials(1, 3, &MonomialFilter::none()).unwrap().len(),
            4
        );
    }

    #[test]
    fn graded_order_constant_first() {
        let set = generate_monomials(3, 2, &MonomialFilter::none()).unwrap();
        assert_eq!(set[0].degree(), 0);
        for w in set.windows(2) {
            assert!(w[0].degree() <= w[1].degree());
        }
    }

    #[test]
    fn group_filter_drops_cross_terms() {
        let filter = MonomialFilter {
            groups: vec![vec![0, 1], vec![2, 3]],
            whitelist: vec![],
        };
        let set = generate_monomials(4, 2, &filter).unwrap();
        // 1 + 4 linear + per group {a², ab, b²} × 2 = 11
        assert_eq!(set.len(), 11);
        assert!(set.iter().all(|m| {
            m.degree() <= 1
                || filter
                    .groups
                    .iter()
                    .any(|g| m.support().iter().all(|i| g.contains(i)))
        }));

        let whitelisted = MonomialFilter {
            groups: vec![vec![0, 1], vec![2, 3]],
            whitelist: vec![vec![1, 0, 1, 0]],
        };
        let set2 = generate_monomials(4, 2, &whitelisted).unwrap();
        assert_eq!(set2.len(), 12);
    }

    #[test]
    fn moment_table_trivial_and_latent_entries() {
        let mut sigma = DMatrix::identity(2, 2);
        sigma[(0, 1)] = 0.45;
        sigma[(1, 0)] = 0.45;
        let model = std_normal_model(2, Some(sigma));
        let set = generate_monomials(2, 1, &MonomialFilter::none()).unwrap();
        let table = moment_table(&set, &model, 6, DEFAULT_NODE_BUDGET).unwrap();
        assert_abs_diff_eq!(table.get(&[0, 0]).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(table.get(&[1, 1]).unwrap(), 0.45, epsilon = 1e-10);
        assert_abs_diff_eq!(table.get(&[2, 0]).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn beta_second_moment() {
        let model = JointModel::new(
            GaussianCopula::identity(1),
            vec![Marginal::Beta {
                alpha: 2.0,
                beta: 2.0,
                lower: 0.0,
                upper: 1.0,
            }],
        )
        .unwrap();
        let mut table = MomentTable::default();
        let v = table
            .expectation(&[2], &model, 40, DEFAULT_NODE_BUDGET)
            .unwrap();
        // E[ξ²] = var + mean² = 1/20 + 1/4 = 0.3
        assert_abs_diff_eq!(v, 0.3, epsilon = 1e-8);
    }

    #[test]
    fn gram_matrix_1d_normal() {
        let model = std_normal_model(1, None);
        let set = generate_monomials(1, 2, &MonomialFilter::none()).unwrap();
        let table = moment_table(&set, &model, 5, DEFAULT_NODE_BUDGET).unwrap();
        let g = gram_matrix(&set, &table).unwrap();
        let expected = dmatrix![1.0, 0.0, 1.0; 0.0, 1.0, 0.0; 1.0, 0.0, 3.0];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(g[(i, j)], expected[(i, j)], epsilon = 1e-10);
            }
        }
        // PSD check
        let min_ev = g
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_ev > 0.0);
    }

    #[test]
    fn whitening_recovers_hermite() {
        let model = std_normal_model(1, None);
        let set = generate_monomials(1, 2, &MonomialFilter::none()).unwrap();
        let table = moment_table(&set, &model, 5, DEFAULT_NODE_BUDGET).unwrap();
        let g = gram_matrix(&set, &table).unwrap();
        let basis = orthonormalize(&g, &set, 1e12).unwrap();
        assert!(basis.gram_residual <= 1e-10);
        // ψ₂ = (ξ² − 1)/√2
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(basis.coeffs[(2, 0)], -inv_sqrt2, epsilon = 1e-9);
        assert_abs_diff_eq!(basis.coeffs[(2, 1)], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(basis.coeffs[(2, 2)], inv_sqrt2, epsilon = 1e-9);
        // ψ₂(1) = 0 and ψ₀ ≡ 1
        let vals = basis.evaluate(&[1.0]);
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn identity_gram_gives_identity_basis() {
        let set = generate_monomials(2, 1, &MonomialFilter::none()).unwrap();
        let g = DMatrix::identity(3, 3);
        let basis = orthonormalize(&g, &set, 1e12).unwrap();
        assert_eq!(basis.coeffs, DMatrix::identity(3, 3));
        let at_zero = basis.evaluate(&[0.0, 0.0]);
        assert_eq!(at_zero, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn singular_gram_reports_pivot() {
        // Duplicate monomial rows make G singular.
        let set = generate_monomials(1, 1, &MonomialFilter::none()).unwrap();
        let g = dmatrix![1.0, 1.0; 1.0, 1.0];
        match orthonormalize(&g, &set, f64::INFINITY) {
            Err(Error::IllConditionedBasis { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected ill-conditioned error, got {other:?}"),
        }
    }

    #[test]
    fn condition_limit_enforced() {
        let set = generate_monomials(1, 1, &MonomialFilter::none()).unwrap();
        let g = dmatrix![1.0, 0.0; 0.0, 1e-14];
        assert!(matches!(
            orthonormalize(&g, &set, 1e12),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn empirical_orthonormality() {
        let mut sigma = DMatrix::identity(2, 2);
        sigma[(0, 1)] = 0.6;
        sigma[(1, 0)] = 0.6;
        let model = std_normal_model(2, Some(sigma));
        let set = generate_monomials(2, 2, &MonomialFilter::none()).unwrap();
        let table = moment_table(&set, &model, 8, DEFAULT_NODE_BUDGET).unwrap();
        let g = gram_matrix(&set, &table).unwrap();
        let basis = orthonormalize(&g, &set, 1e12).unwrap();

        let n = 100_000;
        let samples = model.sample(n, 1234).unwrap();
        let m = set.len();
        let mut mean = vec![vec![0.0; m]; m];
        let mut sq = vec![vec![0.0; m]; m];
        let mut xi = vec![0.0; 2];
        for row in 0..n {
            xi[0] = samples[(row, 0)];
            xi[1] = samples[(row, 1)];
            let psi = basis.evaluate(&xi);
            for a in 0..m {
                for b in 0..m {
                    let v = psi[a] * psi[b];
                    mean[a][b] += v;
                    sq[a][b] += v * v;
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                let mu = mean[a][b] / n as f64;
                let var = (sq[a][b] / n as f64 - mu * mu).max(0.0);
                let se = (var / n as f64).sqrt().max(1e-12);
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (mu - expect).abs() <= 5.0 * se,
                    "entry ({a},{b}): sample mean {mu} expected {expect} (se {se})"
                );
            }
        }
    }
}
