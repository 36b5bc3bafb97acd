//! Monte-Carlo verification of the original chance constraints at the solved
//! procurement point, under both the dependent (copula) and the
//! independence-assumption sampling models.

use serde::{Deserialize, Serialize};

use crate::basis::OrthonormalBasis;
use crate::copula::JointModel;
use crate::error::{Error, Result};
use crate::pce::{BidFunction, PceMatrix};
use crate::procurement::{ProcurementSolution, ProcurementSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Dependent,
    Independent,
}

/// Empirical percentiles and violation rate of one constraint in one
/// sampling mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub constraint: String,
    pub mode: SamplingMode,
    pub n: usize,
    pub seed: u64,
    pub percentile_1: f64,
    pub percentile_99: f64,
    pub violation_rate: f64,
    pub bound: f64,
    /// 1σ order-statistic half-width of the checked percentile.
    pub percentile_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionErrorRecord {
    pub bid_id: String,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub seed: u64,
    /// Quantile estimator: linear interpolation of order statistics (type 7).
    pub quantile_estimator: String,
    pub constraints: Vec<ConstraintRecord>,
    pub expansion_errors: Vec<ExpansionErrorRecord>,
}

/// Type-7 quantile: linear interpolation between order statistics of the
/// sorted input.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Equal-width histogram over [min, max]; counts sum to the input length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Parameter("histogram of empty input".into()));
    }
    if bins == 0 {
        return Err(Error::Parameter("histogram requires bins ≥ 1".into()));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if max > min {
        (max - min) / bins as f64
    } else {
        1.0
    };
    let edges: Vec<f64> = (0..=bins).map(|i| min + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let mut idx = ((v - min) / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// The four procured-power sums of the chance constraints, evaluated on the
/// true bid functions at the solved weights.
fn constraint_sums(
    bids: &[BidFunction],
    spec: &ProcurementSpec,
    solution: &ProcurementSolution,
    xi: &[f64],
) -> [f64; 4] {
    let mut reserve_x = 0.0;
    let mut reserve_y = 0.0;
    let mut tie_xy = 0.0;
    let mut tie_yx = 0.0;
    for (i, bid) in bids.iter().enumerate() {
        let e = bid.eval(xi);
        reserve_x += solution.x[i] * e;
        reserve_y += solution.y[i] * e;
        if i < spec.n_x {
            tie_xy += solution.y[i] * e;
        } else {
            tie_yx += solution.x[i] * e;
        }
    }
    [reserve_x, reserve_y, tie_xy, tie_yx]
}

const CONSTRAINT_NAMES: [&str; 4] = ["reserve_x", "reserve_y", "tie_xy", "tie_yx"];

/// Order-statistic 1σ half-width of the empirical p-quantile.
fn quantile_se(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len() as f64;
    let spread = (n * p * (1.0 - p)).sqrt();
    let lo = ((n * p - spread).max(0.0) as usize).min(sorted.len() - 1);
    let hi = ((n * p + spread) as usize).min(sorted.len() - 1);
    0.5 * (sorted[hi] - sorted[lo]).abs()
}

/// Monte-Carlo validation of the chance constraints; deterministic per seed.
pub fn validate(
    solution: &ProcurementSolution,
    bids: &[BidFunction],
    model: &JointModel,
    spec: &ProcurementSpec,
    n: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n == 0 {
        return Err(Error::Parameter("validation requires n ≥ 1".into()));
    }
    let mut records = Vec::with_capacity(8);
    for mode in [SamplingMode::Dependent, SamplingMode::Independent] {
        let samples = match mode {
            SamplingMode::Dependent => model.sample(n, seed)?,
            SamplingMode::Independent => model.sample_independent(n, seed)?,
        };
        let d = model.dim();
        let mut sums = vec![[0.0f64; 4]; n];
        let mut xi = vec![0.0; d];
        for row in 0..n {
            for i in 0..d {
                xi[i] = samples[(row, i)];
            }
            sums[row] = constraint_sums(bids, spec, solution, &xi);
        }
        for (c, name) in CONSTRAINT_NAMES.iter().enumerate() {
            let mut vals: Vec<f64> = sums.iter().map(|s| s[c]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let (bound, is_reserve) = match c {
                0 => (spec.reserve_x, true),
                1 => (spec.reserve_y, true),
                2 => (spec.tie_xy, false),
                _ => (spec.tie_yx, false),
            };
            let violations = if is_reserve {
                vals.iter().filter(|&&v| v < bound).count()
            } else {
                vals.iter().filter(|&&v| v > bound).count()
            };
            let checked_p = if is_reserve { 0.01 } else { 0.99 };
            records.push(ConstraintRecord {
                constraint: name.to_string(),
                mode,
                n,
                seed,
                percentile_1: quantile_sorted(&vals, 0.01),
                percentile_99: quantile_sorted(&vals, 0.99),
                violation_rate: violations as f64 / n as f64,
                bound,
                percentile_se: quantile_se(&vals, checked_p),
            });
        }
    }
    Ok(ValidationReport {
        n,
        seed,
        quantile_estimator: "type7_linear_interpolation".into(),
        constraints: records,
        expansion_errors: Vec::new(),
    })
}

/// Paired histogram data of the true bid function and its expansion, plus the
/// max relative error, over the same copula samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionComparison {
    pub bid_id: String,
    pub max_relative_error: f64,
    pub edges: Vec<f64>,
    pub counts_true: Vec<u64>,
    pub counts_expansion: Vec<u64>,
}

pub fn compare_expansion(
    bids: &[BidFunction],
    pce: &PceMatrix,
    basis: &OrthonormalBasis,
    model: &JointModel,
    n: usize,
    seed: u64,
    bins: usize,
) -> Result<Vec<ExpansionComparison>> {
    const FLOOR: f64 = 1e-12;
    let samples = model.sample(n, seed)?;
    let d = model.dim();
    let mut out = Vec::with_capacity(bids.len());
    for (j, bid) in bids.iter().enumerate() {
        let mut coeffs = Vec::with_capacity(1 + pce.n_higher());
        coeffs.push(pce.a0[j]);
        for row in &pce.higher {
            coeffs.push(row[j]);
        }
        let mut truth = Vec::with_capacity(n);
        let mut approx = Vec::with_capacity(n);
        let mut worst = 0.0f64;
        let mut xi = vec![0.0; d];
        for row in 0..n {
            for i in 0..d {
                xi[i] = samples[(row, i)];
            }
            let t = bid.eval(&xi);
            let psi = basis.evaluate(&xi);
            let a: f64 = coeffs.iter().zip(&psi).map(|(c, p)| c * p).sum();
            worst = worst.max((t - a).abs() / t.abs().max(FLOOR));
            truth.push(t);
            approx.push(a);
        }
        // Shared bin edges so the two histograms are directly comparable.
        let h_true = histogram(&truth, bins)?;
        let min = h_true.edges[0];
        let width = h_true.edges[1] - h_true.edges[0];
        let mut counts_expansion = vec![0u64; bins];
        for &v in &approx {
            let mut idx = ((v - min) / width) as isize;
            idx = idx.clamp(0, bins as isize - 1);
            counts_expansion[idx as usize] += 1;
        }
        out.push(ExpansionComparison {
            bid_id: bid.id.clone(),
            max_relative_error: worst,
            edges: h_true.edges,
            counts_true: h_true.counts,
            counts_expansion,
        });
    }
    Ok(out)
}
