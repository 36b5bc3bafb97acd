//! Chance-constrained two-zone reserve procurement: quantile reformulation
//! of the probabilistic constraints as second-order cones and solution of the
//! resulting convex program.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::distributions::std_normal_inv_cdf;
use crate::error::{Error, Result};
use crate::pce::{combine, moments, PceMatrix};

/// Problem parameters: bid counts per zone, reserve requirements, tie-line
/// limits, violation probability and per-bid costs. Bids are ordered zone X
/// first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcurementSpec {
    pub n_x: usize,
    pub n_y: usize,
    pub reserve_x: f64,
    pub reserve_y: f64,
    pub tie_xy: f64,
    pub tie_yx: f64,
    pub epsilon: f64,
    pub costs: Vec<f64>,
}

impl ProcurementSpec {
    pub fn validate(&self) -> Result<()> {
        let z = self.n_x + self.n_y;
        if z == 0 {
            return Err(Error::Validation("no bids declared".into()));
        }
        if self.costs.len() != z {
            return Err(Error::Validation(format!(
                "cost vector length {} does not match bid count {z}",
                self.costs.len()
            )));
        }
        for &v in [self.reserve_x, self.reserve_y, self.tie_xy, self.tie_yx].iter() {
            if !(v >= 0.0) {
                return Err(Error::Validation(format!("limits must be ≥ 0, got {v}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Validation(format!(
                "epsilon must be in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn n_bids(&self) -> usize {
        self.n_x + self.n_y
    }
}

/// Lower/upper quantile factors λ_ε and λ_{1−ε}.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuantilePair {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

impl QuantilePair {
    /// Gaussian quantile factors for violation probability ε.
    pub fn normal(epsilon: f64) -> Result<Self> {
        Ok(Self {
            lambda_lo: quantile_factor(epsilon)?,
            lambda_hi: quantile_factor(1.0 - epsilon)?,
        })
    }
}

/// Quantile factor λ such that μ + λσ is the p-quantile of a normal
/// distribution: λ = Φ⁻¹(p).
pub fn quantile_factor(p: f64) -> Result<f64> {
    std_normal_inv_cdf(p)
        .map_err(|_| Error::Parameter(format!("quantile level must be in (0,1), got {p}")))
}

const CONSTRAINT_NAMES: [&str; 4] = ["reserve_x", "reserve_y", "tie_xy", "tie_yx"];

/// Standard conic form: minimize objᵀv subject to b − A v ∈ K, with K a
/// product of a nonnegative orthant and second-order cones.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    /// (row, col, value) triplets of the constraint matrix A.
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub nonneg_rows: usize,
    /// Dimensions of the second-order cones, in row order after the orthant.
    pub soc_dims: Vec<usize>,
    spec: ProcurementSpec,
    lambdas: QuantilePair,
    pce: PceMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Slack of one reformulated constraint at the solution; for the cone
/// constraints this is t − ‖u‖₂.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintMargin {
    pub name: String,
    pub mean: f64,
    pub sigma: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcurementSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub residuals: Vec<ConstraintMargin>,
}

/// Build the second-order-cone program. Since λ_lo < 0, the reserve
/// constraints μ + λ_lo·σ ≥ R are rearranged to |λ_lo|·‖A w‖₂ ≤ μ − R.
pub fn assemble(
    spec: &ProcurementSpec,
    pce: &PceMatrix,
    lambdas: QuantilePair,
) -> Result<ConicProgram> {
    spec.validate()?;
    let z = spec.n_bids();
    if pce.n_bids() != z {
        return Err(Error::Parameter(format!(
            "PCE matrix has {} bid columns but the procurement spec declares {z}",
            pce.n_bids()
        )));
    }
    if lambdas.lambda_lo >= 0.0 || lambdas.lambda_hi <= 0.0 {
        return Err(Error::Parameter(format!(
            "quantile pair must satisfy lambda_lo < 0 < lambda_hi, got {lambdas:?}"
        )));
    }
    let l = pce.n_higher();
    let n_vars = 2 * z; // v = [x; y]
    let mut objective = vec![0.0; n_vars];
    for i in 0..z {
        objective[i] = spec.costs[i];
        objective[z + i] = spec.costs[i];
    }

    let mut triplets = Vec::new();
    let mut rhs = Vec::new();

    // Orthant rows: x ≥ 0, y ≥ 0, x + y ≤ 1.
    for i in 0..n_vars {
        triplets.push((rhs.len(), i, -1.0));
        rhs.push(0.0);
    }
    for i in 0..z {
        let row = rhs.len();
        triplets.push((row, i, 1.0));
        triplets.push((row, z + i, 1.0));
        rhs.push(1.0);
    }
    let nonneg_rows = rhs.len();

    let abs_lo = lambdas.lambda_lo.abs();
    let mut soc_dims = Vec::with_capacity(4);

    // Columns of the decision vector for each constraint: (variable offset,
    // bid column range, scaling of the norm term, reserve/tie handling).
    // Reserve X: t = a0ᵀx − R_x, u = |λ_lo|·A x over all columns.
    // Reserve Y: same with y.
    for (offset, reserve) in [(0usize, spec.reserve_x), (z, spec.reserve_y)] {
        let t_row = rhs.len();
        for j in 0..z {
            triplets.push((t_row, offset + j, -pce.a0[j]));
        }
        rhs.push(-reserve);
        for row in 0..l {
            let r = rhs.len();
            for j in 0..z {
                let a = pce.higher[row][j];
                if a != 0.0 {
                    triplets.push((r, offset + j, -abs_lo * a));
                }
            }
            rhs.push(0.0);
        }
        soc_dims.push(l + 1);
    }

    // Tie X→Y: a0ᵀy + λ_hi·‖A y‖ ≤ T_xy restricted to zone-X bid columns.
    // Tie Y→X: same for x restricted to zone-Y bid columns.
    let tie_cases = [
        (z, 0, spec.n_x, spec.tie_xy),          // y over X columns
        (0, spec.n_x, spec.n_x + spec.n_y, spec.tie_yx), // x over Y columns
    ];
    for (offset, col_lo, col_hi, tie) in tie_cases {
        let t_row = rhs.len();
        for j in col_lo..col_hi {
            triplets.push((t_row, offset + j, pce.a0[j]));
        }
        rhs.push(tie);
        for row in 0..l {
            let r = rhs.len();
            for j in col_lo..col_hi {
                let a = pce.higher[row][j];
                if a != 0.0 {
                    triplets.push((r, offset + j, lambdas.lambda_hi * a));
                }
            }
            rhs.push(0.0);
        }
        soc_dims.push(l + 1);
    }

    Ok(ConicProgram {
        n_vars,
        objective,
        triplets,
        rhs,
        nonneg_rows,
        soc_dims,
        spec: spec.clone(),
        lambdas,
        pce: pce.clone(),
    })
}

fn csc_from_triplets(
    m: usize,
    n: usize,
    triplets: &[(usize, usize, f64)],
) -> CscMatrix<f64> {
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(row, col, val) in triplets {
        by_col[col].push((row, val));
    }
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    colptr.push(0);
    for col in by_col.iter_mut() {
        col.sort_by_key(|&(r, _)| r);
        for &(r, v) in col.iter() {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

/// Solve the conic program with a deterministic interior-point configuration.
pub fn solve(program: &ConicProgram) -> Result<ProcurementSolution> {
    let m = program.rhs.len();
    let n = program.n_vars;
    let p = CscMatrix::new(n, n, vec![0; n + 1], vec![], vec![]);
    let a = csc_from_triplets(m, n, &program.triplets);
    let mut cones: Vec<SupportedConeT<f64>> =
        vec![SupportedConeT::NonnegativeConeT(program.nonneg_rows)];
    for &d in &program.soc_dims {
        cones.push(SupportedConeT::SecondOrderConeT(d));
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(1e-9)
        .tol_gap_abs(1e-9)
        .tol_gap_rel(1e-9)
        .build()
        .map_err(|e| Error::Numerical(format!("solver settings: {e}")))?;
    let mut solver = DefaultSolver::new(
        &p,
        &program.objective,
        &a,
        &program.rhs,
        &cones,
        settings,
    )
    .map_err(|e| Error::Numerical(format!("solver setup: {e:?}")))?;
    solver.solve();

    let status = match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible
        | SolverStatus::DualInfeasible
        | SolverStatus::AlmostPrimalInfeasible
        | SolverStatus::AlmostDualInfeasible => SolveStatus::Infeasible,
        _ => SolveStatus::NumericalFailure,
    };
    let z = program.spec.n_bids();
    let v = &solver.solution.x;
    let x: Vec<f64> = v[..z].to_vec();
    let y: Vec<f64> = v[z..].to_vec();
    let objective = program
        .objective
        .iter()
        .zip(v.iter())
        .map(|(c, vi)| c * vi)
        .sum();
    let residuals = if status == SolveStatus::Optimal {
        analytic_quantile_check(&x, &y, &program.pce, &program.spec, program.lambdas)?
    } else {
        Vec::new()
    };
    if status == SolveStatus::Infeasible {
        let worst = most_violated(&program.spec, &program.pce, program.lambdas, &x, &y)?;
        return Ok(ProcurementSolution {
            x,
            y,
            objective,
            status,
            residuals: vec![worst],
        });
    }
    Ok(ProcurementSolution {
        x,
        y,
        objective,
        status,
        residuals,
    })
}

fn most_violated(
    spec: &ProcurementSpec,
    pce: &PceMatrix,
    lambdas: QuantilePair,
    x: &[f64],
    y: &[f64],
) -> Result<ConstraintMargin> {
    let margins = analytic_quantile_check(x, y, pce, spec, lambdas)?;
    margins
        .into_iter()
        .min_by(|a, b| a.slack.partial_cmp(&b.slack).unwrap())
        .ok_or_else(|| Error::Internal("no constraints to report".into()))
}

/// Recompute μ + λσ for each of the four reformulated constraints and report
/// the analytic slack.
pub fn analytic_quantile_check(
    x: &[f64],
    y: &[f64],
    pce: &PceMatrix,
    spec: &ProcurementSpec,
    lambdas: QuantilePair,
) -> Result<Vec<ConstraintMargin>> {
    let z = spec.n_bids();
    if x.len() != z || y.len() != z {
        return Err(Error::Parameter(format!(
            "solution vectors must have length {z}"
        )));
    }
    let mut restricted_y = vec![0.0; z];
    restricted_y[..spec.n_x].copy_from_slice(&y[..spec.n_x]);
    let mut restricted_x = vec![0.0; z];
    restricted_x[spec.n_x..].copy_from_slice(&x[spec.n_x..]);

    let cases: [(&str, &[f64], f64, bool); 4] = [
        (CONSTRAINT_NAMES[0], x, spec.reserve_x, true),
        (CONSTRAINT_NAMES[1], y, spec.reserve_y, true),
        (CONSTRAINT_NAMES[2], &restricted_y, spec.tie_xy, false),
        (CONSTRAINT_NAMES[3], &restricted_x, spec.tie_yx, false),
    ];
    let mut out = Vec::with_capacity(4);
    for (name, weights, bound, is_reserve) in cases {
        let combined = combine(weights, pce)?;
        let (mean, sigma) = moments(&combined);
        let slack = if is_reserve {
            mean + lambdas.lambda_lo * sigma - bound
        } else {
            bound - (mean + lambdas.lambda_hi * sigma)
        };
        out.push(ConstraintMargin {
            name: name.to_string(),
            mean,
            sigma,
            slack,
        });
    }
    Ok(out)
}
