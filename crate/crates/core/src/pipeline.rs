//! Stage runners behind the command-line interface: basis construction,
//! coefficient expansion, procurement solve, and Monte-Carlo validation.
//!
//! Each stage writes one JSON artifact into the output directory and records
//! its SHA-256 content hash in `manifest.json`. Downstream stages verify the
//! recorded hash of every upstream artifact they read, so a stale or edited
//! intermediate file fails loudly instead of silently mixing runs. Wall-clock
//! times live only in the manifest; all other artifacts are deterministic
//! functions of the scenario and seeds.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::basis::{gram_matrix, generate_monomials, moment_table, orthonormalize, Monomial, MomentTable, OrthonormalBasis};
use crate::error::{Error, Result};
use crate::pce::{self, PceMatrix};
use crate::procurement::{self, ProcurementSolution, QuantilePair};
use crate::scenario::Scenario;
use crate::validation::{self, ValidationReport};

pub const BASIS_FILE: &str = "basis.json";
pub const COEFFICIENTS_FILE: &str = "coefficients.json";
pub const SOLUTION_FILE: &str = "solution.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Command-line overrides applied on top of the scenario file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub samples: Option<usize>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) {
        if let Some(seed) = self.seed {
            s.validation.seed = seed;
        }
        if let Some(k) = self.k {
            s.quadrature.k = k;
        }
        if let Some(n) = self.samples {
            s.validation.n = n;
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Manifest {
    pub scenario_name: String,
    pub scenario_hash: String,
    /// Stage name → SHA-256 of the artifact file contents.
    pub artifacts: BTreeMap<String, String>,
    /// Stage name → wall time in milliseconds.
    pub wall_ms: BTreeMap<String, u64>,
    pub seed: u64,
}

impl Manifest {
    fn load_or_default(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(Manifest::default())
        }
    }

    fn store(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)?;
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

fn read_artifact<T: for<'de> Deserialize<'de>>(
    dir: &Path,
    file: &str,
    manifest: &Manifest,
    stage: &str,
) -> Result<T> {
    let path = dir.join(file);
    let text = std::fs::read_to_string(&path)?;
    let expected = manifest.artifacts.get(stage).ok_or_else(|| {
        Error::Validation(format!(
            "manifest has no record for stage '{stage}'; run that stage first"
        ))
    })?;
    let actual = sha256_hex(text.as_bytes());
    if &actual != expected {
        return Err(Error::Validation(format!(
            "artifact '{file}' does not match the manifest hash for stage '{stage}'; \
             the file was modified or belongs to a different run"
        )));
    }
    Ok(serde_json::from_str(&text)?)
}

fn check_scenario_hash(manifest: &Manifest, scenario_hash: &str) -> Result<()> {
    if manifest.scenario_hash != scenario_hash {
        return Err(Error::Validation(
            "scenario file does not match the one recorded in the manifest".into(),
        ));
    }
    Ok(())
}

/// Load a scenario file, apply overrides, and return it with the hash of the
/// effective (post-override) configuration.
pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<(Scenario, String)> {
    let mut s = Scenario::from_file(path)?;
    overrides.apply(&mut s);
    s.validate()?;
    let hash = sha256_hex(serde_json::to_string(&s)?.as_bytes());
    Ok((s, hash))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisArtifact {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub monomials: Vec<Vec<u32>>,
    /// Lower-triangular whitening matrix, row-major.
    pub coeffs: Vec<Vec<f64>>,
    pub gram_residual: f64,
    pub condition: f64,
    /// Cached monomial moments E[ξ^e], reused by the expansion stage.
    pub moments: BTreeMap<String, f64>,
}

fn moment_key(exponents: &[u32]) -> String {
    exponents
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_moment_key(key: &str) -> Result<Vec<u32>> {
    key.split(',')
        .map(|p| {
            p.parse::<u32>()
                .map_err(|_| Error::Validation(format!("malformed moment key '{key}'")))
        })
        .collect()
}

impl BasisArtifact {
    fn new(
        scenario: &Scenario,
        scenario_hash: &str,
        basis: &OrthonormalBasis,
        cache: &MomentTable,
    ) -> Self {
        let m = basis.len();
        let coeffs = (0..m)
            .map(|r| (0..m).map(|c| basis.coeffs[(r, c)]).collect())
            .collect();
        let moments = cache
            .entries()
            .map(|(e, v)| (moment_key(e), *v))
            .collect();
        BasisArtifact {
            scenario_name: scenario.name.clone(),
            scenario_hash: scenario_hash.to_string(),
            monomials: basis.monomials.iter().map(|m| m.exponents.clone()).collect(),
            coeffs,
            gram_residual: basis.gram_residual,
            condition: basis.condition,
            moments,
        }
    }

    pub fn to_basis(&self) -> OrthonormalBasis {
        let m = self.monomials.len();
        let mut coeffs = nalgebra::DMatrix::zeros(m, m);
        for r in 0..m {
            for c in 0..m {
                coeffs[(r, c)] = self.coeffs[r][c];
            }
        }
        OrthonormalBasis {
            monomials: self
                .monomials
                .iter()
                .map(|e| Monomial {
                    exponents: e.clone(),
                })
                .collect(),
            coeffs,
            gram_residual: self.gram_residual,
            condition: self.condition,
        }
    }

    pub fn to_moment_table(&self) -> Result<MomentTable> {
        let mut table = MomentTable::default();
        for (key, &value) in &self.moments {
            table.insert(parse_moment_key(key)?, value);
        }
        Ok(table)
    }
}

/// Stage 1: generate the filtered monomial set, integrate its Gram matrix,
/// and whiten it into an orthonormal basis.
pub fn cmd_basis(scenario_path: &Path, out: &Path, overrides: &Overrides) -> Result<BasisArtifact> {
    let (scenario, hash) = load_scenario(scenario_path, overrides)?;
    std::fs::create_dir_all(out)?;
    let started = Instant::now();
    let (artifact, _, _) = build_basis(&scenario, &hash)?;
    let wall = started.elapsed().as_millis() as u64;

    let mut manifest = Manifest::load_or_default(out)?;
    manifest.scenario_name = scenario.name.clone();
    manifest.scenario_hash = hash;
    manifest.seed = scenario.validation.seed;
    let file_hash = write_json(&out.join(BASIS_FILE), &artifact)?;
    manifest.artifacts.insert("basis".into(), file_hash);
    manifest.wall_ms.insert("basis".into(), wall);
    // Downstream artifacts from earlier runs are now stale.
    for stage in ["expand", "solve", "validate"] {
        manifest.artifacts.remove(stage);
        manifest.wall_ms.remove(stage);
    }
    manifest.store(out)?;
    Ok(artifact)
}

fn build_basis(
    scenario: &Scenario,
    scenario_hash: &str,
) -> Result<(BasisArtifact, OrthonormalBasis, MomentTable)> {
    let model = scenario.joint_model()?;
    let set = generate_monomials(scenario.dim(), scenario.basis.max_degree, &scenario.monomial_filter())?;
    let table = moment_table(
        &set,
        &model,
        scenario.quadrature.k,
        scenario.quadrature.node_budget,
    )?;
    let gram = gram_matrix(&set, &table)?;
    let basis = orthonormalize(&gram, &set, scenario.basis.condition_limit)?;
    let artifact = BasisArtifact::new(scenario, scenario_hash, &basis, &table);
    Ok((artifact, basis, table))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientsArtifact {
    pub scenario_hash: String,
    pub pce: PceMatrix,
    /// Per-bid max relative error of the expansion over copula samples.
    pub expansion_errors: Vec<BidError>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BidError {
    pub bid_id: String,
    pub max_relative_error: f64,
}

const EXPANSION_ERROR_SAMPLES: usize = 10_000;

/// Stage 2: project every bid function onto the orthonormal basis.
pub fn cmd_expand(
    scenario_path: &Path,
    out: &Path,
    overrides: &Overrides,
) -> Result<CoefficientsArtifact> {
    let (scenario, hash) = load_scenario(scenario_path, overrides)?;
    let mut manifest = Manifest::load_or_default(out)?;
    check_scenario_hash(&manifest, &hash)?;
    let basis_artifact: BasisArtifact = read_artifact(out, BASIS_FILE, &manifest, "basis")?;
    let basis = basis_artifact.to_basis();
    let mut cache = basis_artifact.to_moment_table()?;

    let started = Instant::now();
    let artifact = expand_bids(&scenario, &hash, &basis, &mut cache)?;
    let wall = started.elapsed().as_millis() as u64;

    let file_hash = write_json(&out.join(COEFFICIENTS_FILE), &artifact)?;
    manifest.artifacts.insert("expand".into(), file_hash);
    manifest.wall_ms.insert("expand".into(), wall);
    for stage in ["solve", "validate"] {
        manifest.artifacts.remove(stage);
        manifest.wall_ms.remove(stage);
    }
    manifest.store(out)?;
    Ok(artifact)
}

fn expand_bids(
    scenario: &Scenario,
    scenario_hash: &str,
    basis: &OrthonormalBasis,
    cache: &mut MomentTable,
) -> Result<CoefficientsArtifact> {
    let model = scenario.joint_model()?;
    let mut columns = Vec::with_capacity(scenario.bids.len());
    let mut errors = Vec::with_capacity(scenario.bids.len());
    for bid in &scenario.bids {
        let coeffs = pce::expand(
            bid,
            basis,
            &model,
            scenario.quadrature.k,
            scenario.quadrature.node_budget,
            cache,
        )?;
        let err = pce::expansion_error(
            bid,
            &coeffs,
            basis,
            &model,
            EXPANSION_ERROR_SAMPLES,
            scenario.validation.seed,
        )?;
        errors.push(BidError {
            bid_id: bid.id.clone(),
            max_relative_error: err,
        });
        columns.push(coeffs);
    }
    let pce = PceMatrix::from_columns(
        scenario.bids.iter().map(|b| b.id.clone()).collect(),
        &columns,
        scenario_hash.to_string(),
    )?;
    Ok(CoefficientsArtifact {
        scenario_hash: scenario_hash.to_string(),
        pce,
        expansion_errors: errors,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionArtifact {
    pub scenario_hash: String,
    pub lambdas: QuantilePair,
    pub solution: ProcurementSolution,
}

/// Stage 3: assemble and solve the chance-constrained procurement SOCP.
pub fn cmd_solve(
    scenario_path: &Path,
    out: &Path,
    overrides: &Overrides,
) -> Result<SolutionArtifact> {
    let (scenario, hash) = load_scenario(scenario_path, overrides)?;
    let mut manifest = Manifest::load_or_default(out)?;
    check_scenario_hash(&manifest, &hash)?;
    let coeffs: CoefficientsArtifact = read_artifact(out, COEFFICIENTS_FILE, &manifest, "expand")?;

    let started = Instant::now();
    let artifact = solve_procurement(&scenario, &hash, &coeffs.pce)?;
    let wall = started.elapsed().as_millis() as u64;

    let file_hash = write_json(&out.join(SOLUTION_FILE), &artifact)?;
    manifest.artifacts.insert("solve".into(), file_hash);
    manifest.wall_ms.insert("solve".into(), wall);
    manifest.artifacts.remove("validate");
    manifest.wall_ms.remove("validate");
    manifest.store(out)?;
    Ok(artifact)
}

fn solve_procurement(
    scenario: &Scenario,
    scenario_hash: &str,
    pce: &PceMatrix,
) -> Result<SolutionArtifact> {
    let lambdas = QuantilePair::normal(scenario.procurement.epsilon)?;
    let program = procurement::assemble(&scenario.procurement, pce, lambdas)?;
    let solution = procurement::solve(&program)?;
    Ok(SolutionArtifact {
        scenario_hash: scenario_hash.to_string(),
        lambdas,
        solution,
    })
}

/// Stage 4: Monte-Carlo validation of the original chance constraints, plus
/// per-bid histograms comparing the true bid to its expansion.
pub fn cmd_validate(
    scenario_path: &Path,
    out: &Path,
    overrides: &Overrides,
) -> Result<ValidationReport> {
    let (scenario, hash) = load_scenario(scenario_path, overrides)?;
    let mut manifest = Manifest::load_or_default(out)?;
    check_scenario_hash(&manifest, &hash)?;
    let basis_artifact: BasisArtifact = read_artifact(out, BASIS_FILE, &manifest, "basis")?;
    let coeffs: CoefficientsArtifact = read_artifact(out, COEFFICIENTS_FILE, &manifest, "expand")?;
    let sol: SolutionArtifact = read_artifact(out, SOLUTION_FILE, &manifest, "solve")?;

    let started = Instant::now();
    let report = run_validation(&scenario, &basis_artifact.to_basis(), &coeffs, &sol.solution, out)?;
    let wall = started.elapsed().as_millis() as u64;

    let file_hash = write_json(&out.join(VALIDATION_FILE), &report)?;
    manifest.artifacts.insert("validate".into(), file_hash);
    manifest.wall_ms.insert("validate".into(), wall);
    manifest.store(out)?;
    Ok(report)
}

fn run_validation(
    scenario: &Scenario,
    basis: &OrthonormalBasis,
    coeffs: &CoefficientsArtifact,
    solution: &ProcurementSolution,
    out: &Path,
) -> Result<ValidationReport> {
    let model = scenario.joint_model()?;
    let mut report = validation::validate(
        solution,
        &scenario.bids,
        &model,
        &scenario.procurement,
        scenario.validation.n,
        scenario.validation.seed,
    )?;
    report.expansion_errors = coeffs
        .expansion_errors
        .iter()
        .map(|e| validation::ExpansionErrorRecord {
            bid_id: e.bid_id.clone(),
            max_relative_error: e.max_relative_error,
        })
        .collect();

    let comparisons = validation::compare_expansion(
        &scenario.bids,
        &coeffs.pce,
        basis,
        &model,
        scenario.validation.n,
        scenario.validation.seed,
        scenario.validation.histogram_bins,
    )?;
    for cmp in &comparisons {
        let path = out.join(format!("hist_{}.csv", cmp.bid_id));
        let mut text = String::from("bin_left,bin_right,count_true,count_expansion\n");
        for i in 0..cmp.counts_true.len() {
            text.push_str(&format!(
                "{},{},{},{}\n",
                cmp.edges[i],
                cmp.edges[i + 1],
                cmp.counts_true[i],
                cmp.counts_expansion[i]
            ));
        }
        std::fs::write(path, text)?;
    }
    Ok(report)
}

/// Artifacts produced by a full pipeline run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub basis: BasisArtifact,
    pub coefficients: CoefficientsArtifact,
    pub solution: SolutionArtifact,
    pub report: ValidationReport,
    pub out_dir: PathBuf,
}

/// All four stages in sequence, sharing in-memory state but writing the same
/// artifacts and manifest the individual stage commands would.
pub fn cmd_run(scenario_path: &Path, out: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let (scenario, hash) = load_scenario(scenario_path, overrides)?;
    std::fs::create_dir_all(out)?;
    let mut manifest = Manifest::load_or_default(out)?;
    manifest.scenario_name = scenario.name.clone();
    manifest.scenario_hash = hash.clone();
    manifest.seed = scenario.validation.seed;

    let started = Instant::now();
    let (basis_artifact, basis, mut cache) = build_basis(&scenario, &hash)?;
    let basis_wall = started.elapsed().as_millis() as u64;
    let file_hash = write_json(&out.join(BASIS_FILE), &basis_artifact)?;
    manifest.artifacts.insert("basis".into(), file_hash);
    manifest.wall_ms.insert("basis".into(), basis_wall);

    let started = Instant::now();
    let coefficients = expand_bids(&scenario, &hash, &basis, &mut cache)?;
    let expand_wall = started.elapsed().as_millis() as u64;
    let file_hash = write_json(&out.join(COEFFICIENTS_FILE), &coefficients)?;
    manifest.artifacts.insert("expand".into(), file_hash);
    manifest.wall_ms.insert("expand".into(), expand_wall);

    let started = Instant::now();
    let solution = solve_procurement(&scenario, &hash, &coefficients.pce)?;
    let solve_wall = started.elapsed().as_millis() as u64;
    let file_hash = write_json(&out.join(SOLUTION_FILE), &solution)?;
    manifest.artifacts.insert("solve".into(), file_hash);
    manifest.wall_ms.insert("solve".into(), solve_wall);

    let started = Instant::now();
    let report = run_validation(&scenario, &basis, &coefficients, &solution.solution, out)?;
    let validate_wall = started.elapsed().as_millis() as u64;
    let file_hash = write_json(&out.join(VALIDATION_FILE), &report)?;
    manifest.artifacts.insert("validate".into(), file_hash);
    manifest.wall_ms.insert("validate".into(), validate_wall);

    manifest.store(out)?;
    Ok(RunOutput {
        basis: basis_artifact,
        coefficients,
        solution,
        report,
        out_dir: out.to_path_buf(),
    })
}
