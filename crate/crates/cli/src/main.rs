//! Command-line driver for the copula-PCE reserve procurement pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use copula_pce::pipeline::{self, Overrides};

#[derive(Parser)]
#[command(
    name = "copula-pce",
    about = "Polynomial chaos expansion under Gaussian copulas, applied to \
             chance-constrained two-zone reserve procurement",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario description (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the validation sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the quadrature order (nodes per latent dimension).
    #[arg(long)]
    k: Option<usize>,
    /// Override the Monte-Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            k: self.k,
            samples: self.samples,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the orthonormal polynomial basis for the scenario.
    Basis(Common),
    /// Expand every bid function into chaos coefficients.
    Expand(Common),
    /// Assemble and solve the reserve procurement cone program.
    Solve(Common),
    /// Monte-Carlo validation of the chance constraints at the solution.
    Validate(Common),
    /// Run all four stages in sequence.
    Run(Common),
}

fn execute(cli: &Cli) -> copula_pce::Result<()> {
    let (common, quiet) = match &cli.command {
        Command::Basis(c)
        | Command::Expand(c)
        | Command::Solve(c)
        | Command::Validate(c)
        | Command::Run(c) => (c, c.quiet),
    };
    let ov = common.overrides();
    match &cli.command {
        Command::Basis(_) => {
            let artifact = pipeline::cmd_basis(&common.scenario, &common.out, &ov)?;
            if !quiet {
                println!(
                    "basis: {} functions, gram residual {:.3e}, condition {:.3e}",
                    artifact.monomials.len(),
                    artifact.gram_residual,
                    artifact.condition
                );
            }
        }
        Command::Expand(_) => {
            let artifact = pipeline::cmd_expand(&common.scenario, &common.out, &ov)?;
            if !quiet {
                for e in &artifact.expansion_errors {
                    println!(
                        "expand: {} max relative error {:.3e}",
                        e.bid_id, e.max_relative_error
                    );
                }
            }
        }
        Command::Solve(_) => {
            let artifact = pipeline::cmd_solve(&common.scenario, &common.out, &ov)?;
            if !quiet {
                println!(
                    "solve: status {:?}, objective {:.6}",
                    artifact.solution.status, artifact.solution.objective
                );
                for m in &artifact.solution.residuals {
                    println!(
                        "  {}: mean {:.4}, sigma {:.4}, slack {:.4}",
                        m.name, m.mean, m.sigma, m.slack
                    );
                }
            }
        }
        Command::Validate(_) => {
            let report = pipeline::cmd_validate(&common.scenario, &common.out, &ov)?;
            if !quiet {
                print_report(&report);
            }
        }
        Command::Run(_) => {
            let run = pipeline::cmd_run(&common.scenario, &common.out, &ov)?;
            if !quiet {
                println!(
                    "solve: status {:?}, objective {:.6}",
                    run.solution.solution.status, run.solution.solution.objective
                );
                print_report(&run.report);
            }
        }
    }
    Ok(())
}

fn print_report(report: &copula_pce::validation::ValidationReport) {
    println!("validation: n = {}, seed = {}", report.n, report.seed);
    for rec in &report.constraints {
        println!(
            "  {} [{:?}]: p1 {:.4}, p99 {:.4}, violation rate {:.4} (bound {})",
            rec.constraint, rec.mode, rec.percentile_1, rec.percentile_99, rec.violation_rate, rec.bound
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
