//! Command-line front end: convergence studies, single benchmark runs with
//! optional VTK output, and the structural property checks.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use vortherm::harness::{
    convergence_study, export_vtk, parse_config, report, run_benchmark, run_property_suite,
    suite_passed, ErrorReport, ReportFormat,
};

#[derive(Parser)]
#[command(
    name = "vortherm",
    version,
    about = "Mixed finite elements for nonisothermal Brinkman flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the built-in benchmark on a sequence of refined meshes and
    /// print the error/rate table.
    Convergence {
        /// Discretization order (0 or 1).
        #[arg(long, default_value_t = 0)]
        degree: usize,
        /// Number of refinement levels.
        #[arg(long, default_value_t = 4)]
        levels: usize,
        /// Table format.
        #[arg(long, value_enum, default_value_t = ReportArg::Md)]
        report: ReportArg,
        /// Write the table to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one benchmark instance described by a `key = value` config file.
    Solve {
        /// Configuration file; omitted keys keep the benchmark defaults.
        #[arg(long)]
        config: PathBuf,
        /// Write the solution as a legacy ASCII VTK file.
        #[arg(long)]
        vtk: Option<PathBuf>,
    },
    /// Run the structural property checks and report pass/fail per invariant.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Csv,
    Md,
}

impl From<ReportArg> for ReportFormat {
    fn from(arg: ReportArg) -> Self {
        match arg {
            ReportArg::Csv => ReportFormat::Csv,
            ReportArg::Md => ReportFormat::Markdown,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> vortherm::Result<ExitCode> {
    match cli.command {
        Command::Convergence {
            degree,
            levels,
            report: fmt,
            out,
        } => {
            let rep = convergence_study(degree, levels)?;
            let text = report(&rep, fmt.into());
            match out {
                Some(path) => std::fs::write(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { config, vtk } => {
            let cfg = parse_config(&std::fs::read_to_string(&config)?)?;
            let run = run_benchmark(&cfg)?;
            let rep = ErrorReport {
                degree: cfg.degree,
                rows: vec![run.errors],
            };
            print!("{}", report(&rep, ReportFormat::Markdown));
            println!(
                "converged in {} Newton steps (residuals {:?})",
                run.iterations.iterations, run.iterations.history
            );
            if let Some(path) = vtk {
                export_vtk(&run.state, &run.spaces, &path)?;
                println!("solution written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let checks = run_property_suite()?;
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.observed
                );
            }
            Ok(if suite_passed(&checks) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
