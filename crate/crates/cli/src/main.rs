use std::path::PathBuf;
use std::process::ExitCode;

use basisdiag::exec;
use basisdiag::harness::{self, Format, HarnessError};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_MODEL: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "basisdiag", version, about = "Riesz-basis diagnostics for rank-one perturbations of Volterra operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every diagnostic stage on a scenario and write the report.
    Diagnose(DiagnoseArgs),
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    /// Scenario file, or builtin:S1 .. builtin:S4.
    #[arg(long)]
    scenario: String,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Override the grid size of an operator scenario.
    #[arg(long)]
    grid_n: Option<usize>,
    /// Override the real-line window half-width R.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutFormat::Both)]
    format: OutFormat,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the strip constant c.
    #[arg(long)]
    strip_c: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Both,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
            OutFormat::Both => Format::Both,
        }
    }
}

fn apply_thread_cap() {
    let Ok(raw) = std::env::var("BASISDIAG_THREADS") else { return };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if n == 1 {
                exec::set_mode(exec::Mode::Sequential);
            }
            exec::limit_threads(n);
        }
        _ => eprintln!("warning: ignoring BASISDIAG_THREADS={raw:?} (expected a positive integer)"),
    }
}

fn exit_code(e: &HarnessError) -> u8 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_MODEL
    }
}

fn diagnose(args: DiagnoseArgs) -> Result<(), HarnessError> {
    let scenario = harness::load_scenario(&args.scenario)?.with_overrides(args.grid_n, args.window, args.seed, args.strip_c)?;
    let report = harness::run_pipeline(&scenario)?;
    let files = harness::emit(&report, args.format.into(), &args.out)?;

    let width = report.checks.iter().map(|c| c.id.len()).max().unwrap_or(0);
    for c in &report.checks {
        println!("{:<width$}  {:<15} {}", c.id, c.verdict.as_str(), c.detail);
    }
    println!(
        "{} checks in {:.1} s; wrote {} files to {}",
        report.checks.len(),
        report.timestamp.total_seconds,
        files.len(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    apply_thread_cap();
    let result = match cli.command {
        Command::Diagnose(args) => diagnose(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
