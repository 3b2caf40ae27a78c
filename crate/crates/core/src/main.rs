use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dgmg::cli::{exit_code, parse_config, run, Overrides};

/// Implicit DG solver for 2D atmospheric flow test cases.
#[derive(Debug, Parser)]
#[command(name = "solver", version)]
struct Args {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// inertia-gravity, rising-bubble or density-current.
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// Multigrid key such as mg001111V, or none.
    #[arg(long)]
    mg: Option<String>,
    /// Refinement level of the DG mesh above the base grid.
    #[arg(long)]
    level: Option<String>,
    /// implicit or explicit.
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    outdir: Option<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        case: args.case,
        dt: args.dt,
        mg: args.mg,
        level: args.level,
        integrator: args.integrator,
        outdir: args.outdir,
    };
    let result = parse_config(&text, &overrides).and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            eprintln!(
                "finished {} steps to t = {} (dt = {}), {} GMRES iterations",
                summary.steps,
                summary.final_time,
                summary.dt,
                summary.total_gmres()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
