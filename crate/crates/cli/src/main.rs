use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use godi_cli::config::{
    format_config, parse_config, ExperimentConfig, Refinement, SchemeArg, SplittingName,
};
use godi_cli::experiment::{experiments_in, run_experiment, write_plots, Overrides, Variant};
use godi_cli::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "godi",
    version,
    about = "Goal-oriented dynamic iteration for linear ODE systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration and write CSV and SVG outputs.
    Run(RunArgs),
    /// Redraw the SVG plots from existing CSV and mesh files.
    Plot {
        /// Directory holding the outputs of earlier runs.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print a configuration (preset or file) in canonical TOML form.
    DumpConfig(Source),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["exp1", "exp2", "exp3"])]
    preset: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Restrict to one time-stepping scheme (default: both).
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Restrict to one refinement mode (default: both).
    #[arg(long, value_enum)]
    refine: Option<Refinement>,
    #[arg(long, value_enum)]
    splitting: Option<SplittingName>,
    /// Number of refinement steps.
    #[arg(long)]
    levels: Option<usize>,
    /// Fraction of cells bisected per goal-oriented level.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    n_init: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the assembled matrices of every level.
    #[arg(long)]
    emit_matrices: bool,
}

fn load(source: &Source) -> Result<ExperimentConfig, CliError> {
    match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(path.display().to_string(), e))?;
            parse_config(&text).map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
                other => other,
            })
        }
        (None, Some(name)) => ExperimentConfig::preset(name),
        (None, None) => unreachable!("clap requires a source"),
    }
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let config = load(&args.source)?;
    let variants: Vec<Variant> = Variant::ALL
        .into_iter()
        .filter(|v| args.scheme.is_none_or(|s| s == v.scheme))
        .filter(|v| args.refine.is_none_or(|r| r == v.refine))
        .collect();
    let overrides = Overrides {
        splitting: args.splitting,
        levels: args.levels,
        fraction: args.fraction,
        k_max: args.kmax,
        n_init: args.n_init,
    };
    let outcomes = run_experiment(
        &config,
        &variants,
        &overrides,
        &args.out,
        args.emit_matrices,
    )?;
    for o in &outcomes {
        println!("{}", o.stem);
        println!("  level        N   K          nu    mu_total     J_error");
        for r in &o.rows {
            println!(
                "  {:>5} {:>8} {:>3} {:>11.3e} {:>11.3e} {:>11.3e}",
                r.level, r.cells, r.k, r.nu, r.mu_total, r.j_error
            );
        }
    }
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Plot { out } => experiments_in(&out).and_then(|names| {
            for name in names {
                for path in write_plots(&out, &name)? {
                    println!("{}", path.display());
                }
            }
            Ok(())
        }),
        Command::DumpConfig(source) => load(&source).map(|c| print!("{}", format_config(&c))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
