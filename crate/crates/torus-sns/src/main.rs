use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use torus_sns::harness::{
    describe, list_experiments, output_root, parse_config_with_overrides, run_experiment,
    ExperimentConfig, OUTPUT_ROOT_ENV,
};
use torus_sns::SnsError;

/// Spectral Galerkin laboratory for stochastic Navier-Stokes on the torus.
#[derive(Parser)]
#[command(name = "torus-sns", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config
    #[arg(long)]
    config: PathBuf,
    /// output root directory (defaults to $TORUS_SNS_OUTPUT, then ./runs)
    #[arg(long)]
    output_root: Option<PathBuf>,
    /// key=value overrides applied on top of the config (dotted keys allowed)
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and record norms, ledger terms, snapshots
    Simulate(RunArgs),
    /// Compare the cut-off and free systems on a common driving path
    Couple(RunArgs),
    /// Lattice and quadrature checks of the analytic estimates
    Inequalities(RunArgs),
    /// Tail of the running sup of the driving process
    Tails(RunArgs),
    /// Stopping-time statistics against the algebraic safe horizon
    Blowup(RunArgs),
    /// Semigroup continuity modulus under displacement halving
    Feller(RunArgs),
    /// Probabilistic semigroup gradient vs a finite-difference oracle
    Bel(RunArgs),
    /// List the available experiment kinds
    List,
    /// Explain what one experiment kind verifies
    Describe { kind: String },
}

fn load(args: &RunArgs, expect_kind: &str) -> Result<(ExperimentConfig, PathBuf), SnsError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| SnsError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let config = parse_config_with_overrides(&text, &args.overrides)?;
    if config.params.kind() != expect_kind {
        return Err(SnsError::Config(format!(
            "config is for kind `{}`, but the `{expect_kind}` subcommand was invoked",
            config.params.kind()
        )));
    }
    let root = args.output_root.clone().unwrap_or_else(output_root);
    Ok((config, root))
}

fn run(args: &RunArgs, kind: &str) -> Result<(), SnsError> {
    let (config, root) = load(args, kind)?;
    std::fs::create_dir_all(&root)?;
    let manifest = run_experiment(&config, &root)?;
    let dir = config
        .output
        .clone()
        .unwrap_or_else(|| format!("{}-{}", kind, &manifest.fingerprint[..12]));
    println!("{} -> {}", kind, root.join(dir).display());
    for out in &manifest.outputs {
        println!("  {out}");
    }
    if let Some(msg) = &manifest.aborted {
        return Err(SnsError::NumericAbort(msg.clone()));
    }
    Ok(())
}

fn real_main() -> Result<(), SnsError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(a) => run(a, "simulate"),
        Command::Couple(a) => run(a, "couple"),
        Command::Inequalities(a) => run(a, "inequalities"),
        Command::Tails(a) => run(a, "tails"),
        Command::Blowup(a) => run(a, "blowup"),
        Command::Feller(a) => run(a, "feller"),
        Command::Bel(a) => run(a, "bel"),
        Command::List => {
            println!("experiments (output root: ${OUTPUT_ROOT_ENV} or ./runs):");
            for (kind, what) in list_experiments() {
                println!("  {kind:<13} {what}");
            }
            Ok(())
        }
        Command::Describe { kind } => {
            println!("{}", describe(kind)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match &e {
                SnsError::NumericAbort(_) => 2,
                SnsError::Io(_) => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
