use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hilbert_lab_cli::{write_atomically, CliError, Command, Format, RunConfig, RunReport};

#[derive(Parser)]
#[command(name = "hilbert-lab", version, about = "Strong convexity, type/cotype and conjugacy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Search for Rademacher type-2 and cotype-2 witnesses.
    TypeCotype(Args),
    /// Sample strong-convexity and smoothness constants on a ball.
    Certify(Args),
    /// Extract an inner product from a second derivative.
    ExtractIp(Args),
    /// Grid, quadratic and descent-lemma conjugacy checks.
    Conjugate(Args),
    /// Quadratic conditioning of l_p^n as n grows.
    Growth(Args),
    /// Rademacher lower and quadratic upper bounds on the distance to a Hilbert space.
    BmBound(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON config file, or `-` for stdin.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn read_config(path: &PathBuf) -> Result<String, CliError> {
    if path.as_os_str() == "-" {
        return std::io::read_to_string(std::io::stdin()).map_err(CliError::Io);
    }
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn execute(command: Command, args: Args) -> Result<(), CliError> {
    let mut config = RunConfig::parse(&read_config(&args.config)?)?.bind(command)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(format) = args.format {
        config.format = Some(format);
    }
    if let Some(out) = &args.out {
        config.output = Some(out.display().to_string());
    }
    let report = RunReport::run(&config)?;
    let text = report.render(config.format.unwrap_or_default())?;
    match &config.output {
        Some(path) => write_atomically(path.as_ref(), &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn configure_threads() {
    let Ok(value) = std::env::var("LAB_THREADS") else { return };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            let available = std::thread::available_parallelism().map_or(n, |a| a.get());
            // a second initialization only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.min(available)).build_global();
        }
        _ => eprintln!("ignoring LAB_THREADS={value}: expected a positive integer"),
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::TypeCotype(a) => (Command::TypeCotype, a),
        Sub::Certify(a) => (Command::Certify, a),
        Sub::ExtractIp(a) => (Command::ExtractIp, a),
        Sub::Conjugate(a) => (Command::Conjugate, a),
        Sub::Growth(a) => (Command::Growth, a),
        Sub::BmBound(a) => (Command::BmBound, a),
    };
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
