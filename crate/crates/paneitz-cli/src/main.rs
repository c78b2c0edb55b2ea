use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use paneitz_cli::{parse_config, run_command, CliError, Command};

#[derive(Parser)]
#[command(
    name = "paneitz",
    version,
    about = "Paneitz operator experiments on model manifolds"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Curvature data and flow admissibility of the model.
    Info(Args),
    /// Run the Q-curvature flow and write monitors.
    Flow(Args),
    /// Green's function expansions at the configured poles.
    Green(Args),
    /// Bubble quotients and deficits.
    Bubble(Args),
    /// Positivity along u_λ = (1-λ) + λu for solutions of P u = w ≥ 0.
    Maxprinciple(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Seed for the random sources of `maxprinciple`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cmd: Command, args: &Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = parse_config(&text)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let stdout = std::io::stdout();
    run_command(&cfg, cmd, args.seed, &out, &mut stdout.lock())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Cmd::Info(a) => (Command::Info, a),
        Cmd::Flow(a) => (Command::Flow, a),
        Cmd::Green(a) => (Command::Green, a),
        Cmd::Bubble(a) => (Command::Bubble, a),
        Cmd::Maxprinciple(a) => (Command::MaxPrinciple, a),
    };
    match run(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
