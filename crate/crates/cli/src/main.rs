use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rei_cli::config::RunConfig;
use rei_cli::demo::{run_scenario, Scenario};
use rei_cli::{load_state, psi, suggest_next, write_requests, CliError, PsiInput};

#[derive(Parser)]
#[command(name = "rei", version, about = "Expected-improvement optimization over generalized measurements")]
struct Cli {
    /// Override the random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer until the budget is spent.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines run log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the next evaluation requests, one JSON object per line.
    Suggest {
        #[arg(long)]
        config: PathBuf,
        /// JSON array of measurements or a run log; omitted means no data.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Run a builtin scenario and write its log and plot data.
    Demo {
        #[arg(value_enum)]
        scenario: Scenario,
        #[arg(long, default_value = "demo-out")]
        out: PathBuf,
    },
    /// Estimate E min{clamp, X} for X ~ N(mu, sigma) given as JSON.
    Psi { input: PathBuf },
    /// Print a config with every default filled in.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(cli: &Cli, path: &std::path::Path) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.samples {
        cfg.mc_samples = Some(n);
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { config, out } => {
            let cfg = load(cli, config)?;
            let log = rei_cli::run(&cfg, Some(out))?;
            if let Some(s) = log.summary() {
                log::info!(
                    "{} evaluations, best {} at {:?}, recommended {:?}",
                    s.evaluations,
                    s.best_value,
                    s.best_location,
                    s.recommended.location
                );
            }
        }
        Command::Suggest { config, state } => {
            let cfg = load(cli, config)?;
            let data = state.as_deref().map(load_state).transpose()?.unwrap_or_default();
            let proposal = suggest_next(&cfg, &data)?;
            let stdout = std::io::stdout();
            write_requests(&mut stdout.lock(), &proposal).map_err(|e| CliError::io("<stdout>".as_ref(), e))?;
        }
        Command::Demo { scenario, out } => {
            let report = run_scenario(*scenario, cli.seed.unwrap_or(0), cli.samples, Some(out))?;
            for n in &report.notes {
                println!("{n}");
            }
            for (name, ok) in &report.checks {
                println!("[{}] {name}", if *ok { "ok" } else { "FAILED" });
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Psi { input } => {
            let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
            let parsed: PsiInput =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
            let out = psi(&parsed, cli.samples.unwrap_or(10_000), cli.seed.unwrap_or(0))?;
            println!("{}", serde_json::to_string(&out).expect("output serializes"));
        }
        Command::Check { config } => {
            let cfg = load(cli, config)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
