use clap::{Parser, Subcommand};
use quenched::config::{example_config, load_config, ExperimentConfig, EXAMPLE_NAMES};
use quenched::runner::run_experiment;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "quenched", about = "Quenched statistics of random piecewise expanding interval maps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the grid resolution.
        #[arg(long)]
        n_bins: Option<usize>,
        /// Override the pullback depth.
        #[arg(long)]
        depth: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config, echoing the resolved form.
    Validate { config: PathBuf },
    /// Print a shipped example config (or list the available names).
    Example {
        name: Option<String>,
        /// Write the config to a file instead of stdout.
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    n_bins: Option<usize>,
    depth: Option<usize>,
    out: Option<PathBuf>,
) {
    // environment seed override serves CI sweeps; explicit flag wins
    if let Ok(env_seed) = std::env::var("QUENCHED_SEED") {
        if let Ok(v) = env_seed.parse::<u64>() {
            cfg.seed = v;
        }
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if let Some(v) = n_bins {
        cfg.n_bins = v;
    }
    if let Some(v) = depth {
        cfg.depth = Some(v);
    }
    if let Some(v) = out {
        cfg.output_dir = Some(v.display().to_string());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, n_bins, depth, out } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            apply_overrides(&mut cfg, seed, n_bins, depth, out);
            match run_experiment(&cfg) {
                Ok(outcome) => {
                    for a in &outcome.report.assertions {
                        println!(
                            "assertion {}: {} ({})",
                            a.name,
                            if a.passed { "pass" } else { "FAIL" },
                            a.detail
                        );
                    }
                    for p in &outcome.artifacts {
                        println!("wrote {}", p.display());
                    }
                    if outcome.artifacts.is_empty() {
                        match serde_json::to_string_pretty(&outcome.report) {
                            Ok(text) => println!("{text}"),
                            Err(e) => {
                                eprintln!("error: {e}");
                                return ExitCode::from(2);
                            }
                        }
                    }
                    if outcome.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!("{}", serde_json::to_string_pretty(&cfg).expect("serializable"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Example { name, write } => {
            let Some(name) = name else {
                println!("available examples: {}", EXAMPLE_NAMES.join(", "));
                return ExitCode::SUCCESS;
            };
            match example_config(&name) {
                Ok(cfg) => {
                    let text = serde_json::to_string_pretty(&cfg).expect("serializable");
                    match write {
                        Some(path) => {
                            if let Err(e) = std::fs::write(&path, text + "\n") {
                                eprintln!("error: {e}");
                                return ExitCode::from(2);
                            }
                            println!("wrote {}", path.display());
                        }
                        None => println!("{text}"),
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
