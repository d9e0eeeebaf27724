use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use genban_cli::commands::{cmd_report, cmd_simulate, cmd_train, cmd_verify, CliError, CliResult};
use genban_cli::config::ExperimentConfig;
use genban_cli::verify::Suite;

/// Generative Thompson sampling experiments.
#[derive(Debug, Parser)]
#[command(name = "genban", version)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; defaults to the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a sequence model on a simulated historical pool.
    Train,
    /// Run the configured agents and write regret traces.
    Simulate,
    /// Run oracle checks; all suites when none are named.
    Verify {
        #[arg(value_enum)]
        suites: Vec<Suite>,
    },
    /// Aggregate trace CSVs into per-agent regret.
    Report { inputs: Vec<PathBuf> },
}

fn load(cli: &Cli) -> CliResult<(ExperimentConfig, String, u64, PathBuf)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this subcommand".into()))?;
    let (cfg, hash) = ExperimentConfig::load(path).map_err(|e| match e {
        genban::Error::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, hash, seed, out))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::Train => {
            let (cfg, hash, seed, out) = load(&cli)?;
            let s = cmd_train(&cfg, &hash, seed, &out)?;
            println!(
                "selected lr {} at epoch {} (validation NLL {:.4} ± {:.4}); model written to {}",
                s.selected_lr,
                s.selected_epoch,
                s.selected_val_nll.mean,
                s.selected_val_nll.se,
                s.model_path.display()
            );
        }
        Command::Simulate => {
            let (cfg, hash, seed, out) = load(&cli)?;
            let s = cmd_simulate(&cfg, &hash, seed, &out)?;
            for a in &s.agents {
                println!(
                    "{:<16} cumulative regret at T={}: {:.3} ± {:.3}",
                    a.agent, s.horizon, a.final_cum_regret.mean, a.final_cum_regret.se
                );
            }
        }
        Command::Verify { suites } => {
            let s = cmd_verify(suites, cli.seed.unwrap_or(0), cli.out.as_deref())?;
            println!("{} suite(s) passed", s.suites.len());
        }
        Command::Report { inputs } => {
            let s = cmd_report(inputs, cli.seed.unwrap_or(0), cli.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&s).map_err(CliError::from)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GENBAN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
