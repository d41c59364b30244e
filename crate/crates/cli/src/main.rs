use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use patchbeam::{Error, Result};
use patchbeam_experiments::config::parse_override;
use patchbeam_experiments::{run_scenario, write_bundle, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "patchbeam", version, about = "Patch-scheme simulations of heterogeneous elastic beams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config file
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`)
        #[arg(long)]
        out: Option<PathBuf>,
        /// RNG seed for the material sample
        #[arg(long)]
        seed: Option<u64>,
        /// Dotted `key=value` override, applied before validation; repeatable
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the known scenario names
    ListScenarios,
    /// Check a config file without running it
    Validate { config: PathBuf },
}

fn load(path: &Path, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    ScenarioConfig::from_toml_str(&text, overrides)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<24} {}", s.name(), s.summary());
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config, &[])?;
            println!("{}: ok ({})", config.display(), cfg.scenario);
        }
        Command::Run {
            config,
            out,
            seed,
            overrides,
        } => {
            let mut pairs = overrides
                .iter()
                .map(|o| parse_override(o))
                .collect::<Result<Vec<_>>>()?;
            if let Some(seed) = seed {
                pairs.push(("seed".into(), seed.to_string()));
            }
            let mut cfg = load(&config, &pairs)?;
            if let Some(out) = out {
                cfg.output.dir = out.to_string_lossy().into_owned();
            }
            let bundle = run_scenario(&cfg)?;
            let dir = PathBuf::from(&cfg.output.dir);
            let written = write_bundle(&bundle, &dir)?;
            println!("scenario {} (seed {})", cfg.scenario, cfg.seed);
            for (k, v) in &bundle.summary {
                println!("  {k} = {v}");
            }
            println!("wrote {} files to {}", written.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
