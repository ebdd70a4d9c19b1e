use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use twinpol_cli::config::Format;
use twinpol_cli::runner::{check_determinism, execute, export_model, model_sha256};
use twinpol_cli::{parse_config, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "twinpol", version, about = "Cavity-polariton spectra of 3-level and rovibrational molecules")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Data file format (overrides output.format).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Run twice and require byte-identical outputs.
    #[arg(long, global = true)]
    seedless_check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config (a sweep if it lists cavity.g_sweep); also accepts a manifest.json.
    Run { config: PathBuf },
    /// Run a coupling sweep and fit splittings against g.
    Sweep { config: PathBuf },
    /// Check a config and print it with every default filled in.
    Validate { config: PathBuf },
    /// Write the molecular model (energies, dipoles, labels) as JSON.
    ExportModel { config: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<RunConfig, CliError> {
    let mut cfg = parse_config(path)?;
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| cfg.output.dir.clone())
}

fn dispatch(cli: &Cli, dir: &mut Option<PathBuf>) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { config } | Command::Sweep { config } => {
            let cfg = load(cli, config)?;
            if matches!(cli.command, Command::Sweep { .. }) && cfg.g_sweep.is_none() {
                return Err(CliError::config("cavity.g_sweep", "the sweep command needs a list of couplings"));
            }
            let d = out_dir(cli, &cfg);
            *dir = Some(d.clone());
            execute(&cfg, &d)?;
            if cli.seedless_check {
                check_determinism(&cfg, &d)?;
                eprintln!("re-run is byte-identical");
            }
            println!("{}", d.join("manifest.json").display());
        }
        Command::Validate { config } => {
            let cfg = load(cli, config)?;
            let text = toml::to_string(&cfg.to_raw()).map_err(|e| CliError::config("", e.to_string()))?;
            print!("{text}");
            eprintln!("model: {} states, sha256 {}", cfg.model.n_states(), model_sha256(&cfg.model)?);
        }
        Command::ExportModel { config } => {
            let cfg = load(cli, config)?;
            let d = out_dir(cli, &cfg);
            *dir = Some(d.clone());
            println!("{}", export_model(&cfg, &d)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut dir = cli.out_dir.clone();
    match dispatch(&cli, &mut dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            if let Some(d) = dir.filter(|_| !matches!(cli.command, Command::Validate { .. })) {
                let doc = json!({ "exit_code": code, "kind": e.kind(), "message": e.to_string() });
                let written = std::fs::create_dir_all(&d)
                    .and_then(|_| std::fs::write(d.join("error.json"), format!("{doc:#}\n")));
                if let Err(w) = written {
                    eprintln!("could not write {}: {w}", d.join("error.json").display());
                }
            }
            ExitCode::from(code as u8)
        }
    }
}
