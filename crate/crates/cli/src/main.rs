#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Overrides;
use crate::config::{CoherenceConfig, LayoutConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};

/// Shoebox room rendering with virtual reverberation sources and
/// diffuse-field coherence experiments.
#[derive(Debug, Parser)]
#[command(name = "vrsverb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory. VRSVERB_OUT takes precedence when set.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Random seed, replacing the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Response length (render) or noise length (coherence) in seconds.
    #[arg(long, global = true)]
    duration: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a room to a multichannel impulse response (WAV plus sidecar).
    Render,
    /// Run the coherence experiment grid and write one CSV per cell.
    Coherence,
    /// Write the directions and channel assignment of a VRS layout.
    Layout {
        /// Number of VRS (6, 12, 24, 48 or 96); overrides the config.
        n_vrs: Option<usize>,
    },
    /// Repeat a recorded run and check that its CSV outputs are unchanged.
    Rerun {
        /// Manifest file or the directory containing it.
        manifest: PathBuf,
    },
}

fn read_config(path: Option<&Path>) -> CliResult<Option<String>> {
    path.map(|p| std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))).transpose()
}

fn run(cli: Cli) -> CliResult<()> {
    let out = std::env::var_os("VRSVERB_OUT").map(PathBuf::from).unwrap_or(cli.out);
    let overrides = Overrides { seed: cli.seed, duration: cli.duration, jobs: cli.jobs };
    let text = read_config(cli.config.as_deref())?;
    let manifest = match cli.command {
        Command::Render => {
            let text = text.ok_or_else(|| CliError::Config("render needs --config".into()))?;
            commands::render(config::parse(&text)?, overrides, &out)?
        }
        Command::Coherence => {
            let cfg = match text {
                Some(t) => config::parse(&t)?,
                None => CoherenceConfig::default(),
            };
            commands::coherence(cfg, overrides, &out)?
        }
        Command::Layout { n_vrs } => {
            let cfg = match (n_vrs, text) {
                (Some(n), _) => LayoutConfig { schema_version: SCHEMA_VERSION, n_vrs: n },
                (None, Some(t)) => config::parse(&t)?,
                (None, None) => return Err(CliError::Config("layout needs a VRS count or --config".into())),
            };
            commands::layout(cfg, &out)?
        }
        Command::Rerun { manifest } => commands::rerun(&manifest, cli.jobs, &out)?,
    };
    for f in &manifest.outputs {
        println!("{}  {}", f.sha256, out.join(&f.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
