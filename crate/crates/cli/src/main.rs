//! `conveyance`: runs one experiment from a JSON config and writes CSV/JSON
//! results plus a manifest into the output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 1 anything else (I/O).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use conveyance::semiclassics::KappaConvention;
use conveyance::Error as CoreError;

use crate::commands::Ctx;
use crate::config::ExperimentConfig;
use crate::output::Output;

#[derive(Parser)]
#[command(
    name = "conveyance",
    version,
    about = "Tunnelling losses of a particle in a moving trap"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Use κ = e^{−S} in the Weber width instead of e^{+S}.
    #[arg(long, global = true)]
    weber_paper_kappa: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq, Debug)]
pub enum Command {
    /// Lowest lattice levels against the slope m·a.
    Spectrum,
    /// Dephasing decay p(t) after a sudden tilt, with Γ_relax and |d_k|².
    Relax,
    /// Crank–Nicolson decay with an absorbing layer, with Γ_absorb.
    Absorb,
    /// Semiclassical widths, Airy and Weber variants.
    Wkb,
    /// Complex resonance energy and eigenvector.
    Resonance,
    /// Conveyance runs, sweeps and spectrograms.
    Convey,
    /// Γ from every method side by side.
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Relax => "relax",
            Command::Absorb => "absorb",
            Command::Wkb => "wkb",
            Command::Resonance => "resonance",
            Command::Convey => "convey",
            Command::Compare => "compare",
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<CoreError>()) {
        Some(
            CoreError::InvalidParameter(_)
            | CoreError::InvalidLevel { .. }
            | CoreError::InvalidProtocol(_)
            | CoreError::NoMetastableWell { .. }
            | CoreError::NoSlope,
        ) => EXIT_CONFIG,
        Some(_) => EXIT_NUMERIC,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = &cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(EXIT_CONFIG);
    };
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(errs) => {
            for e in errs {
                eprintln!("config error: {e}");
            }
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let errs = cfg.validate(cli.command);
    if !errs.is_empty() {
        for e in errs {
            eprintln!("config error: {e}");
        }
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
        eprintln!("warning: worker pool: {e}");
    }

    // the flag changes results, so it is part of the hashed config
    if cli.weber_paper_kappa {
        cfg.wkb.kappa = KappaConvention::Literal;
    }
    let ctx = Ctx { cfg: &cfg };
    let run = || -> anyhow::Result<PathBuf> {
        let mut out = Output::create(&cli.out, &cfg.hash())?;
        match cli.command {
            Command::Spectrum => commands::spectrum(&ctx, &mut out)?,
            Command::Relax => commands::relax(&ctx, &mut out)?,
            Command::Absorb => commands::absorb(&ctx, &mut out)?,
            Command::Wkb => commands::wkb(&ctx, &mut out)?,
            Command::Resonance => commands::resonance(&ctx, &mut out)?,
            Command::Convey => commands::convey(&ctx, &mut out)?,
            Command::Compare => commands::compare(&ctx, &mut out)?,
        }
        out.finish(cli.command.name())
    };
    match run() {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
