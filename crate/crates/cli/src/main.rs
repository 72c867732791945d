mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{DecomposeOpts, DenoiseOpts, EmitFrameletOpts, SignalOpts};
use crate::io::{parse_levels, LevelRange};

#[derive(Parser)]
#[command(
    name = "framelet",
    version,
    about = "Framelet filter bank transforms on the sphere: sampling, \
             decomposition, reconstruction, denoising, validation and timing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a six-bump Wendland test signal (optionally with band-limited
    /// texture) on a rule and write a k,value CSV.
    GenSignal {
        /// Rule spec: gl:<degree>, sp:<count> or file:<path>.
        #[arg(long)]
        rule: String,
        /// Wendland smoothness index 0..=4.
        #[arg(long, default_value_t = 2)]
        wendland: usize,
        /// Use the unnormalized (support-1, high-contrast) profiles.
        #[arg(long)]
        original: bool,
        /// RMS-ish amplitude of the added band-limited texture (0 = none).
        #[arg(long, default_value_t = 0.0)]
        texture_amp: f64,
        #[arg(long, default_value_t = 1)]
        texture_seed: u64,
        /// Texture occupies degrees [band/2, band).
        #[arg(long, default_value_t = 32)]
        texture_band: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project an input signal and run the multi-level decomposition;
    /// writes a decomposition directory plus residual and report files.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        /// Level range J0:J.
        #[arg(long, value_parser = parse_levels)]
        levels: LevelRange,
        /// Finest-level rule spec; coarser levels halve a GL degree or
        /// quarter an SP count. Defaults to gl:2^J.
        #[arg(long)]
        rule: Option<String>,
        #[arg(long, default_value = "paper")]
        bank: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        cg_tol: f64,
        #[arg(long, default_value_t = 200)]
        cg_max_iter: usize,
    },
    /// Rebuild the signal from a decomposition directory (adds the stored
    /// projection residual back unless told otherwise).
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_residual: bool,
    },
    /// Hard-threshold denoising of a noisy signal (generated on the fly
    /// when no input is given).
    Denoise {
        #[arg(long, default_value_t = 0.10)]
        theta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// paper | eta1 | eta2 | eta3
        #[arg(long, default_value = "eta2")]
        bank: String,
        #[arg(long, value_parser = parse_levels, default_value = "4:6")]
        levels: LevelRange,
        #[arg(long)]
        rule: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Noisy input values (k,value CSV); generated when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Clean reference for SNR reporting and the threshold scale.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        wendland: usize,
    },
    /// Relative projection errors of the Wendland signals on a rule.
    ApproxError {
        #[arg(long)]
        rule: String,
        #[arg(long, default_value_t = 128)]
        bandlimit: usize,
        /// all or a single index 0..=4.
        #[arg(long, default_value = "all")]
        wendland: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time decomposition/reconstruction across levels and fit the scaling
    /// exponents.
    Bench {
        #[arg(long, value_parser = parse_levels, default_value = "4:8")]
        levels: LevelRange,
        #[arg(long, default_value = "paper")]
        bank: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a bank and layout: sum-of-squares identity, generator
    /// partition identity, per-level quadrature exactness.
    Validate {
        #[arg(long, default_value = "paper")]
        bank: String,
        #[arg(long, value_parser = parse_levels, default_value = "4:7")]
        levels: LevelRange,
        #[arg(long)]
        rule: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        grid_step: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Cap on the per-level exactness degree (the dense gram check is
        /// quartic in it).
        #[arg(long, default_value_t = 16)]
        exactness_cap: usize,
    },
    /// Write the filter and generator curves as CSV.
    EmitFilterCurves {
        #[arg(long, default_value = "paper")]
        bank: String,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 1.0)]
        max_xi: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a colatitude profile (and optional lat-lon grid) of one
    /// framelet.
    EmitFramelet {
        #[arg(long, default_value_t = 6)]
        j: u32,
        /// a | b1 | b2
        #[arg(long, default_value = "b1")]
        kind: String,
        /// north or k:<index>
        #[arg(long, default_value = "north")]
        node_at: String,
        #[arg(long)]
        rule: Option<String>,
        #[arg(long, default_value_t = 721)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also dump a lat-lon grid with this many latitude rows.
        #[arg(long)]
        grid: Option<usize>,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::GenSignal {
            rule,
            wendland,
            original,
            texture_amp,
            texture_seed,
            texture_band,
            out,
        } => {
            commands::gen_signal(&SignalOpts {
                rule,
                wendland,
                original_profile: original,
                texture_amp,
                texture_seed,
                texture_band,
                out,
            })?;
            Ok(true)
        }
        Command::Decompose {
            input,
            levels,
            rule,
            bank,
            out,
            cg_tol,
            cg_max_iter,
        } => {
            commands::cmd_decompose(&DecomposeOpts {
                input,
                levels,
                rule,
                bank,
                out,
                cg_tol,
                cg_max_iter,
            })?;
            Ok(true)
        }
        Command::Reconstruct {
            input,
            out,
            no_residual,
        } => {
            commands::cmd_reconstruct(&input, &out, no_residual)?;
            Ok(true)
        }
        Command::Denoise {
            theta,
            seed,
            bank,
            levels,
            rule,
            out,
            input,
            reference,
            wendland,
        } => {
            commands::cmd_denoise(&DenoiseOpts {
                theta,
                seed,
                bank,
                levels,
                rule,
                out,
                input,
                reference,
                wendland,
            })?;
            Ok(true)
        }
        Command::ApproxError {
            rule,
            bandlimit,
            wendland,
            out,
        } => {
            commands::cmd_approx_error(&rule, bandlimit, &wendland, out.as_deref())?;
            Ok(true)
        }
        Command::Bench { levels, bank, out } => {
            commands::cmd_bench(levels, &bank, out.as_deref())?;
            Ok(true)
        }
        Command::Validate {
            bank,
            levels,
            rule,
            grid_step,
            tol,
            exactness_cap,
        } => commands::cmd_validate(&bank, levels, rule.as_deref(), grid_step, tol, exactness_cap),
        Command::EmitFilterCurves {
            bank,
            step,
            max_xi,
            out,
        } => {
            commands::cmd_emit_filter_curves(&bank, step, max_xi, &out)?;
            Ok(true)
        }
        Command::EmitFramelet {
            j,
            kind,
            node_at,
            rule,
            samples,
            out,
            grid,
        } => {
            commands::cmd_emit_framelet(&EmitFrameletOpts {
                j,
                kind,
                node_at,
                rule,
                samples,
                out,
                grid,
            })?;
            Ok(true)
        }
    }
}

// Stable exit codes: 1 validation/bank failure, 2 input or shape problems,
// 3 CG non-convergence.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<framelet_core::Error>() {
        Some(framelet_core::Error::CgDidNotConverge { .. }) => 3,
        Some(framelet_core::Error::InvalidBank { .. }) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
