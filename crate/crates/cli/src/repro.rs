//! Figure reproduction: the BPSK setup at 1.5 dB and 4.5 dB with 32 levels.
//! Each run writes one CSV and a JSON manifest next to it.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use qfrelay::channel::build_bpsk_mac;
use qfrelay::io;
use qfrelay::optimizer::{optimize, SolverParams};
use qfrelay::sweep::{scalar_diagnostic, sweep_grid, SweepConfig};

use crate::config::{DEFAULT_NUM_BINS, DEFAULT_SNR1_DB, DEFAULT_SNR2_DB, DEFAULT_SPAN_SIGMAS};
use crate::CliError;

/// Multipliers of the convergence trace; moderate enough that the run takes
/// a visible number of iterations.
pub const TRACE_LAMBDAS: (f64, f64) = (0.1, 0.1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    /// Lagrangian per iteration of one run.
    Fig3,
    /// The swept tradeoff surface.
    Fig4,
    /// `H(Yhat | Yr)` against `I_RD` over the sweep.
    Fig5,
}

#[derive(Serialize)]
struct ChannelParams {
    snr1_db: f64,
    snr2_db: f64,
    num_bins: usize,
    span_sigmas: f64,
    fingerprint: String,
}

#[derive(Serialize)]
struct Manifest {
    figure: Figure,
    channel: ChannelParams,
    solver: SolverParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambdas: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepConfig>,
    master_seed: u64,
    /// Seed of every run, in output row order.
    seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    files: Vec<PathBuf>,
    git_describe: String,
    wall_time_s: f64,
    timestamp_unix: u64,
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn run(figure: Figure, outdir: &Path, seed: u64) -> Result<(), CliError> {
    std::fs::create_dir_all(outdir).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", outdir.display())))?;
    let start = Instant::now();
    let ch = build_bpsk_mac(DEFAULT_SNR1_DB, DEFAULT_SNR2_DB, DEFAULT_NUM_BINS, DEFAULT_SPAN_SIGMAS)?;
    let channel = ChannelParams {
        snr1_db: DEFAULT_SNR1_DB,
        snr2_db: DEFAULT_SNR2_DB,
        num_bins: DEFAULT_NUM_BINS,
        span_sigmas: DEFAULT_SPAN_SIGMAS,
        fingerprint: ch.fingerprint(),
    };
    let solver = SolverParams::default();
    let name = format!("{figure:?}").to_lowercase();

    let (csv_name, lambdas, sweep, seeds, warning) = match figure {
        Figure::Fig3 => {
            let (l1, l2) = TRACE_LAMBDAS;
            let res = optimize(&ch, l1, l2, &solver, seed)?;
            let file = format!("{name}_trace.csv");
            io::save_trace_csv(&outdir.join(&file), &res)?;
            let warning = (!res.converged).then(|| format!("run stopped after {} iterations", res.iterations));
            (file, Some(TRACE_LAMBDAS), None, vec![res.seed], warning)
        }
        Figure::Fig4 | Figure::Fig5 => {
            let cfg = SweepConfig {
                solver,
                seed,
                ..SweepConfig::default()
            };
            let surface = sweep_grid(&ch, &cfg)?;
            let file = if figure == Figure::Fig4 {
                let file = format!("{name}_surface.csv");
                io::save_surface_csv(&outdir.join(&file), &surface)?;
                file
            } else {
                let file = format!("{name}_scalar.csv");
                io::save_scalar_csv(&outdir.join(&file), &scalar_diagnostic(&surface)?)?;
                file
            };
            let seeds = surface.points.iter().map(|p| p.seed).collect();
            (file, None, Some(cfg), seeds, surface.warning.clone())
        }
    };

    let manifest_name = format!("{name}_manifest.json");
    let manifest = Manifest {
        figure,
        channel,
        solver,
        lambdas,
        sweep,
        master_seed: seed,
        seeds,
        warning,
        files: vec![PathBuf::from(&csv_name)],
        git_describe: git_describe(),
        wall_time_s: start.elapsed().as_secs_f64(),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    io::save_json(&outdir.join(&manifest_name), &manifest)?;
    eprintln!(
        "wrote {} and {}",
        outdir.join(csv_name).display(),
        outdir.join(manifest_name).display()
    );
    Ok(())
}
