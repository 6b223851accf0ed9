//! `qfrelay`: quantizer optimization for quantize-and-forward two-way relaying.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numeric
//! failure, 4 oracle budget refusal.

mod config;
mod repro;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qfrelay::io;
use qfrelay::optimizer::{optimize_restarts, InitStrategy};
use qfrelay::oracle::{fixture_channel, reference_report, OracleConfig};
use qfrelay::sumrate::{alpha_profile, optimize_alpha, unimodality, SumRateResult, Unimodality};
use qfrelay::sweep::{sweep_grid, SweepConfig};

use config::{parse_config, Format, LambdaSource, RunConfig};

/// Points in the alpha profile and unimodality diagnostic.
const PROFILE_POINTS: usize = 100;
const UNIMODALITY_TOL: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qfrelay::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use qfrelay::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::InvalidArgument(_)) => 2,
            CliError::Core(E::NumericFailure { .. }) => 3,
            CliError::Core(E::BudgetExceeded { .. }) => 4,
            CliError::Core(E::Io(_) | E::Csv(_) | E::Json(_)) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Parser)]
#[command(
    name = "qfrelay",
    version,
    about = "Quantizer design for quantize-and-forward two-way relaying"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that builds a channel and solves.
#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    snr1_db: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    snr2_db: Option<f64>,
    /// Number of output bins of the discretized relay observation.
    #[arg(long)]
    bins: Option<usize>,
    /// Noise standard deviations covered beyond the extreme constellation sums.
    #[arg(long)]
    span_sigmas: Option<f64>,
    /// Quantizer levels L.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    init: Option<InitStrategy>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => parse_config(p)?,
            None => RunConfig::default(),
        };
        cfg.set_bpsk(self.snr1_db, self.snr2_db, self.bins, self.span_sigmas);
        let q = &mut cfg.quantizer;
        q.levels = self.levels.unwrap_or(q.levels);
        q.init = self.init.unwrap_or(q.init);
        q.restarts = self.restarts.unwrap_or(q.restarts);
        q.seed = self.seed.unwrap_or(q.seed);
        let s = &mut cfg.solver;
        s.epsilon = self.epsilon.unwrap_or(s.epsilon);
        s.max_iter = self.max_iter.unwrap_or(s.max_iter);
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the channel and print it as JSON.
    Channel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one multiplier pair and print the result (with its trace) as JSON.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        lambda2: Option<f64>,
        /// CSV of the Lagrangian per iteration.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// JSON matrix of the final quantizer.
        #[arg(long)]
        dump_q: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep a log-spaced multiplier grid and emit the surface.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda_min: Option<f64>,
        #[arg(long)]
        lambda_max: Option<f64>,
        #[arg(long)]
        lambda_count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// JSON array with the quantizer of every surface point.
        #[arg(long)]
        dump_q: Option<PathBuf>,
    },
    /// Maximize the sum rate over the time split for a stored surface.
    Sumrate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Surface as written by `sweep` (CSV, or JSON by extension).
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        i1_bits: Option<f64>,
        #[arg(long)]
        i2_bits: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        dl_snr1_db: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        dl_snr2_db: Option<f64>,
        #[arg(long)]
        tol_alpha: Option<f64>,
        /// CSV of the objective on a uniform alpha grid.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force reference values by exhaustive grid enumeration.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Use the built-in 2x2x3 test channel instead of the configured one.
        #[arg(long)]
        fixture: bool,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long)]
        max_cells: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate the data behind a figure.
    Repro {
        #[arg(value_enum)]
        figure: repro::Figure,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn init_workers(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    match out {
        Some(p) => io::save_json(p, value)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value).map_err(qfrelay::Error::from)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SumRateOutput {
    i1_bits: f64,
    i2_bits: f64,
    #[serde(flatten)]
    result: SumRateResult,
    unimodality: Unimodality,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Channel { common, out } => {
            let cfg = common.load()?;
            cfg.validate()?;
            emit_json(out.as_deref(), &cfg.build_channel()?.dump())
        }
        Command::Optimize {
            common,
            lambda1,
            lambda2,
            trace,
            dump_q,
            out,
        } => {
            init_workers(common.workers)?;
            let mut cfg = common.load()?;
            cfg.set_point(lambda1, lambda2);
            cfg.output.trace = trace.or(cfg.output.trace);
            cfg.output.dump_q = dump_q.or(cfg.output.dump_q);
            cfg.output.out = out.or(cfg.output.out);
            cfg.validate()?;
            let LambdaSource::Point(l1, l2) = cfg.lambda_source()? else {
                return Err(CliError::Config("optimize needs --lambda1 and --lambda2".into()));
            };
            let ch = cfg.build_channel()?;
            let q = &cfg.quantizer;
            let res = optimize_restarts(&ch, l1, l2, &cfg.solver_params(), q.restarts, q.seed)?;
            if let Some(p) = &cfg.output.trace {
                io::save_trace_csv(p, &res)?;
            }
            if let Some(p) = &cfg.output.dump_q {
                io::save_json(p, &res.q_final)?;
            }
            emit_json(cfg.output.out.as_deref(), &res)
        }
        Command::Sweep {
            common,
            lambda_min,
            lambda_max,
            lambda_count,
            out,
            format,
            dump_q,
        } => {
            init_workers(common.workers)?;
            let mut cfg = common.load()?;
            cfg.set_grid(lambda_min, lambda_max, lambda_count);
            cfg.output.out = out.or(cfg.output.out);
            cfg.output.format = format.or(cfg.output.format);
            cfg.output.dump_q = dump_q.or(cfg.output.dump_q);
            cfg.validate()?;
            let LambdaSource::Grid(grid) = cfg.lambda_source()? else {
                return Err(CliError::Config(
                    "sweep needs a multiplier grid, not a single point".into(),
                ));
            };
            let ch = cfg.build_channel()?;
            let sweep = SweepConfig {
                lambda1: grid,
                lambda2: grid,
                solver: cfg.solver_params(),
                restarts: cfg.quantizer.restarts,
                seed: cfg.quantizer.seed,
            };
            let surface = sweep_grid(&ch, &sweep)?;
            if let Some(w) = &surface.warning {
                eprintln!("warning: {w}");
            }
            if let Some(p) = &cfg.output.dump_q {
                let qs: Vec<_> = surface.points.iter().map(|pt| pt.q.clone()).collect();
                io::save_json(p, &qs)?;
            }
            let out = cfg.output.out.as_deref();
            let format = cfg.output.format.unwrap_or_else(|| match out {
                Some(p) if p.extension().is_some_and(|e| e == "json") => Format::Json,
                _ => Format::Csv,
            });
            match (format, out) {
                (Format::Json, _) => emit_json(out, &surface.without_quantizers()),
                (Format::Csv, Some(p)) => Ok(io::save_surface_csv(p, &surface)?),
                (Format::Csv, None) => Ok(io::write_surface_csv(std::io::stdout().lock(), &surface)?),
            }
        }
        Command::Sumrate {
            config,
            surface,
            i1_bits,
            i2_bits,
            dl_snr1_db,
            dl_snr2_db,
            tol_alpha,
            profile,
            out,
        } => {
            let mut cfg = match &config {
                Some(p) => parse_config(p)?,
                None => RunConfig::default(),
            };
            cfg.set_downlink_rates(i1_bits, i2_bits);
            cfg.set_downlink_snrs(dl_snr1_db, dl_snr2_db);
            cfg.sumrate.tol_alpha = tol_alpha.unwrap_or(cfg.sumrate.tol_alpha);
            cfg.validate()?;
            let Some((i1, i2)) = cfg.downlink()? else {
                return Err(CliError::Config(
                    "sumrate needs --i1-bits/--i2-bits or --dl-snr1-db/--dl-snr2-db".into(),
                ));
            };
            let s = io::load_surface(&surface)?;
            let result = optimize_alpha(&s, i1, i2, cfg.sumrate.tol_alpha)?;
            if let Some(p) = &profile {
                io::save_alpha_csv(p, &alpha_profile(&s, i1, i2, PROFILE_POINTS)?)?;
            }
            let uni = unimodality(&s, i1, i2, PROFILE_POINTS, UNIMODALITY_TOL)?;
            if !uni.unimodal {
                eprintln!(
                    "note: objective has {} local maxima on the alpha grid",
                    uni.local_maxima
                );
            }
            emit_json(
                out.as_deref(),
                &SumRateOutput {
                    i1_bits: i1,
                    i2_bits: i2,
                    result,
                    unimodality: uni,
                },
            )
        }
        Command::Oracle {
            common,
            fixture,
            step,
            max_cells,
            out,
        } => {
            init_workers(common.workers)?;
            let mut cfg = common.load()?;
            // The enumeration is only feasible with a handful of levels.
            if common.levels.is_none() {
                cfg.quantizer.levels = 2;
            }
            cfg.validate()?;
            let ch = if fixture {
                fixture_channel()
            } else {
                cfg.build_channel()?
            };
            let mut oc = OracleConfig::with_step(step);
            oc.max_cells = max_cells.unwrap_or(oc.max_cells);
            let report = reference_report(&ch, cfg.quantizer.levels, &oc)?;
            emit_json(out.as_deref(), &report)
        }
        Command::Repro {
            figure,
            outdir,
            seed,
            workers,
        } => {
            init_workers(workers)?;
            repro::run(figure, &outdir, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
