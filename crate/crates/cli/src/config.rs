//! Run configuration: a JSON file, then command-line overrides, then
//! resolution into concrete channel, multiplier and downlink choices.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qfrelay::channel::{build_bpsk_mac, ChannelModel};
use qfrelay::optimizer::{InitStrategy, SolverParams};
use qfrelay::sumrate::{downlink_rate, DEFAULT_TOL_ALPHA};
use qfrelay::sweep::LambdaGrid;

use crate::CliError;

pub const DEFAULT_SNR1_DB: f64 = 1.5;
pub const DEFAULT_SNR2_DB: f64 = 4.5;
pub const DEFAULT_NUM_BINS: usize = 128;
pub const DEFAULT_SPAN_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub channel: ChannelSection,
    pub quantizer: QuantizerSection,
    pub solver: SolverSection,
    pub sumrate: SumRateSection,
    pub output: OutputSection,
}

/// Either the parametric BPSK fields or `inline`, never both. An empty
/// section means the BPSK defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub snr1_db: Option<f64>,
    pub snr2_db: Option<f64>,
    pub num_bins: Option<usize>,
    pub span_sigmas: Option<f64>,
    pub inline: Option<InlineChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineChannel {
    pub p_x1: Vec<f64>,
    pub p_x2: Vec<f64>,
    /// Indexed `[x1][x2][yr]`.
    pub p_yr_given_x1x2: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizerSection {
    pub levels: usize,
    pub init: InitStrategy,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        Self {
            levels: 32,
            init: InitStrategy::default(),
            restarts: 4,
            seed: 0,
        }
    }
}

/// Either a single `(lambda1, lambda2)` point or a `grid` applied to both
/// axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub grid: Option<LambdaGrid>,
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let p = SolverParams::default();
        Self {
            lambda1: None,
            lambda2: None,
            grid: None,
            epsilon: p.epsilon,
            max_iter: p.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SumRateSection {
    pub i1_bits: Option<f64>,
    pub i2_bits: Option<f64>,
    pub dl_snr1_db: Option<f64>,
    pub dl_snr2_db: Option<f64>,
    pub tol_alpha: f64,
}

impl Default for SumRateSection {
    fn default() -> Self {
        Self {
            i1_bits: None,
            i2_bits: None,
            dl_snr1_db: None,
            dl_snr2_db: None,
            tol_alpha: DEFAULT_TOL_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Result file of `optimize` and `sweep`; other commands take `--out` only.
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub trace: Option<PathBuf>,
    pub dump_q: Option<PathBuf>,
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = parse_config_str(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSource {
    Point(f64, f64),
    Grid(LambdaGrid),
}

impl RunConfig {
    /// Checks the exclusivity rules and value ranges without building
    /// anything expensive.
    pub fn validate(&self) -> Result<(), CliError> {
        self.channel_is_inline()?;
        self.lambda_source()?;
        self.downlink()?;
        let q = &self.quantizer;
        if q.levels == 0 {
            return config_err("quantizer.levels must be at least 1");
        }
        if q.restarts == 0 {
            return config_err("quantizer.restarts must be at least 1");
        }
        if !(self.solver.epsilon > 0.0 && self.solver.epsilon.is_finite()) {
            return config_err(format!("solver.epsilon must be positive, got {}", self.solver.epsilon));
        }
        if !(self.sumrate.tol_alpha > 0.0 && self.sumrate.tol_alpha.is_finite()) {
            return config_err(format!(
                "sumrate.tol_alpha must be positive, got {}",
                self.sumrate.tol_alpha
            ));
        }
        Ok(())
    }

    fn channel_is_inline(&self) -> Result<bool, CliError> {
        let c = &self.channel;
        let parametric = c.snr1_db.is_some() || c.snr2_db.is_some() || c.num_bins.is_some() || c.span_sigmas.is_some();
        match (parametric, c.inline.is_some()) {
            (true, true) => config_err("channel: give either the BPSK parameters or `inline`, not both"),
            (_, inline) => Ok(inline),
        }
    }

    pub fn build_channel(&self) -> Result<ChannelModel, CliError> {
        if self.channel_is_inline()? {
            let inl = self.channel.inline.as_ref().expect("checked above");
            return Ok(ChannelModel::from_pmfs(&inl.p_x1, &inl.p_x2, &inl.p_yr_given_x1x2)?);
        }
        let c = &self.channel;
        Ok(build_bpsk_mac(
            c.snr1_db.unwrap_or(DEFAULT_SNR1_DB),
            c.snr2_db.unwrap_or(DEFAULT_SNR2_DB),
            c.num_bins.unwrap_or(DEFAULT_NUM_BINS),
            c.span_sigmas.unwrap_or(DEFAULT_SPAN_SIGMAS),
        )?)
    }

    /// The point if one is given, else the grid, else the default grid.
    pub fn lambda_source(&self) -> Result<LambdaSource, CliError> {
        let s = &self.solver;
        let point = match (s.lambda1, s.lambda2) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return config_err("solver: lambda1 and lambda2 must be given together"),
        };
        match (point, s.grid) {
            (Some(_), Some(_)) => config_err("solver: give either lambda1/lambda2 or `grid`, not both"),
            (Some((a, b)), None) => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return config_err(format!(
                        "solver: multipliers must be strictly positive (the update divides by lambda1 + lambda2), got ({a}, {b})"
                    ));
                }
                Ok(LambdaSource::Point(a, b))
            }
            (None, grid) => {
                let g = grid.unwrap_or_default();
                g.validate()
                    .map_err(|e| CliError::Config(format!("solver.grid: {e}")))?;
                Ok(LambdaSource::Grid(g))
            }
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        SolverParams {
            levels: self.quantizer.levels,
            init: self.quantizer.init,
            epsilon: self.solver.epsilon,
            max_iter: self.solver.max_iter,
        }
    }

    /// Downlink rates `(I1, I2)` in bits, if configured.
    pub fn downlink(&self) -> Result<Option<(f64, f64)>, CliError> {
        let s = &self.sumrate;
        let rates = match (s.i1_bits, s.i2_bits) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return config_err("sumrate: i1_bits and i2_bits must be given together"),
        };
        let snrs = match (s.dl_snr1_db, s.dl_snr2_db) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return config_err("sumrate: dl_snr1_db and dl_snr2_db must be given together"),
        };
        match (rates, snrs) {
            (Some(_), Some(_)) => config_err("sumrate: give either i1_bits/i2_bits or dl_snr1_db/dl_snr2_db, not both"),
            (Some((a, b)), None) => {
                if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
                    return config_err(format!("sumrate: downlink rates must be non-negative, got ({a}, {b})"));
                }
                Ok(Some((a, b)))
            }
            (None, Some((a, b))) => {
                if !(a.is_finite() && b.is_finite()) {
                    return config_err("sumrate: downlink SNRs must be finite");
                }
                Ok(Some((downlink_rate(a), downlink_rate(b))))
            }
            (None, None) => Ok(None),
        }
    }

    /// Flag overrides for the parametric channel replace an inline one.
    pub fn set_bpsk(&mut self, snr1: Option<f64>, snr2: Option<f64>, bins: Option<usize>, span: Option<f64>) {
        if snr1.is_some() || snr2.is_some() || bins.is_some() || span.is_some() {
            let c = &mut self.channel;
            c.inline = None;
            c.snr1_db = snr1.or(c.snr1_db);
            c.snr2_db = snr2.or(c.snr2_db);
            c.num_bins = bins.or(c.num_bins);
            c.span_sigmas = span.or(c.span_sigmas);
        }
    }

    /// A multiplier point from the command line replaces any grid.
    pub fn set_point(&mut self, lambda1: Option<f64>, lambda2: Option<f64>) {
        if lambda1.is_some() || lambda2.is_some() {
            self.solver.grid = None;
            self.solver.lambda1 = lambda1.or(self.solver.lambda1);
            self.solver.lambda2 = lambda2.or(self.solver.lambda2);
        }
    }

    /// Grid flags replace any point, starting from the file's grid or the
    /// default one.
    pub fn set_grid(&mut self, min: Option<f64>, max: Option<f64>, count: Option<usize>) {
        if min.is_some() || max.is_some() || count.is_some() {
            let mut g = self.solver.grid.unwrap_or_default();
            g.min = min.unwrap_or(g.min);
            g.max = max.unwrap_or(g.max);
            g.count = count.unwrap_or(g.count);
            self.solver = SolverSection {
                lambda1: None,
                lambda2: None,
                grid: Some(g),
                ..self.solver.clone()
            };
        }
    }

    pub fn set_downlink_rates(&mut self, i1: Option<f64>, i2: Option<f64>) {
        if i1.is_some() || i2.is_some() {
            let s = &mut self.sumrate;
            s.dl_snr1_db = None;
            s.dl_snr2_db = None;
            s.i1_bits = i1.or(s.i1_bits);
            s.i2_bits = i2.or(s.i2_bits);
        }
    }

    pub fn set_downlink_snrs(&mut self, snr1: Option<f64>, snr2: Option<f64>) {
        if snr1.is_some() || snr2.is_some() {
            let s = &mut self.sumrate;
            s.i1_bits = None;
            s.i2_bits = None;
            s.dl_snr1_db = snr1.or(s.dl_snr1_db);
            s.dl_snr2_db = snr2.or(s.dl_snr2_db);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_config_str("{}").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.quantizer.restarts, 4);
        assert_eq!(cfg.quantizer.levels, 32);
        assert_eq!(cfg.solver.epsilon, 1e-8);
        assert_eq!(cfg.lambda_source().unwrap(), LambdaSource::Grid(LambdaGrid::default()));
        let ch = cfg.build_channel().unwrap();
        assert_eq!(ch.n_yr(), DEFAULT_NUM_BINS);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config_str(r#"{"solver": {"epsilom": 1e-6}}"#).unwrap_err();
        assert!(err.to_string().contains("epsilom"), "{err}");
        let err = parse_config_str(r#"{"quantizer": {"levels": "many"}}"#).unwrap_err();
        assert!(err.to_string().contains("invalid type"), "{err}");
    }

    #[test]
    fn both_channel_sources_rejected() {
        let cfg = parse_config_str(
            r#"{"channel": {"snr1_db": 1.0, "inline": {"p_x1": [1.0], "p_x2": [1.0], "p_yr_given_x1x2": [[[0.5, 0.5]]]}}}"#,
        )
        .unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("not both"));
    }

    #[test]
    fn nonpositive_grid_mentions_positivity() {
        let cfg = parse_config_str(r#"{"solver": {"grid": {"min": 0.0, "max": 1.0, "count": 3}}}"#).unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("positive"), "{msg}");
    }

    #[test]
    fn point_and_grid_exclusive() {
        let cfg = parse_config_str(
            r#"{"solver": {"lambda1": 1.0, "lambda2": 1.0, "grid": {"min": 0.1, "max": 1.0, "count": 3}}}"#,
        )
        .unwrap();
        assert!(cfg.validate().is_err());
        let half = parse_config_str(r#"{"solver": {"lambda1": 1.0}}"#).unwrap();
        assert!(half.validate().is_err());
    }

    #[test]
    fn overrides_switch_sources() {
        let mut cfg =
            parse_config_str(r#"{"solver": {"grid": {"min": 0.1, "max": 1.0, "count": 3}}, "sumrate": {"i1_bits": 1.0, "i2_bits": 1.0}}"#)
                .unwrap();
        cfg.set_point(Some(0.5), Some(0.25));
        assert_eq!(cfg.lambda_source().unwrap(), LambdaSource::Point(0.5, 0.25));
        cfg.set_grid(None, Some(2.0), None);
        assert_eq!(
            cfg.lambda_source().unwrap(),
            LambdaSource::Grid(LambdaGrid {
                min: 1e-3,
                max: 2.0,
                count: 12
            })
        );
        cfg.set_downlink_snrs(Some(0.0), Some(0.0));
        let (i1, i2) = cfg.downlink().unwrap().unwrap();
        assert!((i1 - 0.5).abs() < 1e-12 && (i2 - 0.5).abs() < 1e-12);
    }
}
