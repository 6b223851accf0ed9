//! Brute-force references at tiny scale.
//!
//! Every column of `Q` is drawn from the compositions of 1 with resolution
//! `grid_step`, and every combination of columns is evaluated. Results are
//! exact up to the grid, which makes them usable as independent checks on the
//! optimizer and on the surface properties.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{invalid, Error, Result};
use crate::infotheory::{h_yr_given_x1, h_yr_given_x2, mac_sum_bound, Evaluator, QuantizerPmf, RateReport};
use crate::sweep::{Surface, SurfacePoint};

/// Slack on the boundary check, in bits.
pub const BOUNDARY_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub grid_step: f64,
    /// Largest number of quantizers an enumeration may visit.
    pub max_cells: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.05,
            max_cells: 50_000_000,
        }
    }
}

impl OracleConfig {
    pub fn with_step(grid_step: f64) -> Self {
        Self {
            grid_step,
            ..Self::default()
        }
    }

    /// Number of grid units making up a whole column.
    fn units(&self) -> Result<usize> {
        let s = self.grid_step;
        if !(s > 0.0 && s <= 1.0) {
            return invalid(format!("grid_step must lie in (0, 1], got {s}"));
        }
        let n = (1.0 / s).round();
        if ((1.0 / s) - n).abs() > 1e-9 * n {
            return invalid(format!("grid_step {s} does not divide 1"));
        }
        Ok(n as usize)
    }
}

/// All compositions of `units` into `levels` non-negative parts, scaled to
/// sum to 1. The first part runs from 1 down to 0.
pub fn compositions(levels: usize, units: usize) -> Vec<Vec<f64>> {
    fn rec(levels: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if levels == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(levels - 1, left - k, prefix, out);
            prefix.pop();
        }
    }
    if levels == 0 {
        return Vec::new();
    }
    let mut raw = Vec::new();
    rec(levels, units, &mut Vec::with_capacity(levels), &mut raw);
    raw.into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / units as f64).collect())
        .collect()
}

/// Number of quantizers an enumeration would visit, as a float so that
/// oversized requests can still be reported.
pub fn enumeration_size(levels: usize, n_cols: usize, cfg: &OracleConfig) -> Result<f64> {
    let units = cfg.units()?;
    // C(units + levels - 1, levels - 1), accumulated in floating point.
    let mut per_col = 1.0f64;
    for k in 1..levels {
        per_col *= (units + k) as f64 / k as f64;
    }
    Ok(per_col.round().powi(n_cols as i32))
}

fn check_budget(levels: usize, n_cols: usize, cfg: &OracleConfig) -> Result<Vec<Vec<f64>>> {
    if levels == 0 {
        return invalid("quantizer needs at least one level");
    }
    let size = enumeration_size(levels, n_cols, cfg)?;
    if size > cfg.max_cells as f64 {
        return Err(Error::BudgetExceeded {
            size,
            budget: cfg.max_cells,
        });
    }
    Ok(compositions(levels, cfg.units()?))
}

/// Lazily yields every grid quantizer, odometer order with the last column
/// varying fastest.
pub struct QuantizerGrid {
    comps: Vec<Vec<f64>>,
    levels: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Iterator for QuantizerGrid {
    type Item = QuantizerPmf;

    fn next(&mut self) -> Option<QuantizerPmf> {
        if self.done {
            return None;
        }
        let cols = self.idx.len();
        let mut data = vec![0.0; self.levels * cols];
        for (j, &k) in self.idx.iter().enumerate() {
            for (i, v) in self.comps[k].iter().enumerate() {
                data[i * cols + j] = *v;
            }
        }
        self.done = !advance(&mut self.idx, self.comps.len());
        Some(QuantizerPmf::from_raw(self.levels, cols, data))
    }
}

/// Odometer step; false once every digit has wrapped.
fn advance(idx: &mut [usize], radix: usize) -> bool {
    for d in idx.iter_mut().rev() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

pub fn enumerate_q(levels: usize, n_cols: usize, cfg: &OracleConfig) -> Result<QuantizerGrid> {
    let comps = check_budget(levels, n_cols, cfg)?;
    Ok(QuantizerGrid {
        comps,
        levels,
        idx: vec![0; n_cols],
        done: false,
    })
}

/// Visits every grid quantizer in parallel, partitioned by the first column.
/// Each worker folds into its own accumulator; accumulators are merged in
/// first-column order so results do not depend on scheduling.
fn scan<T, I, F, M>(ch: &ChannelModel, levels: usize, cfg: &OracleConfig, init: I, fold: F, merge: M) -> Result<T>
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, &[f64], &RateReport) + Sync,
    M: Fn(T, T) -> T + Sync,
{
    let ny = ch.n_yr();
    if ny == 0 {
        return invalid("channel has no output bins");
    }
    let comps = check_budget(levels, ny, cfg)?;
    let radix = comps.len();
    let parts: Vec<T> = (0..radix)
        .into_par_iter()
        .map(|first| {
            let mut acc = init();
            let mut eval = Evaluator::new(ch);
            let mut q = vec![0.0; levels * ny];
            let mut idx = vec![0usize; ny];
            idx[0] = first;
            loop {
                for (j, &k) in idx.iter().enumerate() {
                    for (i, v) in comps[k].iter().enumerate() {
                        q[i * ny + j] = *v;
                    }
                }
                let report = eval.measures(&q, levels).to_report();
                fold(&mut acc, &q, &report);
                if !advance(&mut idx[1..], radix) {
                    break;
                }
            }
            acc
        })
        .collect();
    let mut parts = parts.into_iter();
    let first = parts.next().unwrap_or_else(&init);
    Ok(parts.fold(first, merge))
}

/// Best grid quantizer found by an oracle search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBest {
    /// Objective value in bits (`J` or the Lagrangian).
    pub value: f64,
    pub report: RateReport,
    pub q: QuantizerPmf,
}

fn keep_better(best: &mut Option<(f64, RateReport, Vec<f64>)>, value: f64, q: &[f64], r: &RateReport) {
    if best.as_ref().is_none_or(|b| value > b.0) {
        *best = Some((value, *r, q.to_vec()));
    }
}

fn merge_better(
    a: Option<(f64, RateReport, Vec<f64>)>,
    b: Option<(f64, RateReport, Vec<f64>)>,
) -> Option<(f64, RateReport, Vec<f64>)> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.0 > x.0 { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

fn finish(best: Option<(f64, RateReport, Vec<f64>)>, levels: usize, cols: usize) -> Result<OracleBest> {
    let (value, report, q) = best.ok_or_else(|| Error::InvalidArgument("no feasible quantizer on the grid".into()))?;
    Ok(OracleBest {
        value,
        report,
        q: QuantizerPmf::from_raw(levels, cols, q),
    })
}

/// Largest `J` over grid quantizers with `c1 <= c1_max` and `c2 <= c2_max`.
pub fn brute_force_ird(
    ch: &ChannelModel,
    levels: usize,
    cfg: &OracleConfig,
    c1_max: f64,
    c2_max: f64,
) -> Result<OracleBest> {
    let best = scan(
        ch,
        levels,
        cfg,
        || None,
        |acc, q, r| {
            if r.c1_achieved <= c1_max && r.c2_achieved <= c2_max {
                keep_better(acc, r.j_value, q, r);
            }
        },
        merge_better,
    )?;
    finish(best, levels, ch.n_yr())
}

/// Constrained maxima for many targets in a single pass. Entry `k` answers
/// `targets[k]`.
pub fn brute_force_ird_many(
    ch: &ChannelModel,
    levels: usize,
    cfg: &OracleConfig,
    targets: &[(f64, f64)],
) -> Result<Vec<OracleBest>> {
    let n = targets.len();
    let best = scan(
        ch,
        levels,
        cfg,
        || vec![None; n],
        |acc, q, r| {
            for (slot, &(c1, c2)) in acc.iter_mut().zip(targets) {
                if r.c1_achieved <= c1 && r.c2_achieved <= c2 {
                    keep_better(slot, r.j_value, q, r);
                }
            }
        },
        |a, b| a.into_iter().zip(b).map(|(x, y)| merge_better(x, y)).collect(),
    )?;
    best.into_iter().map(|b| finish(b, levels, ch.n_yr())).collect()
}

/// Largest Lagrangian `J - lambda1 c1 - lambda2 c2` over grid quantizers.
pub fn brute_force_lagrangian(
    ch: &ChannelModel,
    levels: usize,
    cfg: &OracleConfig,
    lambda1: f64,
    lambda2: f64,
) -> Result<OracleBest> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return invalid(format!("multipliers must be non-negative, got ({lambda1}, {lambda2})"));
    }
    let best = scan(
        ch,
        levels,
        cfg,
        || None,
        |acc, q, r| keep_better(acc, r.lagrangian(lambda1, lambda2), q, r),
        merge_better,
    )?;
    finish(best, levels, ch.n_yr())
}

/// Removes points beaten by another point with no larger rates and no
/// smaller `J`. Input order breaks exact ties.
fn pareto_prune(mut pts: Vec<(RateReport, Vec<f64>)>) -> Vec<(RateReport, Vec<f64>)> {
    pts.sort_by(|a, b| b.0.j_value.total_cmp(&a.0.j_value));
    let mut kept: Vec<(RateReport, Vec<f64>)> = Vec::new();
    for p in pts {
        let dominated = kept
            .iter()
            .any(|k| k.0.c1_achieved <= p.0.c1_achieved && k.0.c2_achieved <= p.0.c2_achieved);
        if !dominated {
            kept.push(p);
        }
    }
    kept
}

/// The Pareto frontier of all grid quantizers as a surface. Its lower
/// envelope equals [`brute_force_ird`] at every target, and every point
/// carries its quantizer.
pub fn oracle_surface(ch: &ChannelModel, levels: usize, cfg: &OracleConfig) -> Result<Surface> {
    let frontier = scan(
        ch,
        levels,
        cfg,
        Vec::new,
        |acc: &mut Vec<(RateReport, Vec<f64>)>, q, r| {
            acc.push((*r, q.to_vec()));
            // Prune in batches to keep memory flat.
            if acc.len() >= 4096 {
                *acc = pareto_prune(std::mem::take(acc));
            }
        },
        |mut a, b| {
            a.extend(b);
            pareto_prune(a)
        },
    )?;
    let frontier = pareto_prune(frontier);
    let ny = ch.n_yr();
    let points = frontier
        .into_iter()
        .map(|(r, q)| SurfacePoint {
            lambda1: 0.0,
            lambda2: 0.0,
            c1: r.c1_achieved,
            c2: r.c2_achieved,
            i_rd: r.j_value,
            h_scalar: r.h_yhat_given_y,
            iterations: 0,
            converged: true,
            seed: 0,
            q: Some(QuantizerPmf::from_raw(levels, ny, q)),
        })
        .collect();
    Ok(Surface::from_points(points, ch.fingerprint(), levels))
}

/// Whether an oracle optimum meets at least one of its rate constraints up
/// to [`BOUNDARY_SLACK`].
pub fn on_boundary(report: &RateReport, c1_max: f64, c2_max: f64) -> bool {
    report.c1_achieved >= c1_max - BOUNDARY_SLACK || report.c2_achieved >= c2_max - BOUNDARY_SLACK
}

fn check_targets(ch: &ChannelModel, c1_max: f64, c2_max: f64) -> Result<()> {
    let (h1, h2) = (h_yr_given_x1(ch), h_yr_given_x2(ch));
    if !(c1_max >= 0.0 && c2_max >= 0.0 && c1_max < h1 && c2_max < h2) {
        return invalid(format!(
            "targets ({c1_max}, {c2_max}) must lie in [0, H(Yr|X1)) x [0, H(Yr|X2)) = [0, {h1}) x [0, {h2})"
        ));
    }
    Ok(())
}

/// Whether the constrained grid optimum sits on the boundary of the feasible
/// set. A channel on which `J` vanishes identically passes by convention.
pub fn check_boundary_optimality(
    ch: &ChannelModel,
    levels: usize,
    cfg: &OracleConfig,
    c1_max: f64,
    c2_max: f64,
) -> Result<bool> {
    check_targets(ch, c1_max, c2_max)?;
    if mac_sum_bound(ch) < 1e-12 {
        return Ok(true);
    }
    let best = brute_force_ird(ch, levels, cfg, c1_max, c2_max)?;
    Ok(on_boundary(&best.report, c1_max, c2_max))
}

/// Multiplier pairs at which the reference Lagrangian maxima are reported.
pub const REFERENCE_LAMBDAS: [(f64, f64); 5] = [(0.02, 0.02), (0.05, 0.1), (0.1, 0.05), (0.15, 0.2), (0.25, 0.1)];

/// A 5x5 target grid at `k/6` of `(H(Yr|X1), H(Yr|X2))`, `k = 1..=5`,
/// row-major in `c1`.
pub fn reference_targets(ch: &ChannelModel) -> Vec<(f64, f64)> {
    let (h1, h2) = (h_yr_given_x1(ch), h_yr_given_x2(ch));
    let frac = |k: usize| (k + 1) as f64 / 6.0;
    (0..5)
        .flat_map(|a| (0..5).map(move |b| (h1 * frac(a), h2 * frac(b))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianReference {
    pub lambda1: f64,
    pub lambda2: f64,
    pub best: OracleBest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedReference {
    pub c1_max: f64,
    pub c2_max: f64,
    pub on_boundary: bool,
    pub best: OracleBest,
}

/// Reference values for one channel, as emitted for the test suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub fingerprint: String,
    pub levels: usize,
    pub config: OracleConfig,
    pub enumeration_size: f64,
    pub mac_sum_bound_bits: f64,
    pub h_yr_given_x1_bits: f64,
    pub h_yr_given_x2_bits: f64,
    pub unconstrained: OracleBest,
    pub lagrangian: Vec<LagrangianReference>,
    pub constrained: Vec<ConstrainedReference>,
}

pub fn reference_report(ch: &ChannelModel, levels: usize, cfg: &OracleConfig) -> Result<OracleReport> {
    let enumeration_size = enumeration_size(levels, ch.n_yr(), cfg)?;
    let unconstrained = brute_force_lagrangian(ch, levels, cfg, 0.0, 0.0)?;
    let lagrangian = REFERENCE_LAMBDAS
        .iter()
        .map(|&(l1, l2)| {
            Ok(LagrangianReference {
                lambda1: l1,
                lambda2: l2,
                best: brute_force_lagrangian(ch, levels, cfg, l1, l2)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = reference_targets(ch);
    let flat = mac_sum_bound(ch) < 1e-12;
    let constrained = brute_force_ird_many(ch, levels, cfg, &targets)?
        .into_iter()
        .zip(&targets)
        .map(|(best, &(c1, c2))| ConstrainedReference {
            c1_max: c1,
            c2_max: c2,
            on_boundary: flat || on_boundary(&best.report, c1, c2),
            best,
        })
        .collect();
    Ok(OracleReport {
        fingerprint: ch.fingerprint(),
        levels,
        config: *cfg,
        enumeration_size,
        mac_sum_bound_bits: mac_sum_bound(ch),
        h_yr_given_x1_bits: h_yr_given_x1(ch),
        h_yr_given_x2_bits: h_yr_given_x2(ch),
        unconstrained,
        lagrangian,
        constrained,
    })
}

/// Conditional law of the in-repo test channel: binary users, three output
/// bins, a noisy version of the sum `x1 + x2` that is slightly asymmetric
/// between the two mixed inputs. Rows are indexed `[x1][x2]`.
pub const FIXTURE_LAW: [[[f64; 3]; 2]; 2] = [
    [[0.80, 0.15, 0.05], [0.15, 0.75, 0.10]],
    [[0.10, 0.80, 0.10], [0.05, 0.15, 0.80]],
];

/// The 2x2x3 test channel with uniform priors.
pub fn fixture_channel() -> ChannelModel {
    let law: Vec<Vec<Vec<f64>>> = FIXTURE_LAW
        .iter()
        .map(|r| r.iter().map(|c| c.to_vec()).collect())
        .collect();
    ChannelModel::from_pmfs(&[0.5, 0.5], &[0.5, 0.5], &law).expect("fixture law is normalized")
}
