//! Tracing the `I_RD(C1, C2)` tradeoff surface by sweeping the multipliers.
//!
//! Every grid point `(lambda1, lambda2)` is solved independently; the point
//! records the rates its quantizer actually achieves, so the surface is a
//! cloud of achieved `(c1, c2, i_rd)` triples rather than a lattice over
//! target rates. Queries at arbitrary targets go through the monotone lower
//! envelope, which is always achievable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{invalid, Result};
use crate::infotheory::{rate_report, QuantizerPmf};
use crate::optimizer::{derive_seed, optimize_restarts, SolverParams};

/// Log-spaced multiplier axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self {
            min: 1e-3,
            max: 10.0,
            count: 12,
        }
    }
}

impl LambdaGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.min.is_finite()) {
            return invalid(format!(
                "lambda grid minimum must be positive (the update divides by lambda1 + lambda2), got {}",
                self.min
            ));
        }
        if !(self.max >= self.min && self.max.is_finite()) {
            return invalid(format!(
                "lambda grid maximum {} is below the minimum {}",
                self.max, self.min
            ));
        }
        if self.count == 0 {
            return invalid("lambda grid needs at least one point");
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (0..self.count)
            .map(|k| {
                if k + 1 == self.count {
                    self.max
                } else {
                    (lo + (hi - lo) * k as f64 / (self.count - 1) as f64).exp()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub lambda1: LambdaGrid,
    pub lambda2: LambdaGrid,
    pub solver: SolverParams,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda1: LambdaGrid::default(),
            lambda2: LambdaGrid::default(),
            solver: SolverParams::default(),
            restarts: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Achieved `I(Yr; Yhat | X1)` in bits.
    pub c1: f64,
    /// Achieved `I(Yr; Yhat | X2)` in bits.
    pub c2: f64,
    /// Achieved `J` in bits.
    pub i_rd: f64,
    /// `H(Yhat | Yr)` in bits.
    pub h_scalar: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    /// Quantizer behind the point; absent when loaded from CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<QuantizerPmf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub points: Vec<SurfacePoint>,
    pub fingerprint: String,
    pub levels: usize,
    pub nonconverged: usize,
    /// Set when more than half of the runs hit the iteration cap.
    pub warning: Option<String>,
}

impl Surface {
    pub fn from_points(points: Vec<SurfacePoint>, fingerprint: String, levels: usize) -> Self {
        let nonconverged = points.iter().filter(|p| !p.converged).count();
        let warning = (2 * nonconverged > points.len()).then(|| {
            format!(
                "{nonconverged} of {} grid points did not converge; raise max_iter or epsilon",
                points.len()
            )
        });
        Self {
            points,
            fingerprint,
            levels,
            nonconverged,
            warning,
        }
    }

    pub fn max_i_rd(&self) -> f64 {
        self.points.iter().map(|p| p.i_rd).fold(0.0, f64::max)
    }

    /// Drops the stored quantizers.
    pub fn without_quantizers(mut self) -> Self {
        self.points.iter_mut().for_each(|p| p.q = None);
        self
    }
}

pub fn sweep_grid(ch: &ChannelModel, cfg: &SweepConfig) -> Result<Surface> {
    cfg.lambda1.validate()?;
    cfg.lambda2.validate()?;
    let l1 = cfg.lambda1.values();
    let l2 = cfg.lambda2.values();
    let grid: Vec<(usize, f64, f64)> = l1
        .iter()
        .flat_map(|&a| l2.iter().map(move |&b| (a, b)))
        .enumerate()
        .map(|(k, (a, b))| (k, a, b))
        .collect();
    let points = grid
        .into_par_iter()
        .map(|(k, a, b)| {
            let seed = derive_seed(cfg.seed, k as u64);
            let run = optimize_restarts(ch, a, b, &cfg.solver, cfg.restarts, seed)?;
            Ok(SurfacePoint {
                lambda1: a,
                lambda2: b,
                c1: run.report.c1_achieved,
                c2: run.report.c2_achieved,
                i_rd: run.report.j_value,
                h_scalar: run.report.h_yhat_given_y,
                iterations: run.iterations,
                converged: run.converged,
                seed: run.seed,
                q: Some(run.q_final),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Surface::from_points(points, ch.fingerprint(), cfg.solver.levels))
}

/// Index of the best point with `c1 <= c1_target` and `c2 <= c2_target`.
/// Ties go to the lowest index.
pub fn envelope_argmax(s: &Surface, c1_target: f64, c2_target: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, p) in s.points.iter().enumerate() {
        if p.c1 <= c1_target && p.c2 <= c2_target && best.is_none_or(|b| p.i_rd > s.points[b].i_rd) {
            best = Some(k);
        }
    }
    best
}

/// Achievable lower bound on `I_RD(c1_target, c2_target)`: the best swept
/// `i_rd` whose rates fit under both targets, or 0 (the single-level
/// quantizer) when none does.
pub fn query_lower_envelope(s: &Surface, c1_target: f64, c2_target: f64) -> f64 {
    envelope_argmax(s, c1_target, c2_target)
        .map(|k| s.points[k].i_rd.max(0.0))
        .unwrap_or(0.0)
}

/// `(h_scalar, i_rd)` pairs sorted by `i_rd`, largest first.
pub fn scalar_diagnostic(s: &Surface) -> Result<Vec<(f64, f64)>> {
    if s.points.is_empty() {
        return invalid("surface has no points");
    }
    let mut pairs: Vec<(f64, f64)> = s.points.iter().map(|p| (p.h_scalar, p.i_rd)).collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(pairs)
}

/// Replaces each column by a one-hot at its largest entry; ties go to the
/// lowest level.
pub fn round_to_scalar(q: &QuantizerPmf) -> QuantizerPmf {
    let (levels, cols) = (q.levels(), q.cols());
    let mut data = vec![0.0; levels * cols];
    for j in 0..cols {
        let mut best = 0;
        for i in 1..levels {
            if q.get(i, j) > q.get(best, j) {
                best = i;
            }
        }
        data[best * cols + j] = 1.0;
    }
    QuantizerPmf::from_raw(levels, cols, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    /// Ordered pairs `(a, b)` with `c1_a <= c1_b` and `c2_a <= c2_b`.
    pub comparable_pairs: usize,
    /// Comparable pairs with `i_rd_a > i_rd_b + tol`.
    pub violations: usize,
}

impl MonotonicityCheck {
    pub fn violation_fraction(&self) -> f64 {
        if self.comparable_pairs == 0 {
            0.0
        } else {
            self.violations as f64 / self.comparable_pairs as f64
        }
    }
}

pub fn monotonicity_check(s: &Surface, tol: f64) -> MonotonicityCheck {
    let mut check = MonotonicityCheck {
        comparable_pairs: 0,
        violations: 0,
    };
    for (ia, a) in s.points.iter().enumerate() {
        for (ib, b) in s.points.iter().enumerate() {
            if ia != ib && a.c1 <= b.c1 && a.c2 <= b.c2 {
                check.comparable_pairs += 1;
                if a.i_rd > b.i_rd + tol {
                    check.violations += 1;
                }
            }
        }
    }
    check
}

/// Value at `(x, y)` of the least concave function lying above every
/// `(x_k, y_k, z_k)`, or `None` outside the convex hull of the cloud.
///
/// Brute force over single points, segments and triangles, so cubic in the
/// cloud size. Fine for sweep-sized clouds.
pub fn upper_concave_envelope(cloud: &[(f64, f64, f64)], x: f64, y: f64) -> Option<f64> {
    const TOL: f64 = 1e-12;
    fn offer(best: &mut Option<f64>, v: f64) {
        if best.is_none_or(|b| v > b) {
            *best = Some(v);
        }
    }
    let mut best: Option<f64> = None;
    let n = cloud.len();
    for &(px, py, pz) in cloud {
        if (px - x).abs() <= TOL && (py - y).abs() <= TOL {
            offer(&mut best, pz);
        }
    }
    for k in 0..n {
        let (ax, ay, az) = cloud[k];
        for &(bx, by, bz) in &cloud[k + 1..] {
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            if len2 <= TOL * TOL {
                continue;
            }
            let cross = dx * (y - ay) - dy * (x - ax);
            if cross.abs() > TOL * len2.sqrt() {
                continue;
            }
            let t = (dx * (x - ax) + dy * (y - ay)) / len2;
            if (-TOL..=1.0 + TOL).contains(&t) {
                offer(&mut best, az + t * (bz - az));
            }
        }
    }
    for k in 0..n {
        let (ax, ay, az) = cloud[k];
        for l in k + 1..n {
            let (bx, by, bz) = cloud[l];
            for &(cx, cy, cz) in &cloud[l + 1..] {
                if best.is_some_and(|b| az.max(bz).max(cz) <= b) {
                    continue;
                }
                let det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay);
                if det.abs() <= TOL {
                    continue;
                }
                let wb = ((x - ax) * (cy - ay) - (cx - ax) * (y - ay)) / det;
                let wc = ((bx - ax) * (y - ay) - (x - ax) * (by - ay)) / det;
                let wa = 1.0 - wb - wc;
                if wa >= -TOL && wb >= -TOL && wc >= -TOL {
                    offer(&mut best, wa * az + wb * bz + wc * cz);
                }
            }
        }
    }
    best
}

/// Indices of points lying more than `tol` below the upper concave envelope
/// of the surface's point cloud.
pub fn concavity_violations(s: &Surface, tol: f64) -> Vec<usize> {
    let cloud: Vec<(f64, f64, f64)> = s.points.iter().map(|p| (p.c1, p.c2, p.i_rd)).collect();
    (0..cloud.len())
        .into_par_iter()
        .filter(|&k| {
            let (x, y, z) = cloud[k];
            upper_concave_envelope(&cloud, x, y).is_some_and(|env| z < env - tol)
        })
        .collect()
}

/// Spread of achieved `c2` among points whose `c1` falls in one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceSpread {
    pub c1_lo: f64,
    pub c1_hi: f64,
    pub points: usize,
    pub c2_min: f64,
    pub c2_max: f64,
}

/// Splits the achieved `c1` range into `slices` equal intervals and reports
/// the `c2` interval of each non-empty one. Reported only; there is no
/// threshold on the width.
pub fn c2_spread_by_c1_slice(s: &Surface, slices: usize) -> Vec<SliceSpread> {
    if s.points.is_empty() || slices == 0 {
        return Vec::new();
    }
    let lo = s.points.iter().map(|p| p.c1).fold(f64::INFINITY, f64::min);
    let hi = s.points.iter().map(|p| p.c1).fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / slices as f64).max(f64::MIN_POSITIVE);
    let mut out: Vec<SliceSpread> = (0..slices)
        .map(|k| SliceSpread {
            c1_lo: lo + width * k as f64,
            c1_hi: lo + width * (k + 1) as f64,
            points: 0,
            c2_min: f64::INFINITY,
            c2_max: f64::NEG_INFINITY,
        })
        .collect();
    for p in &s.points {
        let k = (((p.c1 - lo) / width) as usize).min(slices - 1);
        let slot = &mut out[k];
        slot.points += 1;
        slot.c2_min = slot.c2_min.min(p.c2);
        slot.c2_max = slot.c2_max.max(p.c2);
    }
    out.retain(|s| s.points > 0);
    out
}

/// Recomputes every point's rates from its stored quantizer.
pub fn recheck_points(ch: &ChannelModel, s: &Surface) -> Result<Vec<Option<crate::infotheory::RateReport>>> {
    s.points
        .iter()
        .map(|p| p.q.as_ref().map(|q| rate_report(ch, q)).transpose())
        .collect()
}
