//! Outer sum-rate problem: choose the time-sharing coefficient `alpha`.
//!
//! For downlink capacities `I1`, `I2` the sum rate at `alpha` is
//! `alpha * I_RD((1 - alpha)/alpha * I1, (1 - alpha)/alpha * I2)`, with
//! `I_RD` read off the lower envelope of a swept surface.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sweep::{envelope_argmax, query_lower_envelope, Surface};

/// Open interval `(ALPHA_EDGE, 1 - ALPHA_EDGE)` searched for `alpha`.
pub const ALPHA_EDGE: f64 = 1e-6;
/// Size of the uniform cross-check grid.
pub const CROSS_CHECK_POINTS: usize = 1000;
pub const DEFAULT_TOL_ALPHA: f64 = 1e-4;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Real Gaussian capacity `0.5 * log2(1 + snr)` of a relay-to-user link.
pub fn downlink_rate(snr_db: f64) -> f64 {
    0.5 * (10f64.powf(snr_db / 10.0)).ln_1p() / std::f64::consts::LN_2
}

fn targets(i1: f64, i2: f64, alpha: f64) -> (f64, f64) {
    let ratio = (1.0 - alpha) / alpha;
    (ratio * i1, ratio * i2)
}

fn check_rates(i1: f64, i2: f64) -> Result<()> {
    if !(i1.is_finite() && i1 >= 0.0 && i2.is_finite() && i2 >= 0.0) {
        return invalid(format!(
            "downlink rates must be finite and non-negative, got ({i1}, {i2})"
        ));
    }
    Ok(())
}

/// `alpha * I_RD` at the targets induced by `alpha`.
pub fn sum_rate_at(s: &Surface, i1: f64, i2: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    check_rates(i1, i2)?;
    Ok(objective(s, i1, i2, alpha))
}

fn objective(s: &Surface, i1: f64, i2: f64, alpha: f64) -> f64 {
    let (c1, c2) = targets(i1, i2, alpha);
    alpha * query_lower_envelope(s, c1, c2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumRateResult {
    pub alpha_star: f64,
    pub sum_rate: f64,
    pub c1_at_star: f64,
    pub c2_at_star: f64,
    pub i_rd_at_star: f64,
    pub evaluations: usize,
    /// Surface point whose quantizer achieves `i_rd_at_star`; `None` when the
    /// single-level quantizer is the only feasible one.
    pub backing_point: Option<usize>,
}

/// Golden-section search over `alpha`, cross-checked against a uniform grid
/// because the envelope makes the objective step-like. The better of the two
/// candidates is returned; exact ties keep the golden-section answer.
pub fn optimize_alpha(s: &Surface, i1: f64, i2: f64, tol_alpha: f64) -> Result<SumRateResult> {
    if s.points.is_empty() {
        return invalid("surface has no points");
    }
    if !(tol_alpha > 0.0 && tol_alpha.is_finite()) {
        return invalid(format!("tol_alpha must be positive, got {tol_alpha}"));
    }
    check_rates(i1, i2)?;

    let mut evaluations = 0usize;
    let mut f = |alpha: f64| {
        evaluations += 1;
        objective(s, i1, i2, alpha)
    };

    let (mut lo, mut hi) = (ALPHA_EDGE, 1.0 - ALPHA_EDGE);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol_alpha {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let (mut best_alpha, mut best) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };

    for alpha in alpha_grid(CROSS_CHECK_POINTS) {
        let v = f(alpha);
        if v > best {
            best = v;
            best_alpha = alpha;
        }
    }

    let (c1, c2) = targets(i1, i2, best_alpha);
    let backing_point = envelope_argmax(s, c1, c2);
    let i_rd = query_lower_envelope(s, c1, c2);
    Ok(SumRateResult {
        alpha_star: best_alpha,
        sum_rate: best_alpha * i_rd,
        c1_at_star: c1,
        c2_at_star: c2,
        i_rd_at_star: i_rd,
        evaluations,
        backing_point,
    })
}

/// `n` evenly spaced interior points of `(ALPHA_EDGE, 1 - ALPHA_EDGE)`,
/// endpoints included.
pub fn alpha_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => {
            let (lo, hi) = (ALPHA_EDGE, 1.0 - ALPHA_EDGE);
            (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSample {
    pub alpha: f64,
    pub c1_target: f64,
    pub c2_target: f64,
    pub sum_rate: f64,
}

/// The objective on an `n`-point alpha grid, for plotting.
pub fn alpha_profile(s: &Surface, i1: f64, i2: f64, n: usize) -> Result<Vec<AlphaSample>> {
    check_rates(i1, i2)?;
    Ok(alpha_grid(n)
        .into_iter()
        .map(|alpha| {
            let (c1, c2) = targets(i1, i2, alpha);
            AlphaSample {
                alpha,
                c1_target: c1,
                c2_target: c2,
                sum_rate: objective(s, i1, i2, alpha),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unimodality {
    /// Strict local maxima after ignoring moves smaller than the tolerance.
    pub local_maxima: usize,
    pub unimodal: bool,
}

/// Counts the peaks of `values`, treating any rise or fall of at most `tol`
/// as flat. A run that only falls counts its left end as a peak.
pub fn count_local_maxima(values: &[f64], tol: f64) -> usize {
    #[derive(PartialEq)]
    enum Trend {
        Flat,
        Up,
        Down,
    }
    let Some(&first) = values.first() else {
        return 0;
    };
    let (mut trend, mut peaks) = (Trend::Flat, 0);
    // Extreme value of the current run, used as the hysteresis reference.
    let mut pivot = first;
    for &v in &values[1..] {
        match trend {
            Trend::Flat => {
                if v > pivot + tol {
                    trend = Trend::Up;
                    pivot = v;
                } else if v < pivot - tol {
                    trend = Trend::Down;
                    peaks += 1;
                    pivot = v;
                }
            }
            Trend::Up => {
                if v > pivot {
                    pivot = v;
                } else if v < pivot - tol {
                    trend = Trend::Down;
                    peaks += 1;
                    pivot = v;
                }
            }
            Trend::Down => {
                if v < pivot {
                    pivot = v;
                } else if v > pivot + tol {
                    trend = Trend::Up;
                    pivot = v;
                }
            }
        }
    }
    if trend == Trend::Up {
        peaks += 1;
    }
    peaks
}

/// Empirical check that the objective has a single peak on an `n`-point grid.
pub fn unimodality(s: &Surface, i1: f64, i2: f64, n: usize, tol: f64) -> Result<Unimodality> {
    let values: Vec<f64> = alpha_profile(s, i1, i2, n)?.iter().map(|a| a.sum_rate).collect();
    let local_maxima = count_local_maxima(&values, tol);
    Ok(Unimodality {
        local_maxima,
        unimodal: local_maxima <= 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::SurfacePoint;

    fn point(c1: f64, c2: f64, i_rd: f64) -> SurfacePoint {
        SurfacePoint {
            lambda1: 1.0,
            lambda2: 1.0,
            c1,
            c2,
            i_rd,
            h_scalar: 0.0,
            iterations: 1,
            converged: true,
            seed: 0,
            q: None,
        }
    }

    fn staircase() -> Surface {
        let pts = vec![point(0.2, 0.2, 0.3), point(0.6, 0.5, 0.7), point(1.2, 1.1, 1.0)];
        Surface::from_points(pts, "test".into(), 2)
    }

    #[test]
    fn downlink_closed_forms() {
        assert!((downlink_rate(0.0) - 0.5).abs() < 1e-15);
        assert!(downlink_rate(-100.0) < 1e-10);
        assert!((downlink_rate(10.0 * 3f64.log10()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edges_of_alpha_vanish() {
        let s = staircase();
        assert!(sum_rate_at(&s, 0.5, 0.5, 0.999).unwrap() < 1e-12);
        assert!(sum_rate_at(&s, 0.5, 0.5, 0.001).unwrap() <= 0.001 * 1.0 + 1e-15);
        assert!(sum_rate_at(&s, 0.5, 0.5, 1.0).is_err());
        assert!(sum_rate_at(&s, -0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn zero_downlink_gives_zero() {
        let r = optimize_alpha(&staircase(), 0.0, 0.0, 1e-4).unwrap();
        assert_eq!(r.sum_rate, 0.0);
        assert_eq!(r.backing_point, None);
    }

    #[test]
    fn result_is_consistent() {
        let s = staircase();
        let r = optimize_alpha(&s, 0.8, 0.6, 1e-4).unwrap();
        assert!(r.alpha_star > 0.0 && r.alpha_star < 1.0);
        assert!((r.sum_rate - r.alpha_star * r.i_rd_at_star).abs() < 1e-12);
        let k = r.backing_point.unwrap();
        assert_eq!(s.points[k].i_rd, r.i_rd_at_star);
        assert!(s.points[k].c1 <= r.c1_at_star && s.points[k].c2 <= r.c2_at_star);
        // Never worse than the dense grid.
        for a in alpha_grid(5000) {
            assert!(sum_rate_at(&s, 0.8, 0.6, a).unwrap() <= r.sum_rate + 2e-3);
        }
    }

    #[test]
    fn saturated_downlink_beats_threshold_alpha() {
        let s = staircase();
        // Every alpha <= 0.52 reaches the top point with I1 = I2 = 1.3.
        let r = optimize_alpha(&s, 1.3, 1.3, 1e-4).unwrap();
        assert!(r.sum_rate >= 0.5 * 1.0 - 1e-12);
    }

    #[test]
    fn peak_counting() {
        assert_eq!(count_local_maxima(&[], 1e-3), 0);
        assert_eq!(count_local_maxima(&[0.0, 0.0, 0.0], 1e-3), 0);
        assert_eq!(count_local_maxima(&[0.0, 1.0, 2.0, 1.0, 0.0], 1e-3), 1);
        assert_eq!(count_local_maxima(&[3.0, 2.0, 1.0], 1e-3), 1);
        assert_eq!(count_local_maxima(&[0.0, 1.0, 2.0], 1e-3), 1);
        assert_eq!(count_local_maxima(&[0.0, 2.0, 1.0, 2.0, 0.0], 1e-3), 2);
        assert_eq!(count_local_maxima(&[0.0, 1.0, 0.9995, 1.0, 0.0], 1e-3), 1);
    }

    #[test]
    fn profile_matches_pointwise() {
        let s = staircase();
        let prof = alpha_profile(&s, 0.7, 0.4, 100).unwrap();
        assert_eq!(prof.len(), 100);
        for a in &prof {
            assert_eq!(a.sum_rate, sum_rate_at(&s, 0.7, 0.4, a.alpha).unwrap());
        }
    }
}
