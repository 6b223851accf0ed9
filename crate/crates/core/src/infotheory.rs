//! Information measures induced by a channel and a quantizer pmf.
//!
//! Everything is computed exactly over the discrete joint
//! `p(x1) p(x2) p(yr | x1, x2) q(yhat | yr)` with the convention
//! `0 log 0 = 0`. Internally all logarithms are natural; values leave this
//! module in bits.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{invalid, Result};

pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Column sums of a [`QuantizerPmf`] must be within this of one on input.
pub const COLUMN_TOL: f64 = 1e-9;

/// Conditional pmf `q[i][j] = p(yhat = i | yr = j)` with `levels` rows and
/// one column per relay output bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct QuantizerPmf {
    levels: usize,
    cols: usize,
    /// Row-major, `levels x cols`.
    data: Vec<f64>,
}

impl QuantizerPmf {
    /// Validates shape and column normalization, then renormalizes each
    /// column exactly.
    pub fn new(levels: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if levels == 0 || cols == 0 {
            return invalid(format!("quantizer must be non-empty, got {levels}x{cols}"));
        }
        if data.len() != levels * cols {
            return invalid(format!(
                "quantizer data has {} entries, expected {levels}x{cols}",
                data.len()
            ));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return invalid(format!(
                "q[{}][{}] = {} is not a probability",
                k / cols,
                k % cols,
                data[k]
            ));
        }
        let mut q = Self { levels, cols, data };
        for j in 0..cols {
            let s = q.column_sum(j);
            if (s - 1.0).abs() > COLUMN_TOL {
                return invalid(format!("column {j} of the quantizer sums to {s}"));
            }
        }
        q.renormalize();
        Ok(q)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let levels = rows.len();
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("quantizer rows have unequal lengths");
        }
        Self::new(levels, cols, rows.concat())
    }

    /// Builds a quantizer from its columns, each a pmf over the levels.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let levels = columns.first().map(Vec::len).unwrap_or(0);
        if columns.iter().any(|c| c.len() != levels) {
            return invalid("quantizer columns have unequal lengths");
        }
        let mut data = vec![0.0; levels * cols];
        for (j, c) in columns.iter().enumerate() {
            for (i, &v) in c.iter().enumerate() {
                data[i * cols + j] = v;
            }
        }
        Self::new(levels, cols, data)
    }

    /// Caller guarantees every column is already an exact pmf.
    pub(crate) fn from_raw(levels: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), levels * cols);
        Self { levels, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for k in 0..n {
            data[k * n + k] = 1.0;
        }
        Self::from_raw(n, n, data)
    }

    pub fn uniform(levels: usize, cols: usize) -> Self {
        Self::from_raw(levels, cols, vec![1.0 / levels as f64; levels * cols])
    }

    /// The single-level quantizer: `yhat` is constant.
    pub fn constant(cols: usize) -> Self {
        Self::from_raw(1, cols, vec![1.0; cols])
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.levels).map(|i| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    fn column_sum(&self, j: usize) -> f64 {
        (0..self.levels).map(|i| self.get(i, j)).sum()
    }

    fn renormalize(&mut self) {
        for j in 0..self.cols {
            let s = self.column_sum(j);
            for i in 0..self.levels {
                self.data[i * self.cols + j] /= s;
            }
        }
    }

    /// Row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.levels];
        if perm.len() != self.levels
            || perm
                .iter()
                .any(|&p| p >= self.levels || std::mem::replace(&mut seen[p], true))
        {
            return invalid("row permutation is not a permutation of the levels");
        }
        let data = perm.iter().flat_map(|&p| self.row(p).iter().copied()).collect();
        Ok(Self::from_raw(self.levels, self.cols, data))
    }

    /// Convex combination `theta * self + (1 - theta) * other`.
    pub fn mix(&self, theta: f64, other: &Self) -> Result<Self> {
        if self.levels != other.levels || self.cols != other.cols {
            return invalid("cannot mix quantizers of different shapes");
        }
        if !(0.0..=1.0).contains(&theta) {
            return invalid(format!("mixing weight {theta} outside [0, 1]"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        let mut q = Self::from_raw(self.levels, self.cols, data);
        q.renormalize();
        Ok(q)
    }

    /// True when every column is one-hot.
    pub fn is_deterministic(&self) -> bool {
        (0..self.cols).all(|j| (0..self.levels).filter(|&i| self.get(i, j) != 0.0).count() == 1)
    }
}

impl TryFrom<Vec<Vec<f64>>> for QuantizerPmf {
    type Error = crate::Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<QuantizerPmf> for Vec<Vec<f64>> {
    fn from(q: QuantizerPmf) -> Self {
        q.rows()
    }
}

/// Every rate quantity induced by a `(channel, quantizer)` pair, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `I(X1; Yhat | X2) + I(X2; Yhat | X1)`
    pub j_value: f64,
    /// `I(Yr; Yhat | X1)`, the rate user 1 must decode.
    pub c1_achieved: f64,
    /// `I(Yr; Yhat | X2)`
    pub c2_achieved: f64,
    /// `H(Yhat | Yr)`; zero exactly for scalar quantizers.
    pub h_yhat_given_y: f64,
    /// `I(X1; Yhat | X2)`
    pub r1: f64,
    /// `I(X2; Yhat | X1)`
    pub r2: f64,
}

impl RateReport {
    pub fn lagrangian(&self, lambda1: f64, lambda2: f64) -> f64 {
        self.j_value - lambda1 * self.c1_achieved - lambda2 * self.c2_achieved
    }
}

/// Raw measures in nats, before clamping.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Measures {
    pub r1: f64,
    pub r2: f64,
    pub c1: f64,
    pub c2: f64,
    pub h: f64,
}

impl Measures {
    pub fn to_report(self) -> RateReport {
        let r1 = (self.r1 * LOG2_E).max(0.0);
        let r2 = (self.r2 * LOG2_E).max(0.0);
        RateReport {
            j_value: r1 + r2,
            c1_achieved: (self.c1 * LOG2_E).max(0.0),
            c2_achieved: (self.c2 * LOG2_E).max(0.0),
            h_yhat_given_y: (self.h * LOG2_E).max(0.0),
            r1,
            r2,
        }
    }
}

#[inline]
fn xlogy_ratio(x: f64, num: f64, den: f64) -> f64 {
    if x > 0.0 {
        x * (num / den).ln()
    } else {
        0.0
    }
}

/// Reusable scratch space for repeated evaluations on one channel.
pub(crate) struct Evaluator<'a> {
    ch: &'a ChannelModel,
    /// `p(yhat = i | x1 = a, x2 = b)`, layout `[a][b][i]`.
    g: Vec<f64>,
    /// `p(yhat = i | x1 = a)`, layout `[a][i]`.
    m1: Vec<f64>,
    /// `p(yhat = i | x2 = b)`, layout `[b][i]`.
    m2: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(ch: &'a ChannelModel) -> Self {
        Self {
            ch,
            g: Vec::new(),
            m1: Vec::new(),
            m2: Vec::new(),
        }
    }

    /// Fills `g`, `m1`, `m2` for quantizer data `q` (`levels x |Yr|`).
    pub fn marginals(&mut self, q: &[f64], levels: usize) -> (&[f64], &[f64], &[f64]) {
        let ch = self.ch;
        let (n1, n2, ny) = (ch.n_x1(), ch.n_x2(), ch.n_yr());
        self.g.clear();
        self.g.resize(n1 * n2 * levels, 0.0);
        self.m1.clear();
        self.m1.resize(n1 * levels, 0.0);
        self.m2.clear();
        self.m2.resize(n2 * levels, 0.0);
        for a in 0..n1 {
            for b in 0..n2 {
                let cond = ch.p_yr_given(a, b);
                let base = (a * n2 + b) * levels;
                for i in 0..levels {
                    let row = &q[i * ny..(i + 1) * ny];
                    let v: f64 = row.iter().zip(cond).map(|(x, y)| x * y).sum();
                    self.g[base + i] = v;
                    self.m1[a * levels + i] += ch.p_x2()[b] * v;
                    self.m2[b * levels + i] += ch.p_x1()[a] * v;
                }
            }
        }
        (&self.g, &self.m1, &self.m2)
    }

    pub fn measures(&mut self, q: &[f64], levels: usize) -> Measures {
        self.marginals(q, levels);
        let ch = self.ch;
        let (n1, n2, ny) = (ch.n_x1(), ch.n_x2(), ch.n_yr());
        let (px1, px2) = (ch.p_x1(), ch.p_x2());

        let mut r1 = 0.0;
        let mut r2 = 0.0;
        for a in 0..n1 {
            for b in 0..n2 {
                let w = px1[a] * px2[b];
                if w == 0.0 {
                    continue;
                }
                let base = (a * n2 + b) * levels;
                for i in 0..levels {
                    let g = self.g[base + i];
                    r1 += w * xlogy_ratio(g, g, self.m2[b * levels + i]);
                    r2 += w * xlogy_ratio(g, g, self.m1[a * levels + i]);
                }
            }
        }

        let mut h = 0.0;
        for (j, &p) in ch.p_yr().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for i in 0..levels {
                h -= p * xlogy_ratio(q[i * ny + j], q[i * ny + j], 1.0);
            }
        }
        // Yhat depends on X1 only through Yr, so I(Yr; Yhat | X1) = H(Yhat | X1) - H(Yhat | Yr).
        let h_given_x1: f64 = (0..n1)
            .map(|a| px1[a] * entropy_nats(&self.m1[a * levels..(a + 1) * levels]))
            .sum();
        let h_given_x2: f64 = (0..n2)
            .map(|b| px2[b] * entropy_nats(&self.m2[b * levels..(b + 1) * levels]))
            .sum();
        let c1 = h_given_x1 - h;
        let c2 = h_given_x2 - h;
        Measures { r1, r2, c1, c2, h }
    }
}

fn check_shape(ch: &ChannelModel, q: &QuantizerPmf) -> Result<()> {
    if q.cols() != ch.n_yr() {
        return invalid(format!(
            "quantizer has {} columns but the channel has {} output bins",
            q.cols(),
            ch.n_yr()
        ));
    }
    Ok(())
}

/// Shannon entropy in bits.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(k) = p.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return invalid(format!("p[{k}] = {} is not a probability", p[k]));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > COLUMN_TOL {
        return invalid(format!("pmf sums to {s}"));
    }
    Ok(entropy_nats(p) * LOG2_E)
}

pub(crate) fn entropy_nats(p: &[f64]) -> f64 {
    -p.iter().map(|&v| xlogy_ratio(v, v, 1.0)).sum::<f64>()
}

pub fn rate_report(ch: &ChannelModel, q: &QuantizerPmf) -> Result<RateReport> {
    check_shape(ch, q)?;
    Ok(Evaluator::new(ch).measures(q.as_slice(), q.levels()).to_report())
}

/// `J(Q) - lambda1 I(Yr; Yhat | X1) - lambda2 I(Yr; Yhat | X2)` in bits.
pub fn lagrangian(ch: &ChannelModel, q: &QuantizerPmf, lambda1: f64, lambda2: f64) -> Result<f64> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return invalid(format!("multipliers must be non-negative, got ({lambda1}, {lambda2})"));
    }
    Ok(rate_report(ch, q)?.lagrangian(lambda1, lambda2))
}

/// `H(Yr | X1)` in bits.
pub fn h_yr_given_x1(ch: &ChannelModel) -> f64 {
    (0..ch.n_x1())
        .map(|a| ch.p_x1()[a] * entropy_nats(ch.p_yr_given_x1(a)))
        .sum::<f64>()
        * LOG2_E
}

/// `H(Yr | X2)` in bits.
pub fn h_yr_given_x2(ch: &ChannelModel) -> f64 {
    (0..ch.n_x2())
        .map(|b| ch.p_x2()[b] * entropy_nats(ch.p_yr_given_x2(b)))
        .sum::<f64>()
        * LOG2_E
}

/// `H(Yr | X1, X2)` in bits.
pub fn h_yr_given_x1x2(ch: &ChannelModel) -> f64 {
    let mut h = 0.0;
    for a in 0..ch.n_x1() {
        for b in 0..ch.n_x2() {
            h += ch.p_x1()[a] * ch.p_x2()[b] * entropy_nats(ch.p_yr_given(a, b));
        }
    }
    h * LOG2_E
}

/// `I(X1; Yr | X2) + I(X2; Yr | X1)`: the value of `J` without quantization,
/// and an upper bound on `J` for every quantizer.
pub fn mac_sum_bound(ch: &ChannelModel) -> f64 {
    let h12 = h_yr_given_x1x2(ch);
    (h_yr_given_x2(ch) - h12) + (h_yr_given_x1(ch) - h12)
}
