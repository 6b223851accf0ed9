//! Fixed-point iteration for stationary quantizers of the Lagrangian
//! `J(Q) - lambda1 I(Yr; Yhat | X1) - lambda2 I(Yr; Yhat | X2)`.
//!
//! One iteration is an exact coordinate descent step on the functional
//!
//! ```text
//! F(Q, t1, t2, t3, t4) = - sum p(x1) p(x2) p(yr|x1,x2) q(yhat|yr) [ln t1(x1|yhat,x2) + ln t2(x2|yhat,x1)]
//!                        + lambda1 sum p(x1) p(yr|x1) q(yhat|yr) ln(q(yhat|yr) / t3(yhat|x1))
//!                        + lambda2 sum p(x2) p(yr|x2) q(yhat|yr) ln(q(yhat|yr) / t4(yhat|x2))
//! ```
//!
//! first over the posteriors `t1..t4` ([`induced_posteriors`]), then over `Q`
//! with the posteriors held fixed ([`delta_matrix`] followed by the
//! column-wise softmax in [`update_q`]). Since the Lagrangian equals
//! `H(X1) + H(X2) - F` at matched posteriors, its trace never decreases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelModel;
use crate::error::{invalid, Error, Result};
use crate::infotheory::{Evaluator, QuantizerPmf, RateReport};

/// Floor applied to posteriors before taking logarithms inside `delta`.
pub const LOG_FLOOR: f64 = 1e-300;

/// Weight of the random Dirichlet(1) component in the perturbed-uniform start.
pub const PERTURBATION: f64 = 0.5;

/// Ratio between consecutive multiplier scales of the annealed start.
pub const ANNEAL_FACTOR: f64 = 0.7;

/// Weight of the fresh Dirichlet(1) noise mixed in before each annealing stage.
pub const ANNEAL_NOISE: f64 = 0.01;

/// Stopping tolerance used inside annealing stages.
pub const ANNEAL_STAGE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Uniform columns mixed with a seeded Dirichlet(1) draw. The exactly
    /// uniform quantizer is itself a fixed point and must not be used.
    #[default]
    PerturbedUniform,
    /// Independent Dirichlet(1) columns.
    RandomColumns,
    /// Identity on the first `|Yr|` levels, remaining levels empty.
    /// Requires `levels >= |Yr|`.
    IdentityPadded,
    /// Perturbed-uniform start refined by running the iteration at scaled
    /// multipliers `s * (lambda1, lambda2)`, with `s` shrinking by
    /// [`ANNEAL_FACTOR`] from `1 / min(lambda1, lambda2)` down to 1. Each
    /// stage warm-starts from the previous one. At small multipliers this
    /// avoids the poor local optima a cold start falls into.
    Annealed,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perturbed-uniform" => Ok(Self::PerturbedUniform),
            "random-columns" => Ok(Self::RandomColumns),
            "identity-padded" => Ok(Self::IdentityPadded),
            "annealed" => Ok(Self::Annealed),
            other => invalid(format!("unknown init strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub levels: usize,
    pub init: InitStrategy,
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            levels: 32,
            init: InitStrategy::PerturbedUniform,
            epsilon: 1e-8,
            max_iter: 5000,
        }
    }
}

/// Conditional pmfs induced by a quantizer. Where a conditioning event has
/// zero probability the slice is undefined; it is flagged and filled with
/// the corresponding prior so every slice stays a distribution.
#[derive(Debug, Clone)]
pub struct Posteriors {
    levels: usize,
    n1: usize,
    n2: usize,
    /// `t1(x1 = a | yhat = i, x2 = b)` at `[i][b][a]`
    t1: Vec<f64>,
    /// `t2(x2 = b | yhat = i, x1 = a)` at `[i][a][b]`
    t2: Vec<f64>,
    /// `t3(yhat = i | x1 = a)` at `[i][a]`
    t3: Vec<f64>,
    /// `t4(yhat = i | x2 = b)` at `[i][b]`
    t4: Vec<f64>,
    t1_defined: Vec<bool>,
    t2_defined: Vec<bool>,
}

impl Posteriors {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn t1(&self, x1: usize, yhat: usize, x2: usize) -> f64 {
        self.t1[(yhat * self.n2 + x2) * self.n1 + x1]
    }

    pub fn t2(&self, x2: usize, yhat: usize, x1: usize) -> f64 {
        self.t2[(yhat * self.n1 + x1) * self.n2 + x2]
    }

    pub fn t3(&self, yhat: usize, x1: usize) -> f64 {
        self.t3[yhat * self.n1 + x1]
    }

    pub fn t4(&self, yhat: usize, x2: usize) -> f64 {
        self.t4[yhat * self.n2 + x2]
    }

    /// Whether `p(yhat, x2) > 0`, i.e. `t1(. | yhat, x2)` is a true posterior.
    pub fn t1_defined(&self, yhat: usize, x2: usize) -> bool {
        self.t1_defined[yhat * self.n2 + x2]
    }

    pub fn t2_defined(&self, yhat: usize, x1: usize) -> bool {
        self.t2_defined[yhat * self.n1 + x1]
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

pub fn induced_posteriors(ch: &ChannelModel, q: &QuantizerPmf) -> Result<Posteriors> {
    check_shape(ch, q)?;
    let mut eval = Evaluator::new(ch);
    Ok(posteriors_from(ch, &mut eval, q))
}

fn posteriors_from(ch: &ChannelModel, eval: &mut Evaluator<'_>, q: &QuantizerPmf) -> Posteriors {
    let levels = q.levels();
    let (n1, n2) = (ch.n_x1(), ch.n_x2());
    let (px1, px2) = (ch.p_x1(), ch.p_x2());
    let (g, m1, m2) = eval.marginals(q.as_slice(), levels);

    let mut t1 = vec![0.0; levels * n2 * n1];
    let mut t2 = vec![0.0; levels * n1 * n2];
    let mut t3 = vec![0.0; levels * n1];
    let mut t4 = vec![0.0; levels * n2];
    let mut t1_defined = vec![false; levels * n2];
    let mut t2_defined = vec![false; levels * n1];
    for i in 0..levels {
        for a in 0..n1 {
            t3[i * n1 + a] = m1[a * levels + i];
        }
        for b in 0..n2 {
            t4[i * n2 + b] = m2[b * levels + i];
        }
        for b in 0..n2 {
            let den = m2[b * levels + i];
            let defined = den > 0.0;
            t1_defined[i * n2 + b] = defined;
            for a in 0..n1 {
                t1[(i * n2 + b) * n1 + a] = if defined {
                    px1[a] * g[(a * n2 + b) * levels + i] / den
                } else {
                    px1[a]
                };
            }
        }
        for a in 0..n1 {
            let den = m1[a * levels + i];
            let defined = den > 0.0;
            t2_defined[i * n1 + a] = defined;
            for b in 0..n2 {
                t2[(i * n1 + a) * n2 + b] = if defined {
                    px2[b] * g[(a * n2 + b) * levels + i] / den
                } else {
                    px2[b]
                };
            }
        }
    }
    Posteriors {
        levels,
        n1,
        n2,
        t1,
        t2,
        t3,
        t4,
        t1_defined,
        t2_defined,
    }
}

/// Exponent matrix of the quantizer update, `levels x |Yr|`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMatrix {
    levels: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DeltaMatrix {
    pub fn new(levels: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if levels == 0 || cols == 0 || data.len() != levels * cols {
            return invalid(format!(
                "delta data of length {} does not fit {levels}x{cols}",
                data.len()
            ));
        }
        Ok(Self { levels, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let levels = rows.len();
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("delta rows have unequal lengths");
        }
        Self::new(levels, cols, rows.concat())
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[inline]
fn floored_ln(t: f64) -> f64 {
    t.max(LOG_FLOOR).ln()
}

/// `delta[i][j] = (dJ/dq_ij + lambda1 sum_x1 p(x1, yr_j) ln t3(i|x1)
///                + lambda2 sum_x2 p(x2, yr_j) ln t4(i|x2)) / ((lambda1 + lambda2) p(yr_j))`
///
/// with `dJ/dq_ij = sum_{x1,x2} p(x1) p(x2) p(yr_j|x1,x2) [ln t1(x1|i,x2) + ln t2(x2|i,x1)]`
/// evaluated at the fixed posteriors. Zero-mass output bins get a zero column.
pub fn delta_matrix(ch: &ChannelModel, post: &Posteriors, lambda1: f64, lambda2: f64) -> Result<DeltaMatrix> {
    let lsum = lambda1 + lambda2;
    if !(lsum > 0.0 && lsum.is_finite()) {
        return invalid(format!(
            "lambda1 + lambda2 must be positive and finite, got {lambda1} + {lambda2}"
        ));
    }
    let (n1, n2, ny) = (ch.n_x1(), ch.n_x2(), ch.n_yr());
    if post.n1 != n1 || post.n2 != n2 {
        return invalid("posteriors were computed for a different channel");
    }
    let levels = post.levels;
    let (px1, px2, pyr) = (ch.p_x1(), ch.p_x2(), ch.p_yr());

    let mut lt = vec![0.0; n1 * n2];
    let mut lt3 = vec![0.0; n1];
    let mut lt4 = vec![0.0; n2];
    let mut data = vec![0.0; levels * ny];
    for i in 0..levels {
        for a in 0..n1 {
            for b in 0..n2 {
                lt[a * n2 + b] = floored_ln(post.t1(a, i, b)) + floored_ln(post.t2(b, i, a));
            }
            lt3[a] = lambda1 * px1[a] * floored_ln(post.t3(i, a));
        }
        for b in 0..n2 {
            lt4[b] = lambda2 * px2[b] * floored_ln(post.t4(i, b));
        }
        let row = &mut data[i * ny..(i + 1) * ny];
        for (j, out) in row.iter_mut().enumerate() {
            if pyr[j] == 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for a in 0..n1 {
                for b in 0..n2 {
                    acc += ch.joint_row(a, b)[j] * lt[a * n2 + b];
                }
                acc += ch.p_yr_given_x1(a)[j] * lt3[a];
            }
            for b in 0..n2 {
                acc += ch.p_yr_given_x2(b)[j] * lt4[b];
            }
            *out = acc / (lsum * pyr[j]);
        }
    }
    DeltaMatrix::new(levels, ny, data)
}

/// Column-wise softmax of `delta`, stabilized by subtracting the column max.
pub fn update_q(delta: &DeltaMatrix) -> Result<QuantizerPmf> {
    let (levels, cols) = (delta.levels, delta.cols);
    if let Some(k) = delta.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericFailure {
            row: k / cols,
            col: k % cols,
            detail: format!("delta = {}", delta.data[k]),
        });
    }
    let mut data = vec![0.0; levels * cols];
    for j in 0..cols {
        let max = (0..levels).map(|i| delta.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for i in 0..levels {
            let e = (delta.get(i, j) - max).exp();
            data[i * cols + j] = e;
            sum += e;
        }
        for i in 0..levels {
            data[i * cols + j] /= sum;
        }
    }
    Ok(QuantizerPmf::from_raw(levels, cols, data))
}

/// One full posterior / delta / softmax step.
pub fn iterate_once(ch: &ChannelModel, q: &QuantizerPmf, lambda1: f64, lambda2: f64) -> Result<QuantizerPmf> {
    let post = induced_posteriors(ch, q)?;
    update_q(&delta_matrix(ch, &post, lambda1, lambda2)?)
}

/// SplitMix64 mix of a master seed and an index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn dirichlet_column(rng: &mut ChaCha8Rng, levels: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..levels).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / s).collect()
}

pub fn initial_quantizer(levels: usize, cols: usize, init: InitStrategy, seed: u64) -> Result<QuantizerPmf> {
    if levels == 0 || cols == 0 {
        return invalid(format!("quantizer must be non-empty, got {levels}x{cols}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = match init {
        InitStrategy::PerturbedUniform | InitStrategy::Annealed => (0..cols)
            .map(|_| {
                dirichlet_column(&mut rng, levels)
                    .into_iter()
                    .map(|d| (1.0 - PERTURBATION) / levels as f64 + PERTURBATION * d)
                    .collect()
            })
            .collect(),
        InitStrategy::RandomColumns => (0..cols).map(|_| dirichlet_column(&mut rng, levels)).collect(),
        InitStrategy::IdentityPadded => {
            if levels < cols {
                return invalid(format!(
                    "identity-padded start needs at least {cols} levels, got {levels}"
                ));
            }
            (0..cols)
                .map(|j| (0..levels).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
                .collect()
        }
    };
    QuantizerPmf::from_columns(&columns)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerResult {
    pub lambda1: f64,
    pub lambda2: f64,
    pub q_final: QuantizerPmf,
    pub report: RateReport,
    /// `L^(k)` in bits; entry 0 is the value at the initial quantizer.
    pub lagrangian_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    /// Iterations spent building the starting quantizer (annealed start only).
    #[serde(default)]
    pub init_iterations: usize,
}

impl OptimizerResult {
    pub fn lagrangian(&self) -> f64 {
        self.report.lagrangian(self.lambda1, self.lambda2)
    }
}

fn check_solver_args(lambda1: f64, lambda2: f64, params: &SolverParams) -> Result<()> {
    if !(lambda1 > 0.0 && lambda2 > 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
        return invalid(format!(
            "multipliers must be strictly positive and finite, got ({lambda1}, {lambda2})"
        ));
    }
    if !(params.epsilon > 0.0) {
        return invalid(format!("epsilon must be positive, got {}", params.epsilon));
    }
    if params.levels == 0 {
        return invalid("need at least one quantizer level");
    }
    Ok(())
}

/// Stop when the Lagrangian gain is below `epsilon` relative to its value;
/// the `1 +` keeps the rule meaningful when the Lagrangian is near zero.
fn stopped(prev: f64, cur: f64, epsilon: f64) -> bool {
    (cur - prev).abs() < epsilon * (1.0 + cur.abs())
}

pub fn optimize(
    ch: &ChannelModel,
    lambda1: f64,
    lambda2: f64,
    params: &SolverParams,
    seed: u64,
) -> Result<OptimizerResult> {
    check_solver_args(lambda1, lambda2, params)?;
    let q0 = initial_quantizer(params.levels, ch.n_yr(), params.init, seed)?;
    if params.init != InitStrategy::Annealed {
        return optimize_from(ch, lambda1, lambda2, q0, params, seed);
    }
    let (q0, spent) = anneal(ch, lambda1, lambda2, q0, params, seed)?;
    let mut result = optimize_from(ch, lambda1, lambda2, q0, params, seed)?;
    result.init_iterations = spent;
    Ok(result)
}

fn anneal(
    ch: &ChannelModel,
    lambda1: f64,
    lambda2: f64,
    mut q: QuantizerPmf,
    params: &SolverParams,
    seed: u64,
) -> Result<(QuantizerPmf, usize)> {
    let stage_params = SolverParams {
        epsilon: params.epsilon.max(ANNEAL_STAGE_EPSILON),
        init: InitStrategy::PerturbedUniform,
        ..*params
    };
    let mut scale = 1.0 / lambda1.min(lambda2);
    let mut spent = 0;
    let mut stage = 0;
    while scale > 1.0 {
        let noise = initial_quantizer(
            q.levels(),
            q.cols(),
            InitStrategy::RandomColumns,
            derive_seed(seed, 1000 + stage),
        )?;
        q = q.mix(1.0 - ANNEAL_NOISE, &noise)?;
        let run = optimize_from(ch, scale * lambda1, scale * lambda2, q, &stage_params, seed)?;
        spent += run.iterations;
        q = run.q_final;
        scale *= ANNEAL_FACTOR;
        stage += 1;
    }
    Ok((q, spent))
}

/// Runs the iteration from an explicit starting quantizer.
pub fn optimize_from(
    ch: &ChannelModel,
    lambda1: f64,
    lambda2: f64,
    q0: QuantizerPmf,
    params: &SolverParams,
    seed: u64,
) -> Result<OptimizerResult> {
    check_solver_args(lambda1, lambda2, params)?;
    check_shape(ch, &q0)?;
    let mut eval = Evaluator::new(ch);
    let mut q = q0;
    let mut report = eval.measures(q.as_slice(), q.levels()).to_report();
    let mut trace = vec![report.lagrangian(lambda1, lambda2)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let post = posteriors_from(ch, &mut eval, &q);
        q = update_q(&delta_matrix(ch, &post, lambda1, lambda2)?)?;
        report = eval.measures(q.as_slice(), q.levels()).to_report();
        let cur = report.lagrangian(lambda1, lambda2);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(cur);
        if stopped(prev, cur, params.epsilon) {
            converged = true;
            break;
        }
    }
    Ok(OptimizerResult {
        lambda1,
        lambda2,
        q_final: q,
        report,
        lagrangian_trace: trace,
        iterations,
        converged,
        seed,
        init_iterations: 0,
    })
}

/// Best of `restarts` independent runs by final Lagrangian. Restart `r`
/// uses seed `derive_seed(seed, r)`; ties go to the lower restart index.
pub fn optimize_restarts(
    ch: &ChannelModel,
    lambda1: f64,
    lambda2: f64,
    params: &SolverParams,
    restarts: usize,
    seed: u64,
) -> Result<OptimizerResult> {
    if restarts == 0 {
        return invalid("need at least one restart");
    }
    let runs: Vec<OptimizerResult> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| optimize(ch, lambda1, lambda2, params, derive_seed(seed, r)))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, run) in runs.iter().enumerate().skip(1) {
        if run.lagrangian() > runs[best].lagrangian() {
            best = k;
        }
    }
    Ok(runs.into_iter().nth(best).expect("at least one run"))
}
