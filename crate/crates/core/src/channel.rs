//! Discrete descriptions of the relay's uplink observation.
//!
//! A [`ChannelModel`] holds the independent input priors `p(x1)`, `p(x2)` and
//! the multiple-access law `p(yr | x1, x2)` over a finite output alphabet,
//! together with every marginal and conditional derived from the joint
//! `p(x1) p(x2) p(yr | x1, x2)`. Models are immutable once built.
//!
//! [`build_bpsk_mac`] discretizes `Yr = X1 + X2 + Zr` for antipodal inputs
//! and unit-variance Gaussian noise; [`ChannelModel::from_pmfs`] accepts any
//! user-supplied discrete law.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

/// Tolerance on the normalization of user-supplied pmfs.
pub const INPUT_NORMALIZATION_TOL: f64 = 1e-9;

/// Where a model came from. Only used for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSource {
    Bpsk {
        snr1_db: f64,
        snr2_db: f64,
        num_bins: usize,
        span_sigmas: f64,
    },
    Inline,
}

#[derive(Debug, Clone)]
pub struct ChannelModel {
    source: ChannelSource,
    x1_alphabet: Vec<f64>,
    x2_alphabet: Vec<f64>,
    p_x1: Vec<f64>,
    p_x2: Vec<f64>,
    /// `[a][b][j]`, row-major.
    cond: Vec<f64>,
    /// `p(x1 = a, x2 = b, yr = j)`, same layout as `cond`.
    joint: Vec<f64>,
    p_yr: Vec<f64>,
    /// `[a][j]`
    p_yr_given_x1: Vec<f64>,
    /// `[b][j]`
    p_yr_given_x2: Vec<f64>,
    bin_centers: Vec<f64>,
}

fn std_normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

fn check_pmf(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return invalid(format!("{what} is empty"));
    }
    for (k, &v) in p.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return invalid(format!("{what}[{k}] = {v} is not a probability"));
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > INPUT_NORMALIZATION_TOL {
        return invalid(format!("{what} sums to {sum}, not 1"));
    }
    Ok(())
}

fn normalized(p: &[f64]) -> Vec<f64> {
    let sum: f64 = p.iter().sum();
    p.iter().map(|v| v / sum).collect()
}

/// Discretized BPSK multiple-access channel with unit noise variance.
///
/// Inputs are `±sqrt(P_k)` with uniform priors, `P_k = 10^(snr_k/10)`. The
/// output axis is a uniform grid of `num_bins` bins over
/// `[mu_min - span_sigmas, mu_max + span_sigmas]`; the two outermost bins
/// also collect the Gaussian tails so every conditional pmf sums to one.
pub fn build_bpsk_mac(snr1_db: f64, snr2_db: f64, num_bins: usize, span_sigmas: f64) -> Result<ChannelModel> {
    if !snr1_db.is_finite() || !snr2_db.is_finite() {
        return invalid(format!("SNRs must be finite, got {snr1_db} dB and {snr2_db} dB"));
    }
    if num_bins < 4 {
        return invalid(format!("num_bins must be at least 4, got {num_bins}"));
    }
    if !(span_sigmas.is_finite() && span_sigmas > 0.0) {
        return invalid(format!("span_sigmas must be positive, got {span_sigmas}"));
    }
    let a1 = 10f64.powf(snr1_db / 10.0).sqrt();
    let a2 = 10f64.powf(snr2_db / 10.0).sqrt();
    let x1 = vec![-a1, a1];
    let x2 = vec![-a2, a2];
    let mu_max = a1 + a2;
    let lo = -mu_max - span_sigmas;
    let hi = mu_max + span_sigmas;
    let width = (hi - lo) / num_bins as f64;
    let edges: Vec<f64> = (0..=num_bins).map(|k| lo + width * k as f64).collect();
    let centers: Vec<f64> = (0..num_bins).map(|k| lo + width * (k as f64 + 0.5)).collect();

    let mut cond = Vec::with_capacity(4 * num_bins);
    for &s1 in &x1 {
        for &s2 in &x2 {
            let mu = s1 + s2;
            let mut row: Vec<f64> = (0..num_bins)
                .map(|k| {
                    if k == 0 {
                        std_normal_cdf(edges[1] - mu)
                    } else if k == num_bins - 1 {
                        std_normal_cdf(mu - edges[num_bins - 1])
                    } else if edges[k] >= mu {
                        // upper tail, computed from the right for accuracy
                        std_normal_cdf(mu - edges[k]) - std_normal_cdf(mu - edges[k + 1])
                    } else {
                        std_normal_cdf(edges[k + 1] - mu) - std_normal_cdf(edges[k] - mu)
                    }
                })
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
            cond.extend(row);
        }
    }
    let source = ChannelSource::Bpsk {
        snr1_db,
        snr2_db,
        num_bins,
        span_sigmas,
    };
    Ok(ChannelModel::assemble(
        source,
        x1,
        x2,
        vec![0.5, 0.5],
        vec![0.5, 0.5],
        cond,
        centers,
    ))
}

impl ChannelModel {
    /// Builds a model from explicit pmfs. `p_yr_given_x1x2[a][b]` is the
    /// output pmf for inputs `(a, b)`. Alphabets are the symbol indices.
    pub fn from_pmfs(p_x1: &[f64], p_x2: &[f64], p_yr_given_x1x2: &[Vec<Vec<f64>>]) -> Result<Self> {
        check_pmf(p_x1, "p_x1")?;
        check_pmf(p_x2, "p_x2")?;
        if p_yr_given_x1x2.len() != p_x1.len() {
            return invalid(format!(
                "p_yr_given_x1x2 has {} x1 slices, p_x1 has {} entries",
                p_yr_given_x1x2.len(),
                p_x1.len()
            ));
        }
        let ny = p_yr_given_x1x2
            .first()
            .and_then(|s| s.first())
            .map(Vec::len)
            .unwrap_or(0);
        if ny == 0 {
            return invalid("output alphabet is empty");
        }
        let mut cond = Vec::with_capacity(p_x1.len() * p_x2.len() * ny);
        for (a, slice) in p_yr_given_x1x2.iter().enumerate() {
            if slice.len() != p_x2.len() {
                return invalid(format!(
                    "p_yr_given_x1x2[{a}] has {} x2 slices, p_x2 has {} entries",
                    slice.len(),
                    p_x2.len()
                ));
            }
            for (b, row) in slice.iter().enumerate() {
                if row.len() != ny {
                    return invalid(format!(
                        "p_yr_given_x1x2[{a}][{b}] has {} outputs, expected {ny}",
                        row.len()
                    ));
                }
                check_pmf(row, &format!("p_yr_given_x1x2[{a}][{b}]"))?;
                cond.extend(normalized(row));
            }
        }
        let x1 = (0..p_x1.len()).map(|k| k as f64).collect();
        let x2 = (0..p_x2.len()).map(|k| k as f64).collect();
        let centers = (0..ny).map(|k| k as f64).collect();
        Ok(Self::assemble(
            ChannelSource::Inline,
            x1,
            x2,
            normalized(p_x1),
            normalized(p_x2),
            cond,
            centers,
        ))
    }

    fn assemble(
        source: ChannelSource,
        x1_alphabet: Vec<f64>,
        x2_alphabet: Vec<f64>,
        p_x1: Vec<f64>,
        p_x2: Vec<f64>,
        cond: Vec<f64>,
        bin_centers: Vec<f64>,
    ) -> Self {
        let (n1, n2) = (p_x1.len(), p_x2.len());
        let ny = cond.len() / (n1 * n2);
        let mut joint = vec![0.0; cond.len()];
        let mut p_yr = vec![0.0; ny];
        let mut p_yr_given_x1 = vec![0.0; n1 * ny];
        let mut p_yr_given_x2 = vec![0.0; n2 * ny];
        for a in 0..n1 {
            for b in 0..n2 {
                let base = (a * n2 + b) * ny;
                for j in 0..ny {
                    let c = cond[base + j];
                    let w = p_x1[a] * p_x2[b] * c;
                    joint[base + j] = w;
                    p_yr[j] += w;
                    p_yr_given_x1[a * ny + j] += p_x2[b] * c;
                    p_yr_given_x2[b * ny + j] += p_x1[a] * c;
                }
            }
        }
        Self {
            source,
            x1_alphabet,
            x2_alphabet,
            p_x1,
            p_x2,
            cond,
            joint,
            p_yr,
            p_yr_given_x1,
            p_yr_given_x2,
            bin_centers,
        }
    }

    pub fn source(&self) -> &ChannelSource {
        &self.source
    }

    pub fn n_x1(&self) -> usize {
        self.p_x1.len()
    }

    pub fn n_x2(&self) -> usize {
        self.p_x2.len()
    }

    /// Size of the discretized relay output alphabet `|Yr|`.
    pub fn n_yr(&self) -> usize {
        self.p_yr.len()
    }

    pub fn x1_alphabet(&self) -> &[f64] {
        &self.x1_alphabet
    }

    pub fn x2_alphabet(&self) -> &[f64] {
        &self.x2_alphabet
    }

    pub fn p_x1(&self) -> &[f64] {
        &self.p_x1
    }

    pub fn p_x2(&self) -> &[f64] {
        &self.p_x2
    }

    pub fn p_yr(&self) -> &[f64] {
        &self.p_yr
    }

    pub fn bin_centers(&self) -> &[f64] {
        &self.bin_centers
    }

    /// `p(yr | x1 = a, x2 = b)` as a slice over `yr`.
    pub fn p_yr_given(&self, a: usize, b: usize) -> &[f64] {
        let ny = self.n_yr();
        let base = (a * self.n_x2() + b) * ny;
        &self.cond[base..base + ny]
    }

    /// `p(x1 = a, x2 = b, yr)` as a slice over `yr`.
    pub fn joint_row(&self, a: usize, b: usize) -> &[f64] {
        let ny = self.n_yr();
        let base = (a * self.n_x2() + b) * ny;
        &self.joint[base..base + ny]
    }

    pub fn p_yr_given_x1(&self, a: usize) -> &[f64] {
        let ny = self.n_yr();
        &self.p_yr_given_x1[a * ny..(a + 1) * ny]
    }

    pub fn p_yr_given_x2(&self, b: usize) -> &[f64] {
        let ny = self.n_yr();
        &self.p_yr_given_x2[b * ny..(b + 1) * ny]
    }

    /// Short content hash over priors and the conditional law.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for dim in [self.n_x1(), self.n_x2(), self.n_yr()] {
            hasher.update((dim as u64).to_le_bytes());
        }
        for v in self.p_x1.iter().chain(&self.p_x2).chain(&self.cond) {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Nested, self-describing form for JSON dumps.
    pub fn dump(&self) -> ChannelDump {
        let (n1, n2) = (self.n_x1(), self.n_x2());
        ChannelDump {
            source: self.source.clone(),
            fingerprint: self.fingerprint(),
            x1_alphabet: self.x1_alphabet.clone(),
            x2_alphabet: self.x2_alphabet.clone(),
            p_x1: self.p_x1.clone(),
            p_x2: self.p_x2.clone(),
            bin_centers: self.bin_centers.clone(),
            p_yr: self.p_yr.clone(),
            p_yr_given_x1: (0..n1).map(|a| self.p_yr_given_x1(a).to_vec()).collect(),
            p_yr_given_x2: (0..n2).map(|b| self.p_yr_given_x2(b).to_vec()).collect(),
            p_yr_given_x1x2: (0..n1)
                .map(|a| (0..n2).map(|b| self.p_yr_given(a, b).to_vec()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelDump {
    pub source: ChannelSource,
    pub fingerprint: String,
    pub x1_alphabet: Vec<f64>,
    pub x2_alphabet: Vec<f64>,
    pub p_x1: Vec<f64>,
    pub p_x2: Vec<f64>,
    pub bin_centers: Vec<f64>,
    pub p_yr: Vec<f64>,
    pub p_yr_given_x1: Vec<Vec<f64>>,
    pub p_yr_given_x2: Vec<Vec<f64>>,
    pub p_yr_given_x1x2: Vec<Vec<Vec<f64>>>,
}
