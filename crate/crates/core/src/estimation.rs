//! Tail estimation from i.i.d. samples: order statistics, the log-spacing
//! estimator of the Weibull tail coefficient, the exponential rate, the
//! correlation matrix, and plug-in survivor and excess probabilities.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::Probability;
use crate::kotz::{KotzModel, KotzParams, Samples};
use crate::limits::{excess_limit, excess_survivor};
use crate::linalg::{CorrelationSpec, IndexSet};
use crate::tail::{tail_asymptotic, v_n, TailExpansion, TailRequest};

/// An `n × k` sample with per-column order statistics computed on demand.
#[derive(Debug)]
pub struct SampleMatrix {
    k: usize,
    data: Vec<f64>,
    sorted: Vec<OnceLock<Vec<f64>>>,
}

impl SampleMatrix {
    /// Row-major data; requires `n > k ≥ 2` and finite entries.
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        if k < 2 {
            return Err(Error::DimensionTooSmall(k));
        }
        if !data.len().is_multiple_of(k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: data.len() % k,
            });
        }
        let n = data.len() / k;
        if n <= k {
            return Err(Error::InsufficientData(format!(
                "{n} rows for dimension {k}"
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NotFinite(*bad));
        }
        Ok(Self {
            k,
            data,
            sorted: (0..k).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn from_samples(samples: Samples) -> Result<Self> {
        Self::new(samples.dim(), samples.data().to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: bad.len(),
            });
        }
        Self::new(k, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k)
    }

    fn check_coord(&self, coord: usize) -> Result<usize> {
        if coord == 0 || coord > self.k {
            return Err(Error::IndexOutOfRange {
                index: coord,
                dim: self.k,
            });
        }
        Ok(coord - 1)
    }

    /// Ascending order statistics of coordinate `coord` (1-based).
    pub fn order_statistics(&self, coord: usize) -> Result<&[f64]> {
        let c = self.check_coord(coord)?;
        Ok(self.sorted[c].get_or_init(|| {
            let mut col: Vec<f64> = self.rows().map(|r| r[c]).collect();
            col.sort_unstable_by(f64::total_cmp);
            col
        }))
    }

    /// `Y_{n−i+1:n}`, the `i`-th largest value (1-based `i`).
    fn upper(&self, coord: usize, i: usize) -> Result<f64> {
        let ys = self.order_statistics(coord)?;
        Ok(ys[ys.len() - i])
    }
}

/// `⌊n^0.6⌋`.
pub fn default_kn(n: usize) -> usize {
    (n as f64).powf(0.6).floor() as usize
}

/// `1 / ln(n / k_n)`.
pub fn default_tn(n: usize, k_n: usize) -> f64 {
    1.0 / (n as f64 / k_n as f64).ln()
}

/// `(1/k_n) Σ_{i=1}^{k_n} log log(n/i) − log log(n/k_n)`; removes the leading
/// bias of the log-spacing estimator when the tail is exactly `exp(−q y^δ)`.
pub fn log_log_tn(n: usize, k_n: usize) -> f64 {
    let nf = n as f64;
    let reference = (nf / k_n as f64).ln().ln();
    (1..=k_n)
        .map(|i| (nf / i as f64).ln().ln() - reference)
        .sum::<f64>()
        / k_n as f64
}

fn check_kn(sample: &SampleMatrix, k_n: usize, min: usize) -> Result<()> {
    if k_n < min {
        return Err(Error::InvalidParameter {
            name: "k_n",
            value: k_n as f64,
            reason: "too small",
        });
    }
    if k_n >= sample.n() {
        return Err(Error::KnTooLarge { k_n, n: sample.n() });
    }
    Ok(())
}

/// `(1/T_n)(1/k_n) Σ_{i=1}^{k_n} (log Y_{n−i+1:n} − log Y_{n−k_n+1:n})`, the
/// log-spacing estimate of the Weibull tail coefficient `1/δ`.
pub fn weibull_tail_coefficient(
    sample: &SampleMatrix,
    coord: usize,
    k_n: usize,
    t_n: f64,
) -> Result<f64> {
    check_kn(sample, k_n, 2)?;
    if !(t_n > 0.0) || !t_n.is_finite() {
        return Err(Error::InvalidParameter {
            name: "T_n",
            value: t_n,
            reason: "must be positive and finite",
        });
    }
    let ys = sample.order_statistics(coord)?;
    let n = ys.len();
    let reference = ys[n - k_n];
    if !(reference > 0.0) {
        return Err(Error::NonPositiveOrderStatistic(reference));
    }
    let spacings: f64 = ys[n - k_n..].iter().map(|y| (y / reference).ln()).sum();
    Ok(spacings / k_n as f64 / t_n)
}

/// Tail exponent estimate `δ̂ = 1 / θ̂` from [`weibull_tail_coefficient`].
pub fn gardes_girard_delta(
    sample: &SampleMatrix,
    coord: usize,
    k_n: usize,
    t_n: f64,
) -> Result<f64> {
    let theta = weibull_tail_coefficient(sample, coord, k_n, t_n)?;
    if !(theta > 0.0) {
        return Err(Error::DegenerateSpacing);
    }
    Ok(1.0 / theta)
}

/// `q̂ = (1/k_n) Σ_{i=1}^{k_n} log(n/i) / Y_{n−i+1:n}^{δ̂}`.
pub fn q_estimate(sample: &SampleMatrix, coord: usize, k_n: usize, delta_hat: f64) -> Result<f64> {
    check_kn(sample, k_n, 1)?;
    if !(delta_hat > 0.0) || !delta_hat.is_finite() {
        return Err(Error::InvalidParameter {
            name: "delta_hat",
            value: delta_hat,
            reason: "must be positive and finite",
        });
    }
    let n = sample.n() as f64;
    let smallest = sample.upper(coord, k_n)?;
    if !(smallest > 0.0) {
        return Err(Error::NonPositiveOrderStatistic(smallest));
    }
    let mut sum = 0.0;
    for i in 1..=k_n {
        sum += (n / i as f64).ln() / sample.upper(coord, i)?.powf(delta_hat);
    }
    Ok(sum / k_n as f64)
}

/// Marginal tail fit `(δ̂, q̂)` of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub delta_hat: f64,
    pub q_hat: f64,
    /// Weibull tail coefficient estimate, `1/δ̂`.
    pub theta_hat: f64,
    pub k_n: usize,
    #[serde(rename = "T_n")]
    pub t_n: f64,
    pub coordinate: usize,
}

/// Fits coordinate `coord`; `k_n` and `T_n` default to [`default_kn`] and [`default_tn`].
pub fn fit_tail(
    sample: &SampleMatrix,
    coord: usize,
    k_n: Option<usize>,
    t_n: Option<f64>,
) -> Result<TailFit> {
    let n = sample.n();
    let k_n = k_n.unwrap_or_else(|| default_kn(n));
    let t_n = t_n.unwrap_or_else(|| default_tn(n, k_n));
    let delta_hat = gardes_girard_delta(sample, coord, k_n, t_n)?;
    let q_hat = q_estimate(sample, coord, k_n, delta_hat)?;
    Ok(TailFit {
        delta_hat,
        q_hat,
        theta_hat: 1.0 / delta_hat,
        k_n,
        t_n,
        coordinate: coord,
    })
}

/// Sample Pearson correlation matrix, validated positive definite. Requires `n > 10 k`.
pub fn corr_estimate(sample: &SampleMatrix) -> Result<CorrelationSpec> {
    let (n, k) = (sample.n(), sample.k());
    if n <= 10 * k {
        return Err(Error::InsufficientData(format!(
            "{n} rows; correlation needs more than {}",
            10 * k
        )));
    }
    let mut mean = vec![0.0; k];
    for row in sample.rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(k, k);
    let mut centered = vec![0.0; k];
    for row in sample.rows() {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v - m;
        }
        for i in 0..k {
            for j in i..k {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    let sd: Vec<f64> = (0..k).map(|i| cov[(i, i)].sqrt()).collect();
    if let Some(i) = sd.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            index: i + 1,
            pivot: 0.0,
        });
    }
    let corr = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            let (a, b) = (i.min(j), i.max(j));
            cov[(a, b)] / (sd[a] * sd[b])
        }
    });
    CorrelationSpec::factorize(corr)
}

/// Tail constants `p` and `N` treated as known in plug-in estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KnownConstants {
    pub p: f64,
    #[serde(rename = "N")]
    pub exponent: f64,
}

fn plug_in_model(
    fit: &TailFit,
    corr: &CorrelationSpec,
    known: &KnownConstants,
) -> Result<KotzModel> {
    let params = KotzParams::new(known.p, fit.q_hat, fit.delta_hat, known.exponent)?;
    Ok(KotzModel::new(params, corr.clone()))
}

/// Plug-in asymptotic `P(X > t 1)` with estimated `(q, δ, Σ)` and known `(p, N)`.
pub fn survivor_estimate(
    fit: &TailFit,
    corr: &CorrelationSpec,
    known: &KnownConstants,
    t: f64,
) -> Result<TailExpansion> {
    let model = plug_in_model(fit, corr, known)?;
    let ones = vec![1.0; corr.dim()];
    tail_asymptotic(&TailRequest {
        model: &model,
        a: &ones,
        x: None,
        t,
    })
}

/// Plug-in asymptotic `P(X − t 1 > x | X > t 1)`, the limit excess survivor at `v_n x`.
pub fn excess_estimate(
    fit: &TailFit,
    corr: &CorrelationSpec,
    known: &KnownConstants,
    t: f64,
    x: &[f64],
) -> Result<Probability> {
    let k = corr.dim();
    if x.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: x.len(),
        });
    }
    if !(t > 0.0) {
        return Err(Error::NonPositiveArgument(t));
    }
    let model = plug_in_model(fit, corr, known)?;
    let law = excess_limit(corr, &vec![1.0; k])?;
    let scale = v_n(&law.qp, &model.params, t);
    let scaled: Vec<f64> = x.iter().zip(&scale).map(|(xi, vi)| xi * vi).collect();
    excess_survivor(&law, &IndexSet::full(k), &scaled)
}
