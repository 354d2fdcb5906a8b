//! Monte Carlo and oracle checks of the asymptotic results, packaged as named
//! scenarios that produce deterministic JSON reports.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimation::{fit_tail, SampleMatrix};
use crate::gaussian::{orthant_survivor, std_normal_sf, SurvivorOptions};
use crate::kotz::{induced_p, KotzModel, KotzParams};
use crate::limits::{excess_limit, hr_cdf, hr_corr_for_gamma, hr_norming, independence_cdf};
use crate::linalg::CorrelationSpec;
use crate::qp;
use crate::rng::{map_chunks, stream_rng, CHUNK_ROWS};
use crate::tail::{marginal_tail_params, tail_asymptotic, v_n, TailRequest};

/// One named inequality checked by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `"<="` or `">="` (or `"=="` for exact flags encoded as 0/1).
    pub relation: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            relation: "<=",
            pass: value <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            relation: ">=",
            pass: value >= bound,
        }
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: f64::from(u8::from(ok)),
            bound: 1.0,
            relation: "==",
            pass: ok,
        }
    }
}

/// Result of one validation scenario.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub n: u64,
    pub seed: u64,
    pub empirical: Option<f64>,
    pub std_error: Option<f64>,
    pub theoretical: Option<f64>,
    pub ratio: Option<f64>,
    pub checks: Vec<Check>,
    pub details: BTreeMap<String, Value>,
    pub pass: bool,
}

impl ValidationReport {
    fn new(scenario: &str, n: u64, seed: u64) -> Self {
        Self {
            scenario: scenario.to_string(),
            n,
            seed,
            empirical: None,
            std_error: None,
            theoretical: None,
            ratio: None,
            checks: Vec::new(),
            details: BTreeMap::new(),
            pass: false,
        }
    }

    fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details.insert(
            key.to_string(),
            serde_json::to_value(value).expect("plain data serializes"),
        );
    }

    fn finish(mut self) -> Self {
        self.pass = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Exceedance count of `X > t a` over `n` draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalTail {
    pub n: u64,
    pub count: u64,
    pub probability: f64,
    /// Agresti-Coull standard error, positive even at counts 0 and `n`.
    pub std_error: f64,
}

fn agresti_coull_se(count: u64, n: u64) -> f64 {
    let z2 = 1.96f64 * 1.96;
    let nt = n as f64 + z2;
    let pt = (count as f64 + z2 / 2.0) / nt;
    (pt * (1.0 - pt) / nt).sqrt()
}

fn thresholds(a: &[f64], t: f64) -> Vec<f64> {
    a.iter().map(|v| v * t).collect()
}

/// Fraction of `n` model draws with `X > t a` componentwise. Draws are those of
/// `KotzModel::sample(n, seed)`.
pub fn empirical_tail(
    model: &KotzModel,
    a: &[f64],
    t: f64,
    n: usize,
    seed: u64,
) -> Result<EmpiricalTail> {
    if n < 10_000 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            reason: "must be at least 10^4",
        });
    }
    let k = model.dim();
    if a.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: a.len(),
        });
    }
    let sampler = model.sampler()?;
    let u = thresholds(a, t);
    let counts = map_chunks(n, CHUNK_ROWS, |c, _, len| {
        let mut rng = stream_rng(seed, c as u64);
        let (mut dir, mut x) = (vec![0.0; k], vec![0.0; k]);
        let mut count = 0u64;
        for _ in 0..len {
            sampler.draw(&mut rng, &mut dir, &mut x);
            if x.iter().zip(&u).all(|(xi, ui)| xi > ui) {
                count += 1;
            }
        }
        count
    });
    let count: u64 = counts.iter().sum();
    let n = n as u64;
    Ok(EmpiricalTail {
        n,
        count,
        probability: count as f64 / n as f64,
        std_error: agresti_coull_se(count, n),
    })
}

/// Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|j| {
                let m = (2 * j - 1) as f64;
                (-m * m * pi2 / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample Kolmogorov-Smirnov test of `sample` against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::InsufficientData(format!(
            "KS test needs at least 20 points, got {n}"
        )));
    }
    let mut xs = sample.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, nf),
        n,
    })
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 20 || b.len() < 20 {
        return Err(Error::InsufficientData(
            "KS test needs at least 20 points per sample".into(),
        ));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n * m / (n + m)),
        n: xs.len() + ys.len(),
    })
}

/// `t` at which the tail expansion of `P(X > t a)` equals `level`.
pub fn threshold_for_level(model: &KotzModel, a: &[f64], level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::OutOfRange(level));
    }
    let e = tail_asymptotic(&TailRequest {
        model,
        a,
        x: None,
        t: 1.0,
    })?;
    let target = level.ln();
    let f = |t: f64| e.log_value_at(t) - target;
    let mut lo = if e.poly_exponent > 0.0 {
        (e.poly_exponent / (e.exp_coefficient * e.exp_power)).powf(1.0 / e.exp_power)
    } else {
        1e-9
    };
    if f(lo) <= 0.0 {
        return Err(Error::OutOfRange(level));
    }
    let mut hi = lo.max(1.0);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical `P(X > t a)` against the tail expansion; passes when the ratio is
/// within `1 ± rel_tol`.
pub fn tail_experiment(
    name: &str,
    model: &KotzModel,
    a: &[f64],
    t: f64,
    n: usize,
    seed: u64,
    rel_tol: f64,
) -> Result<ValidationReport> {
    let emp = empirical_tail(model, a, t, n, seed)?;
    let theory = tail_asymptotic(&TailRequest {
        model,
        a,
        x: None,
        t,
    })?;
    let mut report = ValidationReport::new(name, n as u64, seed);
    let ratio = emp.probability / theory.value;
    report.empirical = Some(emp.probability);
    report.std_error = Some(emp.std_error);
    report.theoretical = Some(theory.value);
    report.ratio = Some(ratio);
    report.detail("t", t);
    report.detail("a", a);
    report.detail("count", emp.count);
    report.detail("params", model.params);
    report
        .checks
        .push(Check::at_most("|ratio - 1|", (ratio - 1.0).abs(), rel_tol));
    Ok(report.finish())
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Scaled excesses `v_n (X − t a)` given `X > t a`: KS against Exponential(λ_i)
/// on each coordinate of `I` at level `alpha`, and pairwise correlations on `I`
/// within `3/√count`.
pub fn excess_experiment(
    name: &str,
    model: &KotzModel,
    a: &[f64],
    t: f64,
    n: usize,
    seed: u64,
    alpha: f64,
) -> Result<ValidationReport> {
    let k = model.dim();
    if a.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: a.len(),
        });
    }
    let theory = tail_asymptotic(&TailRequest {
        model,
        a,
        x: None,
        t,
    })?;
    let expected = theory.value * n as f64;
    if expected < 500.0 {
        return Err(Error::TooFewExceedances {
            expected,
            required: 500,
        });
    }
    let law = excess_limit(&model.spec, a)?;
    let scale = v_n(&law.qp, &model.params, t);
    let u = thresholds(a, t);
    let sampler = model.sampler()?;
    let parts = map_chunks(n, CHUNK_ROWS, |c, _, len| {
        let mut rng = stream_rng(seed, c as u64);
        let (mut dir, mut x) = (vec![0.0; k], vec![0.0; k]);
        let mut out = Vec::new();
        for _ in 0..len {
            sampler.draw(&mut rng, &mut dir, &mut x);
            if x.iter().zip(&u).all(|(xi, ui)| xi > ui) {
                out.extend(
                    x.iter()
                        .zip(&u)
                        .zip(&scale)
                        .map(|((xi, ui), s)| s * (xi - ui)),
                );
            }
        }
        out
    });
    let excess: Vec<f64> = parts.concat();
    let count = excess.len() / k;
    let mut report = ValidationReport::new(name, n as u64, seed);
    report.detail("t", t);
    report.detail("a", a);
    report.detail("count", count);
    report.detail("expected_count", expected);
    report.detail("rates", &law.rates);
    report.detail("v_n", &scale);
    report.empirical = Some(count as f64 / n as f64);
    report.theoretical = Some(theory.value);
    report.ratio = Some(count as f64 / expected);
    if count < 20 {
        report
            .checks
            .push(Check::at_least("exceedances", count as f64, 20.0));
        return Ok(report.finish());
    }
    let column = |i: usize| -> Vec<f64> { excess.chunks_exact(k).map(|r| r[i - 1]).collect() };
    let active = law.active().members().to_vec();
    let mut ks_report = BTreeMap::new();
    for (pos, &i) in active.iter().enumerate() {
        let rate = law.rates[pos];
        let col = column(i);
        let ks = ks_statistic(&col, |x| {
            if x <= 0.0 {
                0.0
            } else {
                1.0 - (-rate * x).exp()
            }
        })?;
        let mean = col.iter().sum::<f64>() / count as f64;
        ks_report.insert(format!("X{i}"), json!({ "D": ks.statistic, "p_value": ks.p_value, "mean": mean, "limit_mean": 1.0 / rate }));
        report.checks.push(Check::at_least(
            format!("KS p-value, coordinate {i}"),
            ks.p_value,
            alpha,
        ));
    }
    report.detail("ks", ks_report);
    let bound = 3.0 / (count as f64).sqrt();
    for (x, &i) in active.iter().enumerate() {
        for &j in &active[x + 1..] {
            let r = pearson(&column(i), &column(j));
            report.checks.push(Check::at_most(
                format!("|corr(W{i}, W{j})|"),
                r.abs(),
                bound,
            ));
        }
    }
    Ok(report.finish())
}

/// Dependence of the bivariate rows in [`hr_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum HrDesign {
    /// Correlation `1 − γ² 2a_n/b_n`; compared with the Hüsler-Reiss limit `G_γ`.
    Triangular { gamma: f64 },
    /// Constant correlation; compared with the independence limit.
    FixedCorrelation { sigma: f64 },
}

pub const HR_GRID: [f64; 5] = [-1.0, 0.0, 1.0, 2.0, 3.0];

/// Normalized componentwise maxima of `m_blocks` blocks of `n_block` bivariate
/// draws, compared with the limit on the fixed grid [`HR_GRID`]².
///
/// Maxima are normalized with the constants of the marginal tail, so that
/// `b_n` approximates the `1 − 1/n` quantile of one coordinate.
pub fn hr_experiment(
    name: &str,
    design: HrDesign,
    n_block: usize,
    m_blocks: usize,
    params: &KotzParams,
    seed: u64,
    tol: f64,
) -> Result<ValidationReport> {
    let margin = marginal_tail_params(params, 2)?;
    let norming = hr_norming(&margin, n_block as f64)?;
    let sigma = match design {
        HrDesign::Triangular { gamma } => hr_corr_for_gamma(gamma, &margin, n_block as f64)?,
        HrDesign::FixedCorrelation { sigma } => sigma,
    };
    let model = KotzModel::new(*params, CorrelationSpec::equicorrelated(2, sigma)?);
    let sampler = model.sampler()?;
    let maxima = map_chunks(m_blocks, 1, |b, _, _| {
        let mut rng = stream_rng(seed, b as u64);
        let (mut dir, mut x) = ([0.0; 2], [0.0; 2]);
        let (mut m1, mut m2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for _ in 0..n_block {
            sampler.draw(&mut rng, &mut dir, &mut x);
            m1 = m1.max(x[0]);
            m2 = m2.max(x[1]);
        }
        (
            (m1 - norming.b_n) / norming.a_n,
            (m2 - norming.b_n) / norming.a_n,
        )
    });
    let mut grid = Vec::new();
    let mut worst: f64 = 0.0;
    for &x in &HR_GRID {
        for &y in &HR_GRID {
            let emp =
                maxima.iter().filter(|(u, v)| *u <= x && *v <= y).count() as f64 / m_blocks as f64;
            let limit = match design {
                HrDesign::Triangular { gamma } => hr_cdf(x, y, gamma)?,
                HrDesign::FixedCorrelation { .. } => independence_cdf(x, y),
            };
            worst = worst.max((emp - limit).abs());
            grid.push(json!({ "x": x, "y": y, "empirical": emp, "limit": limit }));
        }
    }
    let mut report = ValidationReport::new(name, (n_block * m_blocks) as u64, seed);
    report.detail("design", design);
    report.detail("n_block", n_block);
    report.detail("m_blocks", m_blocks);
    report.detail("sigma", sigma);
    report.detail("a_n", norming.a_n);
    report.detail("b_n", norming.b_n);
    report.detail("params", params);
    report.detail("grid", grid);
    report.empirical = Some(worst);
    report
        .checks
        .push(Check::at_most("max grid deviation", worst, tol));
    Ok(report.finish())
}

/// Description of a registered scenario.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub default_seed: u64,
    pub description: &'static str,
}

pub const SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "qp-oracle",
        default_seed: 101,
        description: "active-set solver against enumeration on 500 random instances",
    },
    ScenarioInfo {
        name: "gaussian-closed-form",
        default_seed: 102,
        description: "independent Gaussian pair against exp(-t^2)/(2 pi t^2), t = 2..6",
    },
    ScenarioInfo {
        name: "gaussian-convergence",
        default_seed: 103,
        description: "tail expansion over exact bivariate Gaussian survivor at t = 4 and 6",
    },
    ScenarioInfo {
        name: "sampler",
        default_seed: 104,
        description: "radial identity, chi-squared radius, induced tail constant",
    },
    ScenarioInfo {
        name: "mc-tail",
        default_seed: 105,
        description: "empirical joint tail at the 3e-4 level against the expansion",
    },
    ScenarioInfo {
        name: "excess",
        default_seed: 106,
        description: "scaled excesses against independent Exponential limits",
    },
    ScenarioInfo {
        name: "hr-triangular",
        default_seed: 107,
        description: "block maxima with correlation tending to 1 against Husler-Reiss",
    },
    ScenarioInfo {
        name: "hr-fixed",
        default_seed: 108,
        description: "block maxima with fixed correlation against independence",
    },
    ScenarioInfo {
        name: "estimator",
        default_seed: 109,
        description: "tail exponent and rate estimates on Gaussian margins",
    },
    ScenarioInfo {
        name: "orthant",
        default_seed: 110,
        description: "Gaussian orthant probabilities against closed forms",
    },
];

pub fn scenario_names() -> Vec<&'static str> {
    SCENARIOS.iter().map(|s| s.name).collect()
}

/// Runs a registered scenario; `seed` defaults to the scenario's own.
pub fn run_scenario(name: &str, seed: Option<u64>) -> Result<ValidationReport> {
    let info = SCENARIOS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
    let seed = seed.unwrap_or(info.default_seed);
    match name {
        "qp-oracle" => qp_oracle(seed),
        "gaussian-closed-form" => gaussian_closed_form(seed),
        "gaussian-convergence" => gaussian_convergence(seed),
        "sampler" => sampler_checks(seed),
        "mc-tail" => {
            let model = exponential_pair();
            let t = threshold_for_level(&model, &[1.0, 1.0], 3e-4)?;
            tail_experiment(name, &model, &[1.0, 1.0], t, 10_000_000, seed, 0.25)
        }
        "excess" => {
            let model = exponential_pair();
            let t = threshold_for_level(&model, &[1.0, 1.0], 3e-4)?;
            excess_experiment(name, &model, &[1.0, 1.0], t, 20_000_000, seed, 0.01)
        }
        "hr-triangular" => hr_experiment(
            name,
            HrDesign::Triangular { gamma: 1.0 },
            10_000,
            10_000,
            &KotzParams::gaussian(2)?,
            seed,
            0.03,
        ),
        "hr-fixed" => hr_experiment(
            name,
            HrDesign::FixedCorrelation { sigma: 0.5 },
            10_000,
            10_000,
            &KotzParams::gaussian(2)?,
            seed,
            0.02,
        ),
        "estimator" => estimator_consistency(seed),
        "orthant" => orthant_checks(seed),
        _ => Err(Error::UnknownScenario(name.to_string())),
    }
}

/// `(q, δ, N) = (1, 1, 0)`, `k = 2`, `ρ = 0.5`.
pub fn exponential_pair() -> KotzModel {
    let params = KotzParams::canonical(1.0, 1.0, 0.0).expect("valid constants");
    KotzModel::new(
        params,
        CorrelationSpec::equicorrelated(2, 0.5).expect("valid correlation"),
    )
}

/// A random correlation matrix: normalized `G Gᵀ + 0.05 I` with `G` of size `k × (k+1)`.
pub fn random_correlation<R: Rng>(rng: &mut R, k: usize) -> Result<CorrelationSpec> {
    let g = DMatrix::<f64>::from_fn(k, k + 1, |_, _| rng.gen_range(-1.0..1.0));
    let cov = &g * g.transpose() + DMatrix::identity(k, k) * 0.05;
    let d: Vec<f64> = (0..k).map(|i| cov[(i, i)].sqrt().recip()).collect();
    let mut sigma = DMatrix::from_fn(k, k, |i, j| cov[(i, j)] * d[i] * d[j]);
    for i in 0..k {
        sigma[(i, i)] = 1.0;
        for j in 0..i {
            sigma[(i, j)] = sigma[(j, i)];
        }
    }
    CorrelationSpec::factorize(sigma)
}

fn qp_oracle(seed: u64) -> Result<ValidationReport> {
    let mut rng = stream_rng(seed, 0);
    let instances = 500;
    let (mut same_sets, mut worst) = (0usize, 0.0f64);
    for _ in 0..instances {
        let k = rng.gen_range(2..=7);
        let spec = random_correlation(&mut rng, k)?;
        let mut a: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if !a.iter().any(|&v| v > 0.0) {
            let i = rng.gen_range(0..k);
            a[i] = -a[i];
        }
        let fast = qp::solve(&spec, &a)?;
        let slow = qp::brute_force_solve(&spec, &a)?;
        if fast.active == slow.active {
            same_sets += 1;
        }
        worst = worst.max((fast.value - slow.value).abs() / slow.value);
    }
    let mut report = ValidationReport::new("qp-oracle", instances, seed);
    report.detail("identical_index_sets", same_sets);
    report.empirical = Some(worst);
    report.checks.push(Check::holds(
        "identical index sets on all instances",
        same_sets == instances as usize,
    ));
    report.checks.push(Check::at_most(
        "max relative value difference",
        worst,
        1e-10,
    ));
    Ok(report.finish())
}

fn gaussian_closed_form(seed: u64) -> Result<ValidationReport> {
    let model = KotzModel::new(KotzParams::gaussian(2)?, CorrelationSpec::identity(2)?);
    let mut report = ValidationReport::new("gaussian-closed-form", 5, seed);
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for t in 2..=6 {
        let t = t as f64;
        let e = tail_asymptotic(&TailRequest {
            model: &model,
            a: &[1.0, 1.0],
            x: None,
            t,
        })?;
        let closed = (-t * t).exp() / (2.0 * std::f64::consts::PI * t * t);
        let rel = (e.value / closed - 1.0).abs();
        worst = worst.max(rel);
        rows.push(json!({ "t": t, "expansion": e.value, "closed_form": closed }));
    }
    report.detail("values", rows);
    report.empirical = Some(worst);
    report
        .checks
        .push(Check::at_most("max relative difference", worst, 1e-12));
    Ok(report.finish())
}

/// High-accuracy orthant options used for exact Gaussian references.
fn reference_options(seed: u64) -> SurvivorOptions {
    SurvivorOptions {
        seed,
        ..SurvivorOptions::default()
    }
}

fn gaussian_convergence(seed: u64) -> Result<ValidationReport> {
    let params = KotzParams::gaussian(2)?;
    let mut report = ValidationReport::new("gaussian-convergence", 2, seed);
    let mut rows = Vec::new();
    for &rho in &[0.0, 0.5] {
        let spec = CorrelationSpec::equicorrelated(2, rho)?;
        let model = KotzModel::new(params, spec.clone());
        let mut ratios = Vec::new();
        for &t in &[4.0, 6.0] {
            let e = tail_asymptotic(&TailRequest {
                model: &model,
                a: &[1.0, 1.0],
                x: None,
                t,
            })?;
            let exact = orthant_survivor(spec.sigma(), &[t, t], &reference_options(seed))?;
            report.checks.push(Check::at_most(
                format!("relative integration error, rho = {rho}, t = {t}"),
                exact.error / exact.value,
                1e-10,
            ));
            rows.push(json!({ "rho": rho, "t": t, "expansion": e.value, "exact": exact.value, "exact_error": exact.error }));
            ratios.push(e.value / exact.value);
        }
        report.checks.push(Check::at_most(
            format!("|ratio - 1| at t = 6, rho = {rho}"),
            (ratios[1] - 1.0).abs(),
            0.2,
        ));
        report.checks.push(Check::holds(
            format!("closer to 1 at t = 6 than at t = 4, rho = {rho}"),
            (ratios[1] - 1.0).abs() < (ratios[0] - 1.0).abs(),
        ));
    }
    report.detail("values", rows);
    Ok(report.finish())
}

fn sampler_checks(seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport::new("sampler", 1_000_000, seed);
    let spec = CorrelationSpec::equicorrelated(3, 0.3)?;
    let model = KotzModel::new(KotzParams::canonical(0.8, 1.5, 0.5)?, spec.clone());
    let (xs, rs) = model.sample_with_radii(100_000, seed)?;
    let mut worst: f64 = 0.0;
    for (x, r) in xs.rows().zip(&rs) {
        worst = worst.max((spec.quad_form_inv(x)? - r * r).abs() / (r * r));
    }
    report
        .checks
        .push(Check::at_most("max relative |X'S^-1 X - R^2|", worst, 1e-9));

    let k = 3;
    let gauss = KotzModel::new(KotzParams::gaussian(k)?, spec);
    let radii = gauss.radial()?.sample_radius(1_000_000, seed ^ 0x5a5a);
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let chi2 = ChiSquared::new(k as f64).map_err(|_| Error::InvalidParameter {
        name: "k",
        value: k as f64,
        reason: "invalid degrees of freedom",
    })?;
    let ks = ks_statistic(&r2, |x| chi2.cdf(x))?;
    report.detail("chi_squared_ks", ks);
    report.checks.push(Check::at_most(
        "KS D of R^2 against chi-squared(3)",
        ks.statistic,
        0.002,
    ));

    let mut worst_p: f64 = 0.0;
    for k in 2..=10 {
        let want = KotzParams::gaussian(k)?.p;
        worst_p = worst_p.max((induced_p(0.5, 2.0, k as f64 - 2.0)? / want - 1.0).abs());
    }
    report.checks.push(Check::at_most(
        "max relative error of induced p, k = 2..10",
        worst_p,
        1e-12,
    ));
    Ok(report.finish())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn estimator_consistency(seed: u64) -> Result<ValidationReport> {
    let model = KotzModel::new(KotzParams::gaussian(2)?, CorrelationSpec::identity(2)?);
    let reps = 20u64;
    let sizes = [10_000usize, 100_000, 1_000_000];
    let mut report =
        ValidationReport::new("estimator", sizes.iter().sum::<usize>() as u64 * reps, seed);
    let (mut delta_err, mut q_err) = (Vec::new(), Vec::new());
    let mut rows = Vec::new();
    for (s, &n) in sizes.iter().enumerate() {
        let mut de = Vec::new();
        let mut qe = Vec::new();
        for r in 0..reps {
            let rep_seed: u64 = stream_rng(seed, (s as u64) << 32 | r).gen();
            let sample = SampleMatrix::from_samples(model.sample(n, rep_seed)?)?;
            let fit = fit_tail(&sample, 1, None, None)?;
            de.push((fit.delta_hat - 2.0).abs());
            qe.push((fit.q_hat - 0.5).abs() / 0.5);
        }
        let (md, mq) = (median(de), median(qe));
        rows.push(json!({ "n": n, "median_abs_delta_error": md, "median_rel_q_error": mq }));
        delta_err.push(md);
        q_err.push(mq);
    }
    report.detail("medians", rows);
    report.checks.push(Check::at_most(
        "median |delta - 2| at n = 10^6",
        delta_err[2],
        0.4,
    ));
    report.checks.push(Check::at_most(
        "median |q - 0.5|/0.5 at n = 10^6",
        q_err[2],
        0.3,
    ));
    report.checks.push(Check::holds(
        "delta error medians non-increasing",
        delta_err.windows(2).all(|w| w[1] <= w[0]),
    ));
    report.checks.push(Check::holds(
        "q error medians non-increasing",
        q_err.windows(2).all(|w| w[1] <= w[0]),
    ));
    Ok(report.finish())
}

fn orthant_checks(seed: u64) -> Result<ValidationReport> {
    let mut report = ValidationReport::new("orthant", 0, seed);
    let opts = reference_options(seed);
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let p = orthant_survivor(&cov, &[0.0, 0.0], &opts)?;
    report.checks.push(Check::at_most(
        "|P(2-D orthant, rho = 0.5) - 1/3|",
        (p.value - 1.0 / 3.0).abs(),
        1e-6,
    ));
    let var = [0.5, 1.0, 2.0];
    let lower = [0.3, -0.2, 1.1];
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&var));
    let d = orthant_survivor(&diag, &lower, &opts)?;
    let prod: f64 = var
        .iter()
        .zip(&lower)
        .map(|(v, l)| std_normal_sf(l / v.sqrt()))
        .product();
    report.checks.push(Check::at_most(
        "|diagonal survivor - product of tails|",
        (d.value - prod).abs(),
        1e-9,
    ));
    let rho = 0.4;
    let eq = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { rho });
    let p3 = orthant_survivor(&eq, &[0.0; 3], &opts)?;
    let want3 = 0.125 + 3.0 * rho.asin() / (4.0 * std::f64::consts::PI);
    report.checks.push(Check::at_most(
        "|P(3-D orthant) - arcsine formula|",
        (p3.value - want3).abs(),
        1e-6,
    ));
    report.detail("orthant_2d", p);
    report.detail("diagonal_3d", d);
    report.detail("orthant_3d", p3);
    Ok(report.finish())
}
