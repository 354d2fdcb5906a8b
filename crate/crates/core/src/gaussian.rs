//! Gaussian machinery: `Φ`, the conditional law of `Z_J` given `Z_I = 0`, and
//! upper-orthant probabilities `P(W > lower)` for centered Gaussian `W`.
//!
//! Orthant probabilities use the separation-of-variables transform written in
//! survivor form, so relative accuracy survives deep in the tail. Coordinates
//! with a `−∞` threshold are removed before integration. Up to two remaining
//! coordinates are handled deterministically (closed form, or tanh-sinh
//! quadrature of the one-dimensional transformed integrand); more coordinates
//! go to randomized rank-1 lattice rules with a per-randomization seeded shift.

use libm::erfc;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, CorrelationSpec, IndexSet};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// `Φ(x)`.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * erfc(-x / SQRT_2)
}

/// `1 − Φ(x)`, accurate in the upper tail.
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`std_normal_sf`] on `(0, 1)`.
pub fn std_normal_isf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    // the rational approximation is good to ~1e-10; polish with Newton steps on ln sf
    let mut x = SQRT_2 * erfc_inv(2.0 * p);
    let target = p.ln();
    for _ in 0..3 {
        let sf = std_normal_sf(x);
        if !(sf > 0.0) || !x.is_finite() {
            break;
        }
        let step = (sf.ln() - target) * sf / std_normal_pdf(x);
        x += step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// A probability together with an estimate of its absolute integration error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probability {
    pub value: f64,
    pub error: f64,
}

impl Probability {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }
}

/// Law of `Z_J` given `Z_I = 0` for a centered Gaussian `Z` with covariance `Σ`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalGaussian {
    #[serde(rename = "J")]
    pub index: IndexSet,
    pub mean: Vec<f64>,
    #[serde(serialize_with = "crate::io::serialize_matrix")]
    pub cov: DMatrix<f64>,
}

impl ConditionalGaussian {
    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }
}

/// Conditional law of `Z_J | Z_I = 0`, `J` the complement of `I`.
pub fn conditional_law(spec: &CorrelationSpec, index: &IndexSet) -> Result<ConditionalGaussian> {
    let cov = spec.schur_complement(index)?;
    let comp = index.complement();
    Ok(ConditionalGaussian {
        mean: vec![0.0; comp.len()],
        index: comp,
        cov,
    })
}

/// Controls for the randomized lattice rule used when three or more
/// coordinates remain after dropping `−∞` thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivorOptions {
    pub randomizations: usize,
    pub min_points: usize,
    pub max_points: usize,
    /// Target for the reported (three standard errors) absolute error.
    pub abs_tol: f64,
    pub seed: u64,
}

impl Default for SurvivorOptions {
    fn default() -> Self {
        Self {
            randomizations: 8,
            min_points: 1 << 13,
            max_points: 1 << 18,
            abs_tol: 1e-7,
            seed: 0x6a09_e667,
        }
    }
}

/// `P(W > lower)` for `W` distributed as `law`.
pub fn survivor_prob(law: &ConditionalGaussian, lower: &[f64]) -> Result<Probability> {
    survivor_prob_with(law, lower, &SurvivorOptions::default())
}

pub fn survivor_prob_with(
    law: &ConditionalGaussian,
    lower: &[f64],
    opts: &SurvivorOptions,
) -> Result<Probability> {
    orthant_survivor(&law.cov, lower, opts)
}

/// `P(W > lower)` for a centered Gaussian `W` with covariance `cov`.
///
/// Entries of `lower` may be `−∞`; `+∞` and NaN are rejected.
pub fn orthant_survivor(
    cov: &DMatrix<f64>,
    lower: &[f64],
    opts: &SurvivorOptions,
) -> Result<Probability> {
    let d = cov.nrows();
    if cov.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: cov.ncols(),
        });
    }
    if lower.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: lower.len(),
        });
    }
    if lower.iter().any(|v| v.is_nan()) {
        return Err(Error::NotFinite(f64::NAN));
    }
    if lower.contains(&f64::INFINITY) {
        return Err(Error::InfiniteThreshold);
    }
    let keep: Vec<usize> = (0..d).filter(|&i| lower[i] != f64::NEG_INFINITY).collect();
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| cov[(keep[i], keep[j])]);
    let thresholds: Vec<f64> = keep.iter().map(|&i| lower[i]).collect();
    match keep.len() {
        0 => Ok(Probability::exact(1.0)),
        1 => Ok(Probability::exact(std_normal_sf(
            thresholds[0] / sub[(0, 0)].sqrt(),
        ))),
        _ => {
            let plan = SovPlan::new(&sub, &thresholds)?;
            if plan.is_diagonal() {
                return Ok(Probability::exact(plan.diagonal_product()));
            }
            if keep.len() == 2 {
                Ok(plan.integrate_1d())
            } else {
                Ok(plan.integrate_lattice(opts))
            }
        }
    }
}

/// Variable-reordered Cholesky factor and thresholds for the SOV integrand.
struct SovPlan {
    chol: DMatrix<f64>,
    lower: Vec<f64>,
}

impl SovPlan {
    /// Greedy reordering: at each step put first the coordinate with the smallest
    /// conditional survivor probability given the truncated means chosen so far.
    fn new(cov: &DMatrix<f64>, lower: &[f64]) -> Result<Self> {
        let d = cov.nrows();
        // validates positive definiteness with the shared pivot tolerance
        cholesky(cov)?;
        let mut c = cov.clone();
        let mut a = lower.to_vec();
        let mut l = DMatrix::<f64>::zeros(d, d);
        let mut means = vec![0.0; d];
        for i in 0..d {
            let mut best = i;
            let mut best_z = f64::NEG_INFINITY;
            for j in i..d {
                let var = c[(j, j)] - (0..i).map(|p| l[(j, p)] * l[(j, p)]).sum::<f64>();
                let shift: f64 = (0..i).map(|p| l[(j, p)] * means[p]).sum();
                let z = (a[j] - shift) / var.max(f64::MIN_POSITIVE).sqrt();
                if z > best_z {
                    best_z = z;
                    best = j;
                }
            }
            if best != i {
                c.swap_rows(i, best);
                c.swap_columns(i, best);
                a.swap(i, best);
                l.swap_rows(i, best);
            }
            let var = c[(i, i)] - (0..i).map(|p| l[(i, p)] * l[(i, p)]).sum::<f64>();
            let lii = var.sqrt();
            l[(i, i)] = lii;
            for r in (i + 1)..d {
                let s = c[(r, i)] - (0..i).map(|p| l[(r, p)] * l[(i, p)]).sum::<f64>();
                l[(r, i)] = s / lii;
            }
            let shift: f64 = (0..i).map(|p| l[(i, p)] * means[p]).sum();
            let z = (a[i] - shift) / lii;
            let tail = std_normal_sf(z);
            means[i] = if tail > 0.0 {
                std_normal_pdf(z) / tail
            } else {
                z
            };
        }
        Ok(Self { chol: l, lower: a })
    }

    fn is_diagonal(&self) -> bool {
        let d = self.chol.nrows();
        (0..d).all(|i| (0..i).all(|j| self.chol[(i, j)] == 0.0))
    }

    fn diagonal_product(&self) -> f64 {
        (0..self.lower.len())
            .map(|i| std_normal_sf(self.lower[i] / self.chol[(i, i)]))
            .product()
    }

    /// Integrand value at `w ∈ (0,1)^{d−1}`; `y` is scratch space of length `d`.
    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let d = self.lower.len();
        let mut prod = 1.0;
        for i in 0..d {
            let shift: f64 = (0..i).map(|p| self.chol[(i, p)] * y[p]).sum();
            let c = (self.lower[i] - shift) / self.chol[(i, i)];
            let e = std_normal_sf(c);
            prod *= e;
            if prod == 0.0 {
                return 0.0;
            }
            if i + 1 < d {
                y[i] = std_normal_isf(w[i] * e).max(c);
            }
        }
        prod
    }

    fn integrate_1d(&self) -> Probability {
        let (value, error) = tanh_sinh_unit(|w| {
            let mut y = [0.0; 2];
            self.integrand(&[w], &mut y)
        });
        Probability { value, error }
    }

    fn integrate_lattice(&self, opts: &SurvivorOptions) -> Probability {
        let d = self.lower.len();
        let dims = d - 1;
        let gens: Vec<f64> = PRIMES[..dims]
            .iter()
            .map(|&p| (p as f64).sqrt().fract())
            .collect();
        let reps = opts.randomizations.max(2);
        let mut points = opts.min_points.max(16);
        let mut y = vec![0.0; d];
        let mut w = vec![0.0; dims];
        loop {
            let mut estimates = Vec::with_capacity(reps);
            for r in 0..reps {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(r as u64);
                let shift: Vec<f64> = (0..dims).map(|_| rng.gen::<f64>()).collect();
                let mut sum = 0.0;
                for i in 1..=points {
                    for j in 0..dims {
                        let x = (i as f64 * gens[j] + shift[j]).fract();
                        w[j] = (2.0 * x - 1.0).abs();
                    }
                    sum += self.integrand(&w, &mut y);
                    for v in w.iter_mut() {
                        *v = 1.0 - *v;
                    }
                    sum += self.integrand(&w, &mut y);
                }
                estimates.push(sum / (2 * points) as f64);
            }
            let mean = estimates.iter().sum::<f64>() / reps as f64;
            let var = estimates
                .iter()
                .map(|e| (e - mean) * (e - mean))
                .sum::<f64>()
                / ((reps - 1) * reps) as f64;
            let error = 3.0 * var.sqrt();
            if error <= opts.abs_tol || points >= opts.max_points {
                return Probability { value: mean, error };
            }
            points *= 2;
        }
    }
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Tanh-sinh quadrature of `f` over `(0, 1)`; returns the estimate and the
/// difference between the last two refinement levels.
pub(crate) fn tanh_sinh_unit<F: Fn(f64) -> f64>(f: F) -> (f64, f64) {
    let half_pi = std::f64::consts::FRAC_PI_2;
    // node at t: x = 1/(1+exp(-2u)), 1-x = 1/(1+exp(2u)), u = (π/2) sinh t
    let node = |t: f64| {
        let u = half_pi * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * u).exp());
        let weight = half_pi * t.cosh() / (2.0 * u.cosh().powi(2));
        (x, weight)
    };
    let t_max = 3.2;
    let mut h = 0.5;
    let eval = |t: f64| {
        let (x, wt) = node(t);
        if x <= 0.0 || x >= 1.0 || wt == 0.0 {
            0.0
        } else {
            wt * f(x)
        }
    };
    let mut sum = eval(0.0);
    let mut t = h;
    while t <= t_max {
        sum += eval(t) + eval(-t);
        t += h;
    }
    let mut estimate = sum * h;
    let mut error = f64::INFINITY;
    for _ in 0..10 {
        h *= 0.5;
        let mut t = h;
        while t <= t_max {
            sum += eval(t) + eval(-t);
            t += 2.0 * h;
        }
        let next = sum * h;
        error = (next - estimate).abs();
        estimate = next;
        if error <= 1e-15 * estimate.abs() {
            break;
        }
    }
    (estimate, error)
}
