//! Kotz Type III parameters, the canonical radial law, and samplers for
//! `X = Aᵀ R U`.
//!
//! The radial tail is `P(R > u) ~ p u^N exp(−q u^δ)`. Only the tail is fixed by
//! the model, so simulation uses one concrete law with that tail: density
//! proportional to `r^{N+δ−1} exp(−q r^δ)`, i.e. `R = S^{1/δ}` with `S` Gamma
//! distributed (shape `(N+δ)/δ`, rate `q`). Under this law `p` is determined by
//! `(q, δ, N)`; the asymptotic formulas elsewhere accept any `p`.
//!
//! `A` is taken as `Lᵀ` with `L` the lower Cholesky factor of `Σ`, so samples are
//! `X = L (R U)`. Any `A` with `AᵀA = Σ` gives the same distribution.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::linalg::CorrelationSpec;
use crate::rng::{map_chunks, stream_rng, CHUNK_ROWS};

const P_CONSISTENCY_TOL: f64 = 1e-9;

/// Radial tail parameters `(p, q, δ, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KotzParams {
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    /// Polynomial exponent `N`.
    #[serde(rename = "N")]
    pub exponent: f64,
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

/// `Γ(k/2)` by the half-integer recursion, exact up to rounding of the products.
fn gamma_half_integer(k: usize) -> f64 {
    let (mut x, mut g) = if k.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, std::f64::consts::PI.sqrt())
    };
    let target = k as f64 / 2.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

impl KotzParams {
    pub fn new(p: f64, q: f64, delta: f64, exponent: f64) -> Result<Self> {
        positive("p", p)?;
        positive("q", q)?;
        positive("delta", delta)?;
        if !exponent.is_finite() {
            return Err(Error::InvalidParameter {
                name: "N",
                value: exponent,
                reason: "must be finite",
            });
        }
        Ok(Self {
            p,
            q,
            delta,
            exponent,
        })
    }

    /// Parameters under which `X` is standard Gaussian: `R²` is chi-squared with `k` degrees of freedom.
    pub fn gaussian(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::DimensionTooSmall(k));
        }
        let p = 1.0 / (2f64.powf(k as f64 / 2.0 - 1.0) * gamma_half_integer(k));
        Ok(Self {
            p,
            q: 0.5,
            delta: 2.0,
            exponent: k as f64 - 2.0,
        })
    }

    /// Canonical-family parameters with `p` induced by `(q, δ, N)`.
    pub fn canonical(q: f64, delta: f64, exponent: f64) -> Result<Self> {
        let p = induced_p(q, delta, exponent)?;
        Self::new(p, q, delta, exponent)
    }

    /// Gumbel scaling function `w(u) = qδ u^{δ−1}`.
    pub fn scaling_w(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::NonPositiveArgument(u));
        }
        Ok(self.q * self.delta * u.powf(self.delta - 1.0))
    }

    /// `p u^N exp(−q u^δ)`.
    pub fn radial_tail(&self, u: f64) -> f64 {
        (self.p.ln() + self.exponent * u.ln() - self.q * u.powf(self.delta)).exp()
    }
}

/// Tail constant realized by the canonical radial law: `q^{N/δ} / Γ((N+δ)/δ)`.
pub fn induced_p(q: f64, delta: f64, exponent: f64) -> Result<f64> {
    positive("q", q)?;
    positive("delta", delta)?;
    let s = exponent + delta;
    if !(s > 0.0) {
        return Err(Error::InvalidShape(s));
    }
    let shape = s / delta;
    Ok((exponent / delta * q.ln() - ln_gamma(shape)).exp())
}

/// The radial law with density `∝ r^{N+δ−1} exp(−q r^δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalRadial {
    pub params: KotzParams,
    /// Gamma shape `(N+δ)/δ` of `S = R^δ`.
    pub shape: f64,
    /// Gamma rate `q` of `S`.
    pub rate: f64,
}

impl CanonicalRadial {
    /// Fails unless `p` equals the induced constant to within `1e-9` relative.
    pub fn new(params: &KotzParams) -> Result<Self> {
        let s = params.exponent + params.delta;
        if !(s > 0.0) {
            return Err(Error::InvalidShape(s));
        }
        let induced = induced_p(params.q, params.delta, params.exponent)?;
        if !((params.p - induced).abs() <= P_CONSISTENCY_TOL * induced) {
            return Err(Error::InconsistentP {
                supplied: params.p,
                induced,
            });
        }
        Ok(Self {
            params: *params,
            shape: s / params.delta,
            rate: params.q,
        })
    }

    /// Exact `P(R > u)`.
    pub fn survival(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        gamma_ur(self.shape, self.rate * u.powf(self.params.delta))
    }

    /// `u` with `P(R > u) = level`, by bisection on the exact survival.
    pub fn upper_quantile(&self, level: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while self.survival(hi) > level {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn gamma(&self) -> Gamma<f64> {
        Gamma::new(self.shape, 1.0 / self.rate).expect("shape and rate validated positive")
    }

    /// `n` i.i.d. radii, deterministic in `seed`.
    pub fn sample_radius(&self, n: usize, seed: u64) -> Vec<f64> {
        let gamma = self.gamma();
        let inv_delta = 1.0 / self.params.delta;
        map_chunks(n, CHUNK_ROWS, |c, _, len| {
            let mut rng = stream_rng(seed, c as u64);
            (0..len)
                .map(|_| gamma.sample(&mut rng).powf(inv_delta))
                .collect::<Vec<f64>>()
        })
        .concat()
    }
}

/// Row-major table of `k`-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    k: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || !data.len().is_multiple_of(k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: data.len() % k.max(1),
            });
        }
        Ok(Self { k, data })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

fn draw_direction<R: Rng>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = z;
            norm2 += z * z;
        }
        if norm2 > 0.0 {
            let inv = norm2.sqrt().recip();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

/// `n` i.i.d. uniform directions on the unit sphere of `R^k`.
pub fn sample_sphere(k: usize, n: usize, seed: u64) -> Result<Samples> {
    if k < 2 {
        return Err(Error::DimensionTooSmall(k));
    }
    let data = map_chunks(n, CHUNK_ROWS, |c, _, len| {
        let mut rng = stream_rng(seed, c as u64);
        let mut out = vec![0.0; len * k];
        out.chunks_exact_mut(k)
            .for_each(|row| draw_direction(&mut rng, row));
        out
    })
    .concat();
    Samples::new(k, data)
}

/// A Kotz Type III model: radial parameters and correlation matrix.
#[derive(Debug, Clone)]
pub struct KotzModel {
    pub params: KotzParams,
    pub spec: CorrelationSpec,
}

/// Per-draw state for sampling a [`KotzModel`] with the canonical radial law.
#[derive(Debug, Clone)]
pub struct KotzSampler {
    gamma: Gamma<f64>,
    inv_delta: f64,
    chol: DMatrix<f64>,
    k: usize,
}

impl KotzSampler {
    pub fn dim(&self) -> usize {
        self.k
    }

    /// Writes one draw of `X` into `out` using `dir` as scratch; returns `R`.
    pub fn draw<R: Rng>(&self, rng: &mut R, dir: &mut [f64], out: &mut [f64]) -> f64 {
        let r = self.gamma.sample(rng).powf(self.inv_delta);
        draw_direction(rng, dir);
        for (i, slot) in out.iter_mut().enumerate().take(self.k) {
            let s: f64 = dir[..=i]
                .iter()
                .enumerate()
                .map(|(j, d)| self.chol[(i, j)] * d)
                .sum();
            *slot = r * s;
        }
        r
    }
}

impl KotzModel {
    pub fn new(params: KotzParams, spec: CorrelationSpec) -> Self {
        Self { params, spec }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn radial(&self) -> Result<CanonicalRadial> {
        CanonicalRadial::new(&self.params)
    }

    pub fn sampler(&self) -> Result<KotzSampler> {
        let radial = self.radial()?;
        Ok(KotzSampler {
            gamma: radial.gamma(),
            inv_delta: 1.0 / self.params.delta,
            chol: self.spec.chol().clone(),
            k: self.dim(),
        })
    }

    /// `n` draws of `X` together with their radii.
    pub fn sample_with_radii(&self, n: usize, seed: u64) -> Result<(Samples, Vec<f64>)> {
        let sampler = self.sampler()?;
        let k = self.dim();
        let parts = map_chunks(n, CHUNK_ROWS, |c, _, len| {
            let mut rng = stream_rng(seed, c as u64);
            let mut dir = vec![0.0; k];
            let mut xs = vec![0.0; len * k];
            let mut rs = Vec::with_capacity(len);
            for row in xs.chunks_exact_mut(k) {
                rs.push(sampler.draw(&mut rng, &mut dir, row));
            }
            (xs, rs)
        });
        let mut data = Vec::with_capacity(n * k);
        let mut radii = Vec::with_capacity(n);
        for (xs, rs) in parts {
            data.extend(xs);
            radii.extend(rs);
        }
        Ok((Samples::new(k, data)?, radii))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Samples> {
        Ok(self.sample_with_radii(n, seed)?.0)
    }
}
