//! Limit laws above high thresholds: the scaled excess `v_n (X − t a)` given
//! `X > t a`, the conditional profile of `X_J` given a large `X_I`, and the
//! Hüsler-Reiss limit of maxima of bivariate triangular arrays.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{
    conditional_law, std_normal_cdf, survivor_prob, ConditionalGaussian, Probability,
};
use crate::kotz::KotzParams;
use crate::linalg::{CorrelationSpec, IndexSet};
use crate::qp::{self, QpSolution};

/// Smallest `γ` accepted by [`hr_corr_for_gamma`]; use [`complete_dependence_cdf`] for the limit.
pub const MIN_GAMMA: f64 = 1e-8;

/// Limit `W` of the scaled excess over `t a`.
///
/// `W_I` has independent Exponential components with the given rates; `W_J` follows
/// the conditional Gaussian restricted to the binding coordinates and conditioned
/// to be positive there. Non-binding coordinates of `J` escape to `+∞`.
#[derive(Debug, Clone, Serialize)]
pub struct ExcessLimitLaw {
    pub qp: QpSolution,
    /// `λ_i = a_Iᵀ Σ_II⁻¹ e_i / ‖a_I‖`.
    pub rates: Vec<f64>,
    pub cond_law: Option<ConditionalGaussian>,
    /// `P(Z_J > 0 on binding coordinates | Z_I = 0)`.
    pub denom: Probability,
}

impl ExcessLimitLaw {
    pub fn active(&self) -> &IndexSet {
        &self.qp.active
    }

    pub fn inactive(&self) -> &IndexSet {
        &self.qp.inactive
    }

    pub fn binding(&self) -> &IndexSet {
        &self.qp.binding
    }

    fn rate_of(&self, i: usize) -> Option<f64> {
        self.qp
            .active
            .members()
            .iter()
            .position(|&m| m == i)
            .map(|pos| self.rates[pos])
    }

    fn binding_thresholds(&self, fill: impl Fn(usize) -> f64) -> Vec<f64> {
        self.qp
            .inactive
            .members()
            .iter()
            .map(|&j| {
                if self.qp.binding.contains(j) {
                    fill(j)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }
}

pub fn excess_limit(spec: &CorrelationSpec, a: &[f64]) -> Result<ExcessLimitLaw> {
    let sol = qp::solve(spec, a)?;
    let norm = sol.norm();
    let rates = sol.lambda.iter().map(|l| l / norm).collect();
    let (cond_law, denom) = if sol.inactive.is_empty() {
        (None, Probability::exact(1.0))
    } else {
        let law = conditional_law(spec, &sol.active)?;
        let lower: Vec<f64> = law
            .index
            .members()
            .iter()
            .map(|&j| {
                if sol.binding.contains(j) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let denom = survivor_prob(&law, &lower)?;
        (Some(law), denom)
    };
    Ok(ExcessLimitLaw {
        qp: sol,
        rates,
        cond_law,
        denom,
    })
}

/// `P(W_L > x_L)`, with `x_L` listed in the order of `L`'s members.
pub fn excess_survivor(law: &ExcessLimitLaw, subset: &IndexSet, x: &[f64]) -> Result<Probability> {
    let k = law.qp.active.dim();
    if subset.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: subset.dim(),
        });
    }
    if x.len() != subset.len() {
        return Err(Error::DimensionMismatch {
            expected: subset.len(),
            actual: x.len(),
        });
    }
    let mut log_exp = 0.0;
    let mut on_j = vec![0.0; k + 1];
    let mut any_j = false;
    for (&i, &xi) in subset.members().iter().zip(x) {
        if xi.is_nan() {
            return Err(Error::NotFinite(xi));
        }
        match law.rate_of(i) {
            Some(rate) => log_exp -= rate * xi,
            None => {
                if xi < 0.0 {
                    return Err(Error::NegativeThresholdOnJ {
                        index: i,
                        value: xi,
                    });
                }
                on_j[i] = xi;
                any_j = true;
            }
        }
    }
    let exp_part = log_exp.exp();
    let cond = match (&law.cond_law, any_j) {
        (Some(cond), true) if !law.qp.binding.is_empty() => {
            let lower = law.binding_thresholds(|j| on_j[j]);
            if lower.iter().any(|v| v.is_infinite() && *v > 0.0) {
                return Ok(Probability::exact(0.0));
            }
            let num = survivor_prob(cond, &lower)?;
            let value = num.value / law.denom.value;
            let error = (num.error + value * law.denom.error) / law.denom.value;
            Probability { value, error }
        }
        _ => Probability::exact(1.0),
    };
    Ok(Probability {
        value: exp_part * cond.value,
        error: exp_part * cond.error,
    })
}

/// Which precondition [`conditional_profile`] enforces: `Strict` requires
/// `Σ_II⁻¹ a_I > 0` (conditioning on `X_I > t a_I`), `Relaxed` only `a_I ≠ 0`
/// (conditioning on `X_I = t a_I`). Both lead to the same limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileMode {
    Strict,
    Relaxed,
}

/// Location, scale and limiting law of `X_J` given a large `X_I`:
/// `scale (X_J − center)` converges to `law`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionalProfile {
    pub center: Vec<f64>,
    pub scale: f64,
    pub law: ConditionalGaussian,
}

pub fn conditional_profile(
    spec: &CorrelationSpec,
    a: &[f64],
    index: &IndexSet,
    params: &KotzParams,
    t: f64,
    mode: ProfileMode,
) -> Result<ConditionalProfile> {
    if a.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            actual: a.len(),
        });
    }
    if index.complement().is_empty() {
        return Err(Error::EmptyComplement);
    }
    if !(t > 0.0) {
        return Err(Error::NonPositiveArgument(t));
    }
    let a_i = index.select(a)?;
    let factor = spec.principal(index)?;
    let a_iv = nalgebra::DVector::from_column_slice(&a_i);
    let weights = factor.solve(&a_iv);
    let norm2 = a_iv.dot(&weights);
    match mode {
        ProfileMode::Strict => {
            if let Some(pos) = weights.iter().position(|w| !(*w > 0.0)) {
                return Err(Error::ConditionViolated(format!(
                    "component {} of Σ_II⁻¹ a_I is {} (must be positive)",
                    index.members()[pos],
                    weights[pos]
                )));
            }
        }
        ProfileMode::Relaxed => {
            if !(norm2 > 0.0) {
                return Err(Error::ConditionViolated("a_I is zero".into()));
            }
        }
    }
    let proj = spec.projection_vector(index, &a_i)?;
    let qd = params.q * params.delta;
    let scale = qd.sqrt() * (t * norm2.sqrt()).powf(params.delta / 2.0 - 1.0);
    Ok(ConditionalProfile {
        center: proj.iter().map(|v| t * v).collect(),
        scale,
        law: conditional_law(spec, index)?,
    })
}

/// Norming constants for componentwise maxima of `n` draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HrNorming {
    pub n: f64,
    pub a_n: f64,
    pub b_n: f64,
}

/// `a_n = (ln n / q)^{1/δ−1}/(qδ)`, `b_n = (ln n / q)^{1/δ} + a_n (N ln(ln n / q)/δ + ln p)`.
pub fn hr_norming(params: &KotzParams, n: f64) -> Result<HrNorming> {
    if !(n >= 2.0) || !n.is_finite() {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n,
            reason: "must be at least 2",
        });
    }
    let u = n.ln() / params.q;
    let a_n = u.powf(1.0 / params.delta - 1.0) / (params.q * params.delta);
    let b_n = u.powf(1.0 / params.delta)
        + a_n * (params.exponent * u.ln() / params.delta + params.p.ln());
    Ok(HrNorming { n, a_n, b_n })
}

/// Parameters of one row of a Hüsler-Reiss triangular array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HrParams {
    pub gamma: f64,
    pub a_n: f64,
    pub b_n: f64,
    pub n: f64,
    /// Correlation `σ₁₂` of the row.
    pub sigma: f64,
}

impl HrParams {
    pub fn new(gamma: f64, params: &KotzParams, n: f64) -> Result<Self> {
        let norming = hr_norming(params, n)?;
        let sigma = hr_corr_for_gamma(gamma, params, n)?;
        Ok(Self {
            gamma,
            a_n: norming.a_n,
            b_n: norming.b_n,
            n,
            sigma,
        })
    }
}

/// Bivariate Hüsler-Reiss distribution with unit Gumbel margins.
pub fn hr_cdf(x: f64, y: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: gamma,
            reason: "must be positive",
        });
    }
    let s = (x - y) / (2.0 * gamma);
    Ok((-std_normal_cdf(gamma + s) * (-y).exp() - std_normal_cdf(gamma - s) * (-x).exp()).exp())
}

/// The `γ → 0` limit: `exp(−e^{−min(x, y)})`.
pub fn complete_dependence_cdf(x: f64, y: f64) -> f64 {
    (-(-x.min(y)).exp()).exp()
}

/// Independence product `exp(−e^{−x} − e^{−y})`, the `γ → ∞` limit.
pub fn independence_cdf(x: f64, y: f64) -> f64 {
    (-(-x).exp() - (-y).exp()).exp()
}

/// Correlation `σ = 1 − γ² · 2a_n / b_n` of a row of size `n`, so that
/// `(1 − σ) b_n / (2 a_n) = γ²`.
pub fn hr_corr_for_gamma(gamma: f64, params: &KotzParams, n: f64) -> Result<f64> {
    if !(gamma > MIN_GAMMA) || !gamma.is_finite() {
        return Err(Error::InvalidParameter {
            name: "gamma",
            value: gamma,
            reason: "must exceed 1e-8 and be finite",
        });
    }
    let norming = hr_norming(params, n)?;
    let sigma = 1.0 - gamma * gamma * 2.0 * norming.a_n / norming.b_n;
    if !(sigma > -1.0 && sigma < 1.0) || !(norming.b_n > 0.0) {
        return Err(Error::OutOfRange(sigma));
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::std_normal_sf;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn full(k: usize) -> IndexSet {
        IndexSet::full(k)
    }

    #[test]
    fn equicorrelated_rates() {
        for &(k, rho) in &[(2usize, 0.5), (3, 0.2), (4, -0.1)] {
            let spec = CorrelationSpec::equicorrelated(k, rho).unwrap();
            let law = excess_limit(&spec, &vec![1.0; k]).unwrap();
            let want = 1.0 / (k as f64 * (1.0 + (k as f64 - 1.0) * rho)).sqrt();
            for r in &law.rates {
                assert_relative_eq!(*r, want, max_relative = 1e-13);
            }
            assert!(law.inactive().is_empty() && law.cond_law.is_none());
            assert_eq!(law.denom.value, 1.0);
        }
    }

    #[test]
    fn single_active_identity() {
        let spec = CorrelationSpec::identity(3).unwrap();
        let law = excess_limit(&spec, &[1.0, -1.0, -2.0]).unwrap();
        assert_eq!(law.active().members(), &[1]);
        assert_eq!(law.rates, vec![1.0]);
        assert!(law.binding().is_empty());
        assert_eq!(law.denom.value, 1.0);
        let cond = law.cond_law.as_ref().unwrap();
        assert_eq!(cond.cov, nalgebra::DMatrix::identity(2, 2));
        let s = excess_survivor(&law, &full(3), &[0.5, 3.0, 9.0]).unwrap();
        assert_relative_eq!(s.value, (-0.5f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn survivor_is_one_at_origin() {
        let spec = CorrelationSpec::equicorrelated(3, 0.4).unwrap();
        for a in [[1.0, 1.0, 1.0], [1.0, 0.4, -1.0], [1.0, 0.4, 0.4]] {
            let law = excess_limit(&spec, &a).unwrap();
            let s = excess_survivor(&law, &full(3), &[0.0; 3]).unwrap();
            assert_relative_eq!(s.value, 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn exponential_part_on_active_coordinates() {
        let spec = CorrelationSpec::equicorrelated(3, 0.3).unwrap();
        let law = excess_limit(&spec, &[1.0, 1.0, 1.0]).unwrap();
        let l = IndexSet::new(vec![1, 3], 3).unwrap();
        let s = excess_survivor(&law, &l, &[0.7, 1.1]).unwrap();
        assert_relative_eq!(
            s.value,
            (-law.rates[0] * 0.7 - law.rates[2] * 1.1).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn single_binding_coordinate_ratio() {
        let rho = 0.5;
        let spec = CorrelationSpec::equicorrelated(2, rho).unwrap();
        let law = excess_limit(&spec, &[1.0, rho]).unwrap();
        assert_eq!(law.binding().members(), &[2]);
        assert_relative_eq!(law.denom.value, 0.5);
        let v: f64 = 1.0 - rho * rho;
        let l = IndexSet::new(vec![2], 2).unwrap();
        for &x in &[0.3, 1.0, 2.5] {
            let s = excess_survivor(&law, &l, &[x]).unwrap();
            assert_relative_eq!(
                s.value,
                2.0 * std_normal_sf(x / v.sqrt()),
                max_relative = 1e-13
            );
        }
        assert!(matches!(
            excess_survivor(&law, &l, &[-0.1]),
            Err(Error::NegativeThresholdOnJ { index: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn excess_survivor_is_a_survivor_function(
            rho in -0.3f64..0.8, a3 in -1.0f64..1.0, x1 in 0.0f64..3.0, x2 in 0.0f64..3.0, x3 in 0.0f64..3.0, bump in 0.01f64..1.0
        ) {
            let spec = CorrelationSpec::equicorrelated(3, rho).unwrap();
            let law = excess_limit(&spec, &[1.0, 0.8, a3]).unwrap();
            let all = full(3);
            let x = [x1, x2, x3];
            let base = excess_survivor(&law, &all, &x).unwrap().value;
            prop_assert!((0.0..=1.0 + 1e-9).contains(&base));
            for c in 0..3 {
                let mut y = x;
                y[c] += bump;
                let moved = excess_survivor(&law, &all, &y).unwrap().value;
                prop_assert!(moved <= base + 1e-9);
                y[c] = 1e6;
                prop_assert!(excess_survivor(&law, &all, &y).unwrap().value <= 1e-6 || !law.active().contains(c + 1) && !law.binding().contains(c + 1));
            }
        }
    }

    #[test]
    fn profile_examples() {
        let gauss = KotzParams::gaussian(2).unwrap();
        let spec = CorrelationSpec::equicorrelated(2, 0.5).unwrap();
        let i1 = IndexSet::new(vec![1], 2).unwrap();
        let prof = conditional_profile(&spec, &[1.0, 0.0], &i1, &gauss, 10.0, ProfileMode::Strict)
            .unwrap();
        assert_relative_eq!(prof.center[0], 5.0, max_relative = 1e-15);
        assert_relative_eq!(prof.law.cov[(0, 0)], 0.75, max_relative = 1e-15);
        assert_eq!(prof.scale, 1.0);
        let direct = conditional_law(&spec, &i1).unwrap();
        assert_eq!(prof.law.cov.as_slice(), direct.cov.as_slice());

        let id = CorrelationSpec::identity(3).unwrap();
        let exp = KotzParams::canonical(1.0, 1.0, 0.0).unwrap();
        let prof = conditional_profile(
            &id,
            &[2.0, 0.0, 0.0],
            &i1_of(3),
            &exp,
            4.0,
            ProfileMode::Strict,
        )
        .unwrap();
        assert_eq!(prof.center, vec![0.0, 0.0]);
        assert_eq!(prof.law.cov, nalgebra::DMatrix::identity(2, 2));
        assert_relative_eq!(prof.scale, 8f64.powf(-0.5), max_relative = 1e-15);
    }

    fn i1_of(k: usize) -> IndexSet {
        IndexSet::new(vec![1], k).unwrap()
    }

    #[test]
    fn strict_mode_checks_weights() {
        let spec = CorrelationSpec::equicorrelated(3, 0.8).unwrap();
        let gauss = KotzParams::gaussian(3).unwrap();
        let i = IndexSet::new(vec![1, 2], 3).unwrap();
        let a = [1.0, 0.2, 0.0];
        assert!(matches!(
            conditional_profile(&spec, &a, &i, &gauss, 5.0, ProfileMode::Strict),
            Err(Error::ConditionViolated(_))
        ));
        let relaxed =
            conditional_profile(&spec, &a, &i, &gauss, 5.0, ProfileMode::Relaxed).unwrap();
        assert_eq!(relaxed.center.len(), 1);
        assert!(
            conditional_profile(&spec, &[0.0; 3], &i, &gauss, 5.0, ProfileMode::Relaxed).is_err()
        );
        assert!(matches!(
            conditional_profile(&spec, &a, &full(3), &gauss, 5.0, ProfileMode::Relaxed),
            Err(Error::EmptyComplement)
        ));
    }

    #[test]
    fn norming_constants() {
        let p = KotzParams::new(1.0, 0.5, 2.0, 0.0).unwrap();
        let h = hr_norming(&p, 8f64.exp()).unwrap();
        assert_relative_eq!(h.a_n, 0.25, max_relative = 1e-14);
        assert_relative_eq!(h.b_n, 4.0, max_relative = 1e-14);
        for &n in &[1e3, 1e6, 1e9] {
            assert_relative_eq!(
                hr_norming(&p, n).unwrap().b_n,
                (2.0 * f64::ln(n)).sqrt(),
                max_relative = 1e-14
            );
        }
        let exp = KotzParams::canonical(1.3, 0.8, 1.5).unwrap();
        let ratios: Vec<f64> = [1e3, 1e6, 1e9]
            .iter()
            .map(|&n| {
                let h = hr_norming(&exp, n).unwrap();
                h.a_n / h.b_n
            })
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));
        assert!(hr_norming(&p, 1.0).is_err());
    }

    #[test]
    fn hr_cdf_limits_and_identities() {
        for &(x, y) in &[(-1.0, 0.5), (0.0, 0.0), (2.0, -0.3), (3.0, 3.0)] {
            assert!((hr_cdf(x, y, 1e3).unwrap() - independence_cdf(x, y)).abs() < 1e-9);
            let g = 0.7;
            let lhs = hr_cdf(x + 2f64.ln(), y + 2f64.ln(), g).unwrap().powi(2);
            assert_relative_eq!(lhs, hr_cdf(x, y, g).unwrap(), max_relative = 1e-12);
            assert!(hr_cdf(x, y, 1e-6).unwrap() - complete_dependence_cdf(x, y) < 1e-6);
        }
        let g = 1.3;
        let x: f64 = 0.4;
        assert_relative_eq!(
            hr_cdf(x, x, g).unwrap(),
            (-2.0 * std_normal_cdf(g) * (-x).exp()).exp(),
            max_relative = 1e-15
        );
        for &x in &[-1.0, 0.0, 2.0] {
            assert!((hr_cdf(x, 40.0, 1.0).unwrap() - (-f64::exp(-x)).exp()).abs() < 1e-12);
        }
        assert!(hr_cdf(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn correlation_for_gamma() {
        let gauss = KotzParams::gaussian(2).unwrap();
        let ln_n = 8.0f64;
        assert_relative_eq!(
            hr_corr_for_gamma(1.0, &gauss, ln_n.exp()).unwrap(),
            0.875,
            max_relative = 1e-14
        );
        assert!(hr_corr_for_gamma(1e-4, &gauss, 1e4).unwrap() > 1.0 - 1e-8);
        let s = [1e3, 1e6, 1e9].map(|n| hr_corr_for_gamma(1.0, &gauss, n).unwrap());
        assert!(s[0] < s[1] && s[1] < s[2]);
        assert!(hr_corr_for_gamma(1e-9, &gauss, 1e4).is_err());
        assert!(matches!(
            hr_corr_for_gamma(10.0, &gauss, 1e3),
            Err(Error::OutOfRange(_))
        ));
        let hp = HrParams::new(1.0, &gauss, ln_n.exp()).unwrap();
        assert_relative_eq!(hp.b_n, 4.0, max_relative = 1e-14);
        assert_relative_eq!(hp.sigma, 0.875, max_relative = 1e-14);
    }
}
