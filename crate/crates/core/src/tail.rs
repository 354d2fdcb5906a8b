//! Exact tail asymptotics of `P(X > t a + x / v_n)` for Kotz Type III vectors,
//! the general Gumbel-domain form they specialize, and the marginal tail.
//!
//! All constants are assembled in log space; `value_at` exponentiates at the end
//! so that large `t` underflows only in the final result.

use std::f64::consts::{LN_2, PI};

use nalgebra::DVector;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gaussian::{
    conditional_law, orthant_survivor, survivor_prob, Probability, SurvivorOptions,
};
use crate::kotz::{KotzModel, KotzParams};
use crate::linalg::CorrelationSpec;
use crate::qp::{self, QpSolution};

const NORMALIZATION_TOL: f64 = 1e-9;

/// Scaling vector `v_n`: `qδ(t‖a_I‖)^{δ−1}` on `I`, `√(qδ)(t‖a_I‖)^{δ/2−1}` on `J`.
pub fn v_n(qp: &QpSolution, params: &KotzParams, t: f64) -> Vec<f64> {
    let qd = params.q * params.delta;
    let s = t * qp.norm();
    let on_i = qd * s.powf(params.delta - 1.0);
    let on_j = qd.sqrt() * s.powf(params.delta / 2.0 - 1.0);
    (1..=qp.active.dim())
        .map(|i| if qp.active.contains(i) { on_i } else { on_j })
        .collect()
}

/// Inputs of [`tail_asymptotic`].
#[derive(Debug, Clone, Copy)]
pub struct TailRequest<'a> {
    pub model: &'a KotzModel,
    /// Direction `a`, with at least one positive component.
    pub a: &'a [f64],
    /// Second-order offset `x`; zero when `None`.
    pub x: Option<&'a [f64]>,
    pub t: f64,
}

/// `K t^β exp(−c t^δ)` together with its ingredients.
#[derive(Debug, Clone, Serialize)]
pub struct TailExpansion {
    #[serde(rename = "K")]
    pub constant: f64,
    pub log_constant: f64,
    /// `β = N + δ(1 − (k+m)/2)`.
    #[serde(rename = "beta")]
    pub poly_exponent: f64,
    /// `c = q‖a_I‖^δ`.
    #[serde(rename = "c")]
    pub exp_coefficient: f64,
    #[serde(rename = "delta")]
    pub exp_power: f64,
    pub qp: QpSolution,
    pub gauss_factor: Probability,
    pub t: f64,
    pub value: f64,
    pub log10_value: f64,
}

impl TailExpansion {
    pub fn log_value_at(&self, t: f64) -> f64 {
        self.log_constant + self.poly_exponent * t.ln()
            - self.exp_coefficient * t.powf(self.exp_power)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.log_value_at(t).exp()
    }
}

fn check_offset(x: Option<&[f64]>, k: usize) -> Result<Vec<f64>> {
    match x {
        None => Ok(vec![0.0; k]),
        Some(x) if x.len() != k => Err(Error::DimensionMismatch {
            expected: k,
            actual: x.len(),
        }),
        Some(x) => {
            if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::NotFinite(*bad));
            }
            Ok(x.to_vec())
        }
    }
}

/// Survivor of `Z_J | Z_I = 0` with thresholds `x_j` on binding coordinates, `−∞` elsewhere.
fn binding_gauss_factor(
    spec: &CorrelationSpec,
    sol: &QpSolution,
    x: &[f64],
) -> Result<Probability> {
    if sol.inactive.is_empty() {
        return Ok(Probability::exact(1.0));
    }
    let law = conditional_law(spec, &sol.active)?;
    let lower: Vec<f64> = law
        .index
        .members()
        .iter()
        .map(|&j| {
            if sol.binding.contains(j) {
                x[j - 1]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    survivor_prob(&law, &lower)
}

/// `Σ ln λ_i` and `ln|Σ_II|` shared by both expansions.
fn log_denominator(spec: &CorrelationSpec, sol: &QpSolution) -> Result<f64> {
    let m = sol.m() as f64;
    let log_det = spec.principal(&sol.active)?.log_det();
    let log_lambda: f64 = sol.lambda.iter().map(|l| l.ln()).sum();
    Ok(m / 2.0 * (2.0 * PI).ln() + 0.5 * log_det + log_lambda)
}

fn log_sphere_factor(k: usize) -> f64 {
    ln_gamma(k as f64 / 2.0) + (k as f64 / 2.0 - 1.0) * LN_2
}

/// Tail expansion of `P(X > t a + x / v_n)` as `t → ∞`.
pub fn tail_asymptotic(req: &TailRequest<'_>) -> Result<TailExpansion> {
    if !(req.t > 0.0) || !req.t.is_finite() {
        return Err(Error::NonPositiveArgument(req.t));
    }
    let spec = &req.model.spec;
    let params = &req.model.params;
    let k = spec.dim();
    let x = check_offset(req.x, k)?;
    let sol = qp::solve(spec, req.a)?;
    let m = sol.m() as f64;
    let kf = k as f64;
    let (q, delta, big_n) = (params.q, params.delta, params.exponent);
    let norm = sol.norm();
    let power = 1.0 - (kf + m) / 2.0;
    let beta = big_n + delta * power;

    let x_i: Vec<f64> = sol.active.select(&x)?;
    let shift: f64 = x_i
        .iter()
        .zip(&sol.lambda)
        .map(|(xi, li)| xi * li)
        .sum::<f64>()
        / norm;
    let gauss = binding_gauss_factor(spec, &sol, &x)?;

    let log_constant =
        params.p.ln() + power * (q * delta).ln() + (m + beta) * norm.ln() + log_sphere_factor(k)
            - log_denominator(spec, &sol)?
            - shift
            + gauss.value.ln();
    let exp_coefficient = q * norm.powf(delta);
    let mut out = TailExpansion {
        constant: log_constant.exp(),
        log_constant,
        poly_exponent: beta,
        exp_coefficient,
        exp_power: delta,
        qp: sol,
        gauss_factor: gauss,
        t: req.t,
        value: 0.0,
        log10_value: 0.0,
    };
    let log_value = out.log_value_at(req.t);
    out.value = log_value.exp();
    out.log10_value = log_value / std::f64::consts::LN_10;
    Ok(out)
}

/// The general Gumbel-domain expansion for a radius with tail `1 − F(t)` and scaling
/// value `w(t)`, evaluated verbatim. Requires `‖a_I‖ = 1`; `q_j` may be `−∞`.
pub fn gumbel_tail_general(
    spec: &CorrelationSpec,
    a: &[f64],
    tail_of_f: f64,
    w_at_t: f64,
    t: f64,
    q_i: &[f64],
    q_j: &[f64],
) -> Result<Probability> {
    let sol = qp::solve(spec, a)?;
    if (sol.norm() - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NormalizationViolated(sol.norm()));
    }
    if q_i.len() != sol.m() {
        return Err(Error::DimensionMismatch {
            expected: sol.m(),
            actual: q_i.len(),
        });
    }
    if q_j.len() != sol.inactive.len() {
        return Err(Error::DimensionMismatch {
            expected: sol.inactive.len(),
            actual: q_j.len(),
        });
    }
    let k = spec.dim() as f64;
    let m = sol.m() as f64;
    let lambda = DVector::from_column_slice(&sol.lambda);
    let shift = DVector::from_column_slice(q_i).dot(&lambda);
    let gauss = if sol.inactive.is_empty() {
        Probability::exact(1.0)
    } else {
        let law = conditional_law(spec, &sol.active)?;
        orthant_survivor(&law.cov, q_j, &SurvivorOptions::default())?
    };
    let log_value = -shift + log_sphere_factor(spec.dim()) - log_denominator(spec, &sol)?
        + (1.0 - (k + m) / 2.0) * (t * w_at_t).ln()
        + tail_of_f.ln();
    let scale = log_value.exp();
    Ok(Probability {
        value: scale * gauss.value,
        error: scale * gauss.error,
    })
}

/// Tail constants `(p₁, N₁)` of one margin: `P(X₁ > t) ~ p₁ t^{N₁} exp(−q t^δ)`.
pub fn marginal_tail_params(params: &KotzParams, k: usize) -> Result<KotzParams> {
    if k < 2 {
        return Err(Error::DimensionTooSmall(k));
    }
    let half = (k as f64 - 1.0) / 2.0;
    let log_p1 = params.p.ln() - LN_2 + ln_gamma(k as f64 / 2.0) - ln_gamma(0.5)
        + half * (2.0 / (params.q * params.delta)).ln();
    KotzParams::new(
        log_p1.exp(),
        params.q,
        params.delta,
        params.exponent - params.delta * half,
    )
}

/// Asymptotic `P(X₁ > t)`:
/// `½ Γ(k/2)/Γ(½) 2^{(k−1)/2} (t w(t))^{−(k−1)/2} p t^N exp(−q t^δ)`.
pub fn marginal_tail(params: &KotzParams, k: usize, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveArgument(t));
    }
    Ok(marginal_tail_params(params, k)?.radial_tail(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::std_normal_sf;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_model(k: usize, rho: f64) -> KotzModel {
        KotzModel::new(
            KotzParams::gaussian(k).unwrap(),
            CorrelationSpec::equicorrelated(k, rho).unwrap(),
        )
    }

    fn expansion(model: &KotzModel, a: &[f64], x: Option<&[f64]>, t: f64) -> TailExpansion {
        tail_asymptotic(&TailRequest { model, a, x, t }).unwrap()
    }

    #[test]
    fn v_n_components() {
        let model = gaussian_model(3, 0.0);
        let sol = qp::solve(&model.spec, &[1.0, 1.0, 1.0]).unwrap();
        let c = sol.norm();
        for v in v_n(&sol, &model.params, 2.5) {
            assert_relative_eq!(v, c * 2.5, max_relative = 1e-15);
        }
        let exp = KotzParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let sol = qp::solve(&model.spec, &[2.0, -1.0, -1.0]).unwrap();
        let v = v_n(&sol, &exp, 3.0);
        assert_eq!(v[0], 1.0);
        assert_relative_eq!(v[1], 1.0 / 6f64.sqrt(), max_relative = 1e-15);
        let p = KotzParams::new(1.0, 0.7, 1.6, 0.0).unwrap();
        let (v1, v2) = (v_n(&sol, &p, 1.5), v_n(&sol, &p, 3.0));
        assert_relative_eq!(v2[0] / v1[0], 2f64.powf(0.6), max_relative = 1e-13);
        assert_relative_eq!(v2[1] / v1[1], 2f64.powf(-0.2), max_relative = 1e-13);
    }

    #[test]
    fn independent_gaussian_pair() {
        let model = gaussian_model(2, 0.0);
        let e = expansion(&model, &[1.0, 1.0], None, 3.0);
        assert_relative_eq!(e.value, 2.1824e-6, max_relative = 1e-4);
        assert_relative_eq!(e.value, (-9.0f64).exp() / (18.0 * PI), max_relative = 1e-12);
        let mills = std_normal_sf(3.0).powi(2);
        assert!((e.value / mills - 1.0).abs() < 0.25);
    }

    #[test]
    fn equicorrelated_closed_form() {
        for &(k, rho) in &[(2usize, 0.5), (3, 0.3), (4, -0.2), (5, 0.8)] {
            let model = gaussian_model(k, rho);
            let ones = vec![1.0; k];
            let e = expansion(&model, &ones, None, 2.0);
            let kf = k as f64;
            let c2 = kf / (1.0 + (kf - 1.0) * rho);
            let want = (1.0 + (kf - 1.0) * rho).powf(kf - 0.5)
                / ((2.0 * PI).powf(kf / 2.0) * (1.0 - rho).powf((kf - 1.0) / 2.0));
            assert_relative_eq!(e.constant, want, max_relative = 1e-12);
            assert_relative_eq!(e.poly_exponent, -kf, max_relative = 1e-15);
            assert_relative_eq!(e.exp_coefficient, c2 / 2.0, max_relative = 1e-13);
            assert!(e.qp.inactive.is_empty());

            let x: Vec<f64> = (0..k).map(|i| 0.3 * i as f64 - 0.2).collect();
            let shifted = expansion(&model, &ones, Some(&x), 2.0);
            let factor = (-x.iter().sum::<f64>() / (kf * (1.0 + (kf - 1.0) * rho)).sqrt()).exp();
            assert_relative_eq!(shifted.constant / e.constant, factor, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_active_coordinate_matches_margin() {
        // a = (2, −5): I = {1}, non-binding J, P(X₁ > 2t) ~ φ(2t)/(2t)
        let model = gaussian_model(2, 0.5);
        let e = expansion(&model, &[2.0, -5.0], None, 3.0);
        assert_eq!(e.qp.active.members(), &[1]);
        let want = (-18.0f64).exp() / (6.0 * (2.0 * PI).sqrt());
        assert_relative_eq!(e.value, want, max_relative = 1e-12);
        assert_relative_eq!(
            e.value,
            marginal_tail(&model.params, 2, 6.0).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn offsets_on_non_binding_coordinates_have_no_effect() {
        let model = gaussian_model(3, 0.4);
        let a = [1.5, -2.0, 0.1];
        let base = expansion(&model, &a, Some(&[0.3, 0.0, 0.0]), 4.0);
        assert!(!base.qp.inactive.is_empty());
        let non_binding: Vec<usize> = base
            .qp
            .inactive
            .members()
            .iter()
            .copied()
            .filter(|j| !base.qp.binding.contains(*j))
            .collect();
        assert!(!non_binding.is_empty());
        let mut x = vec![0.3, 0.0, 0.0];
        for &j in &non_binding {
            x[j - 1] = 17.0;
        }
        let moved = expansion(&model, &a, Some(&x), 4.0);
        assert_eq!(base.log_constant, moved.log_constant);
        assert_eq!(base.value, moved.value);
    }

    #[test]
    fn binding_coordinate_uses_conditional_survivor() {
        // identity Σ, a = (1, 0): I = {1}, coordinate 2 binding with projection 0
        let model = KotzModel::new(
            KotzParams::gaussian(2).unwrap(),
            CorrelationSpec::identity(2).unwrap(),
        );
        let e = expansion(&model, &[1.0, 0.0], None, 3.0);
        assert_eq!(e.qp.binding.members(), &[2]);
        assert_relative_eq!(e.gauss_factor.value, 0.5, max_relative = 1e-15);
        let e2 = expansion(&model, &[1.0, 0.0], Some(&[0.0, 1.0]), 3.0);
        assert_relative_eq!(
            e2.gauss_factor.value,
            std_normal_sf(1.0),
            max_relative = 1e-14
        );
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (KotzModel, Vec<f64>, Vec<f64>, f64) {
        let k = rng.gen_range(2..=5);
        let g = DMatrix::<f64>::from_fn(k, k + 2, |_, _| rng.gen_range(-1.0..1.0));
        let cov = &g * g.transpose() + DMatrix::identity(k, k) * 0.2;
        let d = DVector::from_fn(k, |i, _| cov[(i, i)].sqrt().recip());
        let sigma = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                1.0
            } else {
                cov[(i, j)] * d[i] * d[j]
            }
        });
        let spec = CorrelationSpec::factorize(sigma).unwrap();
        let params = KotzParams::new(
            rng.gen_range(0.2..3.0),
            rng.gen_range(0.2..2.0),
            rng.gen_range(0.5..3.0),
            rng.gen_range(-2.0..3.0),
        )
        .unwrap();
        let mut a: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        a[rng.gen_range(0..k)] = rng.gen_range(0.5..2.0);
        let x: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (KotzModel::new(params, spec), a, x, rng.gen_range(2.0..6.0))
    }

    #[test]
    fn kotz_expansion_specializes_general_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let (model, a, x, t) = random_instance(&mut rng);
            let e = expansion(&model, &a, Some(&x), t);
            let norm = e.qp.norm();
            let a_unit: Vec<f64> = a.iter().map(|v| v / norm).collect();
            let s = t * norm;
            let params = &model.params;
            let tail_f = params.radial_tail(s);
            let w = params.scaling_w(s).unwrap();
            let q_i = e.qp.active.select(&x).unwrap();
            let q_j: Vec<f64> =
                e.qp.inactive
                    .members()
                    .iter()
                    .map(|&j| {
                        if e.qp.binding.contains(j) {
                            x[j - 1]
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect();
            let g = gumbel_tail_general(&model.spec, &a_unit, tail_f, w, s, &q_i, &q_j).unwrap();
            assert_relative_eq!(g.value, e.value, max_relative = 1e-12);
        }
    }

    #[test]
    fn general_form_reductions() {
        let spec = CorrelationSpec::identity(3).unwrap();
        let a = [1.0 / 3f64.sqrt(); 3];
        let (tail_f, w, t) = (1e-5, 2.0, 4.0);
        let g = gumbel_tail_general(&spec, &a, tail_f, w, t, &[0.0; 3], &[]).unwrap();
        let prod: f64 = a.iter().product();
        let sphere = PI.sqrt() / 2.0 * 2f64.sqrt();
        let want = sphere * (t * w).powi(-2) * tail_f / ((2.0 * PI).powf(1.5) * prod);
        assert_relative_eq!(g.value, want, max_relative = 1e-12);
        assert!(matches!(
            gumbel_tail_general(&spec, &[1.0, 1.0, 1.0], tail_f, w, t, &[0.0; 3], &[]),
            Err(Error::NormalizationViolated(_))
        ));
        let spec2 = CorrelationSpec::equicorrelated(2, 0.3).unwrap();
        let g = gumbel_tail_general(
            &spec2,
            &[1.0, -3.0],
            tail_f,
            w,
            t,
            &[0.0],
            &[f64::NEG_INFINITY],
        )
        .unwrap();
        let scale =
            gumbel_tail_general(&spec2, &[1.0, -3.0], tail_f, w, t, &[0.0], &[-40.0]).unwrap();
        assert_eq!(g.error, 0.0);
        assert_relative_eq!(g.value, scale.value, max_relative = 1e-12);
    }

    #[test]
    fn marginal_tail_values() {
        let g2 = KotzParams::gaussian(2).unwrap();
        for &t in &[1.0, 3.0, 7.5] {
            let want = (-t * t / 2.0f64).exp() / (t * (2.0 * PI).sqrt());
            assert_relative_eq!(
                marginal_tail(&g2, 2, t).unwrap(),
                want,
                max_relative = 1e-13
            );
        }
        let g3 = KotzParams::gaussian(3).unwrap();
        let ratio = marginal_tail(&g3, 3, 4.0).unwrap() / std_normal_sf(4.0);
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
        let p = KotzParams::canonical(1.0, 1.0, 0.0).unwrap();
        assert!(marginal_tail(&p, 4, 6.0).unwrap() < marginal_tail(&p, 4, 3.0).unwrap());
        assert!(marginal_tail(&p, 4, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_requests() {
        let model = gaussian_model(2, 0.0);
        assert!(tail_asymptotic(&TailRequest {
            model: &model,
            a: &[1.0, 1.0],
            x: None,
            t: 0.0
        })
        .is_err());
        assert!(tail_asymptotic(&TailRequest {
            model: &model,
            a: &[-1.0, 0.0],
            x: None,
            t: 1.0
        })
        .is_err());
        assert!(tail_asymptotic(&TailRequest {
            model: &model,
            a: &[1.0, 1.0],
            x: Some(&[0.0]),
            t: 1.0
        })
        .is_err());
    }

    proptest! {
        #[test]
        fn expansion_is_decreasing_in_t(rho in -0.4f64..0.9, a2 in -2.0f64..1.5, t in 2.0f64..8.0) {
            let model = gaussian_model(2, rho);
            let e = expansion(&model, &[1.0, a2], None, t);
            prop_assert!(e.value_at(t * 1.5) < e.value_at(t));
            prop_assert!(e.constant > 0.0 && e.exp_coefficient > 0.0);
            prop_assert!(e.gauss_factor.value > 0.0 && e.gauss_factor.value <= 1.0);
        }

        #[test]
        fn scaling_direction_rescales_threshold(c in 0.5f64..3.0, rho in -0.4f64..0.9, a2 in -2.0f64..1.5) {
            let model = gaussian_model(2, rho);
            let a = [1.0, a2];
            let ca = [c, c * a2];
            let e = expansion(&model, &a, None, 3.0);
            let f = expansion(&model, &ca, None, 3.0 / c);
            prop_assert!((e.value / f.value - 1.0).abs() < 1e-10);
        }
    }
}
