//! The quadratic program `min xᵀΣ⁻¹x subject to x ≥ a` and its minimal index set.
//!
//! The optimum is supported on a unique non-empty index set `I`: on `I` the
//! solution equals `a_I` with `Σ_II⁻¹ a_I > 0`, and on the complement `J` it is
//! the projection `Σ_JI Σ_II⁻¹ a_I`, which dominates `a_J`. [`solve`] finds `I`
//! with an active-set iteration on the dual problem; [`brute_force_solve`]
//! enumerates every candidate set and serves as the test oracle.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CorrelationSpec, IndexSet};

/// Relative slack under which a `J`-constraint counts as binding.
pub const BINDING_TOL: f64 = 1e-9;
const VERIFY_TOL: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-12;
const BRUTE_FORCE_MAX_DIM: usize = 12;

/// Solution of the quadratic program.
#[derive(Debug, Clone, Serialize)]
pub struct QpSolution {
    /// Minimal index set `I`.
    #[serde(rename = "I")]
    pub active: IndexSet,
    /// Complement `J`, possibly empty.
    #[serde(rename = "J")]
    pub inactive: IndexSet,
    /// The minimizer `ã`.
    pub a_tilde: Vec<f64>,
    /// `‖a_I‖² = a_Iᵀ Σ_II⁻¹ a_I`.
    pub value: f64,
    /// `Σ_II⁻¹ a_I`, strictly positive.
    #[serde(rename = "lambda_I")]
    pub lambda: Vec<f64>,
    /// Coordinates of `J` whose constraint holds with equality.
    #[serde(rename = "binding_J")]
    pub binding: IndexSet,
}

impl QpSolution {
    /// `‖a_I‖`.
    pub fn norm(&self) -> f64 {
        self.value.sqrt()
    }

    pub fn m(&self) -> usize {
        self.active.len()
    }

    /// Builds the solution induced by a candidate index set, without checking optimality.
    pub fn from_index_set(spec: &CorrelationSpec, a: &[f64], active: IndexSet) -> Result<Self> {
        let k = spec.dim();
        let a_i = active.select(a)?;
        let factor = spec.principal(&active)?;
        let a_iv = DVector::from_column_slice(&a_i);
        let lambda = factor.solve(&a_iv);
        let value = factor.quad_form(&a_iv);
        let inactive = active.complement();
        let mut a_tilde = a.to_vec();
        let mut binding = Vec::new();
        if !inactive.is_empty() {
            let proj = spec.projection_vector(&active, &a_i)?;
            for (slot, j) in inactive.positions().enumerate() {
                a_tilde[j] = proj[slot];
                if proj[slot] - a[j] <= BINDING_TOL * a[j].abs().max(1.0) {
                    binding.push(j + 1);
                }
            }
        }
        Ok(Self {
            active,
            inactive,
            a_tilde,
            value,
            lambda: lambda.iter().copied().collect(),
            binding: IndexSet::new_allow_empty(binding, k)?,
        })
    }
}

fn validate_direction(spec: &CorrelationSpec, a: &[f64]) -> Result<()> {
    if a.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            actual: a.len(),
        });
    }
    if let Some(bad) = a.iter().find(|v| !v.is_finite()) {
        return Err(Error::NotFinite(*bad));
    }
    if !a.iter().any(|&v| v > 0.0) {
        return Err(Error::NoPositiveComponent);
    }
    Ok(())
}

/// Solves the quadratic program by a Lawson-Hanson active-set iteration on the dual
/// `min ½μᵀΣμ − aᵀμ, μ ≥ 0`, whose positive support is the minimal index set.
pub fn solve(spec: &CorrelationSpec, a: &[f64]) -> Result<QpSolution> {
    validate_direction(spec, a)?;
    let k = spec.dim();
    let sigma = spec.sigma();
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let tol = FEASIBILITY_TOL * scale;
    let max_iter = 4usize.saturating_pow(k as u32).clamp(64, 1 << 20);

    let mut mu = vec![0.0; k];
    let mut passive = vec![false; k];
    let mut iterations = 0usize;

    'outer: loop {
        let x: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| sigma[(i, j)] * mu[j]).sum())
            .collect();
        let candidate = (0..k)
            .filter(|&j| !passive[j])
            .map(|j| (j, a[j] - x[j]))
            .filter(|&(_, w)| w > tol)
            .max_by(|l, r| l.1.total_cmp(&r.1));
        let Some((entering, _)) = candidate else {
            break;
        };
        passive[entering] = true;
        let mut first = true;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return fallback(spec, a);
            }
            let set = IndexSet::from_zero_based((0..k).filter(|&i| passive[i]).collect(), k)?;
            let z_set = spec
                .principal(&set)?
                .solve(&DVector::from_column_slice(&set.select(a)?));
            let mut z = vec![0.0; k];
            for (slot, p) in set.positions().enumerate() {
                z[p] = z_set[slot];
            }
            if set.positions().all(|p| z[p] > 0.0) {
                mu = z;
                continue 'outer;
            }
            if first && !(z[entering] > 0.0) {
                // exact arithmetic guarantees z[entering] > 0; rounding stalled here
                passive[entering] = false;
                break 'outer;
            }
            first = false;
            let alpha = set
                .positions()
                .filter(|&p| z[p] <= 0.0)
                .map(|p| mu[p] / (mu[p] - z[p]))
                .fold(f64::INFINITY, f64::min);
            for i in 0..k {
                mu[i] += alpha * (z[i] - mu[i]);
            }
            for i in 0..k {
                if passive[i] && mu[i] <= tol * 1e-3 {
                    passive[i] = false;
                    mu[i] = 0.0;
                }
            }
        }
    }

    let active = IndexSet::from_zero_based((0..k).filter(|&i| passive[i]).collect(), k)?;
    if active.is_empty() {
        return fallback(spec, a);
    }
    QpSolution::from_index_set(spec, a, active)
}

fn fallback(spec: &CorrelationSpec, a: &[f64]) -> Result<QpSolution> {
    brute_force_solve(spec, a)
}

/// Enumerates every non-empty index set and keeps those satisfying the optimality
/// conditions; exactly one must survive.
pub fn brute_force_solve(spec: &CorrelationSpec, a: &[f64]) -> Result<QpSolution> {
    validate_direction(spec, a)?;
    let k = spec.dim();
    if k > BRUTE_FORCE_MAX_DIM {
        return Err(Error::OracleTooLarge(k));
    }
    let mut survivors = Vec::new();
    for mask in 1u32..(1u32 << k) {
        let positions: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let set = IndexSet::from_zero_based(positions, k)?;
        let a_i = set.select(a)?;
        let lambda = spec
            .principal(&set)?
            .solve(&DVector::from_column_slice(&a_i));
        if lambda.iter().any(|&l| !(l > 0.0)) {
            continue;
        }
        let comp = set.complement();
        if !comp.is_empty() {
            let proj = spec.projection_vector(&set, &a_i)?;
            let feasible = comp
                .positions()
                .enumerate()
                .all(|(slot, j)| proj[slot] >= a[j] - FEASIBILITY_TOL * a[j].abs().max(1.0));
            if !feasible {
                continue;
            }
        }
        survivors.push(set);
    }
    if survivors.len() != 1 {
        return Err(Error::OracleAmbiguous(survivors.len()));
    }
    QpSolution::from_index_set(spec, a, survivors.pop().unwrap())
}

/// Outcome of [`verify_kkt`].
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

fn close(u: f64, v: f64) -> bool {
    (u - v).abs() <= VERIFY_TOL * u.abs().max(v.abs()).max(1.0)
}

/// Checks a claimed solution against the optimality conditions, including the
/// identity `xᵀΣ⁻¹ã = x_IᵀΣ_II⁻¹a_I` on random `x`.
pub fn verify_kkt(spec: &CorrelationSpec, a: &[f64], sol: &QpSolution) -> KktReport {
    let mut diagnostics = Vec::new();
    let k = spec.dim();
    let mut fail = |msg: &str| diagnostics.push(msg.to_string());

    if a.len() != k || sol.a_tilde.len() != k || sol.active.dim() != k || sol.inactive.dim() != k {
        fail("dimension mismatch");
        return KktReport {
            ok: false,
            diagnostics,
        };
    }
    if sol.active.is_empty() || sol.inactive != sol.active.complement() {
        fail("I and J do not partition {1..k}");
        return KktReport {
            ok: false,
            diagnostics,
        };
    }
    let a_i = sol.active.select(a).expect("checked dimension");
    if sol.active.positions().any(|p| !close(sol.a_tilde[p], a[p])) {
        fail("a_tilde_I differs from a_I");
    }
    let Ok(factor) = spec.principal(&sol.active) else {
        fail("Sigma_II not positive definite");
        return KktReport {
            ok: false,
            diagnostics,
        };
    };
    let a_iv = DVector::from_column_slice(&a_i);
    let lambda = factor.solve(&a_iv);
    if lambda.iter().any(|&l| !(l > 0.0)) {
        fail("lambda_I not positive");
    }
    if sol.lambda.len() != lambda.len()
        || sol
            .lambda
            .iter()
            .zip(lambda.iter())
            .any(|(u, v)| !close(*u, *v))
    {
        fail("lambda_I inconsistent with Sigma_II^-1 a_I");
    }
    if !sol.inactive.is_empty() {
        let proj = spec
            .projection_vector(&sol.active, &a_i)
            .expect("non-empty complement");
        for (slot, j) in sol.inactive.positions().enumerate() {
            if !close(sol.a_tilde[j], proj[slot]) {
                fail("a_tilde_J differs from Sigma_JI Sigma_II^-1 a_I");
                break;
            }
        }
        for (slot, j) in sol.inactive.positions().enumerate() {
            if proj[slot] < a[j] - VERIFY_TOL * a[j].abs().max(1.0) {
                fail("a_tilde_J below a_J");
                break;
            }
        }
    }
    let value = factor.quad_form(&a_iv);
    if !(value > 0.0) || !close(sol.value, value) {
        fail("value inconsistent with a_I' Sigma_II^-1 a_I");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2012);
    for _ in 0..8 {
        let x: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs = match spec.solve(&sol.a_tilde) {
            Ok(s) => x.iter().zip(s.iter()).map(|(u, v)| u * v).sum::<f64>(),
            Err(_) => f64::NAN,
        };
        let rhs: f64 = sol
            .active
            .positions()
            .zip(lambda.iter())
            .map(|(p, l)| x[p] * l)
            .sum();
        let scale = sol.a_tilde.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if !((lhs - rhs).abs() <= VERIFY_TOL * scale * k as f64) {
            fail("identity x' Sigma^-1 a_tilde = x_I' Sigma_II^-1 a_I fails");
            break;
        }
    }

    KktReport {
        ok: diagnostics.is_empty(),
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_all_ones() {
        for k in 2..6 {
            let spec = CorrelationSpec::identity(k).unwrap();
            let sol = solve(&spec, &vec![1.0; k]).unwrap();
            assert_eq!(sol.active, IndexSet::full(k));
            assert!(sol.inactive.is_empty());
            assert_eq!(sol.a_tilde, vec![1.0; k]);
            assert_relative_eq!(sol.value, k as f64);
        }
    }

    #[test]
    fn equicorrelated_pair() {
        for &rho in &[-0.9, -0.3, 0.0, 0.5, 0.95] {
            let spec = CorrelationSpec::equicorrelated(2, rho).unwrap();
            let sol = solve(&spec, &[1.0, 1.0]).unwrap();
            assert_eq!(sol.active.members(), &[1, 2]);
            assert_relative_eq!(sol.value, 2.0 / (1.0 + rho), max_relative = 1e-13);
        }
    }

    #[test]
    fn one_sided_direction() {
        let spec = CorrelationSpec::equicorrelated(2, 0.5).unwrap();
        let sol = solve(&spec, &[1.0, -5.0]).unwrap();
        assert_eq!(sol.active.members(), &[1]);
        assert_eq!(sol.inactive.members(), &[2]);
        assert_relative_eq!(sol.a_tilde[1], 0.5);
        assert_relative_eq!(sol.value, 1.0);
        assert!(sol.binding.is_empty());
        let brute = brute_force_solve(&spec, &[1.0, -5.0]).unwrap();
        assert_eq!(brute.active, sol.active);
    }

    #[test]
    fn brute_force_cases() {
        let spec = CorrelationSpec::identity(3).unwrap();
        let sol = brute_force_solve(&spec, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(sol.active.members(), &[1]);
        assert_relative_eq!(sol.value, 1.0);
        // the zero J-coordinates are exactly binding
        assert_eq!(sol.binding.members(), &[2, 3]);

        let spec = CorrelationSpec::equicorrelated(2, 0.9).unwrap();
        let sol = brute_force_solve(&spec, &[1.0, 0.5]).unwrap();
        assert_eq!(sol.active.members(), &[1]);
        assert_relative_eq!(sol.a_tilde[1], 0.9);
        assert_eq!(solve(&spec, &[1.0, 0.5]).unwrap().active, sol.active);
    }

    #[test]
    fn rejects_non_positive_direction() {
        let spec = CorrelationSpec::identity(3).unwrap();
        assert!(matches!(
            solve(&spec, &[0.0, 0.0, 0.0]),
            Err(Error::NoPositiveComponent)
        ));
        assert!(matches!(
            solve(&spec, &[-1.0, 0.0, -2.0]),
            Err(Error::NoPositiveComponent)
        ));
        assert!(matches!(
            brute_force_solve(&spec, &[-1.0, -1.0, -1.0]),
            Err(Error::NoPositiveComponent)
        ));
        assert!(matches!(
            solve(&spec, &[1.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kkt_accepts_solutions_and_rejects_tampering() {
        let spec = CorrelationSpec::equicorrelated(4, 0.3).unwrap();
        let a = [1.0, 0.4, -0.2, 2.0];
        let sol = solve(&spec, &a).unwrap();
        assert!(verify_kkt(&spec, &a, &sol).ok);

        let id = CorrelationSpec::identity(3).unwrap();
        let a = [1.0; 3];
        let mut sol = solve(&id, &a).unwrap();
        sol.a_tilde[0] = 2.0;
        let report = verify_kkt(&id, &a, &sol);
        assert!(!report.ok);

        let spec = CorrelationSpec::equicorrelated(2, 0.5).unwrap();
        let a = [1.0, -5.0];
        let wrong = QpSolution::from_index_set(&spec, &a, IndexSet::full(2)).unwrap();
        let report = verify_kkt(&spec, &a, &wrong);
        assert!(!report.ok);
        assert!(
            report
                .diagnostics
                .iter()
                .any(|d| d == "lambda_I not positive"),
            "{:?}",
            report.diagnostics
        );
    }

    #[test]
    fn scaling_law() {
        let spec = CorrelationSpec::equicorrelated(3, -0.2).unwrap();
        let a = [1.0, 0.3, -0.4];
        let base = solve(&spec, &a).unwrap();
        for &t in &[0.01, 2.5, 1e4] {
            let scaled: Vec<f64> = a.iter().map(|v| t * v).collect();
            let sol = solve(&spec, &scaled).unwrap();
            assert_eq!(sol.active, base.active);
            for (u, v) in sol.a_tilde.iter().zip(&base.a_tilde) {
                assert_relative_eq!(*u, t * v, max_relative = 1e-12);
            }
            assert_relative_eq!(sol.value, t * t * base.value, max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_direction_has_at_least_two_active() {
        let spec = CorrelationSpec::equicorrelated(5, 0.9).unwrap();
        let sol = solve(&spec, &[2.0; 5]).unwrap();
        assert!(sol.m() >= 2);
    }

    #[test]
    fn negative_correlation_can_keep_negative_component_active() {
        // Σ⁻¹a > 0, so the minimum is at a itself although a₂ < 0
        let spec = CorrelationSpec::equicorrelated(2, -0.5).unwrap();
        let a = [1.0, -0.3];
        let sol = solve(&spec, &a).unwrap();
        assert_eq!(sol.active.members(), &[1, 2]);
        assert_eq!(brute_force_solve(&spec, &a).unwrap().active, sol.active);
        assert!(verify_kkt(&spec, &a, &sol).ok);
    }
}
