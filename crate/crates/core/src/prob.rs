//! Maps between transformed probabilities ρ, linear predictors η, and
//! category probabilities π, plus the feasibility test on parameter vectors.
//!
//! A parameter vector θ is feasible when, at every observed setting, `D⁻¹`
//! exists and every coordinate of `D⁻¹b` is strictly positive; this is
//! exactly what keeps all category probabilities inside `(0, 1)`. The
//! baseline, adjacent, and continuation families are feasible everywhere,
//! and the cumulative family reduces to "ρ strictly increasing", so those
//! fast paths skip the solve.

use crate::design::DesignSpec;
use crate::error::{Error, InfeasibilityCause, Result};
use crate::model::{Family, ModelSpec};
use nalgebra::DVector;

/// Per-setting feasibility verdicts for one θ.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// `(setting index, cause)` for each violating setting.
    pub failures: Vec<(usize, InfeasibilityCause)>,
}

/// Category probabilities (length `J`, summing to one) from transformed
/// probabilities ρ. Errors when ρ is infeasible for the family.
pub fn pi_from_rho(spec: &ModelSpec, rho: &DVector<f64>) -> Result<DVector<f64>> {
    let v = spec.dinv_b(rho)?;
    if let Some(coordinate) = v.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Infeasible {
            setting: None,
            cause: InfeasibilityCause::NonPositive { coordinate },
        });
    }
    let denom = 1.0 + v.sum();
    let mut pi = DVector::zeros(spec.j());
    for idx in 0..spec.n_ratios() {
        pi[idx] = v[idx] / denom;
    }
    pi[spec.j() - 1] = 1.0 / denom;
    Ok(pi)
}

/// Transformed probabilities ρ from a full probability vector (length `J`).
pub fn rho_from_pi(spec: &ModelSpec, pi_bar: &DVector<f64>) -> Result<DVector<f64>> {
    let j = spec.j();
    if pi_bar.len() != j {
        return Err(Error::InvalidModel(format!(
            "expected {} category probabilities, got {}",
            j,
            pi_bar.len()
        )));
    }
    for &p in pi_bar.iter() {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "category probabilities must lie in (0,1), got {p}"
            )));
        }
    }
    let total: f64 = pi_bar.sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Domain(format!(
            "category probabilities must sum to 1, got {total}"
        )));
    }
    let lrb = spec.lrb();
    let pi_head = pi_bar.rows(0, j - 1);
    let pi_last = pi_bar[j - 1];
    let mut rho = DVector::zeros(j - 1);
    for row in 0..j - 1 {
        let num: f64 = (0..j - 1).map(|c| lrb.l[(row, c)] * pi_head[c]).sum();
        let den: f64 =
            (0..j - 1).map(|c| lrb.r[(row, c)] * pi_head[c]).sum::<f64>() + pi_last * lrb.b[row];
        rho[row] = num / den;
    }
    Ok(rho)
}

/// Transformed probabilities at a single covariate vector: `η = Xθ`, then
/// `ρ_j = g_j⁻¹(η_j)`.
pub fn rho_at(
    spec: &ModelSpec,
    design: &DesignSpec,
    theta: &DVector<f64>,
    x: &[f64],
) -> Result<DVector<f64>> {
    let xi = design.build_x(x)?;
    let eta = xi * theta;
    Ok(DVector::from_iterator(
        spec.n_ratios(),
        eta.iter()
            .zip(spec.links())
            .map(|(&e, link)| link.inverse(e)),
    ))
}

/// The direct feasibility test on one ρ: does `D⁻¹` exist with `D⁻¹b`
/// entrywise positive? Returns the violation cause, if any.
pub fn rho_violation(spec: &ModelSpec, rho: &DVector<f64>) -> Option<InfeasibilityCause> {
    match spec.dinv_b(rho) {
        Err(Error::Infeasible { cause, .. }) => Some(cause),
        Err(_) => Some(InfeasibilityCause::SingularD),
        Ok(v) => v
            .iter()
            .position(|&x| !(x > 0.0))
            .map(|coordinate| InfeasibilityCause::NonPositive { coordinate }),
    }
}

/// Feasibility of θ across all settings, using the family's fast path where
/// one exists and the generic `D⁻¹b` positivity test otherwise.
pub fn check_feasible(
    spec: &ModelSpec,
    design: &DesignSpec,
    theta: &DVector<f64>,
    settings: &[Vec<f64>],
) -> Result<FeasibilityReport> {
    if spec.family().always_feasible() {
        return Ok(FeasibilityReport {
            feasible: true,
            failures: Vec::new(),
        });
    }
    let mut failures = Vec::new();
    for (i, x) in settings.iter().enumerate() {
        let rho = rho_at(spec, design, theta, x)?;
        let violation = match spec.family() {
            // Monotone-ρ test: D⁻¹b entries are successive differences.
            Family::Cumulative => rho
                .as_slice()
                .windows(2)
                .position(|w| !(w[0] < w[1]))
                .map(|idx| InfeasibilityCause::NonPositive { coordinate: idx + 1 }),
            _ => rho_violation(spec, &rho),
        };
        if let Some(cause) = violation {
            failures.push((i, cause));
        }
    }
    Ok(FeasibilityReport {
        feasible: failures.is_empty(),
        failures,
    })
}
