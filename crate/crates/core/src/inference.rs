//! Confidence intervals, Wald and likelihood-ratio tests, and information
//! criteria on top of a completed fit.
//!
//! The asymptotic covariance of the estimates is `F(θ̂)⁻¹`; the inverse goes
//! through the symmetric eigendecomposition and is refused (rather than
//! pseudo-inverted) when an eigenvalue falls below `1e-12 · trace`.

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::special::{chi_square_sf, normal_quantile};
use nalgebra::{DMatrix, DVector};

/// One coefficient row of a fit report.
#[derive(Debug, Clone)]
pub struct CoefficientSummary {
    pub label: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LikelihoodRatioTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `F(θ̂)⁻¹` via the symmetric eigendecomposition.
pub fn fisher_inverse(fit: &FitResult) -> Result<DMatrix<f64>> {
    let eigen = fit.fisher.clone().symmetric_eigen();
    let trace = fit.fisher.trace();
    let floor = 1e-12 * trace.max(f64::MIN_POSITIVE);
    if eigen.eigenvalues.iter().any(|&ev| ev <= floor) {
        return Err(Error::Singular(
            "information matrix is singular; standard errors are unavailable".into(),
        ));
    }
    let inv_vals = DVector::from_iterator(
        eigen.eigenvalues.len(),
        eigen.eigenvalues.iter().map(|&ev| 1.0 / ev),
    );
    let scaled = &eigen.eigenvectors * DMatrix::from_diagonal(&inv_vals);
    Ok(scaled * eigen.eigenvectors.transpose())
}

/// Per-coefficient `(1-α)` confidence intervals from the diagonal of
/// `F(θ̂)⁻¹`.
pub fn wald_ci(fit: &FitResult, alpha: f64) -> Result<Vec<CoefficientSummary>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let cov = fisher_inverse(fit)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok((0..fit.theta.len())
        .map(|i| {
            let se = cov[(i, i)].max(0.0).sqrt();
            CoefficientSummary {
                label: fit
                    .param_labels
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| format!("theta{}", i + 1)),
                estimate: fit.theta[i],
                std_error: se,
                lower: fit.theta[i] - z * se,
                upper: fit.theta[i] + z * se,
            }
        })
        .collect())
}

/// Wald test of `H₀: θ = θ₀`, `W = (θ̂-θ₀)ᵀ F(θ̂) (θ̂-θ₀) ~ χ²_p`.
pub fn wald_test(fit: &FitResult, theta0: &DVector<f64>) -> Result<WaldTest> {
    if theta0.len() != fit.theta.len() {
        return Err(Error::InvalidModel(format!(
            "theta0 has length {}, fit has {} parameters",
            theta0.len(),
            fit.theta.len()
        )));
    }
    let diff = &fit.theta - theta0;
    let statistic = (diff.transpose() * &fit.fisher * &diff)[(0, 0)];
    let df = fit.theta.len();
    Ok(WaldTest {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64),
    })
}

/// Likelihood-ratio test of a nested pair: `Λ = 2(l_full - l_reduced)` on
/// `p_full - p_reduced` degrees of freedom. A negative Λ beyond small slack
/// signals that one of the fits failed to maximize.
pub fn lrt(full: &FitResult, reduced: &FitResult) -> Result<LikelihoodRatioTest> {
    if reduced.n_params() > full.n_params() {
        return Err(Error::InvalidModel(format!(
            "reduced model has {} parameters, more than the full model's {}",
            reduced.n_params(),
            full.n_params()
        )));
    }
    let statistic = 2.0 * (full.loglik - reduced.loglik);
    if statistic < -1e-8 {
        return Err(Error::InvalidModel(format!(
            "negative likelihood-ratio statistic {statistic:.3e}; the full-model fit did not dominate"
        )));
    }
    let statistic = statistic.max(0.0);
    let df = full.n_params() - reduced.n_params();
    let p_value = if df == 0 {
        1.0
    } else {
        chi_square_sf(statistic, df as f64)
    };
    Ok(LikelihoodRatioTest {
        statistic,
        df,
        p_value,
    })
}

/// `AIC = -2l + 2p` and `BIC = -2l + p·log n`.
pub fn aic_bic(loglik: f64, p: usize, n: u64) -> (f64, f64) {
    let aic = -2.0 * loglik + 2.0 * p as f64;
    let bic = -2.0 * loglik + (n as f64).ln() * p as f64;
    (aic, bic)
}
