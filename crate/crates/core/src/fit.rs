//! Maximum likelihood estimation by Fisher scoring.
//!
//! The update is `θ ← θ + δ^s F(θ)⁻¹ ∂l/∂θᵀ`, with the power `s` raised
//! until the candidate is feasible and improves the log-likelihood by at
//! least the relative tolerance; convergence is declared when the scaled
//! step length drops below that tolerance. When the smallest eigenvalue of
//! `F` falls under `lambda0`, the solve uses `F + λI` with
//! `λ = lambda0 - min eigenvalue` (a trust-region style shift), which keeps
//! the direction an ascent direction even when `F` is numerically singular.
//!
//! The starting point is a least-squares fit to smoothed empirical
//! transforms; if that lands outside the feasible region it is pulled back
//! along the segment toward an intercept-anchored point that is feasible by
//! construction.

use crate::data::Dataset;
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::likelihood::Evaluator;
use crate::model::ModelSpec;
use crate::prob::{check_feasible, pi_from_rho, rho_from_pi};
use nalgebra::{DMatrix, DVector};

/// Tuning knobs of the scoring loop.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Relative tolerance ε for both the step-size stop rule and the minimum
    /// accepted improvement.
    pub epsilon: f64,
    /// Backtracking factor δ in (0, 1).
    pub delta: f64,
    /// Eigenvalue floor λ₀ that triggers the trust-region shift.
    pub lambda0: f64,
    pub max_iter: usize,
    pub max_backtrack: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            epsilon: 1e-6,
            delta: 0.5,
            lambda0: 1e-6,
            max_iter: 200,
            max_backtrack: 50,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidModel("epsilon must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidModel("delta must lie in (0,1)".into()));
        }
        if !(self.lambda0 > 0.0) {
            return Err(Error::InvalidModel("lambda0 must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted iterate of the scoring loop.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub iteration: usize,
    pub loglik: f64,
    pub step_norm: f64,
}

/// A completed fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: DVector<f64>,
    pub loglik: f64,
    /// Expected information at `theta`.
    pub fisher: DMatrix<f64>,
    /// Fitted category probabilities, `m × J`.
    pub fitted: DMatrix<f64>,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    pub warnings: Vec<String>,
    pub param_labels: Vec<String>,
    /// Total observation count `n`.
    pub n_total: u64,
}

impl FitResult {
    pub fn n_params(&self) -> usize {
        self.theta.len()
    }
}

/// Least-squares initial estimate: smooth the empirical probabilities as
/// `(y_ij + 1)/(n_i + J)`, push them through the family transform and the
/// links, and regress the resulting η on the stacked model matrices via the
/// Moore-Penrose pseudo-inverse. The result may be infeasible.
pub fn initial_theta(
    spec: &ModelSpec,
    design: &DesignSpec,
    data: &Dataset,
) -> Result<DVector<f64>> {
    let q = spec.n_ratios();
    let m = data.m();
    let p = design.n_params();
    let mut stacked_x = DMatrix::zeros(m * q, p);
    let mut stacked_eta = DVector::zeros(m * q);
    for i in 0..m {
        let n_i = data.n_i(i) as f64;
        let j = spec.j() as f64;
        let pi = DVector::from_iterator(
            spec.j(),
            data.counts()[i].iter().map(|&y| (y as f64 + 1.0) / (n_i + j)),
        );
        let rho = rho_from_pi(spec, &pi)?;
        let xi = design.build_x(&data.settings()[i])?;
        for r in 0..q {
            stacked_eta[i * q + r] = spec.links()[r].eval(rho[r])?;
            for c in 0..p {
                stacked_x[(i * q + r, c)] = xi[(r, c)];
            }
        }
    }
    // SVD least squares is exactly the (XᵀX)⁻Xᵀy pseudo-inverse solution.
    let svd = stacked_x.svd(true, true);
    svd.solve(&stacked_eta, 1e-12)
        .map_err(|e| Error::Singular(format!("least-squares initialization failed: {e}")))
}

/// Pull an initial estimate back into the feasible region.
///
/// Returns the input unchanged when it is already feasible. Otherwise an
/// anchor θ⁽⁰⁰⁾ is built from pooled category proportions: intercept
/// coordinates carry the pooled transforms, everything else is zero, which
/// is feasible by construction. The reported point is `θ⁽⁰⁰⁾ + δ^{s*}(θ⁰ -
/// θ⁽⁰⁰⁾)` for the smallest feasible `s*`. Categories without an intercept
/// hold their transform at `g⁻¹(0)` instead.
pub fn feasible_initial(
    spec: &ModelSpec,
    design: &DesignSpec,
    data: &Dataset,
    theta0: &DVector<f64>,
    options: &FitOptions,
) -> Result<(DVector<f64>, Vec<String>)> {
    let mut warnings = Vec::new();
    if check_feasible(spec, design, theta0, data.settings())?.feasible {
        return Ok((theta0.clone(), warnings));
    }

    let q = spec.n_ratios();
    let j = spec.j();
    // Pooled proportions over all settings, smoothed.
    let n: u64 = data.total_n();
    let m = data.m() as f64;
    let mut pooled = DVector::zeros(j);
    for cat in 0..j {
        let total: u64 = data.counts().iter().map(|row| row[cat]).sum();
        pooled[cat] = (total as f64 + m) / (n as f64 + m * j as f64);
    }
    let pooled_rho = rho_from_pi(spec, &pooled)?;

    let intercepts = design.intercept_params();
    let no_intercept: Vec<usize> = (0..q).filter(|&r| intercepts[r].is_none()).collect();

    // Transforms anchoring the intercepts: pooled values where an intercept
    // exists, g⁻¹(0) where none does. The latter must still admit valid
    // category probabilities.
    let mut rho_anchor = pooled_rho.clone();
    for &r in &no_intercept {
        rho_anchor[r] = spec.links()[r].inverse(0.0);
    }
    if !no_intercept.is_empty() {
        pi_from_rho(spec, &rho_anchor).map_err(|_| {
            Error::NoFeasibleStart(format!(
                "categories {:?} have no intercept and g⁻¹(0) there is incompatible with the pooled proportions",
                no_intercept.iter().map(|r| r + 1).collect::<Vec<_>>()
            ))
        })?;
    }

    let mut eta_anchor = DVector::zeros(q);
    for r in 0..q {
        eta_anchor[r] = spec.links()[r].eval(rho_anchor[r])?;
    }

    let mut theta_anchor = DVector::zeros(design.n_params());
    if design.has_shared_intercept() {
        // Shared intercepts cannot reproduce distinct pooled transforms
        // exactly; anchor the shared coordinate at the mean of its members.
        warnings.push(
            "shared intercept: anchor uses the mean pooled transform of its categories"
                .to_string(),
        );
        let mut sums: Vec<(f64, f64)> = vec![(0.0, 0.0); design.n_params()];
        for r in 0..q {
            if let Some(idx) = intercepts[r] {
                sums[idx].0 += eta_anchor[r];
                sums[idx].1 += 1.0;
            }
        }
        for (idx, (sum, count)) in sums.into_iter().enumerate() {
            if count > 0.0 {
                theta_anchor[idx] = sum / count;
            }
        }
    } else {
        for r in 0..q {
            if let Some(idx) = intercepts[r] {
                theta_anchor[idx] = eta_anchor[r];
            }
        }
    }

    if !check_feasible(spec, design, &theta_anchor, data.settings())?.feasible {
        return Err(Error::NoFeasibleStart(
            "the intercept-anchored starting point is itself infeasible".into(),
        ));
    }

    let delta_theta = theta0 - &theta_anchor;
    let mut scale = 1.0;
    for s in 0..=options.max_backtrack {
        let candidate = &theta_anchor + &delta_theta * scale;
        if check_feasible(spec, design, &candidate, data.settings())?.feasible {
            if s > 0 {
                warnings.push(format!(
                    "initial estimate was infeasible; pulled back with step {scale:.3e}"
                ));
            }
            return Ok((candidate, warnings));
        }
        scale *= options.delta;
    }
    Err(Error::NoFeasibleStart(format!(
        "no feasible point found after {} halvings toward the anchor",
        options.max_backtrack
    )))
}

/// Solve `(F + λI) Δ = g` through the symmetric eigendecomposition, shifting
/// by `λ = λ₀ - min eig` whenever the smallest eigenvalue is below λ₀.
fn scoring_direction(
    fisher: &DMatrix<f64>,
    score: &DVector<f64>,
    lambda0: f64,
) -> (DVector<f64>, bool) {
    let eigen = fisher.clone().symmetric_eigen();
    let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let shift = if min_eig < lambda0 { lambda0 - min_eig } else { 0.0 };
    let coords = eigen.eigenvectors.transpose() * score;
    let scaled = DVector::from_iterator(
        coords.len(),
        coords
            .iter()
            .zip(eigen.eigenvalues.iter())
            .map(|(&c, &ev)| c / (ev + shift)),
    );
    (&eigen.eigenvectors * scaled, shift > 0.0)
}

/// Fit by Fisher scoring from the feasible initial point.
pub fn fisher_scoring(
    spec: &ModelSpec,
    design: &DesignSpec,
    data: &Dataset,
    options: &FitOptions,
) -> Result<FitResult> {
    options.validate()?;
    let evaluator = Evaluator::new(spec, design, data)?;
    let mut warnings = Vec::new();

    let h = design.build_h(data.settings())?;
    let rank = DesignSpec::check_rank(&h);
    if !rank.full_row_rank {
        warnings.push(format!(
            "stacked predictor matrix has rank {} < p = {}; the information matrix is singular and some parameters are not estimable",
            rank.rank,
            design.n_params()
        ));
    }

    let theta0 = initial_theta(spec, design, data)?;
    let (mut theta, start_warnings) = feasible_initial(spec, design, data, &theta0, options)?;
    warnings.extend(start_warnings);

    let mut loglik = evaluator.loglik(&theta)?;
    let mut trace = vec![TracePoint {
        iteration: 0,
        loglik,
        step_norm: 0.0,
    }];
    let mut converged = false;
    let mut used_shift = false;
    let mut iterations = 0;

    'outer: for iter in 1..=options.max_iter {
        let info = evaluator.score_and_info(&theta)?;
        let (direction, shifted) = scoring_direction(&info.fisher, &info.score, options.lambda0);
        used_shift |= shifted;
        let dir_norm = direction.norm();
        let theta_scale = theta.norm().max(1.0);

        let mut step = 1.0;
        for _ in 0..=options.max_backtrack {
            if step * dir_norm / theta_scale < options.epsilon {
                converged = true;
                break 'outer;
            }
            let candidate = &theta + &direction * step;
            match evaluator.loglik(&candidate) {
                Err(Error::Infeasible { .. }) => {
                    step *= options.delta;
                    continue;
                }
                Err(other) => return Err(other),
                Ok(candidate_loglik) => {
                    let rel = (candidate_loglik - loglik) / loglik.abs().max(1.0);
                    if rel < options.epsilon {
                        step *= options.delta;
                        continue;
                    }
                    theta = candidate;
                    loglik = candidate_loglik;
                    iterations = iter;
                    trace.push(TracePoint {
                        iteration: iter,
                        loglik,
                        step_norm: step * dir_norm,
                    });
                    continue 'outer;
                }
            }
        }
        // Backtracking exhausted without triggering the step-size rule.
        warnings.push(format!(
            "backtracking limit reached at iteration {iter}; stopping at the best iterate"
        ));
        break;
    }

    if !converged && iterations >= options.max_iter {
        warnings.push(format!(
            "no convergence within {} iterations; reporting the best iterate",
            options.max_iter
        ));
    }
    if used_shift {
        warnings.push("information matrix required an eigenvalue shift at some iterate".into());
    }

    let info = evaluator.score_and_info(&theta)?;
    let fitted = evaluator.fitted(&theta)?;
    let p = design.n_params();
    let n = data.total_n();
    let (aic, bic) = crate::inference::aic_bic(loglik, p, n);
    Ok(FitResult {
        theta,
        loglik,
        fisher: info.fisher,
        fitted,
        aic,
        bic,
        converged,
        iterations,
        trace,
        warnings,
        param_labels: design.param_labels().to_vec(),
        n_total: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Term;
    use crate::link::Link;
    use crate::model::Family;

    fn vecd(values: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(values)
    }

    #[test]
    fn initial_theta_exact_for_saturated_intercept_model() {
        // Single setting, intercept-only npo: the stacked system is square,
        // so the smoothed transforms are reproduced exactly.
        let spec = ModelSpec::with_link(3, Family::Cumulative, Link::Logit).unwrap();
        let design = DesignSpec::po(2, vec![], &[]).unwrap();
        let data = Dataset::new(vec![], vec![vec![]], vec![vec![10, 20, 30]]).unwrap();
        let theta0 = initial_theta(&spec, &design, &data).unwrap();
        // Smoothed π = (11, 21, 31)/63; cumulative ρ = (11/63, 32/63).
        let rho1 = 11.0 / 63.0;
        let rho2 = 32.0 / 63.0;
        assert!((theta0[0] - Link::Logit.eval(rho1).unwrap()).abs() < 1e-10);
        assert!((theta0[1] - Link::Logit.eval(rho2).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn initial_theta_matches_ols_on_empirical_logits() {
        let spec = ModelSpec::with_link(2, Family::Baseline, Link::Logit).unwrap();
        let design = DesignSpec::npo(1, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let data = Dataset::new(
            vec!["x".into()],
            vec![vec![-1.0], vec![0.0], vec![1.0], vec![2.0]],
            vec![vec![3, 7], vec![5, 5], vec![8, 2], vec![9, 1]],
        )
        .unwrap();
        let theta0 = initial_theta(&spec, &design, &data).unwrap();

        // Independent ordinary least squares on the smoothed logits.
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        let m = data.m() as f64;
        for i in 0..data.m() {
            let x = data.settings()[i][0];
            let n_i = data.n_i(i) as f64;
            let p = (data.counts()[i][0] as f64 + 1.0) / (n_i + 2.0);
            let z = (p / (1.0 - p)).ln();
            sx += x;
            sy += z;
            sxx += x * x;
            sxy += x * z;
        }
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        let intercept = (sy - slope * sx) / m;
        assert!((theta0[0] - intercept).abs() < 1e-10);
        assert!((theta0[1] - slope).abs() < 1e-10);
    }

    #[test]
    fn initial_theta_uniform_counts() {
        // Equal counts across categories: smoothing preserves uniformity, so
        // the initial transforms equal g(ρ(uniform)).
        let spec = ModelSpec::with_link(3, Family::Continuation, Link::Logit).unwrap();
        let design = DesignSpec::po(2, vec![], &[]).unwrap();
        let data = Dataset::new(vec![], vec![vec![]], vec![vec![5, 5, 5]]).unwrap();
        let theta0 = initial_theta(&spec, &design, &data).unwrap();
        // Uniform π = 1/3 each: ρ₁ = 1/3, ρ₂ = 1/2.
        assert!((theta0[0] - Link::Logit.eval(1.0 / 3.0).unwrap()).abs() < 1e-10);
        assert!((theta0[1] - Link::Logit.eval(0.5).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn feasible_initial_passes_through_feasible_points() {
        let spec = ModelSpec::with_link(3, Family::Cumulative, Link::Logit).unwrap();
        let design = DesignSpec::po(2, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let data = Dataset::new(
            vec!["x".into()],
            vec![vec![0.0], vec![1.0]],
            vec![vec![5, 5, 5], vec![3, 6, 6]],
        )
        .unwrap();
        let theta = vecd(&[-0.5, 0.5, 0.2]);
        let options = FitOptions::default();
        let (out, warnings) = feasible_initial(&spec, &design, &data, &theta, &options).unwrap();
        assert_eq!(out, theta);
        assert!(warnings.is_empty());
    }

    #[test]
    fn feasible_initial_repairs_infeasible_start() {
        // npo cumulative model with a wildly infeasible θ⁰ (reversed
        // intercepts). The pullback must land in the feasible region.
        let spec = ModelSpec::with_link(3, Family::Cumulative, Link::Logit).unwrap();
        let design = DesignSpec::npo(2, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let data = Dataset::new(
            vec!["x".into()],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![vec![5, 5, 5], vec![3, 6, 6], vec![2, 5, 8]],
        )
        .unwrap();
        let bad = vecd(&[2.0, 1.0, -2.0, -1.5]);
        assert!(!check_feasible(&spec, &design, &bad, data.settings())
            .unwrap()
            .feasible);
        let options = FitOptions::default();
        let (repaired, warnings) =
            feasible_initial(&spec, &design, &data, &bad, &options).unwrap();
        assert!(check_feasible(&spec, &design, &repaired, data.settings())
            .unwrap()
            .feasible);
        assert!(!warnings.is_empty());
    }

    #[test]
    fn scoring_converges_on_binary_logit() {
        let spec = ModelSpec::with_link(2, Family::Baseline, Link::Logit).unwrap();
        let design = DesignSpec::npo(1, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let data = Dataset::new(
            vec!["x".into()],
            vec![vec![-1.0], vec![0.0], vec![1.0], vec![2.0]],
            vec![vec![3, 7], vec![5, 5], vec![8, 2], vec![9, 1]],
        )
        .unwrap();
        // The stopping rule bounds the log-likelihood gap by ε·max(1,|l|),
        // so the residual score scales like √(ε); a tight ε is needed for a
        // tight first-order condition.
        let options = FitOptions {
            epsilon: 1e-10,
            ..FitOptions::default()
        };
        let fit = fisher_scoring(&spec, &design, &data, &options).unwrap();
        assert!(fit.converged);
        let info = crate::likelihood::score_and_info(&spec, &design, &fit.theta, &data).unwrap();
        assert!(info.score.abs().max() <= 1e-4 * fit.loglik.abs().max(1.0));
        // Monotone ascent along the trace.
        for w in fit.trace.windows(2) {
            assert!(w[1].loglik > w[0].loglik);
        }
        // All fitted probabilities strictly inside (0,1).
        assert!(fit.fitted.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn scoring_preserves_feasibility_on_cumulative_model() {
        let spec = ModelSpec::with_link(4, Family::Cumulative, Link::Probit).unwrap();
        let design = DesignSpec::po(3, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let theta_star = vecd(&[-1.0, 0.0, 1.0, 0.6]);
        let settings: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.5 - 1.0]).collect();
        let data =
            crate::data::simulate(&spec, &design, &theta_star, &settings, &[200; 5], 11).unwrap();
        let fit = fisher_scoring(&spec, &design, &data, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(
            check_feasible(&spec, &design, &fit.theta, data.settings())
                .unwrap()
                .feasible
        );
        // Estimates should land near the simulation truth at this n.
        assert!((&fit.theta - &theta_star).abs().max() < 0.3);
    }

    #[test]
    fn rank_deficient_design_warns_and_still_ascends() {
        // Duplicated slope column: H cannot have full row rank, the shift
        // path engages, and the fit still reports a monotone trace.
        let columns = vec![
            crate::design::TermColumn {
                term: Term::Intercept,
                groups: vec![vec![0]],
            },
            crate::design::TermColumn {
                term: Term::Linear(0),
                groups: vec![vec![0]],
            },
            crate::design::TermColumn {
                term: Term::Linear(0),
                groups: vec![vec![0]],
            },
        ];
        let design = DesignSpec::from_columns(1, vec!["x".into()], columns).unwrap();
        let spec = ModelSpec::with_link(2, Family::Baseline, Link::Logit).unwrap();
        let data = Dataset::new(
            vec!["x".into()],
            vec![vec![-1.0], vec![0.5], vec![2.0]],
            vec![vec![3, 7], vec![6, 4], vec![9, 1]],
        )
        .unwrap();
        let fit = fisher_scoring(&spec, &design, &data, &FitOptions::default()).unwrap();
        assert!(fit.warnings.iter().any(|w| w.contains("rank")));
        for w in fit.trace.windows(2) {
            assert!(w[1].loglik > w[0].loglik);
        }
    }

    #[test]
    fn max_iter_exhaustion_reports_unconverged_best_iterate() {
        let spec = ModelSpec::with_link(2, Family::Baseline, Link::Logit).unwrap();
        let design = DesignSpec::npo(1, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let data = Dataset::new(
            vec!["x".into()],
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            vec![vec![30, 70], vec![50, 50], vec![80, 20]],
        )
        .unwrap();
        let options = FitOptions {
            max_iter: 1,
            ..FitOptions::default()
        };
        let fit = fisher_scoring(&spec, &design, &data, &options).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!(fit.warnings.iter().any(|w| w.contains("convergence")));
    }
}
