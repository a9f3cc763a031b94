//! Multinomial log-likelihood, exact score vector, and expected (Fisher)
//! information.
//!
//! The chain rule through π(ρ(η(θ))) factors per setting as
//! `∂π̄/∂θᵀ = C X` with `C = E D⁻¹ diag((Lπ) ∘ ρ⁻² ∘ (g⁻¹)'(η))` and
//! `E = [I; 0ᵀ] - π̄ 1ᵀ`. The score is `Σ yᵀ diag(π̄)⁻¹ C X` and the
//! information `F = Σ n_i Xᵀ Cᵀ diag(π̄)⁻¹ C X`; both are exact, no
//! numerical differentiation is involved anywhere.

use crate::data::Dataset;
use crate::design::DesignSpec;
use crate::error::{Error, InfeasibilityCause, Result};
use crate::model::ModelSpec;
use crate::special::ln_gamma;
use nalgebra::{DMatrix, DVector};

/// Log-likelihood, score, and Fisher information at one θ.
#[derive(Debug, Clone)]
pub struct ScoreInfo {
    pub loglik: f64,
    pub score: DVector<f64>,
    pub fisher: DMatrix<f64>,
}

/// Per-setting ranks and the positive-definiteness verdict for F.
#[derive(Debug, Clone)]
pub struct RankDiagnostics {
    /// `(rank F_i, rank X_i)` per setting; the two are equal at feasible θ.
    pub per_setting: Vec<(usize, usize)>,
    pub h_full_row_rank: bool,
    pub fisher_min_eigenvalue: f64,
    pub positive_definite: bool,
}

/// Everything fixed across θ evaluations for one (model, design, dataset)
/// triple: validated dimensions, prebuilt model matrices, and the factorial
/// constant of the log-likelihood.
pub struct Evaluator<'a> {
    spec: &'a ModelSpec,
    design: &'a DesignSpec,
    data: &'a Dataset,
    model_matrices: Vec<DMatrix<f64>>,
    constant: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(spec: &'a ModelSpec, design: &'a DesignSpec, data: &'a Dataset) -> Result<Self> {
        if design.n_categories() != spec.n_ratios() {
            return Err(Error::InvalidDesign(format!(
                "design models {} categories but the family has J-1 = {}",
                design.n_categories(),
                spec.n_ratios()
            )));
        }
        if data.j() != spec.j() {
            return Err(Error::InvalidData(format!(
                "dataset has {} response categories, model expects {}",
                data.j(),
                spec.j()
            )));
        }
        if data.covariate_dim() != design.covariate_dim() {
            return Err(Error::InvalidData(format!(
                "dataset has {} covariates, design expects {}",
                data.covariate_dim(),
                design.covariate_dim()
            )));
        }
        let model_matrices = design.build_all(data.settings())?;
        // log n_i! - Σ_j log y_ij!, summed over settings, via log-gamma so
        // large counts stay in range.
        let mut constant = 0.0;
        for i in 0..data.m() {
            constant += ln_gamma(data.n_i(i) as f64 + 1.0);
            for &y in data.counts()[i].iter() {
                constant -= ln_gamma(y as f64 + 1.0);
            }
        }
        Ok(Evaluator {
            spec,
            design,
            data,
            model_matrices,
            constant,
        })
    }

    pub fn n_params(&self) -> usize {
        self.design.n_params()
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn design(&self) -> &DesignSpec {
        self.design
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn model_matrices(&self) -> &[DMatrix<f64>] {
        &self.model_matrices
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.design.n_params() {
            return Err(Error::InvalidDesign(format!(
                "theta has length {}, design has {} parameters",
                theta.len(),
                self.design.n_params()
            )));
        }
        Ok(())
    }

    /// η, ρ and π̄ at one setting; errors with the setting index when θ is
    /// infeasible there.
    fn setting_state(
        &self,
        theta: &DVector<f64>,
        i: usize,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let eta = &self.model_matrices[i] * theta;
        let rho = DVector::from_iterator(
            self.spec.n_ratios(),
            eta.iter()
                .zip(self.spec.links())
                .map(|(&e, link)| link.inverse(e)),
        );
        let v = self.spec.dinv_b(&rho).map_err(|e| at_setting(e, i))?;
        if let Some(coordinate) = v.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::Infeasible {
                setting: Some(i),
                cause: InfeasibilityCause::NonPositive { coordinate },
            });
        }
        let denom = 1.0 + v.sum();
        let j = self.spec.j();
        let mut pi_bar = DVector::zeros(j);
        for idx in 0..j - 1 {
            pi_bar[idx] = v[idx] / denom;
        }
        pi_bar[j - 1] = 1.0 / denom;
        Ok((eta, rho, pi_bar))
    }

    /// Log-likelihood at θ; errors when θ is infeasible.
    pub fn loglik(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_theta(theta)?;
        let mut total = self.constant;
        for i in 0..self.data.m() {
            let (_, _, pi_bar) = self.setting_state(theta, i)?;
            for (j, &y) in self.data.counts()[i].iter().enumerate() {
                if y > 0 {
                    total += y as f64 * pi_bar[j].ln();
                }
            }
        }
        Ok(total)
    }

    /// Fitted category probabilities, `m × J`.
    pub fn fitted(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        let mut out = DMatrix::zeros(self.data.m(), self.spec.j());
        for i in 0..self.data.m() {
            let (_, _, pi_bar) = self.setting_state(theta, i)?;
            out.row_mut(i).copy_from(&pi_bar.transpose());
        }
        Ok(out)
    }

    /// The derivative matrix `∂π̄_i/∂θᵀ = C_i X_i` (J × p) at one setting.
    pub fn d_pi_d_theta(&self, theta: &DVector<f64>, i: usize) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        let (eta, rho, pi_bar) = self.setting_state(theta, i)?;
        let c = self.c_matrix(&eta, &rho, &pi_bar, i)?;
        Ok(c * &self.model_matrices[i])
    }

    /// The `(J-1) × (J-1)` matrix `U_i = C_iᵀ diag(π̄_i)⁻¹ C_i`.
    pub fn u_matrix(&self, theta: &DVector<f64>, i: usize) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        let (eta, rho, pi_bar) = self.setting_state(theta, i)?;
        let c = self.c_matrix(&eta, &rho, &pi_bar, i)?;
        let mut scaled = c.clone();
        for row in 0..self.spec.j() {
            let w = 1.0 / pi_bar[row];
            scaled.row_mut(row).scale_mut(w);
        }
        Ok(c.transpose() * scaled)
    }

    /// `C_i = E_i D_i⁻¹ diag((Lπ) ∘ ρ⁻² ∘ (g⁻¹)'(η))`, J × (J-1).
    fn c_matrix(
        &self,
        eta: &DVector<f64>,
        rho: &DVector<f64>,
        pi_bar: &DVector<f64>,
        i: usize,
    ) -> Result<DMatrix<f64>> {
        let q = self.spec.n_ratios();
        let j = self.spec.j();
        let dinv = self.spec.dinv(rho).map_err(|e| at_setting(e, i))?;
        let pi_head = pi_bar.rows(0, q).clone_owned();
        let l_pi = &self.spec.lrb().l * pi_head;
        let mut weights = DVector::zeros(q);
        for idx in 0..q {
            let deriv = self.spec.links()[idx].inverse_deriv(eta[idx]);
            weights[idx] = l_pi[idx] / (rho[idx] * rho[idx]) * deriv;
        }
        // E_i = [I; 0ᵀ] - π̄ 1ᵀ, applied without materializing E_i:
        // (E M)_{rj} = M_{rj} - π̄_r Σ_s M_{sj} for r < J-1, and the last row
        // is -π̄_J Σ_s M_{sj}.
        let m = {
            let mut m = dinv;
            for col in 0..q {
                for row in 0..q {
                    m[(row, col)] *= weights[col];
                }
            }
            m
        };
        let col_sums: Vec<f64> = (0..q).map(|col| m.column(col).sum()).collect();
        let mut c = DMatrix::zeros(j, q);
        for col in 0..q {
            for row in 0..q {
                c[(row, col)] = m[(row, col)] - pi_bar[row] * col_sums[col];
            }
            c[(j - 1, col)] = -pi_bar[j - 1] * col_sums[col];
        }
        Ok(c)
    }

    /// Log-likelihood, score, and Fisher information in one pass.
    pub fn score_and_info(&self, theta: &DVector<f64>) -> Result<ScoreInfo> {
        self.check_theta(theta)?;
        let p = self.design.n_params();
        let j = self.spec.j();
        let mut loglik = self.constant;
        let mut score = DVector::zeros(p);
        let mut fisher = DMatrix::zeros(p, p);
        for i in 0..self.data.m() {
            let (eta, rho, pi_bar) = self.setting_state(theta, i)?;
            let counts = &self.data.counts()[i];
            for (cat, &y) in counts.iter().enumerate() {
                if y > 0 {
                    loglik += y as f64 * pi_bar[cat].ln();
                }
            }
            let c = self.c_matrix(&eta, &rho, &pi_bar, i)?;
            let xi = &self.model_matrices[i];
            // diag(π̄)⁻¹ C once; reused by both the score and F_i.
            let mut c_scaled = c.clone();
            for row in 0..j {
                let w = 1.0 / pi_bar[row];
                c_scaled.row_mut(row).scale_mut(w);
            }
            let y_vec = DVector::from_iterator(j, counts.iter().map(|&y| y as f64));
            // yᵀ diag(π̄)⁻¹ C X, accumulated as Xᵀ (Cᵀ diag(π̄)⁻¹ y).
            let weights = c_scaled.transpose() * y_vec;
            score.gemv_tr(1.0, xi, &weights, 1.0);
            // F_i = Xᵀ (Cᵀ diag(π̄)⁻¹ C) X, weighted by n_i.
            let u = c.transpose() * &c_scaled;
            let ux = &u * xi;
            fisher.gemm_tr(self.data.n_i(i) as f64, xi, &ux, 1.0);
        }
        // Symmetrize away accumulation round-off.
        let fisher = (&fisher + fisher.transpose()) * 0.5;
        Ok(ScoreInfo {
            loglik,
            score,
            fisher,
        })
    }

    /// Rank of F_i and X_i per setting, plus the global verdict from the
    /// stacked predictor matrix.
    pub fn rank_diagnostics(&self, theta: &DVector<f64>) -> Result<RankDiagnostics> {
        self.check_theta(theta)?;
        let mut per_setting = Vec::with_capacity(self.data.m());
        for i in 0..self.data.m() {
            let (eta, rho, pi_bar) = self.setting_state(theta, i)?;
            let c = self.c_matrix(&eta, &rho, &pi_bar, i)?;
            let xi = &self.model_matrices[i];
            let mut c_scaled = c.clone();
            for row in 0..self.spec.j() {
                c_scaled.row_mut(row).scale_mut(1.0 / pi_bar[row]);
            }
            let fi = xi.transpose() * c.transpose() * c_scaled * xi;
            let f_rank = matrix_rank(&fi);
            let x_rank = matrix_rank(xi);
            per_setting.push((f_rank, x_rank));
        }
        let h = self.design.build_h(self.data.settings())?;
        let h_report = DesignSpec::check_rank(&h);
        let info = self.score_and_info(theta)?;
        let eigen = info.fisher.symmetric_eigen();
        let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(RankDiagnostics {
            per_setting,
            h_full_row_rank: h_report.full_row_rank,
            fisher_min_eigenvalue: min_eig,
            positive_definite: h_report.full_row_rank && min_eig > 0.0,
        })
    }
}

fn at_setting(e: Error, i: usize) -> Error {
    match e {
        Error::Infeasible { cause, .. } => Error::Infeasible {
            setting: Some(i),
            cause,
        },
        other => other,
    }
}

fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let svd = m.clone().svd(false, false);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if max_sv == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&sv| sv > 1e-10 * max_sv)
        .count()
}

/// Log-likelihood at θ (convenience wrapper over [`Evaluator`]).
pub fn loglik(
    spec: &ModelSpec,
    design: &DesignSpec,
    theta: &DVector<f64>,
    data: &Dataset,
) -> Result<f64> {
    Evaluator::new(spec, design, data)?.loglik(theta)
}

/// Score and information at θ (convenience wrapper over [`Evaluator`]).
pub fn score_and_info(
    spec: &ModelSpec,
    design: &DesignSpec,
    theta: &DVector<f64>,
    data: &Dataset,
) -> Result<ScoreInfo> {
    Evaluator::new(spec, design, data)?.score_and_info(theta)
}
