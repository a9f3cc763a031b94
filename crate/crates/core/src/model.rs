//! Model families encoded as `(L, R, b)` triples.
//!
//! Every supported family writes the transformed probabilities as
//! `ρ_j = L_jᵀπ / (R_jᵀπ + π_J b_j)` with constant `(J-1)×(J-1)` matrices
//! `L`, `R` and a constant vector `b`. Recovering `π` from `ρ` goes through
//! `D = diag(ρ⁻¹)L - R`; this module provides both the per-family
//! closed-form `D⁻¹` and `D⁻¹b` and a generic partial-pivot solve used where
//! no closed form exists.

use crate::error::{Error, Result};
use crate::link::Link;
use nalgebra::{DMatrix, DVector};

/// Sub-family governing the ordinal group of a two-group model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoGroupKind {
    Cumulative,
    Adjacent,
    Continuation,
}

impl TwoGroupKind {
    pub fn name(&self) -> &'static str {
        match self {
            TwoGroupKind::Cumulative => "baseline-cumulative",
            TwoGroupKind::Adjacent => "baseline-adjacent",
            TwoGroupKind::Continuation => "baseline-continuation",
        }
    }
}

/// Category structure of the model.
///
/// The two-group family splits the categories into a baseline-category group
/// `{1..k, s}` (with baseline `s`) and an ordinal group `{k+1..J}` (with
/// baseline `J`), sharing category `s`. Both `k` and `s` are 1-based, with
/// `1 ≤ k ≤ J-3` and `k+1 ≤ s ≤ J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Baseline,
    Cumulative,
    Adjacent,
    Continuation,
    TwoGroup { kind: TwoGroupKind, k: usize, s: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Baseline => "baseline",
            Family::Cumulative => "cumulative",
            Family::Adjacent => "adjacent",
            Family::Continuation => "continuation",
            Family::TwoGroup { kind, .. } => kind.name(),
        }
    }

    /// Whether the feasible parameter space is all of ℝ^p (no constraint on
    /// ρ beyond each coordinate lying in (0,1)).
    pub fn always_feasible(&self) -> bool {
        matches!(
            self,
            Family::Baseline | Family::Adjacent | Family::Continuation
        )
    }
}

/// The constant matrices of the family, with `b` as a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Lrb {
    pub l: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// A fully specified model: category count, family structure, and one link
/// per modeled category.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    j: usize,
    family: Family,
    links: Vec<Link>,
    lrb: Lrb,
}

impl ModelSpec {
    /// Build a model with one link per category ratio (`links.len() == J-1`).
    pub fn new(j: usize, family: Family, links: Vec<Link>) -> Result<Self> {
        if j < 2 {
            return Err(Error::InvalidModel(format!(
                "at least two categories are required, got J = {j}"
            )));
        }
        if links.len() != j - 1 {
            return Err(Error::InvalidModel(format!(
                "expected {} links for J = {j}, got {}",
                j - 1,
                links.len()
            )));
        }
        if let Family::TwoGroup { k, s, .. } = family {
            if j < 4 {
                return Err(Error::InvalidModel(format!(
                    "two-group models require J >= 4, got J = {j}"
                )));
            }
            if !(1 <= k && k <= j - 3) {
                return Err(Error::InvalidModel(format!(
                    "two-group k must satisfy 1 <= k <= J-3 = {}, got k = {k}",
                    j - 3
                )));
            }
            if !(k + 1 <= s && s <= j) {
                return Err(Error::InvalidModel(format!(
                    "two-group shared category must satisfy {} <= s <= {j}, got s = {s}",
                    k + 1
                )));
            }
        }
        let lrb = build_lrb(j, family);
        Ok(ModelSpec {
            j,
            family,
            links,
            lrb,
        })
    }

    /// Build a model using the same link for every category.
    pub fn with_link(j: usize, family: Family, link: Link) -> Result<Self> {
        if j < 2 {
            return Err(Error::InvalidModel(format!(
                "at least two categories are required, got J = {j}"
            )));
        }
        Self::new(j, family, vec![link; j - 1])
    }

    /// Total number of response categories `J`.
    pub fn j(&self) -> usize {
        self.j
    }

    /// Number of modeled ratios, `J - 1`.
    pub fn n_ratios(&self) -> usize {
        self.j - 1
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Replace the link assignment, keeping the structure.
    pub fn with_links(&self, links: Vec<Link>) -> Result<Self> {
        Self::new(self.j, self.family, links)
    }

    pub fn lrb(&self) -> &Lrb {
        &self.lrb
    }

    /// Whether `D⁻¹` has a closed form for this family. Only the two-group
    /// layouts with an interior shared category lack one.
    pub fn has_closed_form(&self) -> bool {
        match self.family {
            Family::TwoGroup { s, .. } => s == self.j,
            _ => true,
        }
    }

    /// `D⁻¹` at the given ρ, via the family's closed form when available and
    /// the generic solve otherwise.
    pub fn dinv(&self, rho: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_rho(rho)?;
        let q = self.n_ratios();
        match self.family {
            Family::Baseline => Ok(DMatrix::from_diagonal(&odds(rho))),
            Family::Cumulative => Ok(cumulative_dinv(rho.as_slice())),
            Family::Adjacent => Ok(adjacent_dinv(rho.as_slice())),
            Family::Continuation => Ok(continuation_dinv(rho.as_slice())),
            Family::TwoGroup { kind, k, s } if s == self.j => {
                let mut out = DMatrix::zeros(q, q);
                for l in 0..k {
                    out[(l, l)] = rho[l] / (1.0 - rho[l]);
                }
                let tail = &rho.as_slice()[k..];
                let block = match kind {
                    TwoGroupKind::Cumulative => cumulative_dinv(tail),
                    TwoGroupKind::Adjacent => adjacent_dinv(tail),
                    TwoGroupKind::Continuation => continuation_dinv(tail),
                };
                out.view_mut((k, k), (q - k, q - k)).copy_from(&block);
                Ok(out)
            }
            Family::TwoGroup { .. } => self.dinv_generic(rho),
        }
    }

    /// `D⁻¹b` at the given ρ. For the cumulative family the result may carry
    /// non-positive entries; feasibility is judged by the caller.
    pub fn dinv_b(&self, rho: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_rho(rho)?;
        match self.family {
            Family::Baseline => Ok(odds(rho)),
            Family::Cumulative => Ok(DVector::from_vec(cumulative_dinv_b(rho.as_slice()))),
            Family::Adjacent => Ok(DVector::from_vec(adjacent_dinv_b(rho.as_slice()))),
            Family::Continuation => Ok(DVector::from_vec(continuation_dinv_b(rho.as_slice()))),
            Family::TwoGroup { kind, k, s } if s == self.j => {
                let mut out: Vec<f64> = (0..k).map(|l| rho[l] / (1.0 - rho[l])).collect();
                let tail = &rho.as_slice()[k..];
                out.extend(match kind {
                    TwoGroupKind::Cumulative => cumulative_dinv_b(tail),
                    TwoGroupKind::Adjacent => adjacent_dinv_b(tail),
                    TwoGroupKind::Continuation => continuation_dinv_b(tail),
                });
                Ok(DVector::from_vec(out))
            }
            Family::TwoGroup { .. } => {
                let dinv = self.dinv_generic(rho)?;
                Ok(&dinv * &self.lrb.b)
            }
        }
    }

    /// The matrix `D = diag(ρ⁻¹)L - R`.
    pub fn d_matrix(&self, rho: &DVector<f64>) -> DMatrix<f64> {
        let q = self.n_ratios();
        let mut d = DMatrix::zeros(q, q);
        for row in 0..q {
            for col in 0..q {
                d[(row, col)] = self.lrb.l[(row, col)] / rho[row] - self.lrb.r[(row, col)];
            }
        }
        d
    }

    /// Generic `D⁻¹` by partial-pivot LU. The reciprocal-condition estimate
    /// from the factor diagonal must clear 1e-14, else the matrix is
    /// reported singular.
    pub fn dinv_generic(&self, rho: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_rho(rho)?;
        let q = self.n_ratios();
        let d = self.d_matrix(rho);
        let lu = d.lu();
        let u = lu.u();
        let pivots: Vec<f64> = (0..q).map(|i| u[(i, i)].abs()).collect();
        let max_piv = pivots.iter().cloned().fold(0.0_f64, f64::max);
        let min_piv = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max_piv > 0.0) || min_piv / max_piv < 1e-14 {
            return Err(Error::Infeasible {
                setting: None,
                cause: crate::error::InfeasibilityCause::SingularD,
            });
        }
        lu.try_inverse().ok_or(Error::Infeasible {
            setting: None,
            cause: crate::error::InfeasibilityCause::SingularD,
        })
    }

    /// Generic `D⁻¹b` through the generic inverse.
    pub fn dinv_b_generic(&self, rho: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.dinv_generic(rho)? * &self.lrb.b)
    }

    fn check_rho(&self, rho: &DVector<f64>) -> Result<()> {
        if rho.len() != self.n_ratios() {
            return Err(Error::InvalidModel(format!(
                "expected {} transformed probabilities, got {}",
                self.n_ratios(),
                rho.len()
            )));
        }
        for (idx, &r) in rho.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Domain(format!(
                    "transformed probability {} must lie in (0,1), got {r}",
                    idx + 1
                )));
            }
        }
        Ok(())
    }
}

fn odds(rho: &DVector<f64>) -> DVector<f64> {
    rho.map(|r| r / (1.0 - r))
}

/// Build the `(L, R, b)` triple for a family, row by row from the defining
/// ratio of each category.
fn build_lrb(j: usize, family: Family) -> Lrb {
    let q = j - 1;
    let mut l = DMatrix::zeros(q, q);
    let mut r = DMatrix::zeros(q, q);
    let mut b = DVector::zeros(q);

    // `k` is the size of the baseline group (0 for the plain ordinal
    // families, q for the pure baseline family) and `shared` its baseline
    // category.
    let (kind, k, shared) = match family {
        Family::Baseline => (None, q, j),
        Family::Cumulative => (Some(TwoGroupKind::Cumulative), 0, j),
        Family::Adjacent => (Some(TwoGroupKind::Adjacent), 0, j),
        Family::Continuation => (Some(TwoGroupKind::Continuation), 0, j),
        Family::TwoGroup { kind, k, s } => (Some(kind), k, s),
    };

    for row in 0..q {
        if row < k {
            // Baseline part: ρ_j = π_j / (π_j + π_shared).
            l[(row, row)] = 1.0;
            r[(row, row)] = 1.0;
            if shared == j {
                b[row] = 1.0;
            } else {
                r[(row, shared - 1)] = 1.0;
            }
        } else {
            match kind.expect("ordinal rows imply an ordinal kind") {
                TwoGroupKind::Cumulative => {
                    // ρ_j = (π_{k+1}+..+π_j) / (π_{k+1}+..+π_J).
                    for col in k..=row {
                        l[(row, col)] = 1.0;
                    }
                    for col in k..q {
                        r[(row, col)] = 1.0;
                    }
                    b[row] = 1.0;
                }
                TwoGroupKind::Adjacent => {
                    // ρ_j = π_j / (π_j + π_{j+1}).
                    l[(row, row)] = 1.0;
                    r[(row, row)] = 1.0;
                    if row + 1 < q {
                        r[(row, row + 1)] = 1.0;
                    } else {
                        b[row] = 1.0;
                    }
                }
                TwoGroupKind::Continuation => {
                    // ρ_j = π_j / (π_j + .. + π_J).
                    l[(row, row)] = 1.0;
                    for col in row..q {
                        r[(row, col)] = 1.0;
                    }
                    b[row] = 1.0;
                }
            }
        }
    }
    Lrb { l, r, b }
}

// Closed-form D⁻¹ blocks; each operates on the ρ slice of its own group.

fn cumulative_dinv(rho: &[f64]) -> DMatrix<f64> {
    let q = rho.len();
    let mut out = DMatrix::zeros(q, q);
    let last = rho[q - 1];
    for s in 0..q {
        if s < q - 1 {
            out[(s, s)] = rho[s];
        }
        if s > 0 {
            out[(s, s - 1)] = -rho[s - 1];
        }
        // Last column: ρ_{q}·(ρ_s - ρ_{s-1})/(1 - ρ_q), with ρ_0 = 0 and the
        // final difference taken against 1.
        let diff = if s == q - 1 {
            1.0 - if q >= 2 { rho[q - 2] } else { 0.0 }
        } else if s == 0 {
            rho[0]
        } else {
            rho[s] - rho[s - 1]
        };
        out[(s, q - 1)] = last * diff / (1.0 - last);
    }
    out
}

fn cumulative_dinv_b(rho: &[f64]) -> Vec<f64> {
    let q = rho.len();
    let scale = 1.0 / (1.0 - rho[q - 1]);
    (0..q)
        .map(|s| {
            let diff = if s == 0 { rho[0] } else { rho[s] - rho[s - 1] };
            scale * diff
        })
        .collect()
}

fn adjacent_dinv(rho: &[f64]) -> DMatrix<f64> {
    let q = rho.len();
    let mut out = DMatrix::zeros(q, q);
    // Upper triangle: a_st = ∏_{l=s..t} ρ_l/(1-ρ_l).
    for s in 0..q {
        let mut prod = 1.0;
        for t in s..q {
            prod *= rho[t] / (1.0 - rho[t]);
            out[(s, t)] = prod;
        }
    }
    out
}

fn adjacent_dinv_b(rho: &[f64]) -> Vec<f64> {
    let q = rho.len();
    let mut out = vec![0.0; q];
    let mut prod = 1.0;
    for s in (0..q).rev() {
        prod *= rho[s] / (1.0 - rho[s]);
        out[s] = prod;
    }
    out
}

fn continuation_dinv(rho: &[f64]) -> DMatrix<f64> {
    let q = rho.len();
    let mut out = DMatrix::zeros(q, q);
    // a_ss = ρ_s/(1-ρ_s); a_st = ρ_s ρ_t ∏_{l=s..t}(1-ρ_l)⁻¹ above it.
    for s in 0..q {
        let mut inv_prod = 1.0 / (1.0 - rho[s]);
        out[(s, s)] = rho[s] * inv_prod;
        for t in (s + 1)..q {
            inv_prod /= 1.0 - rho[t];
            out[(s, t)] = rho[s] * rho[t] * inv_prod;
        }
    }
    out
}

fn continuation_dinv_b(rho: &[f64]) -> Vec<f64> {
    let q = rho.len();
    let mut out = vec![0.0; q];
    let mut inv_prod = 1.0;
    for s in (0..q).rev() {
        inv_prod /= 1.0 - rho[s];
        out[s] = rho[s] * inv_prod;
    }
    out
}
