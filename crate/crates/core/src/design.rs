//! Predictor structures and model matrices.
//!
//! A design is a list of term columns. Each column pairs one predictor term
//! (intercept, a covariate, or its square) with a partition of the modeled
//! categories into coefficient groups: a singleton group is a
//! category-specific coefficient, a larger group is one coefficient shared
//! by its member categories, and a category missing from every group of a
//! column simply does not carry that term. This single representation
//! expresses po, npo, ppo, and arbitrary po-npo mixtures, and coefficient
//! merging (the backward-selection move) is a pure partition operation.
//!
//! Parameters are ordered category-major: first each category's own
//! coefficients in column order, then the shared coefficients in column
//! order. For a po design this yields `(β_1, .., β_{J-1}, ζᵀ)`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// A predictor term evaluated on one covariate vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Intercept,
    /// The covariate at this index.
    Linear(usize),
    /// The squared covariate at this index.
    Quadratic(usize),
}

impl Term {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Intercept => 1.0,
            Term::Linear(i) => x[i],
            Term::Quadratic(i) => x[i] * x[i],
        }
    }

    pub fn label(&self, covariate_names: &[String]) -> String {
        match *self {
            Term::Intercept => "1".to_string(),
            Term::Linear(i) => covariate_names[i].clone(),
            Term::Quadratic(i) => format!("{}^2", covariate_names[i]),
        }
    }
}

/// One term column: a term plus the coefficient groups carrying it.
/// Categories are 0-based here; groups must be disjoint and non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TermColumn {
    pub term: Term,
    pub groups: Vec<Vec<usize>>,
}

/// Verdict of the full-row-rank check on the stacked predictor matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub full_row_rank: bool,
}

/// A validated predictor structure for `J - 1` categories over `d`
/// covariates, with the parameter layout precomputed.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    n_categories: usize,
    covariate_names: Vec<String>,
    columns: Vec<TermColumn>,
    /// `param_of[cat][col]` is the parameter index carrying that cell.
    param_of: Vec<Vec<Option<usize>>>,
    n_params: usize,
    labels: Vec<String>,
}

impl DesignSpec {
    /// Build a design from explicit term columns.
    pub fn from_columns(
        n_categories: usize,
        covariate_names: Vec<String>,
        mut columns: Vec<TermColumn>,
    ) -> Result<Self> {
        if n_categories == 0 {
            return Err(Error::InvalidDesign(
                "a design needs at least one modeled category".into(),
            ));
        }
        let dim = covariate_names.len();
        for column in &mut columns {
            match column.term {
                Term::Linear(i) | Term::Quadratic(i) if i >= dim => {
                    return Err(Error::InvalidDesign(format!(
                        "term references covariate {} but only {dim} are declared",
                        i + 1
                    )));
                }
                _ => {}
            }
            let mut seen = vec![false; n_categories];
            for group in &column.groups {
                if group.is_empty() {
                    return Err(Error::InvalidDesign("empty coefficient group".into()));
                }
                for &cat in group {
                    if cat >= n_categories {
                        return Err(Error::InvalidDesign(format!(
                            "category index {} out of range (J-1 = {n_categories})",
                            cat + 1
                        )));
                    }
                    if seen[cat] {
                        return Err(Error::InvalidDesign(format!(
                            "category {} appears twice in one column",
                            cat + 1
                        )));
                    }
                    seen[cat] = true;
                }
            }
            // Canonical order: members sorted, groups sorted by least member.
            for group in &mut column.groups {
                group.sort_unstable();
            }
            column.groups.sort_by_key(|g| g[0]);
        }
        let mut intercept_cols = vec![0usize; n_categories];
        for column in &columns {
            if column.term == Term::Intercept {
                for group in &column.groups {
                    for &cat in group {
                        intercept_cols[cat] += 1;
                    }
                }
            }
        }
        if intercept_cols.iter().any(|&c| c > 1) {
            return Err(Error::InvalidDesign(
                "a category may carry at most one intercept".into(),
            ));
        }

        // Parameter layout: category-major singletons, then shared groups.
        let mut param_of = vec![vec![None; columns.len()]; n_categories];
        let mut labels = Vec::new();
        let mut next = 0usize;
        for cat in 0..n_categories {
            for (ci, column) in columns.iter().enumerate() {
                if let Some(group) = column.groups.iter().find(|g| g.contains(&cat)) {
                    if group.len() == 1 {
                        param_of[cat][ci] = Some(next);
                        labels.push(format!(
                            "cat{}:{}",
                            cat + 1,
                            column.term.label(&covariate_names)
                        ));
                        next += 1;
                    }
                }
            }
        }
        for (ci, column) in columns.iter().enumerate() {
            for group in &column.groups {
                if group.len() > 1 {
                    for &cat in group {
                        param_of[cat][ci] = Some(next);
                    }
                    let cats: Vec<String> = group.iter().map(|c| (c + 1).to_string()).collect();
                    labels.push(format!(
                        "cats{}:{}",
                        cats.join("+"),
                        column.term.label(&covariate_names)
                    ));
                    next += 1;
                }
            }
        }

        Ok(DesignSpec {
            n_categories,
            covariate_names,
            columns,
            param_of,
            n_params: next,
            labels,
        })
    }

    /// Proportional odds: per-category intercepts plus coefficients shared
    /// across every category for each listed term.
    pub fn po(
        n_categories: usize,
        covariate_names: Vec<String>,
        common_terms: &[Term],
    ) -> Result<Self> {
        let mut columns = vec![TermColumn {
            term: Term::Intercept,
            groups: (0..n_categories).map(|c| vec![c]).collect(),
        }];
        let all: Vec<usize> = (0..n_categories).collect();
        for &term in common_terms {
            columns.push(TermColumn {
                term,
                groups: vec![all.clone()],
            });
        }
        Self::from_columns(n_categories, covariate_names, columns)
    }

    /// Nonproportional odds: every listed term (intercept included unless
    /// already present) gets its own coefficient in every category.
    pub fn npo(n_categories: usize, covariate_names: Vec<String>, terms: &[Term]) -> Result<Self> {
        let mut all_terms: Vec<Term> = Vec::new();
        if !terms.contains(&Term::Intercept) {
            all_terms.push(Term::Intercept);
        }
        all_terms.extend_from_slice(terms);
        let columns = all_terms
            .into_iter()
            .map(|term| TermColumn {
                term,
                groups: (0..n_categories).map(|c| vec![c]).collect(),
            })
            .collect();
        Self::from_columns(n_categories, covariate_names, columns)
    }

    /// Partial proportional odds: per-category term lists plus terms shared
    /// by every category.
    pub fn ppo(
        n_categories: usize,
        covariate_names: Vec<String>,
        per_category: &[Vec<Term>],
        common_terms: &[Term],
    ) -> Result<Self> {
        if per_category.len() != n_categories {
            return Err(Error::InvalidDesign(format!(
                "expected {n_categories} per-category term lists, got {}",
                per_category.len()
            )));
        }
        let mut columns: Vec<TermColumn> = Vec::new();
        for (cat, terms) in per_category.iter().enumerate() {
            for &term in terms {
                match columns.iter_mut().find(|c| c.term == term) {
                    Some(column) => column.groups.push(vec![cat]),
                    None => columns.push(TermColumn {
                        term,
                        groups: vec![vec![cat]],
                    }),
                }
            }
        }
        let all: Vec<usize> = (0..n_categories).collect();
        for &term in common_terms {
            columns.push(TermColumn {
                term,
                groups: vec![all.clone()],
            });
        }
        Self::from_columns(n_categories, covariate_names, columns)
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn columns(&self) -> &[TermColumn] {
        &self.columns
    }

    /// Total number of free parameters `p`.
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Human-readable labels, one per parameter.
    pub fn param_labels(&self) -> &[String] {
        &self.labels
    }

    /// Parameter index carrying `(category, column)`, if the term is active
    /// there.
    pub fn param_index(&self, category: usize, column: usize) -> Option<usize> {
        self.param_of[category][column]
    }

    /// The fitted coefficient of `(category, column)` under `theta`.
    pub fn coefficient(&self, theta: &DVector<f64>, category: usize, column: usize) -> Option<f64> {
        self.param_index(category, column).map(|i| theta[i])
    }

    /// Index of each category's intercept parameter. `None` for categories
    /// with no intercept term.
    pub fn intercept_params(&self) -> Vec<Option<usize>> {
        (0..self.n_categories)
            .map(|cat| {
                self.columns
                    .iter()
                    .enumerate()
                    .find(|(_, c)| c.term == Term::Intercept)
                    .and_then(|(ci, _)| self.param_of[cat][ci])
            })
            .collect()
    }

    /// Whether any intercept coefficient is shared between categories.
    pub fn has_shared_intercept(&self) -> bool {
        self.columns
            .iter()
            .any(|c| c.term == Term::Intercept && c.groups.iter().any(|g| g.len() > 1))
    }

    /// The model matrix `X_i` for one covariate vector: `(J-1) × p`, row `j`
    /// holding `f_jᵀ(x)`.
    pub fn build_x(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.covariate_dim() {
            return Err(Error::InvalidDesign(format!(
                "covariate vector has length {}, design expects {}",
                x.len(),
                self.covariate_dim()
            )));
        }
        let mut out = DMatrix::zeros(self.n_categories, self.n_params);
        for cat in 0..self.n_categories {
            for (ci, column) in self.columns.iter().enumerate() {
                if let Some(param) = self.param_of[cat][ci] {
                    out[(cat, param)] += column.term.eval(x);
                }
            }
        }
        Ok(out)
    }

    /// Model matrices for every setting.
    pub fn build_all(&self, settings: &[Vec<f64>]) -> Result<Vec<DMatrix<f64>>> {
        settings.iter().map(|x| self.build_x(x)).collect()
    }

    /// The stacked matrix `H = (f_1(x_1) .. f_1(x_m), .., f_{J-1}(x_m))`,
    /// `p × m(J-1)` with columns ordered category-major.
    pub fn build_h(&self, settings: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let m = settings.len();
        let mut h = DMatrix::zeros(self.n_params, m * self.n_categories);
        for (i, x) in settings.iter().enumerate() {
            let xi = self.build_x(x)?;
            for cat in 0..self.n_categories {
                for param in 0..self.n_params {
                    h[(param, cat * m + i)] = xi[(cat, param)];
                }
            }
        }
        Ok(h)
    }

    /// Merge the coefficient groups containing categories `a` and `b` in one
    /// column, producing the constrained design (one fewer parameter).
    pub fn merge_groups(&self, column: usize, a: usize, b: usize) -> Result<DesignSpec> {
        if column >= self.columns.len() {
            return Err(Error::InvalidDesign(format!("column {column} out of range")));
        }
        if a == b {
            return Err(Error::InvalidDesign(
                "cannot merge a category with itself".into(),
            ));
        }
        let mut columns = self.columns.clone();
        let col = &mut columns[column];
        let ga = col.groups.iter().position(|g| g.contains(&a));
        let gb = col.groups.iter().position(|g| g.contains(&b));
        match (ga, gb) {
            (Some(ia), Some(ib)) if ia != ib => {
                let (keep, remove) = (ia.min(ib), ia.max(ib));
                let moved = col.groups.remove(remove);
                col.groups[keep].extend(moved);
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidDesign(format!(
                    "categories {} and {} are already constrained equal in column {column}",
                    a + 1,
                    b + 1
                )));
            }
            _ => {
                return Err(Error::InvalidDesign(format!(
                    "categories {} and {} do not both carry column {column}",
                    a + 1,
                    b + 1
                )));
            }
        }
        Self::from_columns(self.n_categories, self.covariate_names.clone(), columns)
    }

    /// Rank of `H` by singular value decomposition; singular values below
    /// `1e-10 · max σ` count as zero.
    pub fn check_rank(h: &DMatrix<f64>) -> RankReport {
        let p = h.nrows();
        let svd = h.clone().svd(false, false);
        let max_sv = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        let rank = if max_sv == 0.0 {
            0
        } else {
            svd.singular_values
                .iter()
                .filter(|&&sv| sv > 1e-10 * max_sv)
                .count()
        };
        RankReport {
            rank,
            full_row_rank: rank == p,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    /// Row-reduction rank with partial pivoting, independent of the SVD path.
    fn elimination_rank(h: &DMatrix<f64>) -> usize {
        let mut m = h.clone();
        let (rows, cols) = m.shape();
        let mut rank = 0;
        let mut row = 0;
        for col in 0..cols {
            if row >= rows {
                break;
            }
            let mut pivot = row;
            for r in row..rows {
                if m[(r, col)].abs() > m[(pivot, col)].abs() {
                    pivot = r;
                }
            }
            if m[(pivot, col)].abs() < 1e-10 {
                continue;
            }
            m.swap_rows(row, pivot);
            for r in (row + 1)..rows {
                let factor = m[(r, col)] / m[(row, col)];
                for c in col..cols {
                    m[(r, c)] -= factor * m[(row, c)];
                }
            }
            row += 1;
            rank += 1;
        }
        rank
    }

    #[test]
    fn main_effects_po_layout() {
        let design = DesignSpec::po(2, names(&["x"]), &[Term::Linear(0)]).unwrap();
        let x = design.build_x(&[2.0]).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, 2.0]);
        assert_eq!(x, expected);
    }

    #[test]
    fn main_effects_npo_layout() {
        let design = DesignSpec::npo(2, names(&["x"]), &[Term::Linear(0)]).unwrap();
        let x = design.build_x(&[2.0]).unwrap();
        let expected = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(x, expected);
    }

    #[test]
    fn mixture_layout_with_partially_shared_slopes() {
        // Four categories; x1 and x2 shared by categories 1-2, separate for
        // categories 3 and 4. Ten parameters, shared coefficients last.
        let columns = vec![
            TermColumn {
                term: Term::Intercept,
                groups: vec![vec![0], vec![1], vec![2], vec![3]],
            },
            TermColumn {
                term: Term::Linear(0),
                groups: vec![vec![0, 1], vec![2], vec![3]],
            },
            TermColumn {
                term: Term::Linear(1),
                groups: vec![vec![0, 1], vec![2], vec![3]],
            },
        ];
        let design = DesignSpec::from_columns(4, names(&["x1", "x2"]), columns).unwrap();
        assert_eq!(design.n_params(), 10);
        let x = design.build_x(&[7.0, 9.0]).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            10,
            &[
                1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0, 9.0, //
                0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0, 9.0, //
                0.0, 0.0, 1.0, 7.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 7.0, 9.0, 0.0, 0.0,
            ],
        );
        assert_eq!(x, expected);
    }

    #[test]
    fn h_matrix_category_major_ordering() {
        let design = DesignSpec::po(2, names(&[]), &[]).unwrap();
        let h = design.build_h(&[vec![]]).unwrap();
        assert_eq!(h, DMatrix::identity(2, 2));

        let design = DesignSpec::ppo(
            2,
            names(&["x"]),
            &[vec![Term::Intercept], vec![Term::Intercept]],
            &[Term::Linear(0)],
        )
        .unwrap();
        let settings = vec![vec![1.0], vec![2.0], vec![3.0]];
        let h = design.build_h(&settings).unwrap();
        // Block structure: per-category intercept blocks on the diagonal,
        // the shared row spanning both category blocks.
        let expected = DMatrix::from_row_slice(
            3,
            6,
            &[
                1.0, 1.0, 1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 1.0, 1.0, //
                1.0, 2.0, 3.0, 1.0, 2.0, 3.0,
            ],
        );
        assert_eq!(h, expected);
    }

    #[test]
    fn rank_check_detects_deficiency() {
        // npo with J = 3, one covariate over three settings: full row rank.
        let design = DesignSpec::npo(2, names(&["x"]), &[Term::Linear(0)]).unwrap();
        let settings = vec![vec![0.0], vec![1.0], vec![2.0]];
        let h = design.build_h(&settings).unwrap();
        let report = DesignSpec::check_rank(&h);
        assert!(report.full_row_rank);
        assert_eq!(report.rank, elimination_rank(&h));

        // Duplicated predictor column: rank must drop by one.
        let columns = vec![
            TermColumn {
                term: Term::Intercept,
                groups: vec![vec![0], vec![1]],
            },
            TermColumn {
                term: Term::Linear(0),
                groups: vec![vec![0], vec![1]],
            },
            TermColumn {
                term: Term::Linear(0),
                groups: vec![vec![0]],
            },
        ];
        let dup = DesignSpec::from_columns(2, names(&["x"]), columns).unwrap();
        let h = dup.build_h(&settings).unwrap();
        let report = DesignSpec::check_rank(&h);
        assert!(!report.full_row_rank);
        assert_eq!(report.rank, elimination_rank(&h));
        assert_eq!(report.rank, dup.n_params() - 1);

        // One setting cannot support more than J-1 parameters.
        let design = DesignSpec::npo(2, names(&["x"]), &[Term::Linear(0)]).unwrap();
        let h = design.build_h(&[vec![1.5]]).unwrap();
        let report = DesignSpec::check_rank(&h);
        assert!(!report.full_row_rank);
        assert_eq!(report.rank, 2);
    }

    #[test]
    fn merge_reduces_params_by_one_and_shares_column() {
        let design = DesignSpec::npo(3, names(&["x"]), &[Term::Linear(0)]).unwrap();
        assert_eq!(design.n_params(), 6);
        let merged = design.merge_groups(1, 0, 2).unwrap();
        assert_eq!(merged.n_params(), 5);
        let x = merged.build_x(&[4.0]).unwrap();
        let shared = merged.param_index(0, 1).unwrap();
        assert_eq!(merged.param_index(2, 1).unwrap(), shared);
        assert_eq!(x[(0, shared)], 4.0);
        assert_eq!(x[(2, shared)], 4.0);
        assert_eq!(x[(1, shared)], 0.0);
        // Re-merging the same pair is rejected.
        assert!(merged.merge_groups(1, 0, 2).is_err());
    }

    #[test]
    fn intercept_bookkeeping() {
        let design = DesignSpec::ppo(
            2,
            names(&["x"]),
            &[vec![Term::Intercept, Term::Linear(0)], vec![Term::Linear(0)]],
            &[],
        )
        .unwrap();
        let intercepts = design.intercept_params();
        assert!(intercepts[0].is_some());
        assert!(intercepts[1].is_none());
        assert!(!design.has_shared_intercept());
    }

    #[test]
    fn rejects_bad_columns() {
        // Out-of-range covariate.
        assert!(DesignSpec::npo(2, names(&[]), &[Term::Linear(0)]).is_err());
        // Category appearing twice in a column.
        let columns = vec![TermColumn {
            term: Term::Intercept,
            groups: vec![vec![0], vec![0, 1]],
        }];
        assert!(DesignSpec::from_columns(2, names(&[]), columns).is_err());
        // Two intercept columns for one category.
        let columns = vec![
            TermColumn {
                term: Term::Intercept,
                groups: vec![vec![0]],
            },
            TermColumn {
                term: Term::Intercept,
                groups: vec![vec![0]],
            },
        ];
        assert!(DesignSpec::from_columns(2, names(&[]), columns).is_err());
    }
}
