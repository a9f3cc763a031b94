//! Model search: backward coefficient merging, exhaustive link-assignment
//! search, two-group structure enumeration, and k-fold cross-validation
//! with cross-entropy loss.

use crate::data::{rng_from_seed, Dataset};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::fit::{fisher_scoring, FitOptions, FitResult};
use crate::link::Link;
use crate::model::{Family, ModelSpec, TwoGroupKind};
use crate::prob::{pi_from_rho, rho_at};
use rand::seq::SliceRandom;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Ranking criterion for searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    pub fn value(&self, fit: &FitResult) -> f64 {
        match self {
            Criterion::Aic => fit.aic,
            Criterion::Bic => fit.bic,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::InvalidModel(format!("unknown criterion: {other}"))),
        }
    }
}

/// Run `f(0..n)` with at most `jobs` worker threads, collecting results in
/// index order regardless of completion order.
pub(crate) fn run_indexed<T: Send>(
    n: usize,
    jobs: usize,
    f: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= n {
                    break;
                }
                let value = f(idx);
                slots.lock().expect("worker panicked")[idx] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|v| v.expect("all slots filled"))
        .collect()
}

/// One accepted merge of the backward search.
#[derive(Debug, Clone)]
pub struct SelectionStep {
    pub iteration: usize,
    /// Column index into the design, with its term label.
    pub column: usize,
    pub column_label: String,
    /// Merged categories, 1-based.
    pub pair: (usize, usize),
    pub aic: f64,
}

/// Full record of a backward-merging run.
#[derive(Debug, Clone)]
pub struct SelectionTrace {
    pub initial_aic: f64,
    pub steps: Vec<SelectionStep>,
    /// The first non-improving candidate, if the search stopped on one.
    pub rejected: Option<SelectionStep>,
    pub design: DesignSpec,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// Backward selection over coefficient merges: at each iteration, for every
/// column, tentatively constrain the pair of coefficients with the smallest
/// absolute gap to be equal; accept the column whose merge lowers AIC the
/// most, and stop at the first iteration where no merge improves.
pub fn backward_mixture(
    spec: &ModelSpec,
    design: &DesignSpec,
    data: &Dataset,
    options: &FitOptions,
    jobs: usize,
) -> Result<SelectionTrace> {
    let mut current_design = design.clone();
    let mut current_fit = fisher_scoring(spec, &current_design, data, options)?;
    let initial_aic = current_fit.aic;
    let mut steps = Vec::new();
    let mut rejected = None;
    let mut warnings = Vec::new();

    for iteration in 1.. {
        // Closest unconstrained pair per column, judged on the current fit.
        let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
        for (ci, column) in current_design.columns().iter().enumerate() {
            if column.groups.len() < 2 {
                continue;
            }
            let mut best: Option<(f64, usize, usize)> = None;
            for (gi, ga) in column.groups.iter().enumerate() {
                for gb in column.groups.iter().skip(gi + 1) {
                    let a = ga[0];
                    let b = gb[0];
                    let ca = current_design
                        .coefficient(&current_fit.theta, a, ci)
                        .expect("group member carries the column");
                    let cb = current_design
                        .coefficient(&current_fit.theta, b, ci)
                        .expect("group member carries the column");
                    let gap = (ca - cb).abs();
                    let pair = (a.min(b), a.max(b));
                    let better = match best {
                        None => true,
                        Some((bg, ba, bb)) => {
                            gap < bg || (gap == bg && pair < (ba, bb))
                        }
                    };
                    if better {
                        best = Some((gap, pair.0, pair.1));
                    }
                }
            }
            if let Some((_, a, b)) = best {
                candidates.push((ci, a, b));
            }
        }
        if candidates.is_empty() {
            break;
        }

        let results = run_indexed(candidates.len(), jobs, |idx| {
            let (ci, a, b) = candidates[idx];
            let merged = current_design.merge_groups(ci, a, b)?;
            let fit = fisher_scoring(spec, &merged, data, options)?;
            Ok::<_, Error>((merged, fit))
        });

        let mut best: Option<(usize, DesignSpec, FitResult)> = None;
        for (idx, outcome) in results.into_iter().enumerate() {
            match outcome {
                Ok((merged, fit)) => {
                    let replace = match &best {
                        None => true,
                        Some((_, _, best_fit)) => fit.aic < best_fit.aic,
                    };
                    if replace {
                        best = Some((idx, merged, fit));
                    }
                }
                Err(e) => {
                    let (ci, a, b) = candidates[idx];
                    warnings.push(format!(
                        "iteration {iteration}: merge of categories {} and {} in column {} failed: {e}",
                        a + 1,
                        b + 1,
                        ci
                    ));
                }
            }
        }
        let Some((idx, merged_design, merged_fit)) = best else {
            warnings.push(format!(
                "iteration {iteration}: every candidate merge failed; stopping"
            ));
            break;
        };
        let (ci, a, b) = candidates[idx];
        let step = SelectionStep {
            iteration,
            column: ci,
            column_label: current_design.columns()[ci]
                .term
                .label(current_design.covariate_names()),
            pair: (a + 1, b + 1),
            aic: merged_fit.aic,
        };
        if merged_fit.aic < current_fit.aic {
            steps.push(step);
            current_design = merged_design;
            current_fit = merged_fit;
        } else {
            rejected = Some(step);
            break;
        }
    }

    Ok(SelectionTrace {
        initial_aic,
        steps,
        rejected,
        design: current_design,
        fit: current_fit,
        warnings,
    })
}

/// One row of a link-search ranking.
#[derive(Debug, Clone)]
pub struct LinkCandidate {
    pub links: Vec<Link>,
    pub value: f64,
}

#[derive(Debug)]
pub struct LinkSearchResult {
    /// All evaluated assignments, best first; criterion ties broken by
    /// lexicographic link-name order.
    pub ranking: Vec<LinkCandidate>,
    pub best_links: Vec<Link>,
    pub best_fit: FitResult,
    pub warnings: Vec<String>,
}

/// Exhaustive search over per-category link assignments from a candidate
/// set, ranked by the requested criterion.
pub fn link_search(
    spec: &ModelSpec,
    candidates: &[Link],
    design: &DesignSpec,
    data: &Dataset,
    criterion: Criterion,
    options: &FitOptions,
    jobs: usize,
) -> Result<LinkSearchResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidModel("empty link candidate set".into()));
    }
    // Canonical order makes the result independent of the input ordering.
    let mut pool: Vec<Link> = candidates.to_vec();
    pool.sort_by_key(|l| l.to_string());
    pool.dedup();

    let q = spec.n_ratios();
    let combos = (pool.len() as f64).powi(q as i32);
    if combos > 1e5 {
        return Err(Error::SearchTooLarge(format!(
            "{} links over {} categories gives {combos:.0} assignments (limit 100000)",
            pool.len(),
            q
        )));
    }
    let n_combos = pool.len().pow(q as u32);

    let assignment = |mut index: usize| -> Vec<Link> {
        let mut links = Vec::with_capacity(q);
        for _ in 0..q {
            links.push(pool[index % pool.len()]);
            index /= pool.len();
        }
        links
    };

    let results = run_indexed(n_combos, jobs, |idx| {
        let links = assignment(idx);
        let candidate_spec = spec.with_links(links.clone())?;
        let fit = fisher_scoring(&candidate_spec, design, data, options)?;
        Ok::<_, Error>((links, fit))
    });

    let mut warnings = Vec::new();
    let mut scored: Vec<(Vec<Link>, FitResult)> = Vec::new();
    for (idx, outcome) in results.into_iter().enumerate() {
        match outcome {
            Ok(pair) => scored.push(pair),
            Err(e) => warnings.push(format!(
                "assignment {:?} failed: {e}",
                assignment(idx)
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
            )),
        }
    }
    if scored.is_empty() {
        return Err(Error::InvalidModel(
            "every link assignment failed to fit".into(),
        ));
    }
    let names = |links: &[Link]| -> Vec<String> { links.iter().map(|l| l.to_string()).collect() };
    scored.sort_by(|(la, fa), (lb, fb)| {
        criterion
            .value(fa)
            .total_cmp(&criterion.value(fb))
            .then_with(|| names(la).cmp(&names(lb)))
    });
    let ranking: Vec<LinkCandidate> = scored
        .iter()
        .map(|(links, fit)| LinkCandidate {
            links: links.clone(),
            value: criterion.value(fit),
        })
        .collect();
    let (best_links, best_fit) = scored.swap_remove(0);
    Ok(LinkSearchResult {
        ranking,
        best_links,
        best_fit,
        warnings,
    })
}

/// Result of a k-fold cross-validation.
#[derive(Debug, Clone)]
pub struct CvReport {
    /// Summed cross-entropy loss over all held-out observations.
    pub total_loss: f64,
    pub fold_losses: Vec<f64>,
    /// Folds whose training fit failed, with the reason; excluded from the
    /// totals.
    pub failed_folds: Vec<(usize, String)>,
}

/// K-fold cross-validation with cross-entropy loss. Observations are
/// partitioned at the individual level, stratified by setting, with the
/// shuffle driven entirely by `seed`.
pub fn cross_validate(
    spec: &ModelSpec,
    design: &DesignSpec,
    data: &Dataset,
    folds: usize,
    seed: u64,
    options: &FitOptions,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::InvalidData("cross-validation needs k >= 2".into()));
    }
    if (data.total_n() as usize) < folds {
        return Err(Error::InvalidData(format!(
            "{} observations cannot fill {folds} folds",
            data.total_n()
        )));
    }
    let j = data.j();
    let mut rng = rng_from_seed(seed);
    // fold_counts[f][setting][category]
    let mut fold_counts = vec![vec![vec![0u64; j]; data.m()]; folds];
    for i in 0..data.m() {
        let mut observations: Vec<usize> = Vec::with_capacity(data.n_i(i) as usize);
        for (cat, &count) in data.counts()[i].iter().enumerate() {
            for _ in 0..count {
                observations.push(cat);
            }
        }
        observations.shuffle(&mut rng);
        for (idx, cat) in observations.into_iter().enumerate() {
            fold_counts[idx % folds][i][cat] += 1;
        }
    }

    let mut fold_losses = Vec::new();
    let mut failed_folds = Vec::new();
    for fold in 0..folds {
        let mut train_settings = Vec::new();
        let mut train_counts = Vec::new();
        for i in 0..data.m() {
            let held = &fold_counts[fold][i];
            let train: Vec<u64> = data.counts()[i]
                .iter()
                .zip(held)
                .map(|(&total, &h)| total - h)
                .collect();
            if train.iter().sum::<u64>() > 0 {
                train_settings.push(data.settings()[i].clone());
                train_counts.push(train);
            }
        }
        let outcome = (|| -> Result<f64> {
            let train =
                Dataset::new(data.covariate_names().to_vec(), train_settings, train_counts)?;
            let fit = fisher_scoring(spec, design, &train, options)?;
            let mut loss = 0.0;
            for i in 0..data.m() {
                let held = &fold_counts[fold][i];
                if held.iter().sum::<u64>() == 0 {
                    continue;
                }
                let rho = rho_at(spec, design, &fit.theta, &data.settings()[i])?;
                let pi = pi_from_rho(spec, &rho)?;
                for (cat, &count) in held.iter().enumerate() {
                    if count > 0 {
                        loss -= count as f64 * pi[cat].ln();
                    }
                }
            }
            Ok(loss)
        })();
        match outcome {
            Ok(loss) => fold_losses.push(loss),
            Err(e) => failed_folds.push((fold, e.to_string())),
        }
    }
    Ok(CvReport {
        total_loss: fold_losses.iter().sum(),
        fold_losses,
        failed_folds,
    })
}

/// All two-group structures for `J` categories: three ordinal kinds crossed
/// with every admissible `(k, s)`.
pub fn enumerate_two_group_specs(j: usize) -> Result<Vec<Family>> {
    if j < 4 {
        return Err(Error::InvalidModel(format!(
            "two-group models require J >= 4, got J = {j}"
        )));
    }
    let mut out = Vec::new();
    for kind in [
        TwoGroupKind::Cumulative,
        TwoGroupKind::Adjacent,
        TwoGroupKind::Continuation,
    ] {
        for k in 1..=(j - 3) {
            for s in (k + 1)..=j {
                out.push(Family::TwoGroup { kind, k, s });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::simulate;
    use crate::design::Term;
    use nalgebra::DVector;

    fn po_true_data(n_total: u64, seed: u64) -> (ModelSpec, DesignSpec, Dataset) {
        // J = 4 continuation model whose slope is genuinely shared: the npo
        // fit should discover the po structure.
        let spec = ModelSpec::with_link(4, Family::Continuation, Link::Logit).unwrap();
        let po = DesignSpec::po(3, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let theta = DVector::from_column_slice(&[-0.5, 0.0, 0.5, 0.8]);
        let settings: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.4 - 1.0]).collect();
        let per = n_total / 6;
        let data = simulate(&spec, &po, &theta, &settings, &[per; 6], seed).unwrap();
        (spec, po, data)
    }

    #[test]
    fn backward_merge_accepts_only_improvements() {
        let (spec, _, data) = po_true_data(6000, 5);
        let npo = DesignSpec::npo(3, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let trace =
            backward_mixture(&spec, &npo, &data, &FitOptions::default(), 1).unwrap();
        // Strictly decreasing accepted AIC sequence.
        let mut last = trace.initial_aic;
        for step in &trace.steps {
            assert!(step.aic < last, "AIC did not decrease: {} -> {}", last, step.aic);
            last = step.aic;
        }
        if let Some(rejected) = &trace.rejected {
            assert!(rejected.aic >= last);
        }
        assert!(trace.fit.aic <= trace.initial_aic);
        // Each accepted merge removes exactly one parameter.
        assert_eq!(
            trace.design.n_params(),
            npo.n_params() - trace.steps.len()
        );
    }

    #[test]
    fn backward_merge_recovers_po_slope() {
        let (spec, _, data) = po_true_data(10_000, 9);
        let npo = DesignSpec::npo(3, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let trace =
            backward_mixture(&spec, &npo, &data, &FitOptions::default(), 1).unwrap();
        // The slope column (index 1) should end with a single group.
        let slope_groups = trace.design.columns()[1].groups.len();
        assert_eq!(slope_groups, 1, "slope column not fully merged");
    }

    #[test]
    fn link_search_degenerate_and_ordering_invariance() {
        let (spec, po, data) = po_true_data(2000, 13);
        let single = link_search(
            &spec,
            &[Link::Logit],
            &po,
            &data,
            Criterion::Bic,
            &FitOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(single.ranking.len(), 1);
        assert_eq!(single.best_links, vec![Link::Logit; 3]);

        let a = link_search(
            &spec,
            &[Link::Logit, Link::Probit],
            &po,
            &data,
            Criterion::Aic,
            &FitOptions::default(),
            1,
        )
        .unwrap();
        let b = link_search(
            &spec,
            &[Link::Probit, Link::Logit],
            &po,
            &data,
            Criterion::Aic,
            &FitOptions::default(),
            2,
        )
        .unwrap();
        assert_eq!(a.best_links, b.best_links);
        assert_eq!(a.ranking.len(), 8);
        let values_a: Vec<f64> = a.ranking.iter().map(|c| c.value).collect();
        let values_b: Vec<f64> = b.ranking.iter().map(|c| c.value).collect();
        assert_eq!(values_a, values_b);
        // Ranking is sorted.
        for w in values_a.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn link_search_recovers_probit_truth() {
        let spec = ModelSpec::with_link(3, Family::Cumulative, Link::Probit).unwrap();
        let po = DesignSpec::po(2, vec!["x".into()], &[Term::Linear(0)]).unwrap();
        let theta = DVector::from_column_slice(&[-0.9, 0.9, 1.1]);
        let settings: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.35 - 1.2]).collect();
        let data = simulate(&spec, &po, &theta, &settings, &[5000; 8], 3).unwrap();
        let result = link_search(
            &spec,
            &[Link::Logit, Link::Probit],
            &po,
            &data,
            Criterion::Bic,
            &FitOptions::default(),
            2,
        )
        .unwrap();
        assert_eq!(result.best_links, vec![Link::Probit, Link::Probit]);
    }

    #[test]
    fn search_guard_rejects_huge_enumerations() {
        let spec = ModelSpec::with_link(8, Family::Baseline, Link::Logit).unwrap();
        let design = DesignSpec::po(7, vec![], &[]).unwrap();
        let data = Dataset::new(
            vec![],
            vec![vec![]],
            vec![vec![1, 1, 1, 1, 1, 1, 1, 1]],
        )
        .unwrap();
        let candidates = crate::link::standard_links();
        let err = link_search(
            &spec,
            &candidates,
            &design,
            &data,
            Criterion::Aic,
            &FitOptions::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SearchTooLarge(_)));
    }

    #[test]
    fn cross_validation_is_deterministic_and_near_entropy() {
        let spec = ModelSpec::with_link(2, Family::Baseline, Link::Logit).unwrap();
        let design = DesignSpec::po(1, vec![], &[]).unwrap();
        let data = Dataset::new(vec![], vec![vec![]], vec![vec![50, 50]]).unwrap();
        let report =
            cross_validate(&spec, &design, &data, 5, 77, &FitOptions::default()).unwrap();
        let again =
            cross_validate(&spec, &design, &data, 5, 77, &FitOptions::default()).unwrap();
        assert_eq!(report.total_loss, again.total_loss);
        assert!(report.failed_folds.is_empty());
        assert_eq!(report.fold_losses.len(), 5);
        // Balanced binary data: total loss sits near 100·log 2.
        assert!((report.total_loss - 100.0 * 2.0_f64.ln()).abs() < 2.0);
    }

    #[test]
    fn cross_validation_degenerate_prediction_loss_vanishes() {
        // Every observation in the first category: the fitted probability
        // saturates and the held-out loss collapses toward zero.
        let spec = ModelSpec::with_link(2, Family::Baseline, Link::Logit).unwrap();
        let design = DesignSpec::po(1, vec![], &[]).unwrap();
        let data = Dataset::new(vec![], vec![vec![]], vec![vec![40, 0]]).unwrap();
        let report =
            cross_validate(&spec, &design, &data, 4, 5, &FitOptions::default()).unwrap();
        assert!(report.total_loss >= 0.0);
        assert!(report.total_loss < 1e-4, "loss {}", report.total_loss);
    }

    #[test]
    fn two_group_enumeration_counts() {
        assert!(enumerate_two_group_specs(3).is_err());
        let j4 = enumerate_two_group_specs(4).unwrap();
        assert_eq!(j4.len(), 9);
        let j5 = enumerate_two_group_specs(5).unwrap();
        assert!(j5.contains(&Family::TwoGroup {
            kind: TwoGroupKind::Cumulative,
            k: 1,
            s: 3
        }));
        // J=5: k ∈ {1,2}; s counts 4 + 3 per kind.
        assert_eq!(j5.len(), 3 * (4 + 3));
    }

    #[test]
    fn run_indexed_parallel_matches_sequential() {
        let seq = run_indexed(100, 1, |i| i * i);
        let par = run_indexed(100, 4, |i| i * i);
        assert_eq!(seq, par);
    }
}
