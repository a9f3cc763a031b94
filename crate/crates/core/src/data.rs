//! Datasets in summarized form, CSV ingestion, multinomial simulation, and
//! the bootstrap feasibility audit.
//!
//! All randomness flows through ChaCha20 streams seeded explicitly by the
//! caller. Sub-streams (bootstrap replicates, CV folds) derive their seeds
//! as `splitmix64(base_seed ⊕ splitmix64(index + 1))`, so replicate `i` is
//! reproducible in isolation.

use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::fit::{fisher_scoring, FitOptions};
use crate::model::ModelSpec;
use crate::prob::{pi_from_rho, rho_at};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use std::collections::HashMap;
use std::io;

/// Counts at distinct covariate settings: `m` settings over `d` covariates
/// with a length-`J` count vector each, all `n_i ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    settings: Vec<Vec<f64>>,
    counts: Vec<Vec<u64>>,
}

impl Dataset {
    pub fn new(
        covariate_names: Vec<String>,
        settings: Vec<Vec<f64>>,
        counts: Vec<Vec<u64>>,
    ) -> Result<Self> {
        if settings.is_empty() {
            return Err(Error::InvalidData("dataset has no settings".into()));
        }
        if settings.len() != counts.len() {
            return Err(Error::InvalidData(format!(
                "{} settings but {} count rows",
                settings.len(),
                counts.len()
            )));
        }
        let dim = covariate_names.len();
        let j = counts[0].len();
        if j < 2 {
            return Err(Error::InvalidData(
                "at least two response categories are required".into(),
            ));
        }
        for (i, x) in settings.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::InvalidData(format!(
                    "setting {} has {} covariates, expected {dim}",
                    i + 1,
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "setting {} has a non-finite covariate",
                    i + 1
                )));
            }
        }
        for (i, y) in counts.iter().enumerate() {
            if y.len() != j {
                return Err(Error::InvalidData(format!(
                    "count row {} has {} categories, expected {j}",
                    i + 1,
                    y.len()
                )));
            }
            if y.iter().sum::<u64>() == 0 {
                return Err(Error::InvalidData(format!(
                    "setting {} has no observations",
                    i + 1
                )));
            }
        }
        for a in 0..settings.len() {
            for b in (a + 1)..settings.len() {
                if settings[a] == settings[b] {
                    return Err(Error::InvalidData(format!(
                        "settings {} and {} are identical; aggregate their counts",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        Ok(Dataset {
            covariate_names,
            settings,
            counts,
        })
    }

    pub fn m(&self) -> usize {
        self.settings.len()
    }

    pub fn j(&self) -> usize {
        self.counts[0].len()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn settings(&self) -> &[Vec<f64>] {
        &self.settings
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n_i(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Total observation count `n = Σ n_i`.
    pub fn total_n(&self) -> u64 {
        self.counts.iter().map(|y| y.iter().sum::<u64>()).sum()
    }

    /// Read a summarized CSV: covariate columns named `x_<name>`, then count
    /// columns `y_1 .. y_J`. Duplicate settings are aggregated with a
    /// warning.
    pub fn read_summarized(reader: impl io::Read) -> Result<(Self, Vec<String>)> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let mut x_cols = Vec::new();
        let mut y_cols = Vec::new();
        for (idx, name) in headers.iter().enumerate() {
            if let Some(cov) = name.strip_prefix("x_") {
                x_cols.push((idx, cov.to_string()));
            } else if name.starts_with("y_") {
                y_cols.push((idx, name.to_string()));
            } else {
                return Err(Error::InvalidData(format!(
                    "unexpected column {name:?}; summarized files use x_<name> and y_<k>"
                )));
            }
        }
        if y_cols.len() < 2 {
            return Err(Error::InvalidData(
                "summarized files need at least two y_<k> columns".into(),
            ));
        }
        for (k, (_, name)) in y_cols.iter().enumerate() {
            let expected = format!("y_{}", k + 1);
            if name != &expected {
                return Err(Error::InvalidData(format!(
                    "count columns must be y_1..y_J in order; found {name:?} where {expected:?} was expected"
                )));
            }
        }

        let mut order: Vec<Vec<f64>> = Vec::new();
        let mut accum: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut counts: Vec<Vec<u64>> = Vec::new();
        let mut warnings = Vec::new();
        for (row_idx, record) in csv_reader.records().enumerate() {
            let record = record?;
            let mut x = Vec::with_capacity(x_cols.len());
            for (idx, name) in &x_cols {
                let field = record.get(*idx).unwrap_or("");
                let value: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}: covariate {name:?} is not numeric: {field:?}",
                        row_idx + 2
                    ))
                })?;
                x.push(value);
            }
            let mut y = Vec::with_capacity(y_cols.len());
            for (idx, name) in &y_cols {
                let field = record.get(*idx).unwrap_or("");
                let value: u64 = field.trim().parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}: count {name:?} is not a nonnegative integer: {field:?}",
                        row_idx + 2
                    ))
                })?;
                y.push(value);
            }
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            match accum.get(&key) {
                Some(&pos) => {
                    warnings.push(format!(
                        "row {}: duplicate setting; counts added to the earlier row",
                        row_idx + 2
                    ));
                    for (slot, add) in counts[pos].iter_mut().zip(y) {
                        *slot += add;
                    }
                }
                None => {
                    accum.insert(key, order.len());
                    order.push(x);
                    counts.push(y);
                }
            }
        }
        let names = x_cols.into_iter().map(|(_, n)| n).collect();
        let dataset = Dataset::new(names, order, counts)?;
        Ok((dataset, warnings))
    }

    /// Read a raw CSV with one row per observation: covariate columns plus a
    /// `category` column. `categories` declares the full label set and its
    /// working order; it defines `J`.
    pub fn read_raw(reader: impl io::Read, categories: &[String]) -> Result<Self> {
        if categories.len() < 2 {
            return Err(Error::InvalidData(
                "at least two category labels are required".into(),
            ));
        }
        let label_index: HashMap<&str, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, label)| (label.as_str(), i))
            .collect();
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let mut x_cols = Vec::new();
        let mut cat_col = None;
        for (idx, name) in headers.iter().enumerate() {
            if name == "category" {
                cat_col = Some(idx);
            } else {
                let cov = name.strip_prefix("x_").unwrap_or(name);
                x_cols.push((idx, cov.to_string()));
            }
        }
        let cat_col = cat_col.ok_or_else(|| {
            Error::InvalidData("raw files need a `category` column".into())
        })?;

        let j = categories.len();
        let mut order: Vec<Vec<f64>> = Vec::new();
        let mut accum: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut counts: Vec<Vec<u64>> = Vec::new();
        for (row_idx, record) in csv_reader.records().enumerate() {
            let record = record?;
            let mut x = Vec::with_capacity(x_cols.len());
            for (idx, name) in &x_cols {
                let field = record.get(*idx).unwrap_or("");
                let value: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {}: covariate {name:?} is not numeric: {field:?}",
                        row_idx + 2
                    ))
                })?;
                x.push(value);
            }
            let label = record.get(cat_col).unwrap_or("").trim();
            let cat = *label_index.get(label).ok_or_else(|| {
                Error::InvalidData(format!(
                    "row {}: unknown category label {label:?}",
                    row_idx + 2
                ))
            })?;
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            let pos = match accum.get(&key) {
                Some(&pos) => pos,
                None => {
                    accum.insert(key, order.len());
                    order.push(x);
                    counts.push(vec![0; j]);
                    order.len() - 1
                }
            };
            counts[pos][cat] += 1;
        }
        if order.is_empty() {
            return Err(Error::InvalidData("empty file".into()));
        }
        let names = x_cols.into_iter().map(|(_, n)| n).collect();
        Dataset::new(names, order, counts)
    }

    /// Write in the summarized format accepted by [`Dataset::read_summarized`].
    pub fn write_summarized(&self, writer: impl io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = self
            .covariate_names
            .iter()
            .map(|n| format!("x_{n}"))
            .collect();
        for k in 1..=self.j() {
            header.push(format!("y_{k}"));
        }
        out.write_record(&header)?;
        for (x, y) in self.settings.iter().zip(&self.counts) {
            let mut row: Vec<String> = x.iter().map(|v| format_float(*v)).collect();
            row.extend(y.iter().map(|c| c.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// SplitMix64 output mixer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic sub-seed for replicate/fold `index` of a base seed.
pub fn subseed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(1)))
}

/// Seeded ChaCha20 stream.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// One multinomial draw by sequential conditional binomials.
pub fn sample_multinomial(rng: &mut ChaCha20Rng, n: u64, probs: &[f64]) -> Vec<u64> {
    let j = probs.len();
    let mut out = vec![0u64; j];
    let mut remaining = n;
    let mut mass_left = 1.0;
    for cat in 0..j - 1 {
        if remaining == 0 {
            break;
        }
        let p = (probs[cat] / mass_left).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, p)
            .expect("conditional probability is in [0,1]")
            .sample(rng);
        out[cat] = draw;
        remaining -= draw;
        mass_left -= probs[cat];
        if mass_left <= 0.0 {
            break;
        }
    }
    out[j - 1] += remaining;
    out
}

/// Draw `y_i ~ Multinomial(n_i, π(θ, x_i))` at each setting.
pub fn simulate(
    spec: &ModelSpec,
    design: &DesignSpec,
    theta: &DVector<f64>,
    settings: &[Vec<f64>],
    n_per_setting: &[u64],
    seed: u64,
) -> Result<Dataset> {
    if settings.len() != n_per_setting.len() {
        return Err(Error::InvalidData(format!(
            "{} settings but {} sample sizes",
            settings.len(),
            n_per_setting.len()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut counts = Vec::with_capacity(settings.len());
    for (i, x) in settings.iter().enumerate() {
        let rho = rho_at(spec, design, theta, x)?;
        let pi = pi_from_rho(spec, &rho).map_err(|e| match e {
            Error::Infeasible { cause, .. } => Error::Infeasible {
                setting: Some(i),
                cause,
            },
            other => other,
        })?;
        counts.push(sample_multinomial(&mut rng, n_per_setting[i], pi.as_slice()));
    }
    Dataset::new(design.covariate_names().to_vec(), settings.to_vec(), counts)
}

/// Outcome of one bootstrap replicate.
#[derive(Debug, Clone)]
pub struct BootstrapReplicate {
    pub converged: bool,
    pub feasible: bool,
    pub min_fitted_prob: f64,
    pub loglik: f64,
    /// Set when the replicate failed outright (no fit produced).
    pub error: Option<String>,
}

/// Aggregate over all replicates of a bootstrap study.
#[derive(Debug, Clone)]
pub struct BootstrapReport {
    pub replicates: Vec<BootstrapReplicate>,
    pub n_converged: usize,
    pub n_feasible: usize,
    pub n_failed: usize,
    pub n_nonpositive_prob: usize,
}

/// Resample the dataset at the observation level `B` times, refit each
/// replicate, and audit convergence and fitted-probability positivity.
pub fn bootstrap_study(
    spec: &ModelSpec,
    design: &DesignSpec,
    data: &Dataset,
    replicates: usize,
    seed: u64,
    options: &FitOptions,
    jobs: usize,
) -> Result<BootstrapReport> {
    if replicates == 0 {
        return Err(Error::InvalidData("bootstrap needs at least one replicate".into()));
    }
    // Disaggregate once: (setting, category) per observation.
    let mut observations = Vec::with_capacity(data.total_n() as usize);
    for (i, row) in data.counts().iter().enumerate() {
        for (cat, &count) in row.iter().enumerate() {
            for _ in 0..count {
                observations.push((i, cat));
            }
        }
    }

    let run_one = |rep: usize| -> BootstrapReplicate {
        let mut rng = rng_from_seed(subseed(seed, rep as u64));
        let mut counts = vec![vec![0u64; data.j()]; data.m()];
        for _ in 0..observations.len() {
            let (i, cat) = observations[rng.gen_range(0..observations.len())];
            counts[i][cat] += 1;
        }
        // Settings with no resampled observations drop out.
        let mut settings = Vec::new();
        let mut kept_counts = Vec::new();
        for (x, y) in data.settings().iter().zip(counts) {
            if y.iter().sum::<u64>() > 0 {
                settings.push(x.clone());
                kept_counts.push(y);
            }
        }
        let resampled = match Dataset::new(
            data.covariate_names().to_vec(),
            settings,
            kept_counts,
        ) {
            Ok(d) => d,
            Err(e) => {
                return BootstrapReplicate {
                    converged: false,
                    feasible: false,
                    min_fitted_prob: f64::NAN,
                    loglik: f64::NAN,
                    error: Some(e.to_string()),
                }
            }
        };
        match fisher_scoring(spec, design, &resampled, options) {
            Ok(fit) => {
                let min_prob = fit.fitted.iter().cloned().fold(f64::INFINITY, f64::min);
                let max_prob = fit.fitted.iter().cloned().fold(0.0_f64, f64::max);
                BootstrapReplicate {
                    converged: fit.converged,
                    feasible: min_prob > 0.0 && max_prob < 1.0,
                    min_fitted_prob: min_prob,
                    loglik: fit.loglik,
                    error: None,
                }
            }
            Err(e) => BootstrapReplicate {
                converged: false,
                feasible: false,
                min_fitted_prob: f64::NAN,
                loglik: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    };

    let results = crate::select::run_indexed(replicates, jobs, run_one);
    let replicates_out: Vec<BootstrapReplicate> = results;
    let n_converged = replicates_out.iter().filter(|r| r.converged).count();
    let n_feasible = replicates_out.iter().filter(|r| r.feasible).count();
    let n_failed = replicates_out.iter().filter(|r| r.error.is_some()).count();
    let n_nonpositive_prob = replicates_out
        .iter()
        .filter(|r| r.error.is_none() && !(r.min_fitted_prob > 0.0))
        .count();
    Ok(BootstrapReport {
        replicates: replicates_out,
        n_converged,
        n_feasible,
        n_failed,
        n_nonpositive_prob,
    })
}
