//! Serde-facing descriptions of models and designs, shared by the CLI and
//! the browser demo. Unknown keys are rejected everywhere.
//!
//! Term strings: `"1"` (intercept), `"<name>"` (a covariate), `"<name>^2"`
//! (its square). Family names: `baseline`, `cumulative`, `adjacent`,
//! `continuation`, `baseline-cumulative`, `baseline-adjacent`,
//! `baseline-continuation` (the last three take `k` and `s`). Link names:
//! `logit`, `probit`, `loglog`, `cloglog`, `cauchit`, `t:<nu>`.

use crate::design::{DesignSpec, Term};
use crate::error::{Error, Result};
use crate::fit::FitOptions;
use crate::link::Link;
use crate::model::{Family, ModelSpec, TwoGroupKind};
use serde::{Deserialize, Serialize};

/// Model description: family plus links.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    /// One link for every category, or one per category.
    pub links: LinksConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LinksConfig {
    Shared(String),
    PerCategory(Vec<String>),
}

impl ModelConfig {
    pub fn family(&self, j: usize) -> Result<Family> {
        let two_group = |kind: TwoGroupKind| -> Result<Family> {
            let k = self.k.ok_or_else(|| {
                Error::InvalidModel(format!("{} requires `k`", self.family))
            })?;
            // The shared category defaults to the overall baseline J.
            let s = self.s.unwrap_or(j);
            Ok(Family::TwoGroup { kind, k, s })
        };
        match self.family.as_str() {
            "baseline" => Ok(Family::Baseline),
            "cumulative" => Ok(Family::Cumulative),
            "adjacent" => Ok(Family::Adjacent),
            "continuation" => Ok(Family::Continuation),
            "baseline-cumulative" => two_group(TwoGroupKind::Cumulative),
            "baseline-adjacent" => two_group(TwoGroupKind::Adjacent),
            "baseline-continuation" => two_group(TwoGroupKind::Continuation),
            other => Err(Error::InvalidModel(format!("unknown family: {other}"))),
        }
    }

    /// Materialize the model for `j` response categories.
    pub fn build(&self, j: usize) -> Result<ModelSpec> {
        if j < 2 {
            return Err(Error::InvalidModel(format!(
                "at least two categories are required, got J = {j}"
            )));
        }
        let family = self.family(j)?;
        let links = match &self.links {
            LinksConfig::Shared(name) => vec![name.parse::<Link>()?; j - 1],
            LinksConfig::PerCategory(names) => names
                .iter()
                .map(|n| n.parse::<Link>())
                .collect::<Result<Vec<_>>>()?,
        };
        ModelSpec::new(j, family, links)
    }
}

/// Design description: predictor structure over named covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// `po`, `npo`, `ppo`, or `mixture`.
    pub structure: String,
    /// Terms shared across all categories (po/ppo).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predictors_common: Vec<String>,
    /// Per-category term lists (npo/ppo/mixture), `J-1` entries. For npo a
    /// single shared list may be given through `predictors_common` instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictors_per_category: Option<Vec<Vec<String>>>,
    /// Equality constraints: merge the named column's coefficients across
    /// the listed categories (1-based).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub column: String,
    pub categories: Vec<usize>,
}

/// Parse a term string against the declared covariates.
pub fn parse_term(text: &str, covariate_names: &[String]) -> Result<Term> {
    let text = text.trim();
    if text == "1" || text.eq_ignore_ascii_case("intercept") {
        return Ok(Term::Intercept);
    }
    let (name, quadratic) = match text.strip_suffix("^2") {
        Some(base) => (base.trim(), true),
        None => (text, false),
    };
    let index = covariate_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| {
            Error::InvalidDesign(format!(
                "unknown covariate {name:?}; declared: {covariate_names:?}"
            ))
        })?;
    Ok(if quadratic {
        Term::Quadratic(index)
    } else {
        Term::Linear(index)
    })
}

impl DesignConfig {
    /// Materialize the design for `n_categories = J-1` modeled categories.
    pub fn build(&self, n_categories: usize, covariate_names: &[String]) -> Result<DesignSpec> {
        let common: Vec<Term> = self
            .predictors_common
            .iter()
            .map(|t| parse_term(t, covariate_names))
            .collect::<Result<_>>()?;
        let per_category: Option<Vec<Vec<Term>>> = self
            .predictors_per_category
            .as_ref()
            .map(|lists| {
                lists
                    .iter()
                    .map(|terms| {
                        terms
                            .iter()
                            .map(|t| parse_term(t, covariate_names))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;

        let base = match self.structure.as_str() {
            "po" => {
                if per_category.is_some() {
                    return Err(Error::InvalidDesign(
                        "po uses `predictors_common` only; per-category lists are npo/ppo/mixture territory".into(),
                    ));
                }
                DesignSpec::po(n_categories, covariate_names.to_vec(), &common)?
            }
            "npo" => {
                let terms = match &per_category {
                    Some(lists) => {
                        if lists.len() != n_categories {
                            return Err(Error::InvalidDesign(format!(
                                "expected {n_categories} per-category lists, got {}",
                                lists.len()
                            )));
                        }
                        if lists.windows(2).any(|w| w[0] != w[1]) {
                            return Err(Error::InvalidDesign(
                                "npo lists must be identical across categories; use ppo or mixture for unequal lists".into(),
                            ));
                        }
                        lists[0].clone()
                    }
                    None => common.clone(),
                };
                DesignSpec::npo(n_categories, covariate_names.to_vec(), &terms)?
            }
            "ppo" | "mixture" => {
                let lists = per_category.ok_or_else(|| {
                    Error::InvalidDesign(format!(
                        "{} requires `predictors_per_category`",
                        self.structure
                    ))
                })?;
                DesignSpec::ppo(n_categories, covariate_names.to_vec(), &lists, &common)?
            }
            other => {
                return Err(Error::InvalidDesign(format!(
                    "unknown structure: {other} (expected po, npo, ppo, or mixture)"
                )))
            }
        };

        // Apply equality constraints as successive merges.
        let mut design = base;
        for constraint in &self.constraints {
            if constraint.categories.len() < 2 {
                return Err(Error::InvalidDesign(
                    "a constraint needs at least two categories".into(),
                ));
            }
            let term = parse_term(&constraint.column, covariate_names)?;
            let column = design
                .columns()
                .iter()
                .position(|c| c.term == term)
                .ok_or_else(|| {
                    Error::InvalidDesign(format!(
                        "constraint column {:?} is not in the design",
                        constraint.column
                    ))
                })?;
            let anchor = constraint.categories[0];
            for &cat in &constraint.categories[1..] {
                if anchor == 0 || cat == 0 {
                    return Err(Error::InvalidDesign(
                        "constraint categories are 1-based".into(),
                    ));
                }
                design = design.merge_groups(column, anchor - 1, cat - 1)?;
            }
        }
        Ok(design)
    }
}

/// Fit options as they appear in config files; every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_backtrack: Option<usize>,
}

impl FitConfig {
    pub fn build(&self) -> FitOptions {
        let mut options = FitOptions::default();
        if let Some(v) = self.epsilon {
            options.epsilon = v;
        }
        if let Some(v) = self.delta {
            options.delta = v;
        }
        if let Some(v) = self.lambda0 {
            options.lambda0 = v;
        }
        if let Some(v) = self.max_iter {
            options.max_iter = v;
        }
        if let Some(v) = self.max_backtrack {
            options.max_backtrack = v;
        }
        options
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_config_round_trip() {
        let json = r#"{"family":"baseline-cumulative","k":1,"s":3,"links":["logit","probit","loglog","t:7"]}"#;
        let config: ModelConfig = serde_json::from_str(json).unwrap();
        let spec = config.build(5).unwrap();
        assert_eq!(spec.j(), 5);
        assert_eq!(spec.links()[3], Link::StudentT(7.0));
        assert!(matches!(
            spec.family(),
            Family::TwoGroup {
                kind: TwoGroupKind::Cumulative,
                k: 1,
                s: 3
            }
        ));
    }

    #[test]
    fn shared_category_defaults_to_baseline() {
        let json = r#"{"family":"baseline-adjacent","k":2,"links":"logit"}"#;
        let config: ModelConfig = serde_json::from_str(json).unwrap();
        let spec = config.build(6).unwrap();
        assert!(matches!(
            spec.family(),
            Family::TwoGroup { s: 6, k: 2, .. }
        ));
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"family":"baseline","links":"logit","typo":1}"#;
        assert!(serde_json::from_str::<ModelConfig>(json).is_err());
    }

    #[test]
    fn design_config_structures() {
        let names = vec!["dose".to_string()];
        let po: DesignConfig = serde_json::from_str(
            r#"{"structure":"po","predictors_common":["dose"]}"#,
        )
        .unwrap();
        assert_eq!(po.build(2, &names).unwrap().n_params(), 3);

        let npo: DesignConfig = serde_json::from_str(
            r#"{"structure":"npo","predictors_common":["dose"]}"#,
        )
        .unwrap();
        assert_eq!(npo.build(2, &names).unwrap().n_params(), 4);

        let ppo: DesignConfig = serde_json::from_str(
            r#"{"structure":"ppo","predictors_per_category":[["1","dose","dose^2"],["1","dose"]]}"#,
        )
        .unwrap();
        let design = ppo.build(2, &names).unwrap();
        assert_eq!(design.n_params(), 5);

        let mixture: DesignConfig = serde_json::from_str(
            r#"{"structure":"mixture",
                "predictors_per_category":[["1","dose"],["1","dose"],["1","dose"]],
                "constraints":[{"column":"dose","categories":[1,3]}]}"#,
        )
        .unwrap();
        let design = mixture.build(3, &names).unwrap();
        assert_eq!(design.n_params(), 5);
    }

    #[test]
    fn bad_terms_and_structures() {
        let names = vec!["dose".to_string()];
        assert!(parse_term("weight", &names).is_err());
        assert!(parse_term("dose^2", &names).is_ok());
        let bad: DesignConfig =
            serde_json::from_str(r#"{"structure":"quadratic"}"#).unwrap();
        assert!(bad.build(2, &names).is_err());
    }
}
