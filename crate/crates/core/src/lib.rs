//! Maximum likelihood fitting for multinomial regression models with
//! flexible link structures.
//!
//! The model class covers baseline-category, cumulative, adjacent-categories,
//! and continuation-ratio families, mixed link functions per category,
//! two-group category structures (a baseline-category group joined to an
//! ordinal group through a shared category), and po/npo/ppo/po-npo-mixture
//! predictor structures. Every family is expressed through a single
//! `(L, R, b)` triple so that one Fisher-scoring engine with exact gradients
//! and expected information serves all of them, with feasibility of the
//! parameter vector enforced at every iterate.
//!
//! Entry points:
//! - [`model::ModelSpec`] / [`design::DesignSpec`] describe the model,
//! - [`data::Dataset`] holds summarized counts,
//! - [`fit::fisher_scoring`] produces a [`fit::FitResult`],
//! - [`inference`] turns a fit into intervals and tests,
//! - [`select`] searches over link assignments, coefficient constraints,
//!   and two-group structures.

pub mod config;
pub mod data;
pub mod design;
pub mod error;
pub mod fit;
pub mod inference;
pub mod likelihood;
pub mod link;
pub mod model;
pub mod prob;
pub mod select;
pub mod special;

pub use data::Dataset;
pub use design::DesignSpec;
pub use error::{Error, Result};
pub use fit::{fisher_scoring, FitOptions, FitResult};
pub use link::Link;
pub use model::{Family, ModelSpec, TwoGroupKind};
