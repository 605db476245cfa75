//! Interval type-2 fuzzy rule-based classification.
//!
//! The crate learns Mamdani rule bases from tabular data and runs them:
//!
//! 1. [`data`] cleans a CSV table into a numeric [`Dataset`].
//! 2. [`cluster`] partitions the data with fuzzy c-means or Gustafson-Kessel
//!    and picks the cluster (rule) count with the Fukuyama-Sugeno index.
//! 3. [`learn`] projects the clusters into Gaussian rules, tunes them by
//!    steepest descent, widens them to interval type-2 sets and tunes again.
//! 4. [`engine`] fires rules with the product t-norm, reduces the type with
//!    Karnik-Mendel and thresholds the crisp score into a class.
//! 5. [`eval`] splits data, scores predictions and runs two baselines.
//!
//! [`model`] reads and writes the text model format; a published five-rule
//! model is bundled as [`model::table2`].

pub mod cluster;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod eval;
pub mod learn;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod rules;
pub mod sets;

pub use data::{Dataset, PreprocessConfig, RawTable};
pub use engine::{FiringInterval, Prediction, TypeReducedInterval};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rules::{InferenceConfig, Rule, RuleBase, RuleKind};
pub use sets::{GaussianT1Set, IT2GaussianSet, MembershipInterval};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/fuzzy-sets.md")]
    pub mod fuzzy_sets {}
    #[doc = include_str!("../../../book/src/type-reduction.md")]
    pub mod type_reduction {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    pub mod clustering {}
    #[doc = include_str!("../../../book/src/rule-learning.md")]
    pub mod rule_learning {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/model-format.md")]
    pub mod model_format {}
}
