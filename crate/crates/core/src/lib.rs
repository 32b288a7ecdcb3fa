//! Two-stage collective learning for exploring parameterized UI designs.
//!
//! Stage one fits a Gaussian-process regressor to crowd Likert ratings and
//! picks new designs to label by Expected Improvement ([`proactive`]).
//! Stage two learns a latent-utility GP from pairwise comparisons among the
//! best predicted designs ([`preference`]). [`oracle`] simulates the crowd,
//! [`metrics`] scores rankings and [`analysis`] summarizes what a model has
//! learned about individual design variables.

pub mod analysis;
pub mod design_space;
pub mod gp;
pub mod linalg;
pub mod metrics;
pub mod normal;
pub mod oracle;
pub mod preference;
pub mod proactive;
pub mod seed;

pub use design_space::{DesignSpace, DesignVector, UnitVector, VariableKind, VariableSpec};
pub use gp::{GpPosterior, KernelNorm, KernelParams, Prediction, Predictor};
pub use oracle::{OracleFixture, SyntheticOracle};
pub use preference::{ComparisonDataset, ComparisonRecord, PreferenceModel, PreferenceParams};
pub use proactive::{LabeledSolution, RatingRecord, RoundPlan};
