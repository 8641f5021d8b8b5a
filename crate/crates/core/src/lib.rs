//! Transporting prediction models from a source population to a target
//! population under covariate shift.
//!
//! The crate covers the full workflow for a composite sample in which
//! outcomes are observed only in the source population:
//!
//! - [`data`]: the composite dataset, stratified train/test splits and folds.
//! - [`glm`]: weighted least squares and weighted logistic regression.
//! - [`model_spec`]: declarative feature maps such as `1,x,x^2`.
//! - [`weighting`]: membership models and inverse-odds weights.
//! - [`fit`]: unweighted or inverse-odds-weighted model fitting.
//! - [`eval`]: losses and target-population performance estimators.
//! - [`select`]: weighted cross-validation and prediction error modifier
//!   diagnostics.
//! - [`sim`]: data-generating processes, quadrature truths and the
//!   simulation study runner.
//! - [`cli`]: the command-line front end and JSON reports.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fit;
pub mod glm;
pub mod io;
pub mod model_spec;
pub mod report;
mod rng;
pub mod select;
pub mod sim;
mod sum;
pub mod weighting;

pub use data::{
    assemble_composite, make_folds, split_train_test, DesignKind, FoldAssignment, SplitAssignment,
    Table, TransportDataset,
};
pub use error::{Error, Result};
pub use eval::{
    estimate_nested_loss, estimate_source_loss, estimate_target_loss_iow,
    estimate_target_loss_om, loss, Denominator, Estimator, LossKind, PerformanceEstimate,
};
pub use fit::{fit_transported, FitOptions, FittedModel, WeightingMode};
pub use glm::{fit_weighted_linear, fit_weighted_logistic, DesignMatrix, LinearFit, LogisticFit};
pub use model_spec::{Family, ModelSpec};
pub use select::{cv_weighted, pem_curve, pem_test, CvMode, CvResult, PemCurve};
pub use sim::{generate, reproduce_table1, true_target_loss, DgpKind, DgpSpec, NoiseLaw, Table1Report};
pub use weighting::{fit_membership_model, MembershipModel, Subset, WeightVector};
