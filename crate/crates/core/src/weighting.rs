//! Membership models and inverse-odds-of-participation weights.
//!
//! Only ratios of weights are meaningful: the sampling fractions of the two
//! samples are unknown, so the odds estimated inside a partition equal the
//! population odds up to a constant. Every consumer of a [`WeightVector`] is
//! therefore invariant to rescaling it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{SplitAssignment, TransportDataset};
use crate::glm::{self, fit_weighted_logistic, GlmError, LogisticFit};
use crate::model_spec::{ModelSpec, SpecError};

/// Target-row membership probability below which positivity is flagged.
pub const POSITIVITY_WARNING: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum WeightingError {
    #[error("both populations required in the {0} subset")]
    MissingPopulation(Subset),
    #[error("membership model did not converge (gradient {0:e})")]
    NotConverged(f64),
    #[error("truncation quantile must lie in (0, 1], got {0}")]
    InvalidQuantile(f64),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Which partition a membership model was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Test,
    All,
}

impl std::fmt::Display for Subset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Subset::Train => "train",
            Subset::Test => "test",
            Subset::All => "all",
        })
    }
}

/// Logistic model for `Pr[S = 1 | X]` within one partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipModel {
    pub logistic: LogisticFit,
    pub fitted_on: Subset,
    pub spec: ModelSpec,
}

impl MembershipModel {
    /// Wraps known selection coefficients.
    pub fn from_coefficients(spec: ModelSpec, coefficients: Vec<f64>, fitted_on: Subset) -> Self {
        Self {
            logistic: LogisticFit::from_coefficients(spec.term_names(), coefficients),
            fitted_on,
            spec,
        }
    }

    /// Fitted log-odds of source membership.
    pub fn log_odds(&self, ds: &TransportDataset, rows: &[usize]) -> Result<Vec<f64>, WeightingError> {
        let design = self.spec.design(ds, rows)?;
        Ok(design.linear_predictor(&self.logistic.coefficients)?)
    }

    /// Fitted `Pr[S = 1 | X]`, strictly inside (0, 1) for finite log-odds.
    pub fn source_probability(
        &self,
        ds: &TransportDataset,
        rows: &[usize],
    ) -> Result<Vec<f64>, WeightingError> {
        Ok(self.log_odds(ds, rows)?.into_iter().map(glm::expit).collect())
    }

    /// Inverse odds `exp(-eta)` for the given rows, optionally capped at an
    /// upper quantile of their own distribution.
    pub fn inverse_odds(
        &self,
        ds: &TransportDataset,
        rows: &[usize],
        truncation: Option<f64>,
    ) -> Result<WeightVector, WeightingError> {
        if !self.logistic.converged {
            return Err(WeightingError::NotConverged(self.logistic.final_gradient_norm));
        }
        let mut values: Vec<f64> = self.log_odds(ds, rows)?.iter().map(|e| (-e).exp()).collect();
        if let Some(q) = truncation {
            if !(q > 0.0 && q <= 1.0) {
                return Err(WeightingError::InvalidQuantile(q));
            }
            let cap = quantile(&values, q);
            for v in &mut values {
                *v = v.min(cap);
            }
        }
        Ok(WeightVector {
            values,
            subset: self.fitted_on,
            truncation,
        })
    }

    /// Smallest fitted `Pr[S = 1 | X]` over the target rows among `rows`.
    pub fn min_target_probability(
        &self,
        ds: &TransportDataset,
        rows: &[usize],
    ) -> Result<Option<f64>, WeightingError> {
        let targets: Vec<usize> = rows.iter().copied().filter(|&i| !ds.is_source(i)).collect();
        let p = self.source_probability(ds, &targets)?;
        Ok(p.into_iter().reduce(f64::min))
    }
}

/// Strictly positive inverse-odds weights aligned to a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub values: Vec<f64>,
    pub subset: Subset,
    pub truncation: Option<f64>,
}

impl WeightVector {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }
}

/// Linear-interpolation sample quantile (type 7).
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits the membership model on an explicit list of rows.
pub fn fit_membership_on_rows(
    ds: &TransportDataset,
    rows: &[usize],
    subset: Subset,
    spec: &ModelSpec,
) -> Result<MembershipModel, WeightingError> {
    let s: Vec<f64> = rows.iter().map(|&i| if ds.is_source(i) { 1.0 } else { 0.0 }).collect();
    if !s.contains(&1.0) || !s.contains(&0.0) {
        return Err(WeightingError::MissingPopulation(subset));
    }
    let design = spec.design(ds, rows)?;
    let logistic = fit_weighted_logistic(&design, &s, &vec![1.0; rows.len()])?;
    let model = MembershipModel {
        logistic,
        fitted_on: subset,
        spec: spec.clone(),
    };
    if let Some(p) = model.min_target_probability(ds, rows)? {
        if p < POSITIVITY_WARNING {
            log::warn!(
                "near positivity violation in {subset} subset: min Pr[S=1|X] on target rows is {p:.3e}"
            );
        }
    }
    Ok(model)
}

/// Fits `Pr[S = 1 | X]` on the train or test partition of `split`.
pub fn fit_membership_model(
    ds: &TransportDataset,
    split: &SplitAssignment,
    subset: Subset,
    spec: &ModelSpec,
) -> Result<MembershipModel, WeightingError> {
    let rows = match subset {
        Subset::Train => split.train_rows(),
        Subset::Test => split.test_rows(),
        Subset::All => (0..ds.nrows()).collect(),
    };
    fit_membership_on_rows(ds, &rows, subset, spec)
}
