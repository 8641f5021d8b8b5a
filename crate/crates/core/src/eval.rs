//! Loss functions and target-population performance estimators.
//!
//! All estimators read the test partition only. The inverse-odds weighting
//! estimator sums weighted source-row losses and divides by the number of
//! target test rows; the nested-design estimator divides inverse-probability
//! weighted source losses by the number of all test rows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DesignKind, SplitAssignment, TransportDataset};
use crate::error::Result;
use crate::fit::FittedModel;
use crate::glm::fit_weighted_linear;
use crate::model_spec::{Family, ModelSpec};
use crate::sum::CompensatedSum;
use crate::weighting::{MembershipModel, Subset};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("brier score needs y in {{0, 1}} and a prediction in [0, 1], got y={y}, prediction={pred}")]
    BrierDomain { y: f64, pred: f64 },
    #[error("brier score requires a bernoulli outcome model")]
    BrierFamily,
    #[error("no {0} rows in the evaluation set")]
    NoRows(&'static str),
    #[error("membership model for evaluation must be fitted on test rows, not {0}")]
    WrongSubset(Subset),
    #[error("estimator requires a {0:?} design")]
    WrongDesign(DesignKind),
    #[error("membership probability is zero on source row {0}")]
    ZeroProbability(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    AbsoluteError,
    Brier,
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mse" | "squared" | "squared_error" => Ok(Self::SquaredError),
            "mae" | "absolute" | "absolute_error" => Ok(Self::AbsoluteError),
            "brier" => Ok(Self::Brier),
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

/// Per-row loss `L(y, prediction)`.
pub fn loss(kind: LossKind, y: f64, pred: f64) -> Result<f64, EvalError> {
    match kind {
        LossKind::SquaredError => Ok((y - pred).powi(2)),
        LossKind::AbsoluteError => Ok((y - pred).abs()),
        LossKind::Brier => {
            if (y != 0.0 && y != 1.0) || !(0.0..=1.0).contains(&pred) {
                return Err(EvalError::BrierDomain { y, pred });
            }
            Ok((y - pred).powi(2))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Inverse-odds weighting, non-nested design.
    Iow,
    /// Regression of the loss on covariates, averaged over target rows.
    ConditionalLoss,
    /// Inverse-probability weighting, nested design.
    NestedIpw,
    /// Plain mean over source test rows.
    SourceNaive,
}

/// Denominator of the inverse-odds weighting estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    /// Number of target test rows.
    #[default]
    TargetCount,
    /// Sum of source-row weights (self-normalized).
    WeightSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEstimate {
    pub loss: LossKind,
    pub value: f64,
    pub estimator: Estimator,
    pub n_source: usize,
    pub n_target: usize,
}

/// Per-row losses of `fit` on source rows.
pub fn source_losses(
    ds: &TransportDataset,
    rows: &[usize],
    fit: &FittedModel,
    kind: LossKind,
) -> Result<Vec<f64>> {
    if kind == LossKind::Brier && fit.spec().family != Family::Bernoulli {
        return Err(EvalError::BrierFamily.into());
    }
    let pred = fit.predict(ds, rows)?;
    rows.iter()
        .zip(pred)
        .map(|(&i, p)| {
            let y = ds.outcome(i).expect("source rows carry outcomes");
            Ok(loss(kind, y, p)?)
        })
        .collect()
}

fn split_test_rows(ds: &TransportDataset, rows: &[usize]) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&i| ds.is_source(i))
}

/// Inverse-odds weighting estimate of the target-population expected loss.
pub fn estimate_target_loss_iow(
    ds: &TransportDataset,
    split: &SplitAssignment,
    fit: &FittedModel,
    mm_test: &MembershipModel,
    kind: LossKind,
) -> Result<PerformanceEstimate> {
    estimate_iow_on_rows(ds, &split.test_rows(), fit, mm_test, kind, Denominator::TargetCount, None)
}

/// Inverse-odds weighting estimate over an explicit evaluation set.
pub fn estimate_iow_on_rows(
    ds: &TransportDataset,
    eval_rows: &[usize],
    fit: &FittedModel,
    mm_eval: &MembershipModel,
    kind: LossKind,
    denominator: Denominator,
    truncation: Option<f64>,
) -> Result<PerformanceEstimate> {
    if mm_eval.fitted_on == Subset::Train {
        return Err(EvalError::WrongSubset(Subset::Train).into());
    }
    let (source, target) = split_test_rows(ds, eval_rows);
    if source.is_empty() {
        return Err(EvalError::NoRows("source").into());
    }
    if target.is_empty() {
        return Err(EvalError::NoRows("target").into());
    }
    let losses = source_losses(ds, &source, fit, kind)?;
    let weights = mm_eval.inverse_odds(ds, &source, truncation)?;
    let mut numerator = CompensatedSum::default();
    for (w, l) in weights.values.iter().zip(&losses) {
        numerator.add(w * l);
    }
    let denom = match denominator {
        Denominator::TargetCount => target.len() as f64,
        Denominator::WeightSum => weights.values.iter().copied().collect::<CompensatedSum>().value(),
    };
    Ok(PerformanceEstimate {
        loss: kind,
        value: numerator.value() / denom,
        estimator: Estimator::Iow,
        n_source: source.len(),
        n_target: target.len(),
    })
}

/// Fits a regression of the per-row loss on `loss_model_spec` over source
/// test rows and averages its predictions over target test rows.
///
/// Predicted losses are floored at zero before averaging.
pub fn estimate_target_loss_om(
    ds: &TransportDataset,
    split: &SplitAssignment,
    fit: &FittedModel,
    kind: LossKind,
    loss_model_spec: &ModelSpec,
) -> Result<PerformanceEstimate> {
    let (source, target) = split_test_rows(ds, &split.test_rows());
    if source.is_empty() {
        return Err(EvalError::NoRows("source").into());
    }
    if target.is_empty() {
        return Err(EvalError::NoRows("target").into());
    }
    let losses = source_losses(ds, &source, fit, kind)?;
    let design = loss_model_spec.design(ds, &source)?;
    let loss_fit = fit_weighted_linear(&design, &losses, &vec![1.0; source.len()])?;
    let target_design = loss_model_spec.design(ds, &target)?;
    let predicted = target_design.linear_predictor(&loss_fit.coefficients)?;
    let total: CompensatedSum = predicted.into_iter().map(|v| v.max(0.0)).collect();
    Ok(PerformanceEstimate {
        loss: kind,
        value: total.value() / target.len() as f64,
        estimator: Estimator::ConditionalLoss,
        n_source: source.len(),
        n_target: target.len(),
    })
}

/// Expected loss over the whole cohort of a nested design.
pub fn estimate_nested_loss(
    ds: &TransportDataset,
    split: &SplitAssignment,
    fit: &FittedModel,
    mm_test: &MembershipModel,
    kind: LossKind,
) -> Result<PerformanceEstimate> {
    estimate_nested_on_rows(ds, &split.test_rows(), fit, mm_test, kind)
}

pub fn estimate_nested_on_rows(
    ds: &TransportDataset,
    eval_rows: &[usize],
    fit: &FittedModel,
    mm_eval: &MembershipModel,
    kind: LossKind,
) -> Result<PerformanceEstimate> {
    if ds.design() != DesignKind::Nested {
        return Err(EvalError::WrongDesign(DesignKind::Nested).into());
    }
    if mm_eval.fitted_on == Subset::Train {
        return Err(EvalError::WrongSubset(Subset::Train).into());
    }
    let (source, target) = split_test_rows(ds, eval_rows);
    if source.is_empty() {
        return Err(EvalError::NoRows("source").into());
    }
    let losses = source_losses(ds, &source, fit, kind)?;
    let p = mm_eval.source_probability(ds, &source)?;
    let mut numerator = CompensatedSum::default();
    for ((&row, l), p) in source.iter().zip(&losses).zip(&p) {
        if *p <= 0.0 {
            return Err(EvalError::ZeroProbability(row).into());
        }
        numerator.add(l / p);
    }
    Ok(PerformanceEstimate {
        loss: kind,
        value: numerator.value() / eval_rows.len() as f64,
        estimator: Estimator::NestedIpw,
        n_source: source.len(),
        n_target: target.len(),
    })
}

/// Mean loss over source test rows, ignoring the covariate shift.
pub fn estimate_source_loss(
    ds: &TransportDataset,
    split: &SplitAssignment,
    fit: &FittedModel,
    kind: LossKind,
) -> Result<PerformanceEstimate> {
    estimate_source_on_rows(ds, &split.test_rows(), fit, kind)
}

pub fn estimate_source_on_rows(
    ds: &TransportDataset,
    eval_rows: &[usize],
    fit: &FittedModel,
    kind: LossKind,
) -> Result<PerformanceEstimate> {
    let (source, target) = split_test_rows(ds, eval_rows);
    if source.is_empty() {
        return Err(EvalError::NoRows("source").into());
    }
    let losses = source_losses(ds, &source, fit, kind)?;
    let total: CompensatedSum = losses.into_iter().collect();
    Ok(PerformanceEstimate {
        loss: kind,
        value: total.value() / source.len() as f64,
        estimator: Estimator::SourceNaive,
        n_source: source.len(),
        n_target: target.len(),
    })
}
