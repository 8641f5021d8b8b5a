//! Target-weighted cross-validation and prediction error modifier
//! diagnostics.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FoldAssignment, SplitAssignment, TransportDataset};
use crate::error::Result;
use crate::eval::{self, Denominator, LossKind};
use crate::fit::{fit_transported_on_rows, FitOptions, FittedModel, WeightingMode};
use crate::glm::{fit_weighted_linear, DesignMatrix};
use crate::model_spec::ModelSpec;
use crate::rng;
use crate::sum;
use crate::weighting::{fit_membership_on_rows, Subset};

/// Default number of equal-frequency bins.
pub const DEFAULT_BINS: usize = 10;
/// Default number of permutations.
pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const MIN_PERMUTATIONS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum SelectError {
    #[error("no candidates supplied")]
    NoCandidates,
    #[error("fold {fold}, candidate {candidate}: {message}")]
    Fold {
        fold: usize,
        candidate: usize,
        message: String,
    },
    #[error("modifier `{0}` is not a covariate")]
    UnknownModifier(String),
    #[error("modifier `{0}` is constant on source test rows")]
    ConstantModifier(String),
    #[error("{rows} source test rows cannot fill {bins} bins")]
    TooFewRows { rows: usize, bins: usize },
    #[error("bins must be at least 1")]
    NoBins,
    #[error("at least {MIN_PERMUTATIONS} permutations required, got {0}")]
    TooFewPermutations(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CvMode {
    /// Inverse-odds weighted training and target-population evaluation.
    #[default]
    TargetWeighted,
    /// Unweighted training, evaluation by the source-population mean loss.
    SourceNaive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub candidates: Vec<String>,
    /// `per_fold_estimates[k][j]`: fold `k`, candidate `j`.
    pub per_fold_estimates: Vec<Vec<f64>>,
    pub cv_estimate: Vec<f64>,
    pub selected: usize,
}

/// Index of the smallest value; exact ties go to the earliest index.
pub fn select_minimizer(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = j;
        }
    }
    best
}

fn cv_aggregate(candidates: Vec<String>, per_fold: Vec<Vec<f64>>) -> CvResult {
    let k = per_fold.len() as f64;
    let cv_estimate: Vec<f64> = (0..candidates.len())
        .map(|j| sum::sum(per_fold.iter().map(|row| row[j])) / k)
        .collect();
    let selected = select_minimizer(&cv_estimate);
    CvResult {
        candidates,
        per_fold_estimates: per_fold,
        cv_estimate,
        selected,
    }
}

/// K-fold cross-validation over candidate outcome-model specs.
///
/// In target-weighted mode the membership model is refit twice per fold:
/// on the training folds for the fitting weights and on the held-out fold
/// for the evaluation weights.
pub fn cv_weighted(
    ds: &TransportDataset,
    folds: &FoldAssignment,
    candidates: &[ModelSpec],
    kind: LossKind,
    mode: CvMode,
    options: &FitOptions,
) -> Result<CvResult> {
    if candidates.is_empty() {
        return Err(SelectError::NoCandidates.into());
    }
    let grid: Vec<(usize, usize)> = (0..folds.k)
        .flat_map(|k| (0..candidates.len()).map(move |j| (k, j)))
        .collect();
    let cells: Vec<Result<f64>> = grid
        .par_iter()
        .map(|&(k, j)| cv_cell(ds, folds, &candidates[j], k, kind, mode, options))
        .collect();
    let mut per_fold = vec![vec![0.0; candidates.len()]; folds.k];
    for (&(k, j), cell) in grid.iter().zip(cells) {
        per_fold[k][j] = cell.map_err(|e| SelectError::Fold {
            fold: k,
            candidate: j,
            message: e.to_string(),
        })?;
    }
    Ok(cv_aggregate(
        candidates.iter().map(ModelSpec::to_string).collect(),
        per_fold,
    ))
}

fn cv_cell(
    ds: &TransportDataset,
    folds: &FoldAssignment,
    spec: &ModelSpec,
    k: usize,
    kind: LossKind,
    mode: CvMode,
    options: &FitOptions,
) -> Result<f64> {
    let train = folds.training(k);
    let held_out = folds.held_out(k);
    match mode {
        CvMode::TargetWeighted => {
            let fit = fit_transported_on_rows(ds, &train, spec, WeightingMode::InverseOdds, options)?;
            let mm = fit_membership_on_rows(ds, &held_out, Subset::Test, &options.membership_spec_for(ds))?;
            Ok(eval::estimate_iow_on_rows(
                ds,
                &held_out,
                &fit,
                &mm,
                kind,
                Denominator::TargetCount,
                None,
            )?
            .value)
        }
        CvMode::SourceNaive => {
            let fit = fit_transported_on_rows(ds, &train, spec, WeightingMode::Unweighted, options)?;
            Ok(eval::estimate_source_on_rows(ds, &held_out, &fit, kind)?.value)
        }
    }
}

/// Binned conditional loss of a fitted model against one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PemCurve {
    pub modifier_name: String,
    pub bin_edges: Vec<f64>,
    pub bin_conditional_loss: Vec<f64>,
    pub bin_counts: Vec<usize>,
    /// Mean modifier value within each bin.
    pub bin_modifier_mean: Vec<f64>,
    pub p_value: Option<f64>,
}

impl PemCurve {
    /// Least-squares slope of bin mean loss against bin mean modifier.
    pub fn slope(&self) -> Option<f64> {
        if self.bin_counts.len() < 2 {
            return None;
        }
        let design = DesignMatrix::new(
            vec!["1".into(), self.modifier_name.clone()],
            nalgebra::DMatrix::from_fn(self.bin_counts.len(), 2, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    self.bin_modifier_mean[i]
                }
            }),
        )
        .ok()?;
        let fit = fit_weighted_linear(&design, &self.bin_conditional_loss, &vec![1.0; self.bin_counts.len()]).ok()?;
        Some(fit.coefficients[1])
    }

    /// Tab-separated `bin midpoint <TAB> conditional loss` lines.
    pub fn to_plot_text(&self) -> String {
        let mut out = format!("# {}\tconditional_loss\n", self.modifier_name);
        for (b, loss) in self.bin_conditional_loss.iter().enumerate() {
            let mid = 0.5 * (self.bin_edges[b] + self.bin_edges[b + 1]);
            out.push_str(&format!("{mid:.17e}\t{loss:.17e}\n"));
        }
        out
    }
}

/// Source-test modifier values and losses, sorted by modifier.
fn sorted_losses(
    ds: &TransportDataset,
    split: &SplitAssignment,
    fit: &FittedModel,
    modifier: &str,
    bins: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if bins == 0 {
        return Err(SelectError::NoBins.into());
    }
    let col = ds
        .column_index(modifier)
        .ok_or_else(|| SelectError::UnknownModifier(modifier.into()))?;
    let rows: Vec<usize> = split.test_rows().into_iter().filter(|&i| ds.is_source(i)).collect();
    if rows.len() < bins {
        return Err(SelectError::TooFewRows {
            rows: rows.len(),
            bins,
        }
        .into());
    }
    let losses = eval::source_losses(ds, &rows, fit, LossKind::SquaredError)?;
    let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&i| ds.value(i, col)).zip(losses).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pairs.first().map(|p| p.0) == pairs.last().map(|p| p.0) {
        return Err(SelectError::ConstantModifier(modifier.into()).into());
    }
    Ok(pairs.into_iter().unzip())
}

/// Equal-frequency bin boundaries over `n` sorted positions.
fn bin_bounds(n: usize, bins: usize) -> Vec<usize> {
    (0..=bins).map(|b| b * n / bins).collect()
}

fn bin_means(values: &[f64], bounds: &[usize]) -> Vec<f64> {
    bounds
        .windows(2)
        .map(|w| sum::sum(values[w[0]..w[1]].iter().copied()) / (w[1] - w[0]) as f64)
        .collect()
}

/// Count-weighted between-bin variance of bin means.
fn between_bin_variance(values: &[f64], bounds: &[usize]) -> f64 {
    let n = values.len() as f64;
    let grand = sum::sum(values.iter().copied()) / n;
    let means = bin_means(values, bounds);
    sum::sum(
        bounds
            .windows(2)
            .zip(&means)
            .map(|(w, m)| (w[1] - w[0]) as f64 * (m - grand).powi(2)),
    ) / n
}

/// Squared-error loss of `fit` on source test rows, binned by equal
/// frequency of `modifier`.
pub fn pem_curve(
    ds: &TransportDataset,
    split: &SplitAssignment,
    fit: &FittedModel,
    modifier: &str,
    bins: usize,
) -> Result<PemCurve> {
    let (z, losses) = sorted_losses(ds, split, fit, modifier, bins)?;
    let bounds = bin_bounds(z.len(), bins);
    let mut bin_edges = vec![z[0]];
    for &b in &bounds[1..bins] {
        bin_edges.push(0.5 * (z[b - 1] + z[b]));
    }
    bin_edges.push(z[z.len() - 1]);
    Ok(PemCurve {
        modifier_name: modifier.into(),
        bin_edges,
        bin_conditional_loss: bin_means(&losses, &bounds),
        bin_counts: bounds.windows(2).map(|w| w[1] - w[0]).collect(),
        bin_modifier_mean: bin_means(&z, &bounds),
        p_value: None,
    })
}

/// Permutation p-value for the null that the binned conditional loss is
/// constant in `modifier`.
pub fn pem_test(
    ds: &TransportDataset,
    split: &SplitAssignment,
    fit: &FittedModel,
    modifier: &str,
    bins: usize,
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    if permutations < MIN_PERMUTATIONS {
        return Err(SelectError::TooFewPermutations(permutations).into());
    }
    let (z, losses) = sorted_losses(ds, split, fit, modifier, bins)?;
    let bounds = bin_bounds(z.len(), bins);
    Ok(permutation_p_value(&losses, &bounds, permutations, seed))
}

fn permutation_p_value(losses: &[f64], bounds: &[usize], permutations: usize, seed: u64) -> f64 {
    let observed = between_bin_variance(losses, bounds);
    let mut rng = rng::seeded(seed);
    let mut shuffled = losses.to_vec();
    let mut at_least = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        // relative slack absorbs summation-order rounding for the identity permutation
        if between_bin_variance(&shuffled, bounds) >= observed * (1.0 - 1e-12) {
            at_least += 1;
        }
    }
    (1 + at_least) as f64 / (1 + permutations) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_pick_earliest() {
        assert_eq!(select_minimizer(&[2.0, 1.0, 1.0]), 1);
        assert_eq!(select_minimizer(&[5.0]), 0);
    }

    #[test]
    fn aggregate_is_column_mean() {
        let r = cv_aggregate(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 4.0], vec![3.0, 2.0], vec![2.0, 0.0]],
        );
        assert_eq!(r.cv_estimate, vec![2.0, 2.0]);
        assert_eq!(r.selected, 0);
    }

    #[test]
    fn single_bin_has_p_value_one() {
        let losses = [1.0, 5.0, 2.0, 9.0];
        let bounds = bin_bounds(4, 1);
        assert_eq!(permutation_p_value(&losses, &bounds, 199, 3), 1.0);
    }

    #[test]
    fn p_value_floor() {
        // perfectly separated bins; only the identity-like orderings tie
        let losses: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 10.0 }).collect();
        let p = permutation_p_value(&losses, &bin_bounds(40, 2), 999, 1);
        assert!(p >= 1.0 / 1000.0 && p < 0.01);
    }

    #[test]
    fn bounds_are_equal_frequency() {
        assert_eq!(bin_bounds(10, 3), vec![0, 3, 6, 10]);
    }
}
