//! Composite source/target datasets and randomized row assignments.
//!
//! A [`TransportDataset`] stacks covariate rows from both populations with a
//! membership indicator `s` (true for the source population). Outcomes are
//! present exactly on source rows. Train/test splits and cross-validation
//! folds are stratified by `s` and driven by an explicit seed.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("covariate columns differ between source {source_columns:?} and target {target_columns:?}")]
    ColumnMismatch {
        source_columns: Vec<String>,
        target_columns: Vec<String>,
    },
    #[error("target outcomes must be absent (column `{column}`, target row {row})")]
    TargetOutcomePresent { column: String, row: usize },
    #[error("missing outcome for source row {row}")]
    MissingOutcome { row: usize },
    #[error("missing covariate in {population} row {row}, column `{column}`")]
    MissingCovariate {
        population: &'static str,
        row: usize,
        column: String,
    },
    #[error("non-finite covariate in row {row}, column `{column}`")]
    NonFiniteCovariate { row: usize, column: String },
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("{0} population is empty")]
    EmptyPopulation(&'static str),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("split ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
    #[error("stratum too small: {0}")]
    StratumTooSmall(String),
    #[error("fold count must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("fold count {k} exceeds the smallest population stratum ({smallest})")]
    TooManyFolds { k: usize, smallest: usize },
}

/// How the source sample relates to the target population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// Source and target samples are drawn separately.
    #[default]
    NonNested,
    /// The source sample is a subset of a cohort representing the target.
    Nested,
}

/// Raw per-population table before assembly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub covariate_names: Vec<String>,
    /// Row-major cells; `None` marks a missing value.
    pub covariates: Vec<Vec<Option<f64>>>,
    /// Outcome column, if the table has one.
    pub outcome: Option<Vec<Option<f64>>>,
}

impl Table {
    pub fn nrows(&self) -> usize {
        self.covariates.len()
    }
}

/// Composite sample of source and target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportDataset {
    names: Vec<String>,
    covariates: DMatrix<f64>,
    outcome: Vec<Option<f64>>,
    s: Vec<bool>,
    design: DesignKind,
    n_source: usize,
    n_target: usize,
}

impl TransportDataset {
    /// Validates and builds a dataset. `s[i]` is true for source rows.
    pub fn new(
        names: Vec<String>,
        covariates: DMatrix<f64>,
        outcome: Vec<Option<f64>>,
        s: Vec<bool>,
        design: DesignKind,
    ) -> Result<Self, DataError> {
        let n = covariates.nrows();
        if covariates.ncols() != names.len() {
            return Err(DataError::LengthMismatch(format!(
                "{} covariate names for {} columns",
                names.len(),
                covariates.ncols()
            )));
        }
        if outcome.len() != n || s.len() != n {
            return Err(DataError::LengthMismatch(format!(
                "{n} covariate rows, {} outcomes, {} membership flags",
                outcome.len(),
                s.len()
            )));
        }
        for i in 0..n {
            for (j, name) in names.iter().enumerate() {
                if !covariates[(i, j)].is_finite() {
                    return Err(DataError::NonFiniteCovariate {
                        row: i,
                        column: name.clone(),
                    });
                }
            }
            match (s[i], outcome[i]) {
                (true, None) => return Err(DataError::MissingOutcome { row: i }),
                (false, Some(_)) => {
                    return Err(DataError::TargetOutcomePresent {
                        column: "y".into(),
                        row: i,
                    })
                }
                _ => {}
            }
        }
        let n_source = s.iter().filter(|&&v| v).count();
        let n_target = n - n_source;
        if n_source == 0 {
            return Err(DataError::EmptyPopulation("source"));
        }
        if n_target == 0 {
            return Err(DataError::EmptyPopulation("target"));
        }
        Ok(Self {
            names,
            covariates,
            outcome,
            s,
            design,
            n_source,
            n_target,
        })
    }

    pub fn nrows(&self) -> usize {
        self.s.len()
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.names
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.covariates[(row, col)]
    }

    pub fn outcome(&self, row: usize) -> Option<f64> {
        self.outcome[row]
    }

    pub fn outcomes(&self) -> &[Option<f64>] {
        &self.outcome
    }

    pub fn is_source(&self, row: usize) -> bool {
        self.s[row]
    }

    pub fn membership(&self) -> &[bool] {
        &self.s
    }

    pub fn design(&self) -> DesignKind {
        self.design
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    /// Indices of rows belonging to the source population.
    pub fn source_rows(&self) -> Vec<usize> {
        (0..self.nrows()).filter(|&i| self.s[i]).collect()
    }

    pub fn target_rows(&self) -> Vec<usize> {
        (0..self.nrows()).filter(|&i| !self.s[i]).collect()
    }
}

/// Stacks source rows (s = 1) on top of target rows (s = 0).
pub fn assemble_composite(
    source: &Table,
    target: &Table,
    design: DesignKind,
) -> Result<TransportDataset, DataError> {
    if source.covariate_names != target.covariate_names {
        return Err(DataError::ColumnMismatch {
            source_columns: source.covariate_names.clone(),
            target_columns: target.covariate_names.clone(),
        });
    }
    if source.nrows() == 0 {
        return Err(DataError::EmptyPopulation("source"));
    }
    if target.nrows() == 0 {
        return Err(DataError::EmptyPopulation("target"));
    }
    if let Some(y) = &target.outcome {
        if let Some(row) = y.iter().position(Option::is_some) {
            return Err(DataError::TargetOutcomePresent {
                column: "y".into(),
                row,
            });
        }
    }
    let p = source.covariate_names.len();
    let n = source.nrows() + target.nrows();
    let mut covariates = DMatrix::zeros(n, p);
    let mut outcome = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);

    let source_y = source.outcome.as_ref();
    for (population, table, is_source) in [("source", source, true), ("target", target, false)] {
        let offset = if is_source { 0 } else { source.nrows() };
        for (i, row) in table.covariates.iter().enumerate() {
            if row.len() != p {
                return Err(DataError::RaggedRow {
                    row: i,
                    found: row.len(),
                    expected: p,
                });
            }
            for (j, cell) in row.iter().enumerate() {
                match cell {
                    Some(v) => covariates[(offset + i, j)] = *v,
                    None => {
                        return Err(DataError::MissingCovariate {
                            population,
                            row: i,
                            column: table.covariate_names[j].clone(),
                        })
                    }
                }
            }
            if is_source {
                let y = source_y
                    .and_then(|y| y.get(i).copied().flatten())
                    .ok_or(DataError::MissingOutcome { row: i })?;
                outcome.push(Some(y));
            } else {
                outcome.push(None);
            }
            s.push(is_source);
        }
    }
    TransportDataset::new(source.covariate_names.clone(), covariates, outcome, s, design)
}

/// Train/test partition of the rows of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    train: Vec<bool>,
    pub seed: u64,
}

impl SplitAssignment {
    /// Builds a split from explicit training flags.
    pub fn from_train_flags(train: Vec<bool>, seed: u64) -> Self {
        Self { train, seed }
    }

    /// Every row in the test set, e.g. for assessing an established model.
    pub fn all_test(n: usize) -> Self {
        Self {
            train: vec![false; n],
            seed: 0,
        }
    }

    pub fn is_train(&self, row: usize) -> bool {
        self.train[row]
    }

    pub fn is_test(&self, row: usize) -> bool {
        !self.train[row]
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn train_rows(&self) -> Vec<usize> {
        (0..self.train.len()).filter(|&i| self.train[i]).collect()
    }

    pub fn test_rows(&self) -> Vec<usize> {
        (0..self.train.len()).filter(|&i| !self.train[i]).collect()
    }
}

/// Randomly splits each population stratum into train and test.
///
/// Within a stratum of size `m` the training count is `floor(ratio * m)`,
/// plus one with probability equal to the fractional remainder.
pub fn split_train_test(
    ds: &TransportDataset,
    ratio: f64,
    seed: u64,
) -> Result<SplitAssignment, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    let mut rng = rng::seeded(seed);
    let mut train = vec![false; ds.nrows()];
    for (label, mut rows) in [("source", ds.source_rows()), ("target", ds.target_rows())] {
        let exact = ratio * rows.len() as f64;
        let mut n_train = exact.floor() as usize;
        let remainder = exact - exact.floor();
        if remainder > 0.0 && rng.random::<f64>() < remainder {
            n_train += 1;
        }
        if n_train == 0 || n_train == rows.len() {
            return Err(DataError::StratumTooSmall(format!(
                "{label} stratum of {} rows cannot be split at ratio {ratio}",
                rows.len()
            )));
        }
        if label == "source" && n_train < ds.ncols() + 1 {
            return Err(DataError::StratumTooSmall(format!(
                "{n_train} source training rows for {} covariates",
                ds.ncols()
            )));
        }
        rows.shuffle(&mut rng);
        for &i in &rows[..n_train] {
            train[i] = true;
        }
    }
    Ok(SplitAssignment { train, seed })
}

/// Stratified K-fold assignment. Fold ids are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_id: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn fold_of(&self, row: usize) -> usize {
        self.fold_id[row]
    }

    pub fn fold_ids(&self) -> &[usize] {
        &self.fold_id
    }

    /// Rows inside fold `k`.
    pub fn held_out(&self, k: usize) -> Vec<usize> {
        (0..self.fold_id.len()).filter(|&i| self.fold_id[i] == k).collect()
    }

    /// Rows outside fold `k`.
    pub fn training(&self, k: usize) -> Vec<usize> {
        (0..self.fold_id.len()).filter(|&i| self.fold_id[i] != k).collect()
    }
}

/// Shuffles each population stratum and deals its rows round-robin to `k`
/// folds, so fold sizes within a stratum differ by at most one.
pub fn make_folds(ds: &TransportDataset, k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    if k < 2 {
        return Err(DataError::TooFewFolds(k));
    }
    let smallest = ds.n_source().min(ds.n_target());
    if k > smallest {
        return Err(DataError::TooManyFolds { k, smallest });
    }
    let mut rng = rng::seeded(seed);
    let mut fold_id = vec![0; ds.nrows()];
    for mut rows in [ds.source_rows(), ds.target_rows()] {
        rows.shuffle(&mut rng);
        for (pos, &i) in rows.iter().enumerate() {
            fold_id[i] = pos % k;
        }
    }
    Ok(FoldAssignment { fold_id, k, seed })
}
