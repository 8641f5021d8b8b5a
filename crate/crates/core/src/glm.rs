//! Weighted linear and logistic regression.
//!
//! Least squares problems are solved through a QR decomposition of the
//! `sqrt(w)`-scaled system. When the triangular factor is close to singular
//! the weighted Gram matrix receives a single ridge jitter of
//! `1e-10 * trace / p` before a Cholesky solve; columns whose Cholesky pivot
//! is still at the jitter level are reported as collinear.
//!
//! Logistic regression uses iteratively reweighted least squares with step
//! halving. Convergence is judged on the sup-norm of the gradient of the
//! weighted mean log-likelihood (the log-likelihood divided by the total
//! weight), which makes the stopping rule independent of the weight scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sum;

/// Gradient sup-norm tolerance for IRLS.
pub const IRLS_TOLERANCE: f64 = 1e-8;
/// Iteration cap for IRLS.
pub const IRLS_MAX_ITERATIONS: usize = 100;
/// Coefficient magnitude taken as evidence of separation.
pub const SEPARATION_THRESHOLD: f64 = 20.0;

const QR_RELATIVE_PIVOT: f64 = 1e-13;
const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weights must be finite and non-negative (row {row})")]
    InvalidWeight { row: usize },
    #[error("no rows with positive weight")]
    NoPositiveWeight,
    #[error("{rows} rows with positive weight cannot identify {params} coefficients")]
    Underdetermined { rows: usize, params: usize },
    #[error("design is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },
    #[error("response must be 0 or 1 (row {row}, value {value})")]
    NonBinaryResponse { row: usize, value: f64 },
    #[error("both classes required among rows with positive weight")]
    SingleClass,
    #[error("quasi-complete separation: coefficients {coefficients:?} diverge")]
    Separation { coefficients: Vec<f64> },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Numeric design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, matrix: DMatrix<f64>) -> Result<Self, GlmError> {
        if names.len() != matrix.ncols() {
            return Err(GlmError::DimensionMismatch(format!(
                "{} names for {} columns",
                names.len(),
                matrix.ncols()
            )));
        }
        Ok(Self { names, matrix })
    }

    /// Builds a design from row slices, naming columns `c0, c1, ...`.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let p = rows.first().map_or(0, |r| r.len());
        let matrix = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        let names = (0..p).map(|j| format!("c{j}")).collect();
        Self { names, matrix }
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Linear predictor `X beta`.
    pub fn linear_predictor(&self, beta: &[f64]) -> Result<Vec<f64>, GlmError> {
        if beta.len() != self.ncols() {
            return Err(GlmError::DimensionMismatch(format!(
                "{} coefficients for {} columns",
                beta.len(),
                self.ncols()
            )));
        }
        Ok((0..self.nrows())
            .map(|i| (0..self.ncols()).map(|j| self.matrix[(i, j)] * beta[j]).sum())
            .collect())
    }
}

/// Weighted least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub feature_names: Vec<String>,
}

/// Weighted logistic regression fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub feature_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

impl LogisticFit {
    /// A fit with fixed coefficients, e.g. a known selection model.
    pub fn from_coefficients(feature_names: Vec<String>, coefficients: Vec<f64>) -> Self {
        Self {
            coefficients,
            feature_names,
            converged: true,
            iterations: 0,
            final_gradient_norm: 0.0,
        }
    }
}

pub trait Predict {
    fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>, GlmError>;
}

impl Predict for LinearFit {
    fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>, GlmError> {
        design.linear_predictor(&self.coefficients)
    }
}

impl Predict for LogisticFit {
    fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>, GlmError> {
        Ok(design
            .linear_predictor(&self.coefficients)?
            .into_iter()
            .map(expit)
            .collect())
    }
}

/// Logistic function, evaluated without overflow.
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^eta)` without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn check_inputs(design: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<(), GlmError> {
    if design.nrows() != y.len() || design.nrows() != w.len() {
        return Err(GlmError::DimensionMismatch(format!(
            "{} design rows, {} responses, {} weights",
            design.nrows(),
            y.len(),
            w.len()
        )));
    }
    if let Some(row) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(GlmError::InvalidWeight { row });
    }
    if !w.iter().any(|&v| v > 0.0) {
        return Err(GlmError::NoPositiveWeight);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::NonFinite("response"));
    }
    if design.matrix.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::NonFinite("design"));
    }
    Ok(())
}

/// Minimizes `sum w_i (y_i - x_i' beta)^2` over rows with positive weight.
fn solve_weighted_ls(
    design: &DesignMatrix,
    y: &[f64],
    w: &[f64],
) -> Result<DVector<f64>, GlmError> {
    let rows: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    let p = design.ncols();
    if rows.len() < p {
        return Err(GlmError::Underdetermined {
            rows: rows.len(),
            params: p,
        });
    }
    let a = DMatrix::from_fn(rows.len(), p, |r, j| {
        w[rows[r]].sqrt() * design.matrix[(rows[r], j)]
    });
    let mut b = DVector::from_fn(rows.len(), |r, _| w[rows[r]].sqrt() * y[rows[r]]);

    let qr = a.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|j| r[(j, j)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    if largest > 0.0 && diag.iter().all(|&d| d > QR_RELATIVE_PIVOT * largest) {
        qr.q_tr_mul(&mut b);
        let rhs = b.rows(0, p).into_owned();
        if let Some(beta) = r.solve_upper_triangular(&rhs) {
            if beta.iter().all(|v| v.is_finite()) {
                return Ok(beta);
            }
        }
    }

    // Near-singular: one ridge jitter, then give up on true collinearity.
    let rhs = a.transpose() * DVector::from_fn(rows.len(), |r, _| w[rows[r]].sqrt() * y[rows[r]]);
    let mut gram = a.transpose() * &a;
    let jitter = JITTER_SCALE * gram.trace() / p as f64;
    for j in 0..p {
        gram[(j, j)] += jitter;
    }
    let collinear = |pivots: &[f64]| -> Vec<String> {
        pivots
            .iter()
            .enumerate()
            // A dependent column keeps roughly twice the jitter as its pivot.
            .filter(|(_, &d)| d <= 3.0 * jitter)
            .map(|(j, _)| design.names[j].clone())
            .collect()
    };
    match gram.clone().cholesky() {
        Some(chol) => {
            let l = chol.l();
            let pivots: Vec<f64> = (0..p).map(|j| l[(j, j)] * l[(j, j)]).collect();
            let bad = collinear(&pivots);
            if !bad.is_empty() || jitter.is_nan() || jitter <= 0.0 {
                return Err(GlmError::RankDeficient { columns: bad });
            }
            Ok(chol.solve(&rhs))
        }
        None => {
            let bad = (0..p)
                .filter(|&j| diag[j] <= QR_RELATIVE_PIVOT * largest)
                .map(|j| design.names[j].clone())
                .collect();
            Err(GlmError::RankDeficient { columns: bad })
        }
    }
}

/// Weighted least squares. With unit weights this is ordinary least squares.
pub fn fit_weighted_linear(
    design: &DesignMatrix,
    y: &[f64],
    w: &[f64],
) -> Result<LinearFit, GlmError> {
    check_inputs(design, y, w)?;
    let beta = solve_weighted_ls(design, y, w)?;
    Ok(LinearFit {
        coefficients: beta.iter().copied().collect(),
        feature_names: design.names.clone(),
    })
}

/// Weighted Bernoulli log-likelihood divided by the total weight.
pub fn mean_log_likelihood(design: &DesignMatrix, s: &[f64], w: &[f64], beta: &[f64]) -> f64 {
    let eta = design
        .linear_predictor(beta)
        .expect("coefficient length checked by caller");
    let total = sum::sum(w.iter().copied());
    sum::sum((0..s.len()).map(|i| w[i] * (s[i] * eta[i] - softplus(eta[i])))) / total
}

/// Gradient of [`mean_log_likelihood`].
pub fn mean_log_likelihood_gradient(
    design: &DesignMatrix,
    s: &[f64],
    w: &[f64],
    beta: &[f64],
) -> Vec<f64> {
    let eta = design
        .linear_predictor(beta)
        .expect("coefficient length checked by caller");
    let total = sum::sum(w.iter().copied());
    (0..design.ncols())
        .map(|j| {
            sum::sum((0..s.len()).map(|i| w[i] * (s[i] - expit(eta[i])) * design.matrix[(i, j)]))
                / total
        })
        .collect()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Weighted maximum-likelihood logistic regression by IRLS.
///
/// A fit that fails to reach the gradient tolerance within
/// [`IRLS_MAX_ITERATIONS`] is returned with `converged = false`, unless its
/// coefficients exceed [`SEPARATION_THRESHOLD`], which is reported as
/// [`GlmError::Separation`].
pub fn fit_weighted_logistic(
    design: &DesignMatrix,
    s: &[f64],
    w: &[f64],
) -> Result<LogisticFit, GlmError> {
    check_inputs(design, s, w)?;
    if let Some(row) = s.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(GlmError::NonBinaryResponse { row, value: s[row] });
    }
    let has = |class: f64| (0..s.len()).any(|i| w[i] > 0.0 && s[i] == class);
    if !has(0.0) || !has(1.0) {
        return Err(GlmError::SingleClass);
    }

    let p = design.ncols();
    let mut beta = vec![0.0; p];
    let mut objective = mean_log_likelihood(design, s, w, &beta);
    let mut gradient = mean_log_likelihood_gradient(design, s, w, &beta);
    let mut iterations = 0;
    let mut converged = sup_norm(&gradient) <= IRLS_TOLERANCE;

    while !converged && iterations < IRLS_MAX_ITERATIONS {
        iterations += 1;
        let proposal = irls_step(design, s, w, &beta)?;
        beta = line_search(design, s, w, &beta, &proposal, &mut objective);
        gradient = mean_log_likelihood_gradient(design, s, w, &beta);
        converged = sup_norm(&gradient) <= IRLS_TOLERANCE;
    }

    if converged {
        // One more Newton step takes the iterate from ~tolerance to rounding
        // level, so fits that differ only in weight scale agree.
        if let Ok(proposal) = irls_step(design, s, w, &beta) {
            let polished = line_search(design, s, w, &beta, &proposal, &mut objective);
            let g = mean_log_likelihood_gradient(design, s, w, &polished);
            if sup_norm(&g) <= sup_norm(&gradient) {
                beta = polished;
                gradient = g;
            }
        }
    }

    let diverging = beta.iter().any(|b| b.abs() > SEPARATION_THRESHOLD);
    if diverging && (!converged || has_degenerate_probabilities(design, w, &beta)) {
        return Err(GlmError::Separation { coefficients: beta });
    }
    Ok(LogisticFit {
        coefficients: beta,
        feature_names: design.names.clone(),
        converged,
        iterations,
        final_gradient_norm: sup_norm(&gradient),
    })
}

fn has_degenerate_probabilities(design: &DesignMatrix, w: &[f64], beta: &[f64]) -> bool {
    let eta = design.linear_predictor(beta).expect("checked");
    eta.iter()
        .zip(w)
        .any(|(&e, &wi)| wi > 0.0 && e.abs() > 30.0)
}

/// Solves the working weighted least-squares problem of one IRLS iteration.
fn irls_step(
    design: &DesignMatrix,
    s: &[f64],
    w: &[f64],
    beta: &[f64],
) -> Result<Vec<f64>, GlmError> {
    let eta = design.linear_predictor(beta)?;
    let mut working_w = Vec::with_capacity(s.len());
    let mut working_y = Vec::with_capacity(s.len());
    for i in 0..s.len() {
        let mu = expit(eta[i]);
        let v = mu * (1.0 - mu);
        if w[i] > 0.0 && v > 0.0 {
            working_w.push(w[i] * v);
            working_y.push(eta[i] + (s[i] - mu) / v);
        } else {
            working_w.push(0.0);
            working_y.push(0.0);
        }
    }
    Ok(solve_weighted_ls(design, &working_y, &working_w)?
        .iter()
        .copied()
        .collect())
}

/// Halves the step from `current` toward `proposal` until the objective does
/// not decrease.
fn line_search(
    design: &DesignMatrix,
    s: &[f64],
    w: &[f64],
    current: &[f64],
    proposal: &[f64],
    objective: &mut f64,
) -> Vec<f64> {
    let mut step = 1.0;
    for _ in 0..30 {
        let candidate: Vec<f64> = current
            .iter()
            .zip(proposal)
            .map(|(c, p)| c + step * (p - c))
            .collect();
        let value = mean_log_likelihood(design, s, w, &candidate);
        if value.is_finite() && value >= *objective - 1e-15 * objective.abs() {
            *objective = value.max(*objective);
            return candidate;
        }
        step *= 0.5;
    }
    current.to_vec()
}
