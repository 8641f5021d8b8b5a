//! Simulation lab: data-generating processes, numerical truths and the
//! simulation-study runners.
//!
//! The main process draws `X ~ Uniform(0, 10)`, source membership from
//! `logit Pr[S=1|X] = 1.5 - 0.3 X` and outcomes from
//! `Y = 1 + X + 0.5 X^2 + e`. With the default [`NoiseLaw::StdDevEqualsX`]
//! the noise has standard deviation `X`; [`NoiseLaw::VarianceEqualsX`] uses
//! variance `X` instead.
//!
//! The mean-exchangeable process shares the mean `1 + X` across populations
//! but uses a different noise variance in each, so the conditional outcome
//! laws differ even though the conditional means agree.
//!
//! Replicates run on independent ChaCha substreams of one master seed and
//! are reduced in replicate order, so reports do not depend on the thread
//! count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::erfc;
use thiserror::Error;

use nalgebra::DMatrix;

use crate::data::{split_train_test, DesignKind, SplitAssignment, TransportDataset};
use crate::error::Result;
use crate::eval::{self, LossKind};
use crate::fit::{fit_transported, fit_transported_on_rows, FitOptions, FittedModel, WeightingMode};
use crate::glm::expit;
use crate::model_spec::ModelSpec;
use crate::rng;
use crate::sum::{self, CompensatedSum};
use crate::weighting::{fit_membership_model, Subset};

/// Sample size used for large-sample limiting fits.
pub const LIMITING_SAMPLE_SIZE: usize = 1_000_000;
const X_UPPER: f64 = 10.0;
const QUADRATURE_RELATIVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error("quadrature did not reach tolerance (error estimate {0:e})")]
    Quadrature(f64),
    #[error("loss {0:?} is undefined for a gaussian outcome")]
    UnsupportedLoss(LossKind),
    #[error("replicates must be at least 1")]
    NoReplicates,
}

/// How the main process scales its noise with `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLaw {
    /// `e ~ N(0, sd = X)`.
    #[default]
    StdDevEqualsX,
    /// `e ~ N(0, var = X)`.
    VarianceEqualsX,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DgpKind {
    Main { noise: NoiseLaw },
    MeanExchangeable {
        source_variance: f64,
        target_variance: f64,
    },
}

/// Full description of one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub seed: u64,
    pub design: DesignKind,
    /// Polynomial coefficients of `E[Y|X]` in increasing powers.
    pub mean_coefficients: Vec<f64>,
    /// Intercept and slope of `logit Pr[S=1|X]`.
    pub selection: [f64; 2],
}

impl DgpSpec {
    pub fn main(n: usize, seed: u64) -> Self {
        Self {
            kind: DgpKind::Main {
                noise: NoiseLaw::StdDevEqualsX,
            },
            n,
            seed,
            design: DesignKind::NonNested,
            mean_coefficients: vec![1.0, 1.0, 0.5],
            selection: [1.5, -0.3],
        }
    }

    /// Shared mean `1 + X`; noise variance 1 in the source and 4 in the target.
    pub fn heteroscedastic(n: usize, seed: u64) -> Self {
        Self::mean_exchangeable(n, seed, 1.0, 4.0)
    }

    pub fn mean_exchangeable(n: usize, seed: u64, source_variance: f64, target_variance: f64) -> Self {
        Self {
            kind: DgpKind::MeanExchangeable {
                source_variance,
                target_variance,
            },
            n,
            seed,
            design: DesignKind::NonNested,
            mean_coefficients: vec![1.0, 1.0],
            selection: [1.5, -0.3],
        }
    }

    pub fn with_noise(mut self, noise: NoiseLaw) -> Self {
        if let DgpKind::Main { .. } = self.kind {
            self.kind = DgpKind::Main { noise };
        }
        self
    }

    pub fn with_design(mut self, design: DesignKind) -> Self {
        self.design = design;
        self
    }

    pub fn with_selection(mut self, intercept: f64, slope: f64) -> Self {
        self.selection = [intercept, slope];
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::InvalidSpec(format!("n = {} is too small", self.n)));
        }
        if self.mean_coefficients.is_empty() || self.mean_coefficients.iter().any(|c| !c.is_finite()) {
            return Err(SimError::InvalidSpec("mean coefficients must be finite".into()));
        }
        if self.selection.iter().any(|c| !c.is_finite()) {
            return Err(SimError::InvalidSpec("selection coefficients must be finite".into()));
        }
        if let DgpKind::MeanExchangeable {
            source_variance,
            target_variance,
        } = self.kind
        {
            for v in [source_variance, target_variance] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(SimError::InvalidSpec(format!("variance {v} must be non-negative")));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self, x: f64) -> f64 {
        self.mean_coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `Pr[S = 1 | X = x]`.
    pub fn selection_probability(&self, x: f64) -> f64 {
        expit(self.selection[0] + self.selection[1] * x)
    }

    /// `Var(e | X = x, S = s)`.
    pub fn noise_variance(&self, x: f64, source: bool) -> f64 {
        match self.kind {
            DgpKind::Main {
                noise: NoiseLaw::StdDevEqualsX,
            } => x * x,
            DgpKind::Main {
                noise: NoiseLaw::VarianceEqualsX,
            } => x,
            DgpKind::MeanExchangeable {
                source_variance,
                target_variance,
            } => {
                if source {
                    source_variance
                } else {
                    target_variance
                }
            }
        }
    }

    fn draw_row(&self, rng: &mut ChaCha8Rng) -> (f64, bool, f64) {
        let x = X_UPPER * rng.random::<f64>();
        let s = rng.random::<f64>() < self.selection_probability(x);
        let z: f64 = StandardNormal.sample(rng);
        let y = self.mean(x) + self.noise_variance(x, s).sqrt() * z;
        (x, s, y)
    }
}

/// Draws a dataset from `spec`, seeded by `spec.seed`.
pub fn generate(spec: &DgpSpec) -> Result<TransportDataset> {
    generate_with(spec, &mut rng::seeded(spec.seed))
}

/// Draws a dataset from `spec` using the caller's generator.
///
/// A draw in which one population is empty is redrawn.
pub fn generate_with(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<TransportDataset> {
    spec.validate()?;
    loop {
        let rows: Vec<(f64, bool, f64)> = (0..spec.n).map(|_| spec.draw_row(rng)).collect();
        let n_source = rows.iter().filter(|r| r.1).count();
        if n_source == 0 || n_source == spec.n {
            continue;
        }
        let x = DMatrix::from_iterator(spec.n, 1, rows.iter().map(|r| r.0));
        let outcome = rows.iter().map(|r| r.1.then_some(r.2)).collect();
        let s = rows.iter().map(|r| r.1).collect();
        return Ok(TransportDataset::new(vec!["x".into()], x, outcome, s, spec.design)?);
    }
}

/// Population over which a true expected loss is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Population {
    Target,
    Source,
    /// The full cohort: the target population of a nested design.
    Whole,
}

/// `E[L(Y, m) | X = x]` for Gaussian `Y` with mean `mu` and variance `var`.
fn gaussian_expected_loss(kind: LossKind, bias: f64, var: f64) -> Result<f64, SimError> {
    match kind {
        LossKind::SquaredError => Ok(bias * bias + var),
        LossKind::AbsoluteError => {
            if var == 0.0 {
                return Ok(bias.abs());
            }
            let sd = var.sqrt();
            let t = bias / sd;
            // E|b + sd Z| = sd sqrt(2/pi) exp(-t^2/2) + b (1 - 2 Phi(-t))
            let phi_neg = 0.5 * erfc(t / std::f64::consts::SQRT_2);
            Ok(sd * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * t * t).exp() + bias * (1.0 - 2.0 * phi_neg))
        }
        LossKind::Brier => Err(SimError::UnsupportedLoss(kind)),
    }
}

fn integrate(f: impl Fn(f64) -> f64, scale: f64) -> Result<f64, SimError> {
    let tol = QUADRATURE_RELATIVE_TOLERANCE * 1e-2 * scale.max(1e-300);
    let out = quadrature::integrate(f, 0.0, X_UPPER, tol);
    if !out.integral.is_finite() || out.error_estimate > QUADRATURE_RELATIVE_TOLERANCE * out.integral.abs().max(scale) {
        return Err(SimError::Quadrature(out.error_estimate));
    }
    Ok(out.integral)
}

/// Population density weight of `x`, up to the uniform constant.
fn population_weight(spec: &DgpSpec, population: Population, x: f64) -> f64 {
    match population {
        Population::Target => 1.0 - spec.selection_probability(x),
        Population::Source => spec.selection_probability(x),
        Population::Whole => 1.0,
    }
}

fn conditional_loss(
    spec: &DgpSpec,
    prediction: &dyn Fn(f64) -> f64,
    kind: LossKind,
    population: Population,
    x: f64,
) -> Result<f64, SimError> {
    let bias = spec.mean(x) - prediction(x);
    match population {
        Population::Target => gaussian_expected_loss(kind, bias, spec.noise_variance(x, false)),
        Population::Source => gaussian_expected_loss(kind, bias, spec.noise_variance(x, true)),
        Population::Whole => {
            let p = spec.selection_probability(x);
            Ok(p * gaussian_expected_loss(kind, bias, spec.noise_variance(x, true))?
                + (1.0 - p) * gaussian_expected_loss(kind, bias, spec.noise_variance(x, false))?)
        }
    }
}

/// `E[L(Y, g(X))]` over `population` by adaptive quadrature, with the inner
/// conditional expectation in closed form.
pub fn true_loss_of(
    spec: &DgpSpec,
    prediction: &dyn Fn(f64) -> f64,
    kind: LossKind,
    population: Population,
) -> Result<f64> {
    spec.validate()?;
    if kind == LossKind::Brier {
        return Err(SimError::UnsupportedLoss(kind).into());
    }
    let mass = integrate(|x| population_weight(spec, population, x), 1.0)?;
    let first = conditional_loss(spec, prediction, kind, population, X_UPPER / 2.0)?;
    let numerator = integrate(
        |x| {
            population_weight(spec, population, x)
                * conditional_loss(spec, prediction, kind, population, x).unwrap_or(f64::NAN)
        },
        first.abs().max(1.0) * mass,
    )?;
    Ok(numerator / mass)
}

fn model_prediction(model: &FittedModel) -> impl Fn(f64) -> f64 + '_ {
    let names = vec!["x".to_string()];
    move |x| model.predict_point(&names, &[x]).unwrap_or(f64::NAN)
}

/// True expected loss of `model` in the population the design targets: the
/// `S = 0` population for non-nested designs, the whole cohort for nested.
pub fn true_target_loss(spec: &DgpSpec, model: &FittedModel, kind: LossKind) -> Result<f64> {
    let population = match spec.design {
        DesignKind::NonNested => Population::Target,
        DesignKind::Nested => Population::Whole,
    };
    true_loss_of(spec, &model_prediction(model), kind, population)
}

/// Monte Carlo estimate of the expected loss with its standard error.
pub fn monte_carlo_loss(
    spec: &DgpSpec,
    model: &FittedModel,
    kind: LossKind,
    population: Population,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    spec.validate()?;
    let predict = model_prediction(model);
    let mut rng = rng::seeded(seed);
    let mut total = CompensatedSum::default();
    let mut total_sq = CompensatedSum::default();
    let mut accepted = 0usize;
    while accepted < draws {
        let (x, s, y) = spec.draw_row(&mut rng);
        let keep = match population {
            Population::Target => !s,
            Population::Source => s,
            Population::Whole => true,
        };
        if keep {
            let l = eval::loss(kind, y, predict(x))?;
            total.add(l);
            total_sq.add(l * l);
            accepted += 1;
        }
    }
    let n = draws as f64;
    let mean = total.value() / n;
    let var = (total_sq.value() / n - mean * mean) * n / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Large-sample limit of a fitting procedure, approximated by one fit on
/// `n_large` rows that all serve as training data.
pub fn limiting_model(
    spec: &DgpSpec,
    model_spec: &ModelSpec,
    mode: WeightingMode,
    n_large: usize,
    seed: u64,
) -> Result<FittedModel> {
    let big = DgpSpec {
        n: n_large,
        seed,
        ..spec.clone()
    };
    let ds = generate(&big)?;
    let all: Vec<usize> = (0..ds.nrows()).collect();
    fit_transported_on_rows(&ds, &all, model_spec, mode, &FitOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Specification {
    Correct,
    Misspecified,
}

impl Specification {
    pub fn model_spec(self) -> ModelSpec {
        match self {
            Specification::Correct => ModelSpec::polynomial("x", 2),
            Specification::Misspecified => ModelSpec::polynomial("x", 1),
        }
    }
}

/// The four model/estimation combinations, in report order.
pub const TABLE1_CELLS: [(Specification, WeightingMode); 4] = [
    (Specification::Correct, WeightingMode::Unweighted),
    (Specification::Misspecified, WeightingMode::Unweighted),
    (Specification::Correct, WeightingMode::InverseOdds),
    (Specification::Misspecified, WeightingMode::InverseOdds),
];

/// One replicate's numbers for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDraw {
    /// Quadrature target MSE of this replicate's fitted model.
    pub truth: f64,
    pub unweighted_estimate: f64,
    pub weighted_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Cell {
    pub specification: Specification,
    pub estimation: WeightingMode,
    /// Replicate mean of the quadrature target MSE of each fitted model.
    pub true_target_mse: f64,
    /// Quadrature target MSE of the large-sample limiting model.
    pub limiting_target_mse: Option<f64>,
    pub mean_unweighted_estimate: f64,
    pub mean_weighted_estimate: f64,
    pub sd_unweighted_estimate: f64,
    pub sd_weighted_estimate: f64,
}

impl Table1Cell {
    pub fn label(&self) -> String {
        let spec = match self.specification {
            Specification::Correct => "Correctly specified",
            Specification::Misspecified => "Incorrectly specified",
        };
        let est = match self.estimation {
            WeightingMode::Unweighted => "OLS",
            WeightingMode::InverseOdds => "WLS",
        };
        format!("{spec}, {est}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub replicates: usize,
    pub n: usize,
    pub seed: u64,
    pub cells: Vec<Table1Cell>,
}

impl Table1Report {
    /// Aligned plain-text table, one row per cell.
    pub fn to_text(&self) -> String {
        let header = [
            "Model specification, estimation approach",
            "True target population MSE",
            "Average of unweighted MSE estimator",
            "Average of weighted MSE estimator",
        ];
        let rows: Vec<[String; 4]> = self
            .cells
            .iter()
            .map(|c| {
                [
                    c.label(),
                    format!("{:.1}", c.true_target_mse),
                    format!("{:.1}", c.mean_unweighted_estimate),
                    format!("{:.1}", c.mean_weighted_estimate),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..4)
            .map(|j| rows.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap())
            .collect();
        let line = |cells: [&str; 4]| {
            let mut s = format!("{:<w$}", cells[0], w = widths[0]);
            for j in 1..4 {
                s.push_str(&format!(" | {:>w$}", cells[j], w = widths[j]));
            }
            s.push('\n');
            s
        };
        let mut out = line(header);
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 9));
        out.push('\n');
        for r in &rows {
            out.push_str(&line([&r[0], &r[1], &r[2], &r[3]]));
        }
        out.push_str(&format!(
            "({} replicates, n = {}, seed = {})\n",
            self.replicates, self.n, self.seed
        ));
        out
    }
}

/// Runs one replicate of the main-process study on substream `replicate`.
pub fn table1_replicate(n: usize, master_seed: u64, replicate: u64) -> Result<[CellDraw; 4]> {
    let spec = DgpSpec::main(n, master_seed);
    let mut rng = rng::substream(master_seed, replicate);
    let ds = generate_with(&spec, &mut rng)?;
    let split = split_train_test(&ds, 0.5, rng.random())?;
    let membership = ModelSpec::main_effects(ds.covariate_names());
    let mm_test = fit_membership_model(&ds, &split, Subset::Test, &membership)?;
    let mut draws = [CellDraw {
        truth: 0.0,
        unweighted_estimate: 0.0,
        weighted_estimate: 0.0,
    }; 4];
    for (draw, (specification, mode)) in draws.iter_mut().zip(TABLE1_CELLS) {
        let fit = fit_transported(&ds, &split, &specification.model_spec(), mode, &FitOptions::default())?;
        *draw = CellDraw {
            truth: true_target_loss(&spec, &fit, LossKind::SquaredError)?,
            unweighted_estimate: eval::estimate_source_loss(&ds, &split, &fit, LossKind::SquaredError)?.value,
            weighted_estimate: eval::estimate_target_loss_iow(&ds, &split, &fit, &mm_test, LossKind::SquaredError)?
                .value,
        };
    }
    Ok(draws)
}

/// Settings for [`reproduce_table1_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Config {
    pub replicates: usize,
    pub n: usize,
    pub seed: u64,
    /// Sample size for the limiting-model truths; `None` skips them.
    pub limiting_n: Option<usize>,
}

impl Table1Config {
    pub fn new(replicates: usize, n: usize, seed: u64) -> Self {
        Self {
            replicates,
            n,
            seed,
            limiting_n: Some(LIMITING_SAMPLE_SIZE),
        }
    }
}

pub fn reproduce_table1(replicates: usize, n: usize, seed: u64) -> Result<Table1Report> {
    reproduce_table1_with(&Table1Config::new(replicates, n, seed))
}

/// Runs the four-cell simulation study and averages over replicates.
pub fn reproduce_table1_with(config: &Table1Config) -> Result<Table1Report> {
    if config.replicates == 0 {
        return Err(SimError::NoReplicates.into());
    }
    let draws: Vec<[CellDraw; 4]> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|r| table1_replicate(config.n, config.seed, r))
        .collect::<Result<_>>()?;
    let spec = DgpSpec::main(config.n, config.seed);
    let mut cells = Vec::with_capacity(4);
    for (c, (specification, mode)) in TABLE1_CELLS.into_iter().enumerate() {
        let limiting_target_mse = match config.limiting_n {
            Some(n_large) => {
                let model = limiting_model(&spec, &specification.model_spec(), mode, n_large, config.seed)?;
                Some(true_target_loss(&spec, &model, LossKind::SquaredError)?)
            }
            None => None,
        };
        let truth: Vec<f64> = draws.iter().map(|d| d[c].truth).collect();
        let unweighted: Vec<f64> = draws.iter().map(|d| d[c].unweighted_estimate).collect();
        let weighted: Vec<f64> = draws.iter().map(|d| d[c].weighted_estimate).collect();
        cells.push(Table1Cell {
            specification,
            estimation: mode,
            true_target_mse: mean(&truth),
            limiting_target_mse,
            mean_unweighted_estimate: mean(&unweighted),
            mean_weighted_estimate: mean(&weighted),
            sd_unweighted_estimate: std_dev(&unweighted),
            sd_weighted_estimate: std_dev(&weighted),
        });
    }
    Ok(Table1Report {
        replicates: config.replicates,
        n: config.n,
        seed: config.seed,
        cells,
    })
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    sum::sum(values.iter().copied()) / values.len() as f64
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (sum::sum(values.iter().map(|v| (v - m).powi(2))) / (values.len() - 1) as f64).sqrt()
}

/// Inverse-odds MSE estimate against the truth on a mean-exchangeable
/// process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeabilityDemo {
    pub iow_estimate: f64,
    pub truth: f64,
}

impl ExchangeabilityDemo {
    pub fn gap(&self) -> f64 {
        (self.iow_estimate - self.truth).abs()
    }
}

/// Fits the correct mean model `1 + x` on `spec`'s data and compares the
/// inverse-odds MSE estimate with the quadrature truth.
pub fn mean_exchangeability_demo(spec: &DgpSpec) -> Result<ExchangeabilityDemo> {
    let mut rng = rng::seeded(spec.seed);
    let ds = generate_with(spec, &mut rng)?;
    let split = split_train_test(&ds, 0.5, rng.random())?;
    let fit = fit_transported(
        &ds,
        &split,
        &ModelSpec::polynomial("x", 1),
        WeightingMode::Unweighted,
        &FitOptions::default(),
    )?;
    let mm_test = fit_membership_model(&ds, &split, Subset::Test, &ModelSpec::main_effects(ds.covariate_names()))?;
    Ok(ExchangeabilityDemo {
        iow_estimate: eval::estimate_target_loss_iow(&ds, &split, &fit, &mm_test, LossKind::SquaredError)?.value,
        truth: true_target_loss(spec, &fit, LossKind::SquaredError)?,
    })
}

/// The default counterexample: source variance 1, target variance 4.
pub fn mean_exchangeability_counterexample(n: usize, seed: u64) -> Result<ExchangeabilityDemo> {
    mean_exchangeability_demo(&DgpSpec::heteroscedastic(n, seed))
}

/// Replicate means of the nested-design estimator and its truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedStudy {
    pub replicates: usize,
    pub mean_estimate: f64,
    pub mean_truth: f64,
}

/// Main process read as a nested design: every row belongs to the cohort,
/// `S` marks the subset with outcomes. The correct model is fit unweighted
/// and its cohort-wide MSE estimated with inverse-probability weights.
pub fn nested_study(replicates: usize, n: usize, seed: u64) -> Result<NestedStudy> {
    if replicates == 0 {
        return Err(SimError::NoReplicates.into());
    }
    let spec = DgpSpec::main(n, seed).with_design(DesignKind::Nested);
    let pairs: Vec<(f64, f64)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(seed, r);
            let ds = generate_with(&spec, &mut rng)?;
            let split: SplitAssignment = split_train_test(&ds, 0.5, rng.random())?;
            let fit = fit_transported(
                &ds,
                &split,
                &Specification::Correct.model_spec(),
                WeightingMode::Unweighted,
                &FitOptions::default(),
            )?;
            let mm_test = fit_membership_model(&ds, &split, Subset::Test, &ModelSpec::main_effects(ds.covariate_names()))?;
            let est = eval::estimate_nested_loss(&ds, &split, &fit, &mm_test, LossKind::SquaredError)?;
            Ok((est.value, true_target_loss(&spec, &fit, LossKind::SquaredError)?))
        })
        .collect::<Result<_>>()?;
    let est: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let truth: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(NestedStudy {
        replicates,
        mean_estimate: mean(&est),
        mean_truth: mean(&truth),
    })
}
