//! Command-line front end.
//!
//! Every subcommand writes a JSON [`Report`] (to `--out`, or stdout when no
//! path is given). Failures are printed to stderr as a one-line JSON record
//! `{"error": {"module": ..., "message": ...}}` with a nonzero exit status.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{assemble_composite, make_folds, split_train_test, DesignKind, SplitAssignment, TransportDataset};
use crate::error::{Error, Result};
use crate::eval::{self, Denominator, LossKind};
use crate::fit::{fit_transported, FitOptions, FittedModel, WeightingMode};
use crate::io;
use crate::model_spec::{Family, ModelSpec};
use crate::report::{CoefficientEntry, Report};
use crate::select::{self, CvMode};
use crate::sim::{self, DgpSpec, NoiseLaw, Table1Config};
use crate::weighting::{fit_membership_model, MembershipModel, Subset, POSITIVITY_WARNING};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "PREDTRANSPORT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "predtransport", version, about = "Transport prediction models to a target population")]
pub struct Cli {
    /// Worker threads for parallel simulation and cross-validation.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an outcome model on the training split.
    Fit(FitArgs),
    /// Estimate target-population performance of a fitted or supplied model.
    Evaluate(EvaluateArgs),
    /// Cross-validate candidate model specs.
    Cv(CvArgs),
    /// Prediction error modifier curve and permutation test.
    Diagnose(DiagnoseArgs),
    /// Draw a simulated dataset.
    Simulate(SimulateArgs),
    /// Run the four-cell simulation study of OLS/WLS fits.
    #[command(name = "reproduce-table1")]
    ReproduceTable1(Table1Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DgpChoice {
    /// Quadratic mean, noise sd = x.
    Main,
    /// Quadratic mean, noise variance = x.
    MainVariance,
    /// Shared linear mean, noise variance 1 (source) vs 4 (target).
    Heteroscedastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignChoice {
    NonNested,
    Nested,
}

impl From<DesignChoice> for DesignKind {
    fn from(d: DesignChoice) -> Self {
        match d {
            DesignChoice::NonNested => DesignKind::NonNested,
            DesignChoice::Nested => DesignKind::Nested,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeChoice {
    Unweighted,
    InverseOdds,
}

impl From<ModeChoice> for WeightingMode {
    fn from(m: ModeChoice) -> Self {
        match m {
            ModeChoice::Unweighted => WeightingMode::Unweighted,
            ModeChoice::InverseOdds => WeightingMode::InverseOdds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossChoice {
    Mse,
    Mae,
    Brier,
}

impl From<LossChoice> for LossKind {
    fn from(l: LossChoice) -> Self {
        match l {
            LossChoice::Mse => LossKind::SquaredError,
            LossChoice::Mae => LossKind::AbsoluteError,
            LossChoice::Brier => LossKind::Brier,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyChoice {
    Gaussian,
    Bernoulli,
}

impl From<FamilyChoice> for Family {
    fn from(f: FamilyChoice) -> Self {
        match f {
            FamilyChoice::Gaussian => Family::Gaussian,
            FamilyChoice::Bernoulli => Family::Bernoulli,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenominatorChoice {
    TargetCount,
    WeightSum,
}

impl From<DenominatorChoice> for Denominator {
    fn from(d: DenominatorChoice) -> Self {
        match d {
            DenominatorChoice::TargetCount => Denominator::TargetCount,
            DenominatorChoice::WeightSum => Denominator::WeightSum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvModeChoice {
    TargetWeighted,
    SourceNaive,
}

/// Where the data comes from: CSV files or a simulated process.
#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Source-population CSV (covariates plus `y`).
    #[arg(long, requires = "target", conflicts_with_all = ["data", "dgp"])]
    pub source: Option<PathBuf>,
    /// Target-population CSV (covariates only).
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
    /// Combined CSV with `y` and `s` columns.
    #[arg(long, conflicts_with = "dgp")]
    pub data: Option<PathBuf>,
    /// Simulate the data instead of reading files.
    #[arg(long, value_enum)]
    pub dgp: Option<DgpChoice>,
    /// Sample size for `--dgp`.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = DesignChoice::NonNested)]
    pub design: DesignChoice,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Outcome model terms, e.g. "1,x,x^2".
    #[arg(long, default_value = "1,x")]
    pub model: String,
    #[arg(long, value_enum, default_value_t = FamilyChoice::Gaussian)]
    pub family: FamilyChoice,
    /// Membership model terms; defaults to main effects of all covariates.
    #[arg(long)]
    pub membership: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeChoice::Unweighted)]
    pub mode: ModeChoice,
    /// Cap weights at this upper quantile (e.g. 0.99).
    #[arg(long)]
    pub truncate: Option<f64>,
    /// Fraction of each population assigned to training.
    #[arg(long, default_value_t = 0.5)]
    pub ratio: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Write the fitted model document here.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Established model document; all rows become test data.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LossChoice::Mse)]
    pub loss: LossChoice,
    #[arg(long, value_enum, default_value_t = DenominatorChoice::TargetCount)]
    pub denominator: DenominatorChoice,
    /// Terms of the conditional-loss regression; defaults to main effects
    /// of the outcome-model covariates.
    #[arg(long)]
    pub loss_model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Candidate specs separated by `;`, e.g. "1,x;1,x,x^2".
    #[arg(long)]
    pub candidates: String,
    #[arg(long, value_enum, default_value_t = FamilyChoice::Gaussian)]
    pub family: FamilyChoice,
    #[arg(long)]
    pub membership: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = CvModeChoice::TargetWeighted)]
    pub cv_mode: CvModeChoice,
    #[arg(long, value_enum, default_value_t = LossChoice::Mse)]
    pub loss: LossChoice,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Covariate examined as a prediction error modifier.
    #[arg(long)]
    pub modifier: String,
    #[arg(long, default_value_t = select::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = select::DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    /// Plot-ready two-column text output.
    #[arg(long)]
    pub plot_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = DgpChoice::Main)]
    pub dgp: DgpChoice,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = DesignChoice::NonNested)]
    pub design: DesignChoice,
    #[arg(long)]
    pub seed: u64,
    /// Combined CSV output.
    #[arg(long)]
    pub data_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Table1Args {
    #[arg(long, default_value_t = 10_000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Skip the large-sample limiting-model truths.
    #[arg(long)]
    pub no_limiting: bool,
    /// Aligned text table output.
    #[arg(long)]
    pub text_out: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn dgp_spec(choice: DgpChoice, n: usize, seed: u64, design: DesignKind) -> DgpSpec {
    match choice {
        DgpChoice::Main => DgpSpec::main(n, seed),
        DgpChoice::MainVariance => DgpSpec::main(n, seed).with_noise(NoiseLaw::VarianceEqualsX),
        DgpChoice::Heteroscedastic => DgpSpec::heteroscedastic(n, seed),
    }
    .with_design(design)
}

/// Loads the dataset described by the input arguments.
pub fn load_dataset(input: &InputArgs) -> Result<TransportDataset> {
    let design = input.design.into();
    match (&input.source, &input.target, &input.data, input.dgp) {
        (Some(s), Some(t), None, None) => {
            Ok(assemble_composite(&io::read_table(s)?, &io::read_table(t)?, design)?)
        }
        (None, None, Some(d), None) => io::read_combined(d, design),
        (None, None, None, Some(dgp)) => sim::generate(&dgp_spec(dgp, input.n, input.seed, design)),
        _ => Err(Error::Config(
            "give exactly one of --source/--target, --data or --dgp".into(),
        )),
    }
}

fn parse_spec(text: &str, family: Family, ds: &TransportDataset) -> Result<ModelSpec> {
    let spec = ModelSpec::parse_with_columns(text, family, ds.covariate_names())?;
    spec.check_columns(ds.covariate_names())?;
    Ok(spec)
}

fn fit_options(model: &ModelArgs, ds: &TransportDataset) -> Result<FitOptions> {
    Ok(FitOptions {
        membership_spec: model
            .membership
            .as_deref()
            .map(|m| parse_spec(m, Family::Gaussian, ds))
            .transpose()?,
        truncation: model.truncate,
    })
}

fn coefficient_entries(names: Vec<String>, values: &[f64]) -> Vec<CoefficientEntry> {
    names
        .into_iter()
        .zip(values)
        .map(|(term, &value)| CoefficientEntry { term, value })
        .collect()
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn record_fit(report: &mut Report, fit: &FittedModel) {
    report.model_spec = Some(fit.spec().to_string());
    report.weighting_mode = Some(fit.weighting().to_string());
    report.coefficients = coefficient_entries(fit.spec().term_names(), fit.coefficients());
    if let Some(mm) = fit.membership() {
        report.diagnostics.membership_train_coefficients =
            Some(coefficient_entries(mm.spec.term_names(), &mm.logistic.coefficients));
    }
}

fn record_split(report: &mut Report, ds: &TransportDataset, split: &SplitAssignment) {
    let d = &mut report.diagnostics;
    d.n_rows = Some(ds.nrows());
    d.n_source = Some(ds.n_source());
    d.n_target = Some(ds.n_target());
    d.n_train = Some(split.train_rows().len());
    d.n_test = Some(split.test_rows().len());
}

fn record_membership_test(report: &mut Report, ds: &TransportDataset, split: &SplitAssignment, mm: &MembershipModel) -> Result<()> {
    let min_p = mm.min_target_probability(ds, &split.test_rows())?;
    let d = &mut report.diagnostics;
    d.membership_test_coefficients = Some(coefficient_entries(mm.spec.term_names(), &mm.logistic.coefficients));
    d.min_target_source_probability = min_p;
    d.positivity_warning = min_p.is_some_and(|p| p < POSITIVITY_WARNING);
    Ok(())
}

fn fit_from_args(ds: &TransportDataset, split: &SplitAssignment, model: &ModelArgs) -> Result<FittedModel> {
    let spec = parse_spec(&model.model, model.family.into(), ds)?;
    fit_transported(ds, split, &spec, model.mode.into(), &fit_options(model, ds)?)
}

fn run_fit(args: &FitArgs) -> Result<Report> {
    let ds = load_dataset(&args.input)?;
    let split = split_train_test(&ds, args.model.ratio, args.input.seed)?;
    let fit = fit_from_args(&ds, &split, &args.model)?;
    let mut report = Report::new("fit", args.input.seed, config_json(args));
    record_fit(&mut report, &fit);
    record_split(&mut report, &ds, &split);
    if let Some(path) = &args.model_out {
        write_file(path, &fit.to_document())?;
    }
    Ok(report)
}

fn run_evaluate(args: &EvaluateArgs) -> Result<Report> {
    let ds = load_dataset(&args.input)?;
    let (split, fit) = match &args.model_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| io::IoError::File {
                path: path.display().to_string(),
                source,
            })?;
            (SplitAssignment::all_test(ds.nrows()), FittedModel::from_document(&text)?)
        }
        None => {
            let split = split_train_test(&ds, args.model.ratio, args.input.seed)?;
            let fit = fit_from_args(&ds, &split, &args.model)?;
            (split, fit)
        }
    };
    let kind: LossKind = args.loss.into();
    let options = fit_options(&args.model, &ds)?;
    let mm_test = fit_membership_model(&ds, &split, Subset::Test, &options.membership_spec_for(&ds))?;

    let mut report = Report::new("evaluate", args.input.seed, config_json(args));
    record_fit(&mut report, &fit);
    record_split(&mut report, &ds, &split);
    record_membership_test(&mut report, &ds, &split, &mm_test)?;

    match ds.design() {
        DesignKind::NonNested => {
            report.estimates.push(eval::estimate_iow_on_rows(
                &ds,
                &split.test_rows(),
                &fit,
                &mm_test,
                kind,
                args.denominator.into(),
                args.model.truncate,
            )?);
            let loss_spec = match &args.loss_model {
                Some(text) => parse_spec(text, Family::Gaussian, &ds)?,
                None => {
                    let cols: Vec<String> = fit.spec().columns().into_iter().map(String::from).collect();
                    ModelSpec::main_effects(&cols)
                }
            };
            report
                .estimates
                .push(eval::estimate_target_loss_om(&ds, &split, &fit, kind, &loss_spec)?);
        }
        DesignKind::Nested => {
            report
                .estimates
                .push(eval::estimate_nested_loss(&ds, &split, &fit, &mm_test, kind)?);
        }
    }
    report.estimates.push(eval::estimate_source_loss(&ds, &split, &fit, kind)?);
    Ok(report)
}

fn run_cv(args: &CvArgs) -> Result<Report> {
    let ds = load_dataset(&args.input)?;
    let candidates = args
        .candidates
        .split(';')
        .filter(|c| !c.trim().is_empty())
        .map(|c| parse_spec(c, args.family.into(), &ds))
        .collect::<Result<Vec<_>>>()?;
    let folds = make_folds(&ds, args.folds, args.input.seed)?;
    let options = FitOptions {
        membership_spec: args
            .membership
            .as_deref()
            .map(|m| parse_spec(m, Family::Gaussian, &ds))
            .transpose()?,
        truncation: None,
    };
    let mode = match args.cv_mode {
        CvModeChoice::TargetWeighted => CvMode::TargetWeighted,
        CvModeChoice::SourceNaive => CvMode::SourceNaive,
    };
    let result = select::cv_weighted(&ds, &folds, &candidates, args.loss.into(), mode, &options)?;
    let mut report = Report::new("cv", args.input.seed, config_json(args));
    report.diagnostics.n_rows = Some(ds.nrows());
    report.diagnostics.n_source = Some(ds.n_source());
    report.diagnostics.n_target = Some(ds.n_target());
    report.model_spec = Some(result.candidates[result.selected].clone());
    report.cv = Some(result);
    Ok(report)
}

fn run_diagnose(args: &DiagnoseArgs) -> Result<Report> {
    let ds = load_dataset(&args.input)?;
    let split = split_train_test(&ds, args.model.ratio, args.input.seed)?;
    let fit = fit_from_args(&ds, &split, &args.model)?;
    let mut curve = select::pem_curve(&ds, &split, &fit, &args.modifier, args.bins)?;
    curve.p_value = Some(select::pem_test(
        &ds,
        &split,
        &fit,
        &args.modifier,
        args.bins,
        args.permutations,
        args.input.seed,
    )?);
    if let Some(path) = &args.plot_out {
        write_file(path, &curve.to_plot_text())?;
    }
    let mut report = Report::new("diagnose", args.input.seed, config_json(args));
    record_fit(&mut report, &fit);
    record_split(&mut report, &ds, &split);
    report.pem = Some(curve);
    Ok(report)
}

fn run_simulate(args: &SimulateArgs) -> Result<Report> {
    let spec = dgp_spec(args.dgp, args.n, args.seed, args.design.into());
    let ds = sim::generate(&spec)?;
    if let Some(path) = &args.data_out {
        io::write_combined(&ds, path)?;
    }
    let mut report = Report::new("simulate", args.seed, config_json(args));
    report.diagnostics.n_rows = Some(ds.nrows());
    report.diagnostics.n_source = Some(ds.n_source());
    report.diagnostics.n_target = Some(ds.n_target());
    if args.dgp == DgpChoice::Heteroscedastic {
        report.exchangeability = Some(sim::mean_exchangeability_demo(&spec)?);
    }
    Ok(report)
}

fn run_table1(args: &Table1Args) -> Result<(Report, String)> {
    let mut config = Table1Config::new(args.replicates, args.n, args.seed);
    if args.no_limiting {
        config.limiting_n = None;
    }
    let table = sim::reproduce_table1_with(&config)?;
    let text = table.to_text();
    if let Some(path) = &args.text_out {
        write_file(path, &text)?;
    }
    let mut report = Report::new("reproduce-table1", args.seed, config_json(args));
    report.diagnostics.notes.push(
        "true_target_mse averages the quadrature target MSE of each replicate's fitted model; \
         limiting_target_mse uses one fit on a large sample"
            .into(),
    );
    report.table1 = Some(table);
    Ok((report, text))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| {
        io::IoError::File {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

/// Runs a parsed command; returns the report and any text for stdout.
pub fn execute(cli: &Cli) -> Result<(Report, Option<PathBuf>, Option<String>)> {
    Ok(match &cli.command {
        Command::Fit(a) => (run_fit(a)?, a.out.clone(), None),
        Command::Evaluate(a) => (run_evaluate(a)?, a.out.clone(), None),
        Command::Cv(a) => (run_cv(a)?, a.out.clone(), None),
        Command::Diagnose(a) => (run_diagnose(a)?, a.out.clone(), None),
        Command::Simulate(a) => (run_simulate(a)?, a.out.clone(), None),
        Command::ReproduceTable1(a) => {
            let (report, text) = run_table1(a)?;
            // The table goes to stdout only when it has nowhere else to go
            // and stdout is not already taken by the JSON report.
            let stdout_text = (a.text_out.is_none() && a.out.is_some()).then_some(text);
            (report, a.out.clone(), stdout_text)
        }
    })
}

fn error_record(module: &str, message: &str) -> String {
    serde_json::json!({ "error": { "module": module, "message": message } }).to_string()
}

/// Entry point shared by the binary and tests. Returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", error_record("cli", e.to_string().trim()));
            return 2;
        }
    };
    if let Some(threads) = cli.threads {
        // A pool may already exist when run() is called repeatedly in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match execute(&cli) {
        Ok((report, out, text)) => {
            let json = report.to_json();
            if let Some(text) = text {
                print!("{text}");
            }
            match out {
                Some(path) => {
                    if let Err(e) = write_file(&path, &json) {
                        eprintln!("{}", error_record(e.module(), &e.to_string()));
                        return 1;
                    }
                }
                None => print!("{json}"),
            }
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(e.module(), &e.to_string()));
            1
        }
    }
}
