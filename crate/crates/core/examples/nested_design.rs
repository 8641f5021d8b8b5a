//! Nested design: the source sample is a subset of a cohort that represents
//! the target population. The estimate targets the whole cohort.
//!
//! cargo run --example nested_design

use predtransport::data::{split_train_test, DesignKind};
use predtransport::eval::estimate_nested_loss;
use predtransport::sim::nested_study;
use predtransport::{
    fit_membership_model, fit_transported, generate, true_target_loss, DgpSpec, FitOptions, LossKind, ModelSpec,
    Subset, WeightingMode,
};

fn main() -> predtransport::Result<()> {
    let spec = DgpSpec::main(3000, 9).with_design(DesignKind::Nested);
    let ds = generate(&spec)?;
    let split = split_train_test(&ds, 0.5, 9)?;
    let fit = fit_transported(&ds, &split, &ModelSpec::polynomial("x", 2), WeightingMode::Unweighted, &FitOptions::default())?;
    let mm = fit_membership_model(&ds, &split, Subset::Test, &ModelSpec::main_effects(ds.covariate_names()))?;
    let est = estimate_nested_loss(&ds, &split, &fit, &mm, LossKind::SquaredError)?;
    println!("cohort MSE estimate {:.2}, truth {:.2}", est.value, true_target_loss(&spec, &fit, LossKind::SquaredError)?);

    let study = nested_study(500, 1000, 3)?;
    println!(
        "over {} replicates: mean estimate {:.2}, mean truth {:.2}",
        study.replicates, study.mean_estimate, study.mean_truth
    );
    Ok(())
}
