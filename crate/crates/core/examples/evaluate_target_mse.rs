//! Estimate how well a model trained on the source population will do in
//! the target population, where no outcomes are observed.
//!
//! cargo run --example evaluate_target_mse

use predtransport::data::split_train_test;
use predtransport::eval::{
    estimate_iow_on_rows, estimate_source_loss, estimate_target_loss_iow, estimate_target_loss_om,
};
use predtransport::{
    fit_membership_model, fit_transported, generate, true_target_loss, Denominator, DgpSpec, FitOptions,
    LossKind, ModelSpec, Subset, WeightingMode,
};

fn main() -> predtransport::Result<()> {
    let spec = DgpSpec::main(4000, 1);
    let ds = generate(&spec)?;
    let split = split_train_test(&ds, 0.5, 2)?;
    let model = ModelSpec::polynomial("x", 2);
    let fit = fit_transported(&ds, &split, &model, WeightingMode::Unweighted, &FitOptions::default())?;

    // Weights for evaluation come from a membership model fit on the test half.
    let membership = ModelSpec::main_effects(ds.covariate_names());
    let mm_test = fit_membership_model(&ds, &split, Subset::Test, &membership)?;
    let kind = LossKind::SquaredError;

    let iow = estimate_target_loss_iow(&ds, &split, &fit, &mm_test, kind)?;
    let hajek = estimate_iow_on_rows(&ds, &split.test_rows(), &fit, &mm_test, kind, Denominator::WeightSum, None)?;
    let truncated =
        estimate_iow_on_rows(&ds, &split.test_rows(), &fit, &mm_test, kind, Denominator::TargetCount, Some(0.99))?;
    let om = estimate_target_loss_om(&ds, &split, &fit, kind, &ModelSpec::polynomial("x", 2))?;
    let naive = estimate_source_loss(&ds, &split, &fit, kind)?;

    println!("inverse-odds weighting        {:8.2}", iow.value);
    println!("  with weight-sum denominator {:8.2}", hajek.value);
    println!("  with weights capped at q99  {:8.2}", truncated.value);
    println!("conditional-loss regression   {:8.2}", om.value);
    println!("source mean (ignores shift)   {:8.2}", naive.value);
    println!("true target MSE               {:8.2}", true_target_loss(&spec, &fit, kind)?);
    Ok(())
}
