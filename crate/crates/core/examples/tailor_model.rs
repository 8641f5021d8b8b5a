//! Fit the same outcome model with and without inverse-odds weights and
//! compare the target-population MSE of each.
//!
//! cargo run --example tailor_model

use predtransport::{
    fit_transported, generate, true_target_loss, DgpSpec, FitOptions, LossKind, ModelSpec, WeightingMode,
};
use predtransport::data::split_train_test;

fn main() -> predtransport::Result<()> {
    let spec = DgpSpec::main(5000, 42);
    let ds = generate(&spec)?;
    let split = split_train_test(&ds, 0.5, 7)?;
    println!("{} source rows, {} target rows", ds.n_source(), ds.n_target());

    for model in ["1,x", "1,x,x^2"] {
        let model: ModelSpec = model.parse()?;
        for mode in [WeightingMode::Unweighted, WeightingMode::InverseOdds] {
            let fit = fit_transported(&ds, &split, &model, mode, &FitOptions::default())?;
            let coefs: Vec<String> = fit.coefficients().iter().map(|c| format!("{c:.3}")).collect();
            println!(
                "{:<10} {:<12} coefficients [{}]  target MSE {:.2}",
                model.to_string(),
                mode.to_string(),
                coefs.join(", "),
                true_target_loss(&spec, &fit, LossKind::SquaredError)?
            );
        }
    }
    Ok(())
}
