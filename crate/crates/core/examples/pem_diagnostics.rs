//! Check whether a covariate modifies prediction error: binned conditional
//! loss plus a permutation test.
//!
//! cargo run --example pem_diagnostics

use predtransport::data::split_train_test;
use predtransport::{fit_transported, generate, pem_curve, pem_test, DgpSpec, FitOptions, ModelSpec, NoiseLaw, WeightingMode};

fn main() -> predtransport::Result<()> {
    // Noise variance grows with x, so x modifies the error even for the
    // correct mean model.
    let ds = generate(&DgpSpec::main(20_000, 5).with_noise(NoiseLaw::VarianceEqualsX))?;
    let split = split_train_test(&ds, 0.5, 5)?;
    let fit = fit_transported(&ds, &split, &ModelSpec::polynomial("x", 2), WeightingMode::Unweighted, &FitOptions::default())?;

    let mut curve = pem_curve(&ds, &split, &fit, "x", 8)?;
    curve.p_value = Some(pem_test(&ds, &split, &fit, "x", 8, 999, 5)?);
    print!("{}", curve.to_plot_text());
    println!("slope {:.3}, permutation p = {:.4}", curve.slope().unwrap_or(f64::NAN), curve.p_value.unwrap());

    // Equal variances everywhere: no modification expected.
    let ds = generate(&DgpSpec::mean_exchangeable(5000, 6, 1.0, 1.0))?;
    let split = split_train_test(&ds, 0.5, 6)?;
    let fit = fit_transported(&ds, &split, &ModelSpec::polynomial("x", 1), WeightingMode::Unweighted, &FitOptions::default())?;
    println!("homoscedastic process: p = {:.4}", pem_test(&ds, &split, &fit, "x", 8, 999, 6)?);
    Ok(())
}
