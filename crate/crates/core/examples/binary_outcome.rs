//! Binary outcomes: a weighted logistic outcome model scored by the Brier
//! score in the target population.
//!
//! cargo run --example binary_outcome

use nalgebra::DMatrix;
use predtransport::data::{split_train_test, DesignKind, TransportDataset};
use predtransport::eval::{estimate_source_loss, estimate_target_loss_iow};
use predtransport::glm::expit;
use predtransport::{fit_membership_model, fit_transported, Family, FitOptions, LossKind, ModelSpec, Subset, WeightingMode};
use rand::{Rng, SeedableRng};

fn main() -> predtransport::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let n = 4000;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let s: Vec<bool> = x.iter().map(|&x| rng.random_bool(expit(1.5 - 0.3 * x))).collect();
    let y = (0..n)
        .map(|i| s[i].then(|| f64::from(rng.random_bool(expit(-2.0 + 0.05 * x[i] * x[i])))))
        .collect();
    let ds = TransportDataset::new(vec!["x".into()], DMatrix::from_column_slice(n, 1, &x), y, s, DesignKind::NonNested)?;

    let split = split_train_test(&ds, 0.5, 4)?;
    let model = ModelSpec::polynomial("x", 1).with_family(Family::Bernoulli);
    let mm = fit_membership_model(&ds, &split, Subset::Test, &ModelSpec::main_effects(ds.covariate_names()))?;
    for mode in [WeightingMode::Unweighted, WeightingMode::InverseOdds] {
        let fit = fit_transported(&ds, &split, &model, mode, &FitOptions::default())?;
        let target = estimate_target_loss_iow(&ds, &split, &fit, &mm, LossKind::Brier)?;
        let source = estimate_source_loss(&ds, &split, &fit, LossKind::Brier)?;
        println!("{:<12} Brier: source {:.4}, target estimate {:.4}", mode.to_string(), source.value, target.value);
    }
    Ok(())
}
