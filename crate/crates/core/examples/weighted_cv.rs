//! Choose between candidate models by cross-validated target-population MSE.
//!
//! cargo run --example weighted_cv

use predtransport::data::make_folds;
use predtransport::{cv_weighted, generate, CvMode, DgpSpec, FitOptions, LossKind, ModelSpec};

fn main() -> predtransport::Result<()> {
    let ds = generate(&DgpSpec::main(1000, 12))?;
    let folds = make_folds(&ds, 5, 12)?;
    let candidates: Vec<ModelSpec> = (1..=3).map(|d| ModelSpec::polynomial("x", d)).collect();

    for mode in [CvMode::TargetWeighted, CvMode::SourceNaive] {
        let cv = cv_weighted(&ds, &folds, &candidates, LossKind::SquaredError, mode, &FitOptions::default())?;
        println!("{mode:?}:");
        for (name, est) in cv.candidates.iter().zip(&cv.cv_estimate) {
            println!("  {name:<12} {est:8.2}");
        }
        println!("  selected {}", cv.candidates[cv.selected]);
    }
    Ok(())
}
