//! File round trip: write source and target CSVs, read them back, fit, save
//! the model document and evaluate the saved model on new data.
//!
//! cargo run --example csv_workflow

use predtransport::data::{assemble_composite, split_train_test, DesignKind, SplitAssignment};
use predtransport::eval::estimate_target_loss_iow;
use predtransport::{
    fit_membership_model, fit_transported, generate, io, DgpSpec, FitOptions, FittedModel, LossKind, ModelSpec,
    Subset, WeightingMode,
};

fn main() -> predtransport::Result<()> {
    let dir = std::env::temp_dir().join("predtransport-csv-example");
    std::fs::create_dir_all(&dir).map_err(|e| predtransport::Error::Config(e.to_string()))?;

    let ds = generate(&DgpSpec::main(800, 21))?;
    let mut source = String::from("x,y\n");
    let mut target = String::from("x\n");
    for i in 0..ds.nrows() {
        match ds.outcome(i) {
            Some(y) if ds.is_source(i) => source.push_str(&format!("{},{y}\n", ds.value(i, 0))),
            _ => target.push_str(&format!("{}\n", ds.value(i, 0))),
        }
    }
    let (sp, tp) = (dir.join("source.csv"), dir.join("target.csv"));
    std::fs::write(&sp, source).and_then(|_| std::fs::write(&tp, target))
        .map_err(|e| predtransport::Error::Config(e.to_string()))?;

    let ds = assemble_composite(&io::read_table(&sp)?, &io::read_table(&tp)?, DesignKind::NonNested)?;
    let split = split_train_test(&ds, 0.5, 1)?;
    let fit = fit_transported(&ds, &split, &"1,x,x^2".parse::<ModelSpec>()?, WeightingMode::InverseOdds, &FitOptions::default())?;
    let document = fit.to_document();
    println!("{document}");

    // Later, on fresh data: every row is evaluation data.
    let model = FittedModel::from_document(&document)?;
    let fresh = generate(&DgpSpec::main(2000, 22))?;
    let all = SplitAssignment::all_test(fresh.nrows());
    let mm = fit_membership_model(&fresh, &all, Subset::Test, &ModelSpec::main_effects(fresh.covariate_names()))?;
    let est = estimate_target_loss_iow(&fresh, &all, &model, &mm, LossKind::SquaredError)?;
    println!("estimated target MSE of the saved model: {:.2}", est.value);
    Ok(())
}
