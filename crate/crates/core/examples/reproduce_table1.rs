//! The four-cell simulation study: correct/incorrect mean model, fit by OLS
//! or inverse-odds WLS, with unweighted and weighted MSE estimators.
//!
//! cargo run --release --example reproduce_table1 -- [replicates] [seed]

use predtransport::sim::{reproduce_table1_with, Table1Config};

fn main() -> predtransport::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicates = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(20240601);
    let table = reproduce_table1_with(&Table1Config::new(replicates, 1000, seed))?;
    print!("{}", table.to_text());
    for cell in &table.cells {
        if let Some(limit) = cell.limiting_target_mse {
            println!("{:<28} large-sample limit {:.2}", cell.label(), limit);
        }
    }
    Ok(())
}
