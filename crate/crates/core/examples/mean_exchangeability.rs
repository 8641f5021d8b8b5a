//! Equal conditional means are not enough to transport the MSE: when the
//! noise variance differs between populations the weighted estimate misses.
//!
//! cargo run --example mean_exchangeability

use predtransport::sim::{mean_exchangeability_demo, DgpSpec};

fn main() -> predtransport::Result<()> {
    for (source_var, target_var) in [(1.0, 4.0), (1.0, 1.0), (2.0, 0.5)] {
        let demo = mean_exchangeability_demo(&DgpSpec::mean_exchangeable(50_000, 3, source_var, target_var))?;
        println!(
            "variance source {source_var}, target {target_var}: estimate {:.3}, truth {:.3}, gap {:.3}",
            demo.iow_estimate,
            demo.truth,
            demo.gap()
        );
    }
    Ok(())
}
