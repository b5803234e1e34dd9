//! Contraction test over alpha return cycles. The chain fixture needs two
//! cycles before every molecule can leave.

use envnet::model::{parse_model, validate_network};
use envnet::structure::alpha_table;

fn main() -> envnet::Result<()> {
    for (name, anchor) in [("alpha-chain", "1"), ("case-study", "off")] {
        let net = validate_network(&parse_model(envnet::fixtures::get(name).unwrap().model)?)?;
        let x = net.env().resolve(anchor)?;
        let report = alpha_table(&net, x, 4, 10_000, 1)?;
        println!("{name} at {anchor}: alpha = {:?}", report.alpha);
        for row in &report.table {
            println!("  alpha {} estimate {:.6} ucb99 {:.6}", row.alpha, row.estimate, row.ucb99);
        }
    }
    Ok(())
}
