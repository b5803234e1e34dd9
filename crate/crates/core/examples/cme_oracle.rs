//! Truncated master equation: transient and stationary laws with their
//! truncation diagnostics.

use envnet::model::{parse_model, validate_network};
use envnet::oracle::{build_joint_generator, stationary_pmf, stationary_residual, transient_pmf, TruncatedJointSpace};

fn main() -> envnet::Result<()> {
    let net = validate_network(&parse_model(envnet::fixtures::get("geneN2").unwrap().model)?)?;
    let space = TruncatedJointSpace::new(net.env().len(), &[40])?;
    let gen = build_joint_generator(&net, &space)?;
    let at2 = transient_pmf(&gen, 0, &[0], 2.0)?;
    let stat = stationary_pmf(&gen, 0, &[0], 1e-8)?;
    println!("t=2 overflow {:.2e}; stationary boundary mass {:.2e}, residual {:.2e}", at2.overflow, stat.overflow, stationary_residual(&gen, &stat));
    for x in 0..net.env().len() {
        let c = stat.conditional(x);
        let mean: f64 = c.iter().enumerate().map(|(z, p)| z as f64 * p).sum();
        println!("  P(X={}) = {:.4}, E[Z | X] = {mean:.4}", net.env().state_name(x), stat.env_marginal()[x]);
    }
    Ok(())
}
