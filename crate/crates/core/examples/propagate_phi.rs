//! Fate matrix Phi(u, t) and mean production W(u, t) along one path, and the
//! cocycle property Phi(u, t) = Phi(s, t) Phi(u, s).

use envnet::envpath::simulate_env;
use envnet::model::{build_modulation, parse_model, validate_network};
use envnet::propagator::propagate;
use envnet::rng::stream;

fn main() -> envnet::Result<()> {
    let net = validate_network(&parse_model(envnet::fixtures::get("partition").unwrap().model)?)?;
    let m = build_modulation(&net);
    let path = simulate_env(net.env(), 0, 4.0, &mut stream(1, 0))?;
    let whole = propagate(&m, &path, 0.5, 3.5)?;
    let a = propagate(&m, &path, 0.5, 2.0)?;
    let b = propagate(&m, &path, 2.0, 3.5)?;
    let residual = (&whole.phi - &b.phi * &a.phi).abs().max();
    println!("Phi(0.5, 3.5) ={}", whole.phi);
    println!("W(0.5, 3.5) ={}", whole.w.transpose());
    println!("column sums: {:?}", whole.phi.row_sum().iter().map(|s| (s * 1e6).round() / 1e6).collect::<Vec<_>>());
    println!("cocycle residual {residual:.2e}");
    Ok(())
}
