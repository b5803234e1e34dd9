//! Environment paths, return times and the occupation measure.

use envnet::envpath::{simulate_env, ReturnIndex};
use envnet::model::{parse_model, stationary_env, validate_network};
use envnet::rng::stream;

fn main() -> envnet::Result<()> {
    let net = validate_network(&parse_model(envnet::fixtures::get("case-study").unwrap().model)?)?;
    let env = net.env();
    let path = simulate_env(env, 0, 5000.0, &mut stream(7, 0))?;
    let returns = ReturnIndex::of(&path, 0);
    let occ = path.occupation(env.len());
    let pi = stationary_env(env)?;
    println!("{} segments, {} returns to `{}`", path.segments().len(), returns.taus.len(), env.state_name(0));
    for x in 0..env.len() {
        println!("{:>4}: time fraction {:.4}  pi {:.4}", env.state_name(x), occ[x] / path.total_time(), pi[x]);
    }
    for s in path.segments().iter().take(5) {
        println!("  t={:.3} {} for {:.3}", s.start, env.state_name(s.state), s.holding);
    }
    Ok(())
}
