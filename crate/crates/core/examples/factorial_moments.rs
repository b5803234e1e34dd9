//! Stationary factorial moments by the cycle recursion and by mixture atoms.

use envnet::model::{parse_model, stationary_env, validate_network};
use envnet::stationary::{factorial_moments, MomentMethod, MomentOptions};

fn main() -> envnet::Result<()> {
    let net = validate_network(&parse_model(envnet::fixtures::get("case-study").unwrap().model)?)?;
    let pi = stationary_env(net.env())?;
    for method in [MomentMethod::Exact, MomentMethod::Atoms] {
        let opts = MomentOptions {
            samples: 40_000,
            method,
            ..MomentOptions::default()
        };
        let m = factorial_moments(&net, &pi, &opts, 4)?;
        print!("{method:?}:");
        for q in 1..=3 {
            let r = m.get(q, 0).unwrap();
            print!("  m{q} = {:.3} ± {:.3}", r.value, r.se);
        }
        println!();
    }
    Ok(())
}
