//! Law of Z(t) given an environment path: exact pmf next to the sampler.

use envnet::envpath::simulate_env;
use envnet::finite_time::{mixture_law, sample_z};
use envnet::model::{build_modulation, parse_model, validate_network};
use envnet::rng::stream;

fn main() -> envnet::Result<()> {
    for name in ["case-study", "case-study-m3"] {
        let net = validate_network(&parse_model(envnet::fixtures::get(name).unwrap().model)?)?;
        let m = build_modulation(&net);
        let path = simulate_env(net.env(), 0, 2.0, &mut stream(3, 0))?;
        let z0 = [2];
        let table = mixture_law(&m, &path, 2.0, &z0, 1e-10)?.pmf_table(&[12])?;
        let draws = sample_z(&m, &path, 2.0, &z0, 11, 50_000)?;
        println!("{name}");
        for z in 0..=12u32 {
            let freq = draws.iter().filter(|s| s[0] == z as u64).count() as f64 / draws.len() as f64;
            println!("  z={z:>2} exact {:.5} sampled {freq:.5}", table.get(&[z]));
        }
    }
    Ok(())
}
