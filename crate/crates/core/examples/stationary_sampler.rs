//! Stationary samples from the mixture representation, with the cycle count
//! chosen by the error certificate.

use envnet::model::{parse_model, validate_network};
use envnet::stationary::{error_certificate, stationary_sample_z};

fn main() -> envnet::Result<()> {
    let net = validate_network(&parse_model(envnet::fixtures::get("geneN1").unwrap().model)?)?;
    for x in 0..net.env().len() {
        let cert = error_certificate(&net, x, 5, 5000)?;
        let n = cert.iterations_for(1e-3).unwrap();
        let draws = stationary_sample_z(&net, x, &[], n, 9, 20_000)?;
        let mean = draws.iter().map(|z| z[0] as f64).sum::<f64>() / draws.len() as f64;
        println!(
            "anchor {:>2}: M={:.3} r={:.3} n={n} mean P given anchor {mean:.3}",
            net.env().state_name(x),
            cert.m_hat,
            cert.r_hat
        );
    }
    let closed = validate_network(&parse_model(envnet::fixtures::get("closed-cycle").unwrap().model)?)?;
    for z in stationary_sample_z(&closed, 0, &[5], 50, 2, 5)? {
        println!("closed cycle sample {z:?} (total {})", z.iter().sum::<u64>());
    }
    Ok(())
}
