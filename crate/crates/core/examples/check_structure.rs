//! Species partition and ergodicity verdict for every shipped model.

use envnet::fixtures::FIXTURES;
use envnet::model::{parse_model, stationary_env, validate_network};
use envnet::structure::check_assumption2;

fn main() -> envnet::Result<()> {
    for f in FIXTURES {
        let net = match validate_network(&parse_model(f.model)?) {
            Ok(net) => net,
            Err(e) => {
                println!("{:<16} rejected: {e}", f.name);
                continue;
            }
        };
        let pi = stationary_env(net.env())?;
        let v = check_assumption2(&net, &pi);
        let name = |ids: &[usize]| ids.iter().map(|&i| net.species()[i].name.clone()).collect::<Vec<_>>().join(" ");
        let p = &v.partition;
        let closed: Vec<String> = p.closed_components.iter().map(|c| format!("{{{}}}", name(c))).collect();
        println!(
            "{:<16} produced [{}] transient [{}] closed [{}] ergodic={}",
            f.name,
            name(&p.produced),
            name(&p.transient),
            closed.join(" "),
            v.satisfied
        );
    }
    Ok(())
}
