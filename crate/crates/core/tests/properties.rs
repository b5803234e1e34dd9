use envnet::envpath::EnvPath;
use envnet::finite_time::mixture_law;
use envnet::model::{
    build_modulation, parse_model, serialize_model, validate_network, ModulatedNetwork, RateMap, Reaction, ReactionKind,
};
use envnet::propagator::propagate;
use envnet::stationary::stationary_sample_z;
use proptest::prelude::*;

/// Model text from a compact description: `(kind, i, j, burst, rates)` with
/// kind 0 = production, 1 = degradation, 2 = conversion.
fn model_text(d: usize, gen: &[Vec<f64>], reactions: &[(u8, usize, usize, u32, Vec<f64>)]) -> String {
    let n = gen.len();
    let mut t = format!(
        "[species]\nnames = [{}]\n[environment]\nstates = [{}]\n",
        (0..d).map(|i| format!("\"S{i}\"")).collect::<Vec<_>>().join(", "),
        (0..n).map(|i| format!("\"x{i}\"")).collect::<Vec<_>>().join(", ")
    );
    if n > 1 {
        let mut q = gen.to_vec();
        for (i, row) in q.iter_mut().enumerate() {
            row[i] = 0.0;
            row[i] = -row.iter().sum::<f64>();
        }
        t += &format!("generator = {q:?}\n");
    }
    for (kind, i, j, m, rates) in reactions {
        let (i, j) = (i % d, j % d);
        let eq = match kind {
            0 => format!("0 -> {m} S{i}"),
            1 => format!("S{i} -> 0"),
            _ if i != j => format!("S{i} -> S{j}"),
            _ => continue,
        };
        t += &format!("[[reactions]]\nequation = \"{eq}\"\nrate = {:?}\n", &rates[..n]);
    }
    t
}

fn network() -> impl Strategy<Value = ModulatedNetwork> {
    (1usize..4, 1usize..4)
        .prop_flat_map(|(d, n)| {
            let gen = proptest::collection::vec(proptest::collection::vec(0.2f64..5.0, n), n);
            let reaction = (0u8..3, 0..d, 0..d, 1u32..3, proptest::collection::vec(0.0f64..4.0, n));
            (Just(d), gen, proptest::collection::vec(reaction, 1..8))
        })
        .prop_filter_map("model rejected", |(d, gen, reactions)| {
            validate_network(&parse_model(&model_text(d, &gen, &reactions)).ok()?).ok()
        })
}

/// Same mean dynamics with every burst of `m` replaced by single molecules
/// at `m` times the rate.
fn flattened(net: &ModulatedNetwork) -> ModulatedNetwork {
    let reactions = net
        .reactions()
        .iter()
        .map(|r| match r.kind {
            ReactionKind::Production { target, burst } => Reaction {
                kind: ReactionKind::Production { target, burst: 1 },
                rate: RateMap::new(r.rate.values().iter().map(|v| v * burst as f64).collect()),
            },
            _ => r.clone(),
        })
        .collect();
    let names = net.species().iter().map(|s| s.name.clone()).collect();
    ModulatedNetwork::new(names, reactions, net.env().clone()).unwrap()
}

fn path_over(net: &ModulatedNetwork, holdings: &[(usize, f64)]) -> EnvPath {
    let n = net.env().len();
    let h: Vec<(usize, f64)> = holdings.iter().map(|&(x, t)| (x % n, t)).collect();
    EnvPath::from_holdings(h[0].0, &h).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_round_trips(net in network()) {
        let text = serialize_model(&net);
        let again = validate_network(&parse_model(&text).unwrap()).unwrap();
        prop_assert_eq!(net, again);
    }

    #[test]
    fn finite_time_pmf_is_consistent_with_the_mean(
        net in network(),
        holdings in proptest::collection::vec((0usize..4, 0.05f64..0.6), 1..6),
        z0 in proptest::collection::vec(0u64..3, 3),
    ) {
        let path = path_over(&net, &holdings);
        let t = path.total_time();
        let m = build_modulation(&net);
        let z0 = &z0[..net.dim()];
        let law = mixture_law(&m, &path, t, z0, 1e-11).unwrap();
        let zmax = vec![24u32; net.dim()];
        if let Ok(table) = law.pmf_table(&zmax) {
            let total = table.total();
            prop_assert!(total <= 1.0 + 1e-9 && total > 0.0, "total {}", total);
            prop_assert!(table.values.iter().all(|&p| p >= -1e-15));
        }
        let p = propagate(&build_modulation(&flattened(&net)), &path, 0.0, t).unwrap();
        let z = nalgebra::DVector::from_iterator(z0.len(), z0.iter().map(|&v| v as f64));
        let lambda = &p.phi * z + &p.w;
        prop_assert!((law.mean() - &lambda).abs().max() < 1e-8 * (1.0 + lambda.abs().max()));
    }

    #[test]
    fn closed_totals_are_conserved(total in 0u64..12, anchor in 0usize..2, seed in 0u64..1000) {
        let net = validate_network(&parse_model(envnet::fixtures::get("closed-cycle").unwrap().model).unwrap()).unwrap();
        for z in stationary_sample_z(&net, anchor, &[total], 10, seed, 50).unwrap() {
            prop_assert_eq!(z.iter().sum::<u64>(), total);
        }
    }
}
