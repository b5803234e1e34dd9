use envnet::fixtures::{self, FIXTURES};
use envnet::model::{parse_model, serialize_model, stationary_env, validate_network};
use envnet::structure::{check_assumption2, estimate_alpha};

fn names(net: &envnet::model::ModulatedNetwork, ids: &[usize]) -> Vec<String> {
    ids.iter().map(|&i| net.species()[i].name.clone()).collect()
}

#[test]
fn every_fixture_meets_its_sidecar() {
    for f in FIXTURES {
        let exp = f.expected().unwrap();
        let raw = parse_model(f.model).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        let checked = validate_network(&raw);
        if exp.verdict == "rejected" {
            let err = checked.expect_err(f.name).to_string();
            let want = exp.rejection.as_deref().unwrap();
            assert!(err.contains(want), "{}: {err}", f.name);
            continue;
        }
        assert_eq!(exp.verdict, "accepted", "{}", f.name);
        let net = checked.unwrap_or_else(|e| panic!("{}: {e}", f.name));
        let pi = stationary_env(net.env()).unwrap();
        let verdict = check_assumption2(&net, &pi);
        assert_eq!(Some(verdict.satisfied), exp.ergodic, "{}", f.name);
        let p = &verdict.partition;
        assert_eq!(names(&net, &p.produced), exp.produced, "{}", f.name);
        assert_eq!(names(&net, &p.transient), exp.transient, "{}", f.name);
        let comps: Vec<Vec<String>> = p.closed_components.iter().map(|c| names(&net, c)).collect();
        assert_eq!(comps, exp.closed_components, "{}", f.name);
        let bad: Vec<usize> = verdict.violations.iter().map(|v| v.0).collect();
        assert_eq!(names(&net, &bad), exp.violations, "{}", f.name);
        if let Some(want) = &exp.pi {
            for (a, b) in pi.iter().zip(want) {
                assert!((a - b).abs() < 1e-10, "{}: pi {pi:?}", f.name);
            }
        }
        if let Some(c) = &exp.product_form {
            let weights: Vec<f64> = net
                .env()
                .states()
                .iter()
                .map(|s| {
                    let (a, b) = s.split_once(',').unwrap();
                    let (x1, x2): (i32, i32) = (a.parse().unwrap(), b.parse().unwrap());
                    let fact = |n: i32| (1..=n).map(f64::from).product::<f64>();
                    c[0].powi(x1) / fact(x1) * c[1].powi(x2) / fact(x2)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            for (a, w) in pi.iter().zip(&weights) {
                assert!((a - w / total).abs() < 1e-10, "{}", f.name);
            }
        }
        if let Some(m) = exp.mean_production {
            assert!((verdict.mean_production - m).abs() < 1e-6 * m.max(1.0), "{}: {}", f.name, verdict.mean_production);
        }
        if let (Some(anchor), Some(alpha)) = (&exp.alpha_anchor, exp.alpha) {
            let x = net.env().resolve(anchor).unwrap();
            let report = estimate_alpha(&net, x, 4, 2000, 17).unwrap();
            assert_eq!(report.alpha, Some(alpha), "{}: {:?}", f.name, report.table);
        }
    }
}

#[test]
fn accepted_fixtures_round_trip() {
    for f in FIXTURES {
        let raw = parse_model(f.model).unwrap();
        let Ok(net) = validate_network(&raw) else { continue };
        let again = validate_network(&parse_model(&serialize_model(&net)).unwrap()).unwrap();
        assert_eq!(net, again, "{}", f.name);
    }
}

#[test]
fn lookup_by_name() {
    assert!(fixtures::get("geneN1").is_some());
    assert!(fixtures::get("nope").is_none());
    assert_eq!(fixtures::names().count(), FIXTURES.len());
}
