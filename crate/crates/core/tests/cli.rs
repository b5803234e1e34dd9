use std::process::{Command, Output};

fn envnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_envnet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn lists_fixtures() {
    let o = envnet(&["fixtures", "list"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("name,verdict\n"));
    for name in envnet::fixtures::names() {
        assert!(out.contains(&format!("\n{name},")), "{name}");
    }
}

#[test]
fn check_gene_network() {
    let o = envnet(&["check", "fixtures/geneN1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Assumption 2: satisfied"));
}

#[test]
fn violated_assumption_is_reported_not_rejected() {
    let o = envnet(&["check", "fixtures/no-degradation"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("assumption2,violated"));
    assert!(out.contains("species,violation\nS,"));
    let o = envnet(&["stationary", "fixtures/no-degradation", "--n", "5", "--samples", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(envnet(&["check", "fixtures/explosive"]).status.code(), Some(1));
    assert_eq!(envnet(&["stationary", "fixtures/partition", "--samples", "3"]).status.code(), Some(1));
    assert_eq!(envnet(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(envnet(&["oracle", "fixtures/geneN1"]).status.code(), Some(64));
    assert_eq!(envnet(&["--version"]).status.code(), Some(0));
    // alpha = 2 at this anchor, so no certificate
    let o = envnet(&["stationary", "fixtures/alpha-chain", "--anchor", "1", "--certificate", "--replicas", "500"]);
    assert_eq!(o.status.code(), Some(2));
    let o = envnet(&["oracle", "fixtures/case-study", "--stationary", "--cap", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("overflow"));
}

#[test]
fn compare_prints_a_tv_row() {
    let o = envnet(&["compare", "fixtures/case-study", "--t", "2", "--replicas", "4000"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("mode,state,samples,tv,overflow"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "finite-time");
    let tv: f64 = row[3].parse().unwrap();
    assert!(tv < 0.05, "{tv}");
}

#[test]
fn seed_changes_output_and_is_echoed() {
    let a = envnet(&["simulate-env", "fixtures/case-study", "--horizon", "10", "--seed", "1"]);
    let b = envnet(&["simulate-env", "fixtures/case-study", "--horizon", "10", "--seed", "2"]);
    let c = envnet(&["simulate-env", "fixtures/case-study", "--horizon", "10", "--seed", "1"]);
    assert_ne!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert!(String::from_utf8_lossy(&a.stderr).contains("seed: 1"));
}

#[test]
fn transient_species_are_refused_with_a_hint() {
    let o = envnet(&["stationary", "fixtures/partition", "--components", "4", "--n", "20", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("transient species S3"), "{err}");
}

#[test]
fn closed_component_totals_from_the_cli() {
    let o = envnet(&["stationary", "fixtures/closed-cycle", "--components", "4", "--n", "20", "--samples", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("A,B,C"));
    for line in lines.take_while(|l| !l.is_empty()) {
        let z: Vec<u64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(z.iter().sum::<u64>(), 4);
    }
}
