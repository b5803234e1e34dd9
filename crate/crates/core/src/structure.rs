//! Obtainability, the species partition and the ergodicity verdict.

use rayon::prelude::*;

use crate::envpath::{sample_cycle, with_cloned_singleton};
use crate::error::{Error, Result};
use crate::model::{build_modulation, mean_production_check, ModulatedNetwork, ReactionKind};
use crate::propagator::{segment, PathPropagator};
use crate::rng::{stream, substream};

const TASK_ALPHA: u32 = 1;

/// z-quantile for a one-sided 99% bound.
pub const Z99: f64 = 2.326_347_874;

/// Conversion digraph: `adj[i]` lists `j` with a reaction `S_i -> S_j`.
pub fn conversion_graph(net: &ModulatedNetwork) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); net.dim()];
    for r in net.reactions() {
        if let ReactionKind::Conversion { source, target } = r.kind {
            if !adj[source].contains(&target) {
                adj[source].push(target);
            }
        }
    }
    adj
}

/// `rel[i][j]` is true when `S_j` is obtainable from `S_i`.
pub fn obtainable(net: &ModulatedNetwork) -> Vec<Vec<bool>> {
    let adj = conversion_graph(net);
    (0..net.dim())
        .map(|i| crate::graph::reachable_from(&adj, &[i]))
        .collect()
}

fn produced_sources(net: &ModulatedNetwork) -> Vec<usize> {
    net.reactions()
        .iter()
        .filter_map(|r| match r.kind {
            ReactionKind::Production { target, .. } => Some(target),
            _ => None,
        })
        .collect()
}

fn degraded(net: &ModulatedNetwork) -> Vec<bool> {
    let mut deg = vec![false; net.dim()];
    for r in net.reactions() {
        if let ReactionKind::Degradation { source } = r.kind {
            deg[source] = true;
        }
    }
    deg
}

/// `0 ~> S_i`.
pub fn properly_produced(net: &ModulatedNetwork) -> Vec<bool> {
    crate::graph::reachable_from(&conversion_graph(net), &produced_sources(net))
}

/// `S_i ~> 0`: every species obtainable from `S_i` can reach a degradation.
pub fn properly_degraded(net: &ModulatedNetwork) -> Vec<bool> {
    let adj = conversion_graph(net);
    let deg = degraded(net);
    let sinks: Vec<usize> = (0..net.dim()).filter(|&i| deg[i]).collect();
    let reaches_sink = crate::graph::reachable_from(&crate::graph::reverse(&adj), &sinks);
    obtainable(net)
        .iter()
        .map(|row| row.iter().zip(&reaches_sink).all(|(&obt, &ok)| !obt || ok))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeciesPartition {
    /// Closed strongly connected components, each sorted, ordered by their
    /// smallest species.
    pub closed_components: Vec<Vec<usize>>,
    /// Properly produced species.
    pub produced: Vec<usize>,
    pub transient: Vec<usize>,
}

impl SpeciesPartition {
    pub fn h(&self) -> usize {
        self.closed_components.len()
    }

    /// Block of species `i`: `Some(k)` for closed component `k`.
    pub fn component_of(&self, i: usize) -> Option<usize> {
        self.closed_components.iter().position(|c| c.contains(&i))
    }
}

pub fn classify(net: &ModulatedNetwork) -> SpeciesPartition {
    let d = net.dim();
    let produced = properly_produced(net);
    let deg = degraded(net);
    let adj = conversion_graph(net);
    let mut closed_components = Vec::new();
    let mut in_closed = vec![false; d];
    for comp in crate::graph::strongly_connected_components(&adj) {
        let leaves = comp
            .iter()
            .any(|&i| deg[i] || adj[i].iter().any(|j| !comp.contains(j)));
        if !leaves && !comp.iter().any(|&i| produced[i]) {
            for &i in &comp {
                in_closed[i] = true;
            }
            closed_components.push(comp);
        }
    }
    closed_components.sort_by_key(|c| c[0]);
    SpeciesPartition {
        closed_components,
        produced: (0..d).filter(|&i| produced[i]).collect(),
        transient: (0..d).filter(|&i| !produced[i] && !in_closed[i]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicityVerdict {
    pub satisfied: bool,
    /// `(species, reason)` for each properly produced species that is not
    /// properly degraded.
    pub violations: Vec<(usize, String)>,
    pub mean_production: f64,
    pub partition: SpeciesPartition,
}

pub fn check_assumption2(net: &ModulatedNetwork, pi: &[f64]) -> ErgodicityVerdict {
    let produced = properly_produced(net);
    let degraded = properly_degraded(net);
    let violations: Vec<(usize, String)> = (0..net.dim())
        .filter(|&i| produced[i] && !degraded[i])
        .map(|i| (i, "properly produced, not properly degraded".to_string()))
        .collect();
    let mean = mean_production_check(net, pi);
    ErgodicityVerdict {
        satisfied: violations.is_empty() && mean.finite,
        violations,
        mean_production: mean.value,
        partition: classify(net),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaRow {
    pub alpha: usize,
    /// Mean over replicas of `max_{S_i ~> 0} ||Phi(tau_0, tau_alpha) e_i||_1`.
    pub estimate: f64,
    /// One-sided 99% normal upper confidence bound of `estimate`.
    pub ucb99: f64,
    /// Mean over replicas of `min_{S_i ~> S_j} P(i becomes j)`.
    pub min_entry: f64,
}

impl AlphaRow {
    /// Contraction accepted: the bound is below one by more than roundoff.
    pub fn passes(&self) -> bool {
        self.estimate < 1.0 && self.ucb99 < 1.0 - 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaReport {
    pub anchor: usize,
    pub alpha: Option<usize>,
    pub table: Vec<AlphaRow>,
    pub note: Option<String>,
}

/// Monte Carlo table of the contraction statistic for `alpha = 1..=alpha_max`
/// at anchor `x`. The search stops at the first passing `alpha`.
pub fn alpha_table(net: &ModulatedNetwork, x: usize, alpha_max: usize, replicas: usize, seed: u64) -> Result<AlphaReport> {
    if alpha_max == 0 || replicas < 2 {
        return Err(Error::InvalidArgument("need alpha_max >= 1 and at least 2 replicas".into()));
    }
    let net = with_cloned_singleton(net)?;
    let degradable: Vec<usize> = properly_degraded(&net)
        .iter()
        .enumerate()
        .filter_map(|(i, &ok)| ok.then_some(i))
        .collect();
    if degradable.is_empty() {
        return Ok(AlphaReport {
            anchor: x,
            alpha: Some(1),
            table: Vec::new(),
            note: Some("no properly degraded species; the maximum is over an empty set".into()),
        });
    }
    let rel = obtainable(&net);
    let modulation = build_modulation(&net);
    let env = net.env();
    let d = net.dim();
    let per_replica: Vec<Vec<(f64, f64)>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, substream(TASK_ALPHA, r));
            let mut acc = PathPropagator::identity(d, 0.0);
            let mut cycle = Vec::new();
            let mut out = Vec::with_capacity(alpha_max);
            for _ in 0..alpha_max {
                sample_cycle(env, x, &mut rng, &mut cycle)?;
                for &(state, h) in &cycle {
                    acc.then(&segment(&modulation, state, h), h);
                }
                let worst = degradable
                    .iter()
                    .map(|&i| acc.phi.column(i).sum())
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut min_entry = f64::INFINITY;
                for i in 0..d {
                    for j in 0..d {
                        if rel[i][j] {
                            min_entry = min_entry.min(acc.phi[(j, i)]);
                        }
                    }
                }
                out.push((worst, min_entry));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let n = replicas as f64;
    let mut table = Vec::new();
    let mut alpha = None;
    for a in 0..alpha_max {
        let mean = per_replica.iter().map(|v| v[a].0).sum::<f64>() / n;
        let var = per_replica.iter().map(|v| (v[a].0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let min_entry = per_replica.iter().map(|v| v[a].1).sum::<f64>() / n;
        let row = AlphaRow {
            alpha: a + 1,
            estimate: mean,
            ucb99: mean + Z99 * (var / n).sqrt(),
            min_entry,
        };
        table.push(row);
        if row.passes() {
            alpha = Some(a + 1);
            break;
        }
    }
    Ok(AlphaReport {
        anchor: x,
        alpha,
        table,
        note: None,
    })
}

/// Smallest `alpha <= alpha_max` passing the contraction test at anchor `x`.
///
/// This is a statistical diagnostic. Failing to find one is not a proof that
/// none exists.
pub fn estimate_alpha(net: &ModulatedNetwork, x: usize, alpha_max: usize, replicas: usize, seed: u64) -> Result<AlphaReport> {
    let report = alpha_table(net, x, alpha_max, replicas, seed)?;
    if report.alpha.is_none() {
        return Err(Error::BudgetExhausted { alpha_max });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, validate_network};
    use proptest::prelude::*;

    fn net(species: &[&str], reactions: &[&str]) -> ModulatedNetwork {
        let mut text = format!(
            "[species]\nnames = [{}]\n[environment]\nstates = [\"a\", \"b\"]\ngenerator = [[-1.0, 1.0], [1.0, -1.0]]\n",
            species.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>().join(", ")
        );
        for r in reactions {
            text.push_str(&format!("[[reactions]]\nequation = \"{r}\"\nrate = 1.0\n"));
        }
        validate_network(&parse_model(&text).unwrap()).unwrap()
    }

    #[test]
    fn partition_example() {
        let n = net(
            &["S1", "S2", "S3", "S4", "S5"],
            &["0 -> 2 S1", "S1 -> S2", "S2 -> 0", "S3 -> S4", "S4 -> S5", "S5 -> S4"],
        );
        let rel = obtainable(&n);
        assert!(rel[0][1] && rel[3][4] && rel[4][3] && rel[2][4]);
        assert!((0..5).all(|i| rel[i][i]));
        let p = classify(&n);
        assert_eq!(p.closed_components, vec![vec![3, 4]]);
        assert_eq!(p.produced, vec![0, 1]);
        assert_eq!(p.transient, vec![2]);
        assert_eq!(p.h(), 1);
    }

    #[test]
    fn identity_without_conversions() {
        let n = net(&["A", "B"], &["0 -> A", "B -> 0"]);
        let rel = obtainable(&n);
        assert_eq!(rel, vec![vec![true, false], vec![false, true]]);
    }

    #[test]
    fn three_cycle_is_all_true() {
        let n = net(&["A", "B", "C"], &["A -> B", "B -> C", "C -> A"]);
        assert!(obtainable(&n).iter().flatten().all(|&b| b));
        let p = classify(&n);
        assert_eq!(p.closed_components, vec![vec![0, 1, 2]]);
        assert!(check_assumption2(&n, &[0.5, 0.5]).satisfied);
    }

    #[test]
    fn simple_birth_death() {
        let n = net(&["S"], &["0 -> S", "S -> 0"]);
        let p = classify(&n);
        assert_eq!(p.produced, vec![0]);
        assert_eq!(p.h(), 0);
        assert!(p.transient.is_empty());
        assert!(check_assumption2(&n, &[0.5, 0.5]).satisfied);
    }

    #[test]
    fn undegraded_production_violates() {
        let n = net(&["S"], &["0 -> S"]);
        let v = check_assumption2(&n, &[0.5, 0.5]);
        assert!(!v.satisfied);
        assert_eq!(v.violations, vec![(0, "properly produced, not properly degraded".to_string())]);
    }

    #[test]
    fn vacuous_alpha() {
        let n = net(&["A", "B"], &["A -> B", "B -> A"]);
        let r = estimate_alpha(&n, 0, 3, 10, 1).unwrap();
        assert_eq!(r.alpha, Some(1));
        assert!(r.note.is_some());
    }

    #[test]
    fn birth_death_contracts_in_one_cycle() {
        let n = net(&["S"], &["0 -> S", "S -> 0"]);
        let r = estimate_alpha(&n, 0, 3, 2000, 7).unwrap();
        assert_eq!(r.alpha, Some(1));
        // E e^{-(U0+U1)} with two unit exponentials = 1/4
        assert!((r.table[0].estimate - 0.25).abs() < 0.02);
    }

    fn random_net(seed: u64) -> ModulatedNetwork {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, 0);
        let d = rng.random_range(1..7);
        let names: Vec<String> = (0..d).map(|i| format!("S{i}")).collect();
        let mut reactions = Vec::new();
        for i in 0..d {
            if rng.random::<f64>() < 0.3 {
                reactions.push(format!("0 -> S{i}"));
            }
            if rng.random::<f64>() < 0.3 {
                reactions.push(format!("S{i} -> 0"));
            }
            for j in 0..d {
                if i != j && rng.random::<f64>() < 0.25 {
                    reactions.push(format!("S{i} -> S{j}"));
                }
            }
        }
        // keep every species in some reaction
        for i in 0..d {
            if !reactions.iter().any(|r| r.contains(&format!("S{i}"))) {
                reactions.push(format!("S{i} -> 0"));
            }
        }
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let rrefs: Vec<&str> = reactions.iter().map(|s| s.as_str()).collect();
        net(&refs, &rrefs)
    }

    proptest! {
        #[test]
        fn relation_is_reflexive_and_transitive(seed in 0u64..5000) {
            let n = random_net(seed);
            let rel = obtainable(&n);
            let d = n.dim();
            for i in 0..d {
                prop_assert!(rel[i][i]);
                for j in 0..d {
                    for k in 0..d {
                        if rel[i][j] && rel[j][k] {
                            prop_assert!(rel[i][k]);
                        }
                    }
                }
            }
        }

        #[test]
        fn partition_is_exact(seed in 0u64..5000) {
            let n = random_net(seed);
            let p = classify(&n);
            let mut seen = vec![0; n.dim()];
            for &i in p.closed_components.iter().flatten().chain(&p.produced).chain(&p.transient) {
                seen[i] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let produced = properly_produced(&n);
            let deg = properly_degraded(&n);
            for &i in p.closed_components.iter().flatten() {
                prop_assert!(!produced[i]);
                prop_assert!(!deg[i]);
            }
            if p.produced.is_empty() && p.transient.is_empty() {
                prop_assert!(check_assumption2(&n, &[0.5, 0.5]).satisfied);
            }
        }
    }
}
