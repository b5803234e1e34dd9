//! Species, reactions, the modulating environment and the linear structure
//! `(A(x), B(x))` a mono-molecular network induces in every environment state.

mod format;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Violation};
use crate::markov::SparseRates;

pub use format::{parse_model, serialize_model, RawEnvironment, RawModel, RawRate, RawReaction, RawSpecies};
pub(crate) use format::{build_environment as format_build_environment, parse_complex, rate_values as format_rate_values, split_equation};

/// Tolerance on generator row sums.
pub const GENERATOR_ROW_TOL: f64 = 1e-12;
/// Tolerance on `|| pi Q ||_inf` for a user supplied stationary law.
pub const STATIONARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    /// Zero-based index.
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionKind {
    /// `0 -> burst * S_target`
    Production { target: usize, burst: u32 },
    /// `S_source -> S_target`
    Conversion { source: usize, target: usize },
    /// `S_source -> 0`
    Degradation { source: usize },
}

/// Rate constant per environment state.
///
/// Production rates are per unit time; conversion and degradation rates are
/// per molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMap {
    values: Vec<f64>,
}

impl RateMap {
    pub fn new(values: Vec<f64>) -> Self {
        RateMap { values }
    }

    pub fn constant(value: f64, n_states: usize) -> Self {
        RateMap {
            values: vec![value; n_states],
        }
    }

    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub kind: ReactionKind,
    pub rate: RateMap,
}

/// A finite irreducible CTMC driving the reaction rates.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentSpec {
    states: Vec<String>,
    rates: SparseRates,
    pi: Option<Vec<f64>>,
    mass_coverage: Option<f64>,
}

impl EnvironmentSpec {
    /// Builds an environment from a dense generator, checking every invariant.
    pub fn from_generator(states: Vec<String>, generator: &[Vec<f64>], pi: Option<Vec<f64>>) -> Result<Self> {
        let mut violations = Vec::new();
        let rates = dense_to_rates(&states, generator, &mut violations);
        let env = EnvironmentSpec {
            states,
            rates,
            pi,
            mass_coverage: None,
        };
        env.check(&mut violations);
        if violations.is_empty() {
            Ok(env)
        } else {
            Err(Error::Violation(violations))
        }
    }

    /// Builds an environment from off-diagonal `(from, to, rate)` triples.
    pub fn from_transitions(states: Vec<String>, transitions: &[(usize, usize, f64)], pi: Option<Vec<f64>>) -> Result<Self> {
        let mut violations = Vec::new();
        let mut rates = SparseRates::new(states.len());
        for &(i, j, r) in transitions {
            if i >= states.len() || j >= states.len() {
                violations.push(Violation::new(format!("transition {i}->{j}"), "unknown environment state"));
                continue;
            }
            if i == j {
                violations.push(Violation::new(format!("transition {}->{}", states[i], states[j]), "self transition"));
                continue;
            }
            if !(r.is_finite() && r >= 0.0) {
                violations.push(Violation::new(
                    format!("transition {}->{}", states[i], states[j]),
                    format!("negative or non-finite rate {r}"),
                ));
                continue;
            }
            rates.add(i, j, r);
        }
        let env = EnvironmentSpec {
            states,
            rates,
            pi,
            mass_coverage: None,
        };
        env.check(&mut violations);
        if violations.is_empty() {
            Ok(env)
        } else {
            Err(Error::Violation(violations))
        }
    }

    pub fn with_mass_coverage(mut self, coverage: Option<f64>) -> Self {
        self.mass_coverage = coverage;
        self
    }

    fn check(&self, violations: &mut Vec<Violation>) {
        let n = self.states.len();
        if n == 0 {
            violations.push(Violation::new("environment", "no states"));
            return;
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.states {
            if !names.insert(s.as_str()) {
                violations.push(Violation::new(format!("state {s}"), "duplicate state name"));
            }
        }
        if violations.is_empty() && !crate::graph::is_strongly_connected(&self.rates.adjacency()) {
            violations.push(Violation::new("environment", "state space is reducible"));
        }
        if let Some(pi) = &self.pi {
            if pi.len() != n {
                violations.push(Violation::new("pi", format!("has {} entries for {n} states", pi.len())));
            } else if pi.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
                violations.push(Violation::new("pi", "entries must be finite and nonnegative"));
            } else {
                let total: f64 = pi.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    violations.push(Violation::new("pi", format!("sums to {total}")));
                }
                let res = self.rates.residual(pi);
                if res > STATIONARITY_TOL {
                    violations.push(Violation::new("pi", format!("not stationary, |pi Q| = {res:e}")));
                }
            }
        }
        if let Some(c) = self.mass_coverage {
            if !(c > 0.0 && c <= 1.0) {
                violations.push(Violation::new("mass_coverage", format!("{c} is not in (0, 1]")));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn state_name(&self, x: usize) -> &str {
        &self.states[x]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Resolves a state given by name or by zero-based index.
    pub fn resolve(&self, key: &str) -> Result<usize> {
        self.index_of(key)
            .or_else(|| key.parse::<usize>().ok().filter(|&i| i < self.len()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown environment state `{key}`")))
    }

    /// `q_x = -Q[x][x]`.
    pub fn exit_rate(&self, x: usize) -> f64 {
        self.rates.exit_rate(x)
    }

    pub fn transitions(&self, x: usize) -> &[(usize, f64)] {
        &self.rates.rows[x]
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates.rows[from]
            .iter()
            .find(|(j, _)| *j == to)
            .map_or(0.0, |&(_, r)| r)
    }

    pub fn sparse_rates(&self) -> &SparseRates {
        &self.rates
    }

    pub fn generator(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut q = vec![vec![0.0; n]; n];
        for (i, row) in self.rates.rows.iter().enumerate() {
            for &(j, r) in row {
                q[i][j] += r;
                q[i][i] -= r;
            }
        }
        q
    }

    pub fn declared_pi(&self) -> Option<&[f64]> {
        self.pi.as_deref()
    }

    pub fn mass_coverage(&self) -> Option<f64> {
        self.mass_coverage
    }
}

fn dense_to_rates(states: &[String], generator: &[Vec<f64>], violations: &mut Vec<Violation>) -> SparseRates {
    let n = states.len();
    let mut rates = SparseRates::new(n);
    if generator.len() != n {
        violations.push(Violation::new(
            "generator",
            format!("has {} rows for {n} states", generator.len()),
        ));
        return rates;
    }
    for (i, row) in generator.iter().enumerate() {
        let subject = format!("generator row {}", states[i]);
        if row.len() != n {
            violations.push(Violation::new(subject, format!("has {} entries, expected {n}", row.len())));
            continue;
        }
        if row.iter().any(|v| !v.is_finite()) {
            violations.push(Violation::new(subject, "non-finite entry"));
            continue;
        }
        let mut ok = true;
        for (j, &v) in row.iter().enumerate() {
            if j != i && v < 0.0 {
                violations.push(Violation::new(
                    subject.clone(),
                    format!("negative off-diagonal rate {v} to {}", states[j]),
                ));
                ok = false;
            }
        }
        let scale = row.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let sum: f64 = row.iter().sum();
        if sum.abs() > GENERATOR_ROW_TOL * scale {
            violations.push(Violation::new(
                subject.clone(),
                format!("generator row not conservative (sums to {sum})"),
            ));
            ok = false;
        }
        if ok {
            for (j, &v) in row.iter().enumerate() {
                if j != i && v > 0.0 {
                    rates.add(i, j, v);
                }
            }
        }
    }
    rates
}

/// A validated mono-molecular network in a stochastic environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatedNetwork {
    species: Vec<Species>,
    reactions: Vec<Reaction>,
    env: EnvironmentSpec,
}

impl ModulatedNetwork {
    /// Assembles a network from already-classified reactions.
    pub fn new(species_names: Vec<String>, reactions: Vec<Reaction>, env: EnvironmentSpec) -> Result<Self> {
        let species: Vec<Species> = species_names
            .into_iter()
            .enumerate()
            .map(|(id, name)| Species { id, name })
            .collect();
        let mut violations = Vec::new();
        check_reactions(&species, &reactions, env.states(), &mut violations);
        if !violations.is_empty() {
            return Err(Error::Violation(violations));
        }
        Ok(ModulatedNetwork {
            species,
            reactions: merge_duplicates(reactions),
            env,
        })
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn dim(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn env(&self) -> &EnvironmentSpec {
        &self.env
    }

    /// Burst size `m_j` of the production into each species (0 if none).
    pub fn bursts(&self) -> Vec<u32> {
        let mut m = vec![0; self.dim()];
        for r in &self.reactions {
            if let ReactionKind::Production { target, burst } = r.kind {
                m[target] = burst;
            }
        }
        m
    }

    /// Same network with a different environment over the same number of
    /// states (rate tables are reused positionally).
    pub fn with_env(&self, env: EnvironmentSpec) -> Result<Self> {
        let reactions = self
            .reactions
            .iter()
            .map(|r| Reaction {
                kind: r.kind,
                rate: r.rate.clone(),
            })
            .collect();
        ModulatedNetwork::new(self.species.iter().map(|s| s.name.clone()).collect(), reactions, env)
    }
}

pub(crate) fn check_reactions(species: &[Species], reactions: &[Reaction], states: &[String], violations: &mut Vec<Violation>) {
    let d = species.len();
    if d == 0 {
        violations.push(Violation::new("species", "at least one species is required"));
    }
    let mut used = vec![false; d];
    let mut burst_of = vec![None::<u32>; d];
    for (k, r) in reactions.iter().enumerate() {
        let subject = format!("reaction {}", k + 1);
        let endpoints: Vec<usize> = match r.kind {
            ReactionKind::Production { target, burst } => {
                if burst == 0 {
                    violations.push(Violation::new(subject.clone(), "burst size must be at least 1"));
                }
                if target < d {
                    match burst_of[target] {
                        Some(b) if b != burst => violations.push(Violation::new(
                            subject.clone(),
                            format!("species {} is produced with two burst sizes", species[target].name),
                        )),
                        _ => burst_of[target] = Some(burst),
                    }
                }
                vec![target]
            }
            ReactionKind::Conversion { source, target } => {
                if source == target {
                    violations.push(Violation::new(subject.clone(), "conversion into itself"));
                }
                vec![source, target]
            }
            ReactionKind::Degradation { source } => vec![source],
        };
        for e in endpoints {
            if e >= d {
                violations.push(Violation::new(subject.clone(), format!("unknown species index {e}")));
            } else {
                used[e] = true;
            }
        }
        if r.rate.values().len() != states.len() {
            violations.push(Violation::new(
                subject.clone(),
                format!("rate table has {} entries for {} states", r.rate.values().len(), states.len()),
            ));
        } else {
            for (x, &v) in r.rate.values().iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    violations.push(Violation::new(
                        subject.clone(),
                        format!("negative or non-finite rate {v} in state {}", states[x]),
                    ));
                }
            }
            if r.rate.is_identically_zero() {
                violations.push(Violation::new(subject.clone(), "rate identically zero"));
            }
        }
    }
    for (s, u) in species.iter().zip(&used) {
        if !u {
            violations.push(Violation::new(format!("species {}", s.name), "takes part in no reaction"));
        }
    }
}

fn merge_duplicates(reactions: Vec<Reaction>) -> Vec<Reaction> {
    let mut out: Vec<Reaction> = Vec::with_capacity(reactions.len());
    for r in reactions {
        if let Some(existing) = out.iter_mut().find(|e| e.kind == r.kind) {
            let merged = existing
                .rate
                .values()
                .iter()
                .zip(r.rate.values())
                .map(|(a, b)| a + b)
                .collect();
            existing.rate = RateMap::new(merged);
        } else {
            out.push(r);
        }
    }
    out
}

/// Validates a parsed model description.
///
/// Every violation found is reported, not only the first.
pub fn validate_network(raw: &RawModel) -> Result<ModulatedNetwork> {
    format::validate(raw)
}

/// `A(x)` and `B(x)` for every environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulation {
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    bursts: Vec<u32>,
}

impl Modulation {
    pub fn a(&self, x: usize) -> &DMatrix<f64> {
        &self.a[x]
    }

    pub fn b(&self, x: usize) -> &DVector<f64> {
        &self.b[x]
    }

    pub fn bursts(&self) -> &[u32] {
        &self.bursts
    }

    pub fn dim(&self) -> usize {
        self.bursts.len()
    }

    pub fn n_states(&self) -> usize {
        self.a.len()
    }

    /// Off-diagonals nonnegative and, for every column, the off-diagonal sum
    /// does not exceed `-a_ii`. The comparison is exact.
    pub fn is_subgenerator_transpose(&self) -> bool {
        self.a.iter().all(|a| {
            let d = a.nrows();
            (0..d).all(|i| {
                let mut off = 0.0;
                for j in 0..d {
                    if j != i {
                        if a[(j, i)] < 0.0 {
                            return false;
                        }
                        off += a[(j, i)];
                    }
                }
                off <= -a[(i, i)]
            })
        }) && self.b.iter().all(|b| b.iter().all(|&v| v >= 0.0))
    }
}

/// Assembles `A(x)` (transpose of the per-molecule sub-generator) and the
/// production vector `B(x)`.
pub fn build_modulation(net: &ModulatedNetwork) -> Modulation {
    let d = net.dim();
    let n = net.env().len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for x in 0..n {
        let mut ax = DMatrix::<f64>::zeros(d, d);
        let mut bx = DVector::<f64>::zeros(d);
        let mut degradation = vec![0.0; d];
        for r in net.reactions() {
            let k = r.rate.get(x);
            match r.kind {
                ReactionKind::Production { target, .. } => bx[target] += k,
                ReactionKind::Conversion { source, target } => ax[(target, source)] += k,
                ReactionKind::Degradation { source } => degradation[source] += k,
            }
        }
        for i in 0..d {
            let mut off = 0.0;
            for j in 0..d {
                if j != i {
                    off += ax[(j, i)];
                }
            }
            ax[(i, i)] = -(off + degradation[i]);
        }
        a.push(ax);
        b.push(bx);
    }
    Modulation {
        a,
        b,
        bursts: net.bursts(),
    }
}

/// Stationary law of the environment, solved from `pi Q = 0`, `sum pi = 1`.
pub fn stationary_env(env: &EnvironmentSpec) -> Result<Vec<f64>> {
    crate::markov::stationary(env.sparse_rates())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanProduction {
    /// `sum_x ||B(x)||_1 pi(x)`
    pub value: f64,
    pub finite: bool,
}

pub fn mean_production_check(net: &ModulatedNetwork, pi: &[f64]) -> MeanProduction {
    let modulation = build_modulation(net);
    let value: f64 = (0..net.env().len())
        .map(|x| modulation.b(x).iter().sum::<f64>() * pi[x])
        .sum();
    MeanProduction {
        value,
        finite: value.is_finite(),
    }
}
