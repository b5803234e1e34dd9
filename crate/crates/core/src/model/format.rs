//! TOML model files.
//!
//! ```toml
//! description = "optional free text"
//!
//! [species]
//! names = ["S1", "S2"]
//!
//! [environment]
//! states = ["off", "on"]
//! generator = [[-1.0, 1.0], [2.0, -2.0]]   # or: transitions = [{ from = "off", to = "on", rate = 1.0 }, ...]
//! pi = [0.666666666666667, 0.333333333333333]   # optional, checked
//! mass_coverage = 0.9999                    # optional, for truncated environments
//!
//! [[reactions]]
//! equation = "0 -> 2 S1"                   # production with burst 2
//! rate = { off = 0.0, on = 4.0 }           # per state; a bare number means constant
//!
//! [[reactions]]
//! equation = "S1 -> S2"
//! rate = [0.5, 0.5]                        # positional, one value per state
//! ```
//!
//! `0` (or an empty side) denotes the empty complex. Unknown keys are errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_reactions, EnvironmentSpec, ModulatedNetwork, RateMap, Reaction, ReactionKind, Species};
use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub species: RawSpecies,
    pub environment: RawEnvironment,
    #[serde(default)]
    pub reactions: Vec<RawReaction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpecies {
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEnvironment {
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<RawTransition>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTransition {
    pub from: String,
    pub to: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawReaction {
    pub equation: String,
    pub rate: RawRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawRate {
    Constant(f64),
    List(Vec<f64>),
    Table(BTreeMap<String, f64>),
}

pub fn parse_model(text: &str) -> Result<RawModel> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

/// Canonical text of a validated network. Parsing and validating the output
/// gives back an identical network.
pub fn serialize_model(net: &ModulatedNetwork) -> String {
    let env = net.env();
    let mut transitions = Vec::new();
    for x in 0..env.len() {
        let mut row = env.transitions(x).to_vec();
        row.sort_by_key(|&(j, _)| j);
        for (y, rate) in row {
            transitions.push(RawTransition {
                from: env.state_name(x).to_string(),
                to: env.state_name(y).to_string(),
                rate,
            });
        }
    }
    let names: Vec<&str> = net.species().iter().map(|s| s.name.as_str()).collect();
    let reactions = net
        .reactions()
        .iter()
        .map(|r| RawReaction {
            equation: equation_of(&r.kind, &names),
            rate: RawRate::List(r.rate.values().to_vec()),
        })
        .collect();
    let raw = RawModel {
        description: None,
        species: RawSpecies {
            names: names.iter().map(|s| s.to_string()).collect(),
        },
        environment: RawEnvironment {
            states: env.states().to_vec(),
            generator: None,
            transitions: Some(transitions),
            pi: env.declared_pi().map(|p| p.to_vec()),
            mass_coverage: env.mass_coverage(),
        },
        reactions,
    };
    toml::to_string(&raw).expect("model serializes")
}

fn equation_of(kind: &ReactionKind, names: &[&str]) -> String {
    match *kind {
        ReactionKind::Production { target, burst: 1 } => format!("0 -> {}", names[target]),
        ReactionKind::Production { target, burst } => format!("0 -> {burst} {}", names[target]),
        ReactionKind::Conversion { source, target } => format!("{} -> {}", names[source], names[target]),
        ReactionKind::Degradation { source } => format!("{} -> 0", names[source]),
    }
}

/// Splits one side of a reaction equation into `(coefficient, species)`
/// terms. `0`, `∅` and the empty string are the empty complex.
pub(crate) fn parse_complex(side: &str) -> std::result::Result<Vec<(u32, String)>, String> {
    let side = side.trim();
    if side.is_empty() || side == "0" || side == "∅" {
        return Ok(Vec::new());
    }
    let mut terms: Vec<(u32, String)> = Vec::new();
    for term in side.split('+') {
        let term = term.trim();
        let (coef, name) = match term.split_once(char::is_whitespace) {
            Some((c, n)) if c.chars().all(|ch| ch.is_ascii_digit()) => {
                (c.parse::<u32>().map_err(|e| format!("bad coefficient `{c}`: {e}"))?, n.trim())
            }
            _ => {
                // also accept "2S" written without a space
                let digits: String = term.chars().take_while(|c| c.is_ascii_digit()).collect();
                if digits.is_empty() || digits.len() == term.len() {
                    (1, term)
                } else {
                    (digits.parse::<u32>().map_err(|e| e.to_string())?, term[digits.len()..].trim())
                }
            }
        };
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!("cannot read term `{term}`"));
        }
        if coef == 0 {
            continue;
        }
        if let Some(t) = terms.iter_mut().find(|(_, n)| n == name) {
            t.0 += coef;
        } else {
            terms.push((coef, name.to_string()));
        }
    }
    Ok(terms)
}

/// Splits `lhs -> rhs`.
pub(crate) fn split_equation(eq: &str) -> std::result::Result<(&str, &str), String> {
    let (lhs, rhs) = eq
        .split_once("->")
        .ok_or_else(|| format!("`{eq}` has no `->`"))?;
    if rhs.contains("->") {
        return Err(format!("`{eq}` has more than one `->`"));
    }
    Ok((lhs, rhs))
}

fn classify_reaction(
    eq: &str,
    species: &BTreeMap<&str, usize>,
) -> std::result::Result<ReactionKind, String> {
    let (lhs, rhs) = split_equation(eq)?;
    let lhs = parse_complex(lhs)?;
    let rhs = parse_complex(rhs)?;
    for (_, name) in lhs.iter().chain(&rhs) {
        if !species.contains_key(name.as_str()) {
            return Err(format!("unknown species `{name}`"));
        }
    }
    let reactant_order: u32 = lhs.iter().map(|(c, _)| c).sum();
    if reactant_order > 1 {
        return Err("bimolecular reactant: only mono-molecular reactions are supported".into());
    }
    match (lhs.as_slice(), rhs.as_slice()) {
        ([], []) => Err("reaction has no species".into()),
        ([], [(m, name)]) => Ok(ReactionKind::Production {
            target: species[name.as_str()],
            burst: *m,
        }),
        ([], _) => Err("production of more than one species".into()),
        ([(_, src)], []) => Ok(ReactionKind::Degradation {
            source: species[src.as_str()],
        }),
        ([(_, src)], [(1, dst)]) if src != dst => Ok(ReactionKind::Conversion {
            source: species[src.as_str()],
            target: species[dst.as_str()],
        }),
        ([(_, src)], [(_, dst)]) if src == dst => Err(format!("`{src}` appears on both sides")),
        _ => Err("product is not a single molecule of another species".into()),
    }
}

pub(crate) fn rate_values(
    rate: &RawRate,
    states: &[String],
    subject: &str,
    violations: &mut Vec<Violation>,
) -> Option<Vec<f64>> {
    rate_map(rate, states, subject, violations).map(|r| r.values().to_vec())
}

fn rate_map(
    rate: &RawRate,
    states: &[String],
    subject: &str,
    violations: &mut Vec<Violation>,
) -> Option<RateMap> {
    match rate {
        RawRate::Constant(v) => Some(RateMap::constant(*v, states.len())),
        RawRate::List(values) => {
            if values.len() != states.len() {
                violations.push(Violation::new(
                    subject,
                    format!("rate list has {} entries for {} states", values.len(), states.len()),
                ));
                return None;
            }
            Some(RateMap::new(values.clone()))
        }
        RawRate::Table(table) => {
            let mut ok = true;
            for key in table.keys() {
                if !states.contains(key) {
                    violations.push(Violation::new(subject, format!("rate given for unknown state `{key}`")));
                    ok = false;
                }
            }
            let mut values = Vec::with_capacity(states.len());
            for s in states {
                match table.get(s) {
                    Some(&v) => values.push(v),
                    None => {
                        violations.push(Violation::new(subject, format!("no rate for state `{s}`")));
                        ok = false;
                    }
                }
            }
            ok.then(|| RateMap::new(values))
        }
    }
}

pub(crate) fn build_environment(raw: &RawEnvironment, violations: &mut Vec<Violation>) -> Option<EnvironmentSpec> {
    let states = raw.states.clone();
    let built = match (&raw.generator, &raw.transitions) {
        (Some(g), None) => EnvironmentSpec::from_generator(states, g, raw.pi.clone()),
        (None, Some(ts)) => {
            let mut triples = Vec::with_capacity(ts.len());
            for t in ts {
                let from = raw.states.iter().position(|s| *s == t.from);
                let to = raw.states.iter().position(|s| *s == t.to);
                match (from, to) {
                    (Some(i), Some(j)) => triples.push((i, j, t.rate)),
                    _ => violations.push(Violation::new(
                        format!("transition {}->{}", t.from, t.to),
                        "unknown environment state",
                    )),
                }
            }
            EnvironmentSpec::from_transitions(states, &triples, raw.pi.clone())
        }
        (Some(_), Some(_)) => {
            violations.push(Violation::new("environment", "give either `generator` or `transitions`, not both"));
            return None;
        }
        (None, None) => {
            if raw.states.len() == 1 {
                EnvironmentSpec::from_transitions(states, &[], raw.pi.clone())
            } else {
                violations.push(Violation::new("environment", "missing `generator` or `transitions`"));
                return None;
            }
        }
    };
    match built {
        Ok(env) => Some(env.with_mass_coverage(raw.mass_coverage)),
        Err(Error::Violation(v)) => {
            violations.extend(v);
            None
        }
        Err(e) => {
            violations.push(Violation::new("environment", e.to_string()));
            None
        }
    }
}

pub(crate) fn validate(raw: &RawModel) -> Result<ModulatedNetwork> {
    let mut violations = Vec::new();
    let mut index = BTreeMap::new();
    for (i, name) in raw.species.names.iter().enumerate() {
        if name.is_empty() || name == "0" || name.contains(|c: char| c.is_whitespace() || c == '+') {
            violations.push(Violation::new(format!("species `{name}`"), "invalid species name"));
        }
        if index.insert(name.as_str(), i).is_some() {
            violations.push(Violation::new(format!("species {name}"), "duplicate species name"));
        }
    }
    let env = build_environment(&raw.environment, &mut violations);
    let mut reactions = Vec::new();
    for (k, r) in raw.reactions.iter().enumerate() {
        let subject = format!("reaction {} `{}`", k + 1, r.equation.trim());
        let kind = classify_reaction(&r.equation, &index);
        if let Err(reason) = &kind {
            violations.push(Violation::new(subject.clone(), reason.clone()));
        }
        let rate = rate_map(&r.rate, &raw.environment.states, &subject, &mut violations);
        if let (Ok(kind), Some(rate)) = (kind, rate) {
            reactions.push(Reaction { kind, rate });
        }
    }
    match env {
        Some(env) if violations.is_empty() => ModulatedNetwork::new(raw.species.names.clone(), reactions, env),
        _ => {
            // still report reaction-level findings
            let species: Vec<Species> = raw
                .species
                .names
                .iter()
                .enumerate()
                .map(|(id, name)| Species { id, name: name.clone() })
                .collect();
            let mut more = Vec::new();
            check_reactions(&species, &reactions, &raw.environment.states, &mut more);
            for v in more {
                if !violations.contains(&v) {
                    violations.push(v);
                }
            }
            Err(Error::Violation(violations))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_network;

    fn reasons(text: &str) -> Vec<String> {
        let raw = parse_model(text).unwrap();
        match validate_network(&raw) {
            Err(Error::Violation(v)) => v.into_iter().map(|v| v.reason).collect(),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn complex_terms() {
        assert_eq!(parse_complex(" 0 ").unwrap(), vec![]);
        assert_eq!(parse_complex("2 S1").unwrap(), vec![(2, "S1".into())]);
        assert_eq!(parse_complex("3S").unwrap(), vec![(3, "S".into())]);
        assert_eq!(
            parse_complex("S1 + S2 + S1").unwrap(),
            vec![(2, "S1".into()), (1, "S2".into())]
        );
    }

    #[test]
    fn bimolecular_is_rejected() {
        let r = reasons(
            r#"
[species]
names = ["S1", "S2", "S3"]
[environment]
states = ["a"]
[[reactions]]
equation = "S1 + S2 -> S3"
rate = 1.0
"#,
        );
        assert!(r.iter().any(|s| s.contains("bimolecular reactant")), "{r:?}");
    }

    #[test]
    fn every_violation_is_listed() {
        let r = reasons(
            r#"
[species]
names = ["S", "T"]
[environment]
states = ["a", "b"]
generator = [[-1.0, 1.1], [1.0, -1.0]]
[[reactions]]
equation = "0 -> S"
rate = -1.0
[[reactions]]
equation = "S -> 0"
rate = 0.0
"#,
        );
        assert!(r.iter().any(|s| s.contains("generator row not conservative")), "{r:?}");
        assert!(r.iter().any(|s| s.contains("negative")), "{r:?}");
        assert!(r.iter().any(|s| s.contains("identically zero")), "{r:?}");
        assert!(r.iter().any(|s| s.contains("no reaction")), "{r:?}");
    }

    #[test]
    fn reducible_environment_is_rejected() {
        let r = reasons(
            r#"
[species]
names = ["S"]
[environment]
states = ["a", "b"]
generator = [[-1.0, 1.0], [0.0, 0.0]]
[[reactions]]
equation = "S -> 0"
rate = 1.0
"#,
        );
        assert!(r.iter().any(|s| s.contains("reducible")), "{r:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_model(
            r#"
[species]
names = ["S"]
colour = "red"
[environment]
states = ["a"]
"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn autocatalysis_is_not_mono_molecular() {
        let r = reasons(
            r#"
[species]
names = ["S"]
[environment]
states = ["a"]
[[reactions]]
equation = "S -> 2 S"
rate = 1.0
"#,
        );
        assert!(r.iter().any(|s| s.contains("both sides")), "{r:?}");
    }
}
