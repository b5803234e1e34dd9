//! Model files shipped with the crate, each with a sidecar of expected
//! results.
//!
//! The CLI resolves `fixtures/<name>` to these when no such file exists on
//! disk.

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixture {
    pub name: &'static str,
    pub model: &'static str,
    pub expected: &'static str,
}

macro_rules! fixture {
    ($name:literal) => {
        Fixture {
            name: $name,
            model: include_str!(concat!("../fixtures/", $name, ".toml")),
            expected: include_str!(concat!("../fixtures/", $name, ".expected.toml")),
        }
    };
}

pub const FIXTURES: &[Fixture] = &[
    fixture!("case-study"),
    fixture!("case-study-m2"),
    fixture!("case-study-m3"),
    fixture!("case-study-slow"),
    fixture!("partition"),
    fixture!("alpha-chain"),
    fixture!("poisson-product"),
    fixture!("geneN1"),
    fixture!("geneN2"),
    fixture!("gene-tf"),
    fixture!("gene-tf-level2"),
    fixture!("birth-death"),
    fixture!("closed-cycle"),
    fixture!("no-degradation"),
    fixture!("transient"),
    fixture!("explosive"),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|f| f.name)
}

pub fn get(name: &str) -> Option<&'static Fixture> {
    FIXTURES.iter().find(|f| f.name == name)
}

/// Expected results recorded next to a fixture.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    /// `"accepted"` or `"rejected"` by validation.
    pub verdict: String,
    /// Substring of the rejection message.
    pub rejection: Option<String>,
    pub ergodic: Option<bool>,
    #[serde(default)]
    pub produced: Vec<String>,
    #[serde(default)]
    pub transient: Vec<String>,
    #[serde(default)]
    pub closed_components: Vec<Vec<String>>,
    #[serde(default)]
    pub violations: Vec<String>,
    pub pi: Option<Vec<f64>>,
    /// `(c1, c2)` of a product-form environment law over states `"x1,x2"`.
    pub product_form: Option<Vec<f64>>,
    pub mean_production: Option<f64>,
    pub alpha_anchor: Option<String>,
    pub alpha: Option<usize>,
}

impl Fixture {
    pub fn expected(&self) -> Result<Expected> {
        toml::from_str(self.expected).map_err(|e| Error::Parse(format!("{}.expected.toml: {e}", self.name)))
    }
}
