//! Brute-force master equation on a truncated joint lattice.
//!
//! States are `(x, z)` with `z_i <= cap_i`, enumerated by environment state
//! first and then lexicographically in `z` (first species most significant).
//! Transitions that would leave the lattice go to one absorbing overflow
//! state, so truncation error shows up as mass instead of bias.

use crate::error::{Error, Result};
use crate::markov::SparseRates;
use crate::model::{ModulatedNetwork, ReactionKind};
use crate::rng::stream;
use crate::ssa::{ssa_run, GeneralNetwork};

/// Largest `Lambda * dt` per uniformization chunk.
const CHUNK_RATE_TIME: f64 = 30.0;
/// Neglected Poisson tail per chunk.
const TRANSIENT_TAIL: f64 = 1e-14;
/// Lattice sizes above this are refused.
pub const MAX_JOINT_STATES: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedJointSpace {
    n_env: usize,
    caps: Vec<u32>,
    strides: Vec<usize>,
    lattice: usize,
}

impl TruncatedJointSpace {
    pub fn new(n_env: usize, caps: &[u32]) -> Result<Self> {
        let mut strides = vec![0; caps.len()];
        let mut lattice = 1usize;
        for i in (0..caps.len()).rev() {
            strides[i] = lattice;
            lattice = lattice
                .checked_mul(caps[i] as usize + 1)
                .filter(|&n| n.saturating_mul(n_env) <= MAX_JOINT_STATES)
                .ok_or_else(|| Error::InvalidArgument(format!("joint lattice larger than {MAX_JOINT_STATES} states")))?;
        }
        if n_env * lattice > MAX_JOINT_STATES {
            return Err(Error::InvalidArgument(format!("joint lattice larger than {MAX_JOINT_STATES} states")));
        }
        Ok(TruncatedJointSpace {
            n_env,
            caps: caps.to_vec(),
            strides,
            lattice,
        })
    }

    pub fn caps(&self) -> &[u32] {
        &self.caps
    }

    /// Number of lattice states, excluding overflow.
    pub fn len(&self) -> usize {
        self.n_env * self.lattice
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the overflow state.
    pub fn overflow(&self) -> usize {
        self.len()
    }

    pub fn lattice_size(&self) -> usize {
        self.lattice
    }

    pub fn index(&self, x: usize, z: &[u64]) -> Option<usize> {
        if x >= self.n_env || z.len() != self.caps.len() {
            return None;
        }
        let mut k = x * self.lattice;
        for ((&zi, &cap), &s) in z.iter().zip(&self.caps).zip(&self.strides) {
            if zi > cap as u64 {
                return None;
            }
            k += zi as usize * s;
        }
        Some(k)
    }

    pub fn state(&self, index: usize) -> (usize, Vec<u64>) {
        let x = index / self.lattice;
        let mut rest = index % self.lattice;
        let z = self
            .strides
            .iter()
            .map(|&s| {
                let v = rest / s;
                rest %= s;
                v as u64
            })
            .collect();
        (x, z)
    }

    /// True when some count sits at its cap.
    pub fn on_boundary(&self, index: usize) -> bool {
        let (_, z) = self.state(index);
        z.iter().zip(&self.caps).any(|(&v, &c)| v == c as u64)
    }
}

/// Rate matrix of the truncated joint chain; the last state is overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGenerator {
    pub space: TruncatedJointSpace,
    pub rates: SparseRates,
}

pub fn build_joint_generator(net: &ModulatedNetwork, space: &TruncatedJointSpace) -> Result<JointGenerator> {
    if space.caps.len() != net.dim() || space.n_env != net.env().len() {
        return Err(Error::InvalidArgument("lattice does not match the model".into()));
    }
    let n = space.len();
    let mut rates = SparseRates::new(n + 1);
    let mut z2 = vec![0u64; net.dim()];
    for k in 0..n {
        let (x, z) = space.state(k);
        for &(y, r) in net.env().transitions(x) {
            rates.add(k, y * space.lattice + k % space.lattice, r);
        }
        for reaction in net.reactions() {
            let kappa = reaction.rate.get(x);
            if kappa == 0.0 {
                continue;
            }
            z2.copy_from_slice(&z);
            let rate = match reaction.kind {
                ReactionKind::Production { target, burst } => {
                    z2[target] += burst as u64;
                    kappa
                }
                ReactionKind::Conversion { source, target } => {
                    if z[source] == 0 {
                        continue;
                    }
                    z2[source] -= 1;
                    z2[target] += 1;
                    kappa * z[source] as f64
                }
                ReactionKind::Degradation { source } => {
                    if z[source] == 0 {
                        continue;
                    }
                    z2[source] -= 1;
                    kappa * z[source] as f64
                }
            };
            let to = space.index(x, &z2).unwrap_or(space.overflow());
            rates.add(k, to, rate);
        }
    }
    Ok(JointGenerator {
        space: space.clone(),
        rates,
    })
}

/// A pmf over the lattice and the mass outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    pub space: TruncatedJointSpace,
    pub pmf: Vec<f64>,
    pub overflow: f64,
}

impl JointPmf {
    /// Marginal of `z`, summed over environment states, on the lattice.
    pub fn z_marginal(&self) -> Vec<f64> {
        let l = self.space.lattice;
        let mut out = vec![0.0; l];
        for (k, p) in self.pmf.iter().enumerate() {
            out[k % l] += p;
        }
        out
    }

    /// `P(X = x)` over lattice states.
    pub fn env_marginal(&self) -> Vec<f64> {
        let l = self.space.lattice;
        (0..self.space.n_env)
            .map(|x| self.pmf[x * l..(x + 1) * l].iter().sum())
            .collect()
    }

    /// `P(Z = . | X = x)`, normalized over the lattice.
    pub fn conditional(&self, x: usize) -> Vec<f64> {
        let l = self.space.lattice;
        let slice = &self.pmf[x * l..(x + 1) * l];
        let total: f64 = slice.iter().sum();
        slice.iter().map(|p| if total > 0.0 { p / total } else { 0.0 }).collect()
    }

    /// Count vector of lattice position `k` (within one environment slice).
    pub fn point(&self, k: usize) -> Vec<u64> {
        self.space.state(k).1
    }
}

/// Distribution at time `t` from `(x0, z0)`, by uniformization.
pub fn transient_pmf(gen: &JointGenerator, x0: usize, z0: &[u64], t: f64) -> Result<JointPmf> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and nonnegative")));
    }
    let start = gen
        .space
        .index(x0, z0)
        .ok_or_else(|| Error::InvalidArgument("initial state is outside the lattice".into()))?;
    let n = gen.rates.len();
    let exit: Vec<f64> = (0..n).map(|i| gen.rates.exit_rate(i)).collect();
    let lambda = exit.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut p = vec![0.0; n];
    p[start] = 1.0;
    if lambda > 0.0 && t > 0.0 {
        let chunks = (lambda * t / CHUNK_RATE_TIME).ceil().max(1.0) as usize;
        let dt = t / chunks as f64;
        let m = lambda * dt;
        let mut next = vec![0.0; n];
        for _ in 0..chunks {
            let mut term = p.clone();
            let mut weight = (-m).exp();
            let mut acc: Vec<f64> = term.iter().map(|v| v * weight).collect();
            let mut cum = weight;
            let mut k = 0usize;
            while 1.0 - cum > TRANSIENT_TAIL && k < 10_000 {
                k += 1;
                // term <- term P with P = I + Q / lambda
                for (j, v) in next.iter_mut().enumerate() {
                    *v = term[j] * (1.0 - exit[j] / lambda);
                }
                for (i, row) in gen.rates.rows.iter().enumerate() {
                    let ti = term[i];
                    if ti == 0.0 {
                        continue;
                    }
                    for &(j, r) in row {
                        next[j] += ti * r / lambda;
                    }
                }
                std::mem::swap(&mut term, &mut next);
                weight *= m / k as f64;
                cum += weight;
                acc.iter_mut().zip(&term).for_each(|(a, v)| *a += weight * v);
            }
            // renormalize the neglected tail onto the computed terms
            acc.iter_mut().for_each(|a| *a /= cum);
            p = acc;
        }
    }
    let overflow = p[n - 1];
    p.truncate(n - 1);
    Ok(JointPmf {
        space: gen.space.clone(),
        pmf: p,
        overflow,
    })
}

/// Stationary pmf of the lattice chain with out-of-lattice moves suppressed,
/// restricted to the closed class reached from `(x0, z0)`.
///
/// `overflow` is the stationary mass on states with a count at its cap.
pub fn stationary_pmf(gen: &JointGenerator, x0: usize, z0: &[u64], tol: f64) -> Result<JointPmf> {
    let n = gen.space.len();
    let start = gen
        .space
        .index(x0, z0)
        .ok_or_else(|| Error::InvalidArgument("initial state is outside the lattice".into()))?;
    let keep: Vec<usize> = (0..n).collect();
    let (inner, _) = gen.rates.restrict(&keep);
    let adj = inner.adjacency();
    let reach = crate::graph::reachable_from(&adj, &[start]);
    let closed: Vec<Vec<usize>> = crate::graph::closed_components(&adj)
        .into_iter()
        .filter(|c| reach[c[0]])
        .collect();
    if closed.len() != 1 {
        return Err(Error::SingularSystem(format!(
            "{} closed classes reachable from the initial state",
            closed.len()
        )));
    }
    let class = &closed[0];
    let (sub, _) = inner.restrict(class);
    let p = crate::markov::stationary(&sub)?;
    let mut pmf = vec![0.0; n];
    for (&k, &v) in class.iter().zip(&p) {
        pmf[k] = v;
    }
    let overflow: f64 = class
        .iter()
        .zip(&p)
        .filter(|(&k, _)| gen.space.on_boundary(k))
        .map(|(_, v)| v)
        .sum();
    if overflow > tol {
        return Err(Error::OverflowTooLarge { mass: overflow, tol });
    }
    Ok(JointPmf {
        space: gen.space.clone(),
        pmf,
        overflow,
    })
}

/// Residual `max |(p Q)_j|` of a lattice pmf under the suppressed-overflow
/// generator.
pub fn stationary_residual(gen: &JointGenerator, pmf: &JointPmf) -> f64 {
    let keep: Vec<usize> = (0..gen.space.len()).collect();
    gen.rates.restrict(&keep).0.residual(&pmf.pmf)
}

/// Per-species caps `ceil(mean + 10 sd)` from a time-averaged pilot run,
/// at least `floor` and at least the initial counts.
pub fn default_caps(net: &ModulatedNetwork, x0: usize, z0: &[u64], horizon: f64, seed: u64, floor: u32) -> Result<Vec<u32>> {
    let general = GeneralNetwork::from_modulated(net);
    let d = net.dim();
    let mut m1 = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    ssa_run(
        &general,
        x0,
        z0,
        horizon,
        crate::ssa::DEFAULT_MAX_STEPS,
        &mut stream(seed, 0),
        &mut |_: f64, h: f64, _: usize, z: &[u64]| {
            for i in 0..d {
                let v = z[i] as f64;
                m1[i] += v * h;
                m2[i] += v * v * h;
            }
        },
    )?;
    Ok((0..d)
        .map(|i| {
            let mean = m1[i] / horizon;
            let sd = (m2[i] / horizon - mean * mean).max(0.0).sqrt();
            ((mean + 10.0 * sd).ceil() as u32)
                .max(floor)
                .max(z0[i] as u32)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, validate_network};

    fn model(text: &str) -> ModulatedNetwork {
        validate_network(&parse_model(text).unwrap()).unwrap()
    }

    fn case_study() -> ModulatedNetwork {
        model(
            r#"
[species]
names = ["S"]
[environment]
states = ["off", "on"]
generator = [[-1.0, 1.0], [2.0, -2.0]]
[[reactions]]
equation = "0 -> S"
rate = [1.0, 3.0]
[[reactions]]
equation = "S -> 0"
rate = [0.5, 1.5]
"#,
        )
    }

    fn birth_death(k1: f64, k2: f64) -> ModulatedNetwork {
        model(&format!(
            "[species]\nnames = [\"S\"]\n[environment]\nstates = [\"c\"]\n\
             [[reactions]]\nequation = \"0 -> S\"\nrate = {k1}\n\
             [[reactions]]\nequation = \"S -> 0\"\nrate = {k2}\n"
        ))
    }

    fn poisson(mean: f64, k: usize) -> f64 {
        let mut p = (-mean).exp();
        for i in 1..=k {
            p *= mean / i as f64;
        }
        p
    }

    #[test]
    fn enumeration_round_trips() {
        let s = TruncatedJointSpace::new(3, &[2, 4]).unwrap();
        assert_eq!(s.len(), 45);
        for k in 0..s.len() {
            let (x, z) = s.state(k);
            assert_eq!(s.index(x, &z), Some(k));
        }
        assert_eq!(s.state(1), (0, vec![0, 1]));
        assert_eq!(s.index(0, &[3, 0]), None);
    }

    #[test]
    fn generator_is_conservative() {
        let net = case_study();
        let space = TruncatedJointSpace::new(2, &[50]).unwrap();
        let gen = build_joint_generator(&net, &space).unwrap();
        assert_eq!(gen.rates.len(), 103);
        // production at the cap is redirected to overflow
        let top = space.index(1, &[50]).unwrap();
        assert!(gen.rates.rows[top].iter().any(|&(j, r)| j == space.overflow() && r == 3.0));
        assert!(gen.rates.rows[space.overflow()].is_empty());
        // environment marginal rates equal Q
        for k in 0..space.len() {
            let (x, _) = space.state(k);
            let env: f64 = gen.rates.rows[k]
                .iter()
                .filter(|&&(j, _)| j < space.len() && space.state(j).0 != x)
                .map(|&(_, r)| r)
                .sum();
            assert_eq!(env, net.env().exit_rate(x));
        }
    }

    #[test]
    fn transient_point_mass_at_zero() {
        let net = case_study();
        let space = TruncatedJointSpace::new(2, &[20]).unwrap();
        let gen = build_joint_generator(&net, &space).unwrap();
        let p = transient_pmf(&gen, 1, &[3], 0.0).unwrap();
        assert_eq!(p.pmf[space.index(1, &[3]).unwrap()], 1.0);
    }

    #[test]
    fn transient_birth_death_is_poisson() {
        let net = birth_death(4.0, 0.5);
        let space = TruncatedJointSpace::new(1, &[60]).unwrap();
        let gen = build_joint_generator(&net, &space).unwrap();
        let t = 3.0;
        let p = transient_pmf(&gen, 0, &[0], t).unwrap();
        let mean = 8.0 * (1.0 - (-0.5f64 * t).exp());
        for k in 0..40 {
            assert!((p.pmf[k] - poisson(mean, k)).abs() < 1e-12, "k={k}");
        }
        assert!((p.pmf.iter().sum::<f64>() + p.overflow - 1.0).abs() < 1e-12);
        assert!(p.overflow < 1e-12);
    }

    #[test]
    fn stationary_birth_death_is_poisson() {
        let net = birth_death(3.0, 1.0);
        let space = TruncatedJointSpace::new(1, &[40]).unwrap();
        let gen = build_joint_generator(&net, &space).unwrap();
        let p = stationary_pmf(&gen, 0, &[0], 1e-8).unwrap();
        for k in 0..30 {
            assert!((p.pmf[k] - poisson(3.0, k)).abs() < 1e-12);
        }
        assert!(stationary_residual(&gen, &p) < 1e-12);
    }

    #[test]
    fn stationary_env_marginal_matches() {
        let net = case_study();
        let space = TruncatedJointSpace::new(2, &[40]).unwrap();
        let gen = build_joint_generator(&net, &space).unwrap();
        let p = stationary_pmf(&gen, 0, &[0], 1e-8).unwrap();
        let m = p.env_marginal();
        assert!((m[0] - 2.0 / 3.0).abs() < 1e-10 && (m[1] - 1.0 / 3.0).abs() < 1e-10);
        assert!(stationary_residual(&gen, &p) < 1e-9);
    }

    #[test]
    fn small_cap_reports_overflow() {
        let net = birth_death(10.0, 1.0);
        let space = TruncatedJointSpace::new(1, &[8]).unwrap();
        let gen = build_joint_generator(&net, &space).unwrap();
        assert!(matches!(stationary_pmf(&gen, 0, &[0], 1e-6), Err(Error::OverflowTooLarge { .. })));
        let p = transient_pmf(&gen, 0, &[0], 5.0).unwrap();
        assert!(p.overflow > 0.1);
    }

    #[test]
    fn closed_class_from_initial_state() {
        // conversion cycle without production: the total is conserved
        let net = model(
            "[species]\nnames = [\"A\", \"B\"]\n[environment]\nstates = [\"c\"]\n\
             [[reactions]]\nequation = \"A -> B\"\nrate = 1.0\n\
             [[reactions]]\nequation = \"B -> A\"\nrate = 3.0\n",
        );
        let space = TruncatedJointSpace::new(1, &[6, 6]).unwrap();
        let gen = build_joint_generator(&net, &space).unwrap();
        let p = stationary_pmf(&gen, 0, &[4, 0], 1.0).unwrap();
        // Binomial(4, 3/4) for A
        for a in 0..=4u64 {
            let k = space.index(0, &[a, 4 - a]).unwrap();
            let binom = [1.0, 4.0, 6.0, 4.0, 1.0][a as usize] * 0.75f64.powi(a as i32) * 0.25f64.powi(4 - a as i32);
            assert!((p.pmf[k] - binom).abs() < 1e-12);
        }
    }

    #[test]
    fn pilot_caps_cover_the_mean() {
        let caps = default_caps(&birth_death(5.0, 1.0), 0, &[0], 500.0, 3, 5).unwrap();
        assert!(caps[0] >= 5 + 20 && caps[0] < 60, "{caps:?}");
    }
}
