//! Exact joint simulation of environment and counts.
//!
//! Works for any mass-action network with state-dependent rate constants,
//! not only mono-molecular ones, so the transient and explosive examples can
//! be simulated too.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::envpath::EnvPath;
use crate::error::{Error, Result, Violation};
use crate::model::{parse_complex, EnvironmentSpec, ModulatedNetwork, RawModel, ReactionKind};

#[derive(Debug, Clone, PartialEq)]
pub struct MassActionReaction {
    /// `(species, stoichiometric coefficient)` of the reactant complex.
    pub reactants: Vec<(usize, u32)>,
    /// Net change of the counts.
    pub change: Vec<(usize, i64)>,
    /// Rate constant per environment state.
    pub rate: Vec<f64>,
}

/// A mass-action network in a finite environment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralNetwork {
    pub species: Vec<String>,
    pub reactions: Vec<MassActionReaction>,
    pub env: EnvironmentSpec,
}

impl GeneralNetwork {
    pub fn dim(&self) -> usize {
        self.species.len()
    }

    /// Reads any mass-action model file, without the mono-molecular check.
    pub fn from_raw(raw: &RawModel) -> Result<Self> {
        let mut violations = Vec::new();
        let env = crate::model::format_build_environment(&raw.environment, &mut violations);
        let index = |name: &str| raw.species.names.iter().position(|s| s == name);
        let n_states = raw.environment.states.len();
        let mut reactions = Vec::new();
        for (k, r) in raw.reactions.iter().enumerate() {
            let subject = format!("reaction {} `{}`", k + 1, r.equation.trim());
            let sides = crate::model::split_equation(&r.equation).and_then(|(l, rr)| Ok((parse_complex(l)?, parse_complex(rr)?)));
            let (lhs, rhs) = match sides {
                Ok(s) => s,
                Err(e) => {
                    violations.push(Violation::new(subject, e));
                    continue;
                }
            };
            let mut reactants = Vec::new();
            let mut change: Vec<(usize, i64)> = Vec::new();
            let mut ok = true;
            for (sign, side) in [(-1i64, &lhs), (1, &rhs)] {
                for (c, name) in side {
                    let Some(i) = index(name) else {
                        violations.push(Violation::new(subject.clone(), format!("unknown species `{name}`")));
                        ok = false;
                        continue;
                    };
                    if sign < 0 {
                        reactants.push((i, *c));
                    }
                    match change.iter_mut().find(|(j, _)| *j == i) {
                        Some(e) => e.1 += sign * *c as i64,
                        None => change.push((i, sign * *c as i64)),
                    }
                }
            }
            change.retain(|&(_, v)| v != 0);
            let rate = crate::model::format_rate_values(&r.rate, &raw.environment.states, &subject, &mut violations);
            if let (true, Some(rate)) = (ok, rate) {
                if rate.len() == n_states {
                    reactions.push(MassActionReaction { reactants, change, rate });
                }
            }
        }
        match env {
            Some(env) if violations.is_empty() => Ok(GeneralNetwork {
                species: raw.species.names.clone(),
                reactions,
                env,
            }),
            _ => Err(Error::Violation(violations)),
        }
    }

    pub fn from_modulated(net: &ModulatedNetwork) -> Self {
        let reactions = net
            .reactions()
            .iter()
            .map(|r| {
                let (reactants, change) = match r.kind {
                    ReactionKind::Production { target, burst } => (vec![], vec![(target, burst as i64)]),
                    ReactionKind::Conversion { source, target } => (vec![(source, 1)], vec![(source, -1), (target, 1)]),
                    ReactionKind::Degradation { source } => (vec![(source, 1)], vec![(source, -1)]),
                };
                MassActionReaction {
                    reactants,
                    change,
                    rate: r.rate.values().to_vec(),
                }
            })
            .collect();
        GeneralNetwork {
            species: net.species().iter().map(|s| s.name.clone()).collect(),
            reactions,
            env: net.env().clone(),
        }
    }

    fn propensity(&self, r: &MassActionReaction, x: usize, z: &[u64]) -> f64 {
        let mut a = r.rate[x];
        if a == 0.0 {
            return 0.0;
        }
        for &(i, c) in &r.reactants {
            for k in 0..c as u64 {
                if z[i] < k + 1 {
                    return 0.0;
                }
                a *= (z[i] - k) as f64;
            }
        }
        a
    }
}

/// Receives the piecewise-constant trajectory: `(start, holding, x, z)` for
/// each sojourn, the last one cut at the horizon.
pub trait Observer {
    fn sojourn(&mut self, start: f64, holding: f64, x: usize, z: &[u64]);
}

impl<F: FnMut(f64, f64, usize, &[u64])> Observer for F {
    fn sojourn(&mut self, start: f64, holding: f64, x: usize, z: &[u64]) {
        self(start, holding, x, z)
    }
}

/// Gillespie simulation of `(X, Z)` on `[0, horizon]`. Returns the final
/// state.
pub fn ssa_run<R: Rng + ?Sized, O: Observer>(
    net: &GeneralNetwork,
    x0: usize,
    z0: &[u64],
    horizon: f64,
    max_steps: u64,
    rng: &mut R,
    observer: &mut O,
) -> Result<(usize, Vec<u64>)> {
    if z0.len() != net.dim() {
        return Err(Error::InvalidArgument(format!("z0 has {} entries, expected {}", z0.len(), net.dim())));
    }
    let mut x = x0;
    let mut z = z0.to_vec();
    let mut t = 0.0;
    let mut props = vec![0.0; net.reactions.len()];
    let mut steps = 0u64;
    loop {
        let q = net.env.exit_rate(x);
        let mut total = q;
        for (p, r) in props.iter_mut().zip(&net.reactions) {
            *p = net.propensity(r, x, &z);
            total += *p;
        }
        let dt = if total > 0.0 {
            Exp::new(total).expect("positive").sample(rng)
        } else {
            f64::INFINITY
        };
        if t + dt >= horizon {
            observer.sojourn(t, horizon - t, x, &z);
            return Ok((x, z));
        }
        observer.sojourn(t, dt, x, &z);
        t += dt;
        steps += 1;
        if steps > max_steps {
            return Err(Error::StepBudgetExceeded { steps: max_steps, time: t });
        }
        let mut u = rng.random::<f64>() * total;
        if u < q {
            let row = net.env.transitions(x);
            x = row.last().expect("q > 0").0;
            for &(y, rate) in row {
                if u < rate {
                    x = y;
                    break;
                }
                u -= rate;
            }
            continue;
        }
        u -= q;
        let mut chosen = props.len() - 1;
        for (k, &p) in props.iter().enumerate() {
            if u < p {
                chosen = k;
                break;
            }
            u -= p;
        }
        while props[chosen] == 0.0 && chosen > 0 {
            chosen -= 1;
        }
        for &(i, v) in &net.reactions[chosen].change {
            z[i] = (z[i] as i64 + v) as u64;
        }
    }
}

/// A recorded joint trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    /// `(start, x, z)` for each sojourn.
    pub points: Vec<(f64, usize, Vec<u64>)>,
    pub horizon: f64,
}

impl JointTrajectory {
    pub fn state_at(&self, t: f64) -> Option<(usize, &[u64])> {
        if t < 0.0 || t > self.horizon {
            return None;
        }
        let k = self.points.partition_point(|p| p.0 <= t).checked_sub(1)?;
        let p = &self.points[k];
        Some((p.1, &p.2))
    }

    /// The environment component as a path.
    pub fn env_path(&self) -> EnvPath {
        let starts: Vec<(usize, f64)> = self.points.iter().map(|p| (p.1, p.0)).collect();
        EnvPath::from_starts(&starts, self.horizon).expect("increasing jump times")
    }
}

/// Default step budget of [`ssa_joint`].
pub const DEFAULT_MAX_STEPS: u64 = 50_000_000;

pub fn ssa_joint<R: Rng + ?Sized>(net: &GeneralNetwork, x0: usize, z0: &[u64], horizon: f64, rng: &mut R) -> Result<JointTrajectory> {
    let mut points = Vec::new();
    ssa_run(net, x0, z0, horizon, DEFAULT_MAX_STEPS, rng, &mut |s: f64, _h: f64, x: usize, z: &[u64]| {
        points.push((s, x, z.to_vec()));
    })?;
    Ok(JointTrajectory { points, horizon })
}
