//! Environment trajectories and return times to an anchor state.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::model::EnvironmentSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub state: usize,
    /// Jump time at which the segment begins.
    pub start: f64,
    pub holding: f64,
}

impl Segment {
    pub fn end(&self) -> f64 {
        self.start + self.holding
    }
}

/// A piecewise-constant environment path on `[0, total_time]`.
///
/// Consecutive segments have different states. The last segment may be cut
/// short by the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvPath {
    initial_state: usize,
    segments: Vec<Segment>,
    total_time: f64,
}

impl EnvPath {
    /// Builds a path from `(state, holding)` pairs, merging repeated states
    /// and dropping empty segments.
    pub fn from_holdings(initial_state: usize, holdings: &[(usize, f64)]) -> Result<Self> {
        let mut path = EnvPath {
            initial_state,
            segments: Vec::with_capacity(holdings.len()),
            total_time: 0.0,
        };
        for &(state, h) in holdings {
            if !(h.is_finite() && h >= 0.0) {
                return Err(Error::InvalidArgument(format!("holding time {h} is not a finite nonnegative number")));
            }
            path.push(state, h);
        }
        if let Some(first) = path.segments.first() {
            path.initial_state = first.state;
        }
        Ok(path)
    }

    /// Builds a path from `(state, start)` pairs on `[0, horizon]`, keeping
    /// the start times and the horizon exact.
    pub fn from_starts(starts: &[(usize, f64)], horizon: f64) -> Result<Self> {
        let mut path = EnvPath {
            initial_state: starts.first().map_or(0, |s| s.0),
            segments: Vec::with_capacity(starts.len()),
            total_time: horizon,
        };
        for (k, &(state, start)) in starts.iter().enumerate() {
            let end = starts.get(k + 1).map_or(horizon, |n| n.1);
            if !(start.is_finite() && end >= start) {
                return Err(Error::InvalidArgument(format!("start times must increase up to the horizon, got {start}")));
            }
            match path.segments.last_mut() {
                Some(last) if last.state == state => last.holding = end - last.start,
                _ if end > start => path.segments.push(Segment {
                    state,
                    start,
                    holding: end - start,
                }),
                _ => {}
            }
        }
        Ok(path)
    }

    fn push(&mut self, state: usize, holding: f64) {
        if holding <= 0.0 {
            return;
        }
        match self.segments.last_mut() {
            Some(last) if last.state == state => {
                last.holding += holding;
                self.total_time = last.end();
            }
            _ => {
                let start = self.total_time;
                self.segments.push(Segment { state, start, holding });
                self.total_time = start + holding;
            }
        }
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    /// `T_0 = 0 < T_1 < ...`, the starts of the segments.
    pub fn jump_times(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.start).collect()
    }

    /// Index of the segment containing `t` (right-continuous). `t` equal to the
    /// horizon maps to the last segment.
    pub fn segment_index_at(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() || t < 0.0 || t > self.total_time {
            return None;
        }
        let k = self.segments.partition_point(|s| s.start <= t);
        Some(k.saturating_sub(1))
    }

    pub fn state_at(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() && t == 0.0 {
            return Some(self.initial_state);
        }
        self.segment_index_at(t).map(|k| self.segments[k].state)
    }

    /// Time spent in each state.
    pub fn occupation(&self, n_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        for s in &self.segments {
            occ[s.state] += s.holding;
        }
        occ
    }
}

/// Return times `tau_0 < tau_1 < ...` of a path to an anchor state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnIndex {
    pub anchor: usize,
    pub taus: Vec<f64>,
}

impl ReturnIndex {
    /// Starts of the visits of `path` to `anchor`.
    pub fn of(path: &EnvPath, anchor: usize) -> Self {
        let taus = path
            .segments()
            .iter()
            .filter(|s| s.state == anchor)
            .map(|s| s.start)
            .collect();
        ReturnIndex { anchor, taus }
    }

    /// `n_t = sup{n : tau_n <= t}`, or `None` before the first visit.
    pub fn n_of(&self, t: f64) -> Option<usize> {
        self.taus.partition_point(|&tau| tau <= t).checked_sub(1)
    }
}

fn step<R: Rng + ?Sized>(env: &EnvironmentSpec, x: usize, rng: &mut R) -> Result<(f64, usize)> {
    let q = env.exit_rate(x);
    if q <= 0.0 {
        return Err(Error::AbsorbingState(env.state_name(x).to_string()));
    }
    let holding = Exp::new(q).expect("positive rate").sample(rng);
    let mut u = rng.random::<f64>() * q;
    let row = env.transitions(x);
    let mut next = row.last().map(|&(j, _)| j).unwrap_or(x);
    for &(j, r) in row {
        if u < r {
            next = j;
            break;
        }
        u -= r;
    }
    Ok((holding, next))
}

/// Exact simulation of the environment on `[0, horizon]` from `x0`.
pub fn simulate_env<R: Rng + ?Sized>(env: &EnvironmentSpec, x0: usize, horizon: f64, rng: &mut R) -> Result<EnvPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
    }
    let mut path = EnvPath {
        initial_state: x0,
        segments: Vec::new(),
        total_time: 0.0,
    };
    let mut x = x0;
    loop {
        let (h, next) = step(env, x, rng)?;
        if path.total_time + h >= horizon {
            path.segments.push(Segment {
                state: x,
                start: path.total_time,
                holding: horizon - path.total_time,
            });
            path.total_time = horizon;
            return Ok(path);
        }
        path.push(x, h);
        x = next;
    }
}

/// Simulates from `X(0) = x` until the start of the `k`-th return to `x`.
/// The returned path ends exactly at `tau_k`.
pub fn simulate_env_until_return<R: Rng + ?Sized>(
    env: &EnvironmentSpec,
    x: usize,
    k: usize,
    rng: &mut R,
) -> Result<(EnvPath, ReturnIndex)> {
    let mut path = EnvPath {
        initial_state: x,
        segments: Vec::new(),
        total_time: 0.0,
    };
    let mut taus = vec![0.0];
    let mut state = x;
    while taus.len() <= k {
        let (h, next) = step(env, state, rng)?;
        path.push(state, h);
        state = next;
        if state == x {
            taus.push(path.total_time);
        }
    }
    Ok((path, ReturnIndex { anchor: x, taus }))
}

/// Holding times of one return cycle from `x`: the sojourn in `x` followed
/// by the excursion, as `(state, holding)` pairs.
pub fn sample_cycle<R: Rng + ?Sized>(env: &EnvironmentSpec, x: usize, rng: &mut R, out: &mut Vec<(usize, f64)>) -> Result<()> {
    out.clear();
    let mut state = x;
    loop {
        let (h, next) = step(env, state, rng)?;
        out.push((state, h));
        state = next;
        if state == x {
            return Ok(());
        }
    }
}

/// Replaces a one-state environment by two clones with unit switching rates.
pub fn duplicate_singleton(env: &EnvironmentSpec) -> Result<EnvironmentSpec> {
    if env.len() != 1 {
        return Err(Error::NotSingleton(env.len()));
    }
    let name = env.state_name(0);
    EnvironmentSpec::from_transitions(
        vec![format!("{name}.1"), format!("{name}.2")],
        &[(0, 1, 1.0), (1, 0, 1.0)],
        None,
    )
}

/// `net` with a singleton environment replaced by its clone pair; other
/// networks are returned unchanged.
pub fn with_cloned_singleton(net: &crate::model::ModulatedNetwork) -> Result<crate::model::ModulatedNetwork> {
    if net.env().len() != 1 {
        return Ok(net.clone());
    }
    let env = duplicate_singleton(net.env())?;
    let species = net.species().iter().map(|s| s.name.clone()).collect();
    let reactions = net
        .reactions()
        .iter()
        .map(|r| crate::model::Reaction {
            kind: r.kind,
            rate: crate::model::RateMap::constant(r.rate.get(0), 2),
        })
        .collect();
    crate::model::ModulatedNetwork::new(species, reactions, env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn two_state(q01: f64, q10: f64) -> EnvironmentSpec {
        EnvironmentSpec::from_transitions(vec!["0".into(), "1".into()], &[(0, 1, q01), (1, 0, q10)], None).unwrap()
    }

    fn ring3() -> EnvironmentSpec {
        EnvironmentSpec::from_transitions(
            vec!["a".into(), "b".into(), "c".into()],
            &[(0, 1, 1.0), (1, 2, 2.0), (2, 0, 0.5), (1, 0, 0.7)],
            None,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_occupation() {
        let env = two_state(1.0, 1.0);
        let path = simulate_env(&env, 0, 1e5, &mut stream(1, 0)).unwrap();
        let occ = path.occupation(2);
        assert!((occ[0] / 1e5 - 0.5).abs() < 0.01, "{occ:?}");
        assert!((path.total_time() - 1e5).abs() < 1e-9);
    }

    #[test]
    fn starts_keep_the_horizon_exact() {
        let starts = [(0, 0.0), (0, 0.1), (1, 0.3), (0, 0.7)];
        let path = EnvPath::from_starts(&starts, 2.0).unwrap();
        assert_eq!(path.total_time(), 2.0);
        assert_eq!(path.segments().len(), 3);
        assert_eq!(path.segments()[1].start, 0.3);
        assert_eq!(path.state_at(0.2), Some(0));
        assert!(EnvPath::from_starts(&[(0, 0.5), (1, 0.2)], 1.0).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let env = ring3();
        let a = simulate_env(&env, 0, 50.0, &mut stream(9, 3)).unwrap();
        let b = simulate_env(&env, 0, 50.0, &mut stream(9, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_returns_is_empty() {
        let (path, ret) = simulate_env_until_return(&ring3(), 1, 0, &mut stream(1, 1)).unwrap();
        assert_eq!(path.total_time(), 0.0);
        assert!(path.segments().is_empty());
        assert_eq!(ret.taus, vec![0.0]);
    }

    #[test]
    fn two_state_cycle_mean() {
        let env = two_state(2.0, 0.5);
        let n = 100_000;
        let mut rng = stream(3, 0);
        let mut total = 0.0;
        for _ in 0..n {
            let (_, ret) = simulate_env_until_return(&env, 0, 1, &mut rng).unwrap();
            total += ret.taus[1];
        }
        let mean = total / n as f64;
        let exact = 1.0 / 2.0 + 1.0 / 0.5;
        assert!((mean / exact - 1.0).abs() < 0.02, "{mean} vs {exact}");
    }

    #[test]
    fn kac_formula_on_ring() {
        let env = ring3();
        let pi = crate::model::stationary_env(&env).unwrap();
        let mut rng = stream(4, 0);
        let n = 100_000;
        for x in 0..3 {
            let mut total = 0.0;
            for _ in 0..n {
                let (_, ret) = simulate_env_until_return(&env, x, 1, &mut rng).unwrap();
                total += ret.taus[1];
            }
            let exact = 1.0 / (pi[x] * env.exit_rate(x));
            assert!((total / n as f64 / exact - 1.0).abs() < 0.02, "state {x}");
        }
    }

    #[test]
    fn clones_alternate() {
        let single = EnvironmentSpec::from_transitions(vec!["c".into()], &[], None).unwrap();
        let env = duplicate_singleton(&single).unwrap();
        assert_eq!(env.generator(), vec![vec![-1.0, 1.0], vec![1.0, -1.0]]);
        let path = simulate_env(&env, 0, 20.0, &mut stream(2, 0)).unwrap();
        for (k, s) in path.segments().iter().enumerate() {
            assert_eq!(s.state, k % 2);
        }
        assert!(matches!(duplicate_singleton(&env), Err(Error::NotSingleton(2))));
    }

    #[test]
    fn absorbing_state_is_reported() {
        let single = EnvironmentSpec::from_transitions(vec!["c".into()], &[], None).unwrap();
        assert!(matches!(
            simulate_env(&single, 0, 1.0, &mut stream(0, 0)),
            Err(Error::AbsorbingState(_))
        ));
    }

    proptest! {
        #[test]
        fn return_index_invariants(seed in 0u64..1000, k in 1usize..12, anchor in 0usize..3) {
            let env = ring3();
            let (path, ret) = simulate_env_until_return(&env, anchor, k, &mut stream(seed, 0)).unwrap();
            prop_assert_eq!(ret.taus.len(), k + 1);
            prop_assert_eq!(*ret.taus.last().unwrap(), path.total_time());
            for w in path.segments().windows(2) {
                prop_assert_ne!(w[0].state, w[1].state);
                prop_assert!(w[1].start > w[0].start);
            }
            for (i, &tau) in ret.taus.iter().enumerate() {
                prop_assert_eq!(ret.n_of(tau), Some(i));
                if i < k {
                    prop_assert_eq!(path.state_at(tau), Some(anchor));
                    // an excursion separates consecutive visits
                    let seg = path.segment_index_at(tau).unwrap();
                    prop_assert!(path.segments()[seg + 1].state != anchor);
                }
            }
            let mut last = 0;
            for j in 0..200 {
                let t = path.total_time() * j as f64 / 199.0;
                let n = ret.n_of(t).unwrap();
                prop_assert!(n >= last);
                last = n;
            }
        }
    }
}
