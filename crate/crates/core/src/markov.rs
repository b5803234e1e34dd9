//! Stationary distributions of finite continuous-time Markov chains.

use crate::error::{Error, Result};

/// Off-diagonal transition rates of a CTMC stored by row.
///
/// Diagonal entries are implicit: `q_ii = -sum_j q_ij`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRates {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRates {
    pub fn new(n: usize) -> Self {
        SparseRates {
            rows: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn add(&mut self, from: usize, to: usize, rate: f64) {
        if from == to || rate == 0.0 {
            return;
        }
        let row = &mut self.rows[from];
        match row.binary_search_by_key(&to, |&(j, _)| j) {
            Ok(k) => row[k].1 += rate,
            Err(k) => row.insert(k, (to, rate)),
        }
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, r)| r).sum()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| row.iter().filter(|(_, r)| *r > 0.0).map(|&(j, _)| j).collect())
            .collect()
    }

    /// `max_j |(p Q)_j|`.
    pub fn residual(&self, p: &[f64]) -> f64 {
        let mut flow = vec![0.0; self.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let mut out = 0.0;
            for &(j, r) in row {
                flow[j] += p[i] * r;
                out += r;
            }
            flow[i] -= p[i] * out;
        }
        flow.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Restriction to `keep` (sorted), dropping transitions that leave it.
    pub fn restrict(&self, keep: &[usize]) -> (SparseRates, Vec<usize>) {
        let mut local = vec![usize::MAX; self.len()];
        for (k, &i) in keep.iter().enumerate() {
            local[i] = k;
        }
        let mut out = SparseRates::new(keep.len());
        for (k, &i) in keep.iter().enumerate() {
            for &(j, r) in &self.rows[i] {
                if local[j] != usize::MAX {
                    out.add(k, local[j], r);
                }
            }
        }
        (out, local)
    }
}

/// Chains up to this size are solved densely by state reduction.
pub const DENSE_LIMIT: usize = 2000;

/// Stationary distribution of an irreducible chain.
pub fn stationary(rates: &SparseRates) -> Result<Vec<f64>> {
    let n = rates.len();
    if n == 0 {
        return Err(Error::SingularSystem("empty state space".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    if !crate::graph::is_strongly_connected(&rates.adjacency()) {
        return Err(Error::SingularSystem("generator is reducible".into()));
    }
    if n <= DENSE_LIMIT {
        gth(rates)
    } else {
        gauss_seidel(rates, 1e-14, 200_000)
    }
}

/// Grassmann-Taksar-Heyman state reduction. Subtraction-free, so the result
/// keeps full relative accuracy even for stiff chains.
fn gth(rates: &SparseRates) -> Result<Vec<f64>> {
    let n = rates.len();
    let mut q = vec![0.0; n * n];
    for (i, row) in rates.rows.iter().enumerate() {
        for &(j, r) in row {
            q[i * n + j] += r;
        }
    }
    for k in (1..n).rev() {
        let s: f64 = q[k * n..k * n + k].iter().sum();
        if s <= 0.0 {
            return Err(Error::SingularSystem(format!(
                "state {k} cannot reach lower-numbered states"
            )));
        }
        for i in 0..k {
            q[i * n + k] /= s;
        }
        for i in 0..k {
            let qik = q[i * n + k];
            if qik == 0.0 {
                continue;
            }
            for j in 0..k {
                q[i * n + j] += qik * q[k * n + j];
            }
        }
    }
    let mut p = vec![0.0; n];
    p[0] = 1.0;
    for k in 1..n {
        p[k] = (0..k).map(|i| p[i] * q[i * n + k]).sum();
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

fn gauss_seidel(rates: &SparseRates, tol: f64, max_sweeps: usize) -> Result<Vec<f64>> {
    let n = rates.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut exit = vec![0.0; n];
    for (i, row) in rates.rows.iter().enumerate() {
        for &(j, r) in row {
            incoming[j].push((i, r));
            exit[i] += r;
        }
    }
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..max_sweeps {
        let mut change = 0.0f64;
        for j in 0..n {
            let inflow: f64 = incoming[j].iter().map(|&(i, r)| p[i] * r).sum();
            let new = inflow / exit[j];
            change = change.max((new - p[j]).abs() / new.max(f64::MIN_POSITIVE));
            p[j] = new;
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        if change < tol {
            return Ok(p);
        }
    }
    Err(Error::SingularSystem(format!(
        "Gauss-Seidel did not converge in {max_sweeps} sweeps"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> SparseRates {
        let mut r = SparseRates::new(2);
        r.add(0, 1, a);
        r.add(1, 0, b);
        r
    }

    #[test]
    fn two_state_balance() {
        let p = stationary(&two_state(3.0, 1.0)).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn reducible_is_rejected() {
        let mut r = SparseRates::new(3);
        r.add(0, 1, 1.0);
        r.add(1, 0, 1.0);
        r.add(2, 0, 1.0);
        assert!(matches!(stationary(&r), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn iterative_and_dense_agree() {
        // birth-death ring with uneven rates
        let n = 40;
        let mut r = SparseRates::new(n);
        for i in 0..n {
            r.add(i, (i + 1) % n, 1.0 + (i % 3) as f64);
            r.add((i + 1) % n, i, 0.5 + (i % 5) as f64 * 0.1);
        }
        let dense = gth(&r).unwrap();
        let iter = gauss_seidel(&r, 1e-15, 1_000_000).unwrap();
        for (a, b) in dense.iter().zip(&iter) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(r.residual(&dense) < 1e-13);
    }
}
