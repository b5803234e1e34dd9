//! Small statistics used by diagnostics and comparisons.

use std::collections::BTreeMap;

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let (m, v) = mean_var(xs);
    (m, (v / xs.len() as f64).sqrt())
}

/// Empirical pmf of integer vectors.
pub fn empirical_pmf(samples: &[Vec<u64>]) -> BTreeMap<Vec<u64>, f64> {
    let mut counts: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.clone()).or_default() += 1.0;
    }
    let n = samples.len() as f64;
    counts.values_mut().for_each(|c| *c /= n);
    counts
}

/// Total variation distance `1/2 sum |p - q|` between two pmfs given as maps.
pub fn total_variation(p: &BTreeMap<Vec<u64>, f64>, q: &BTreeMap<Vec<u64>, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, &pv) in p {
        sum += (pv - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &qv) in q {
        if !p.contains_key(k) {
            sum += qv;
        }
    }
    0.5 * sum
}

/// Wasserstein-1 distance between two empirical laws on the real line.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    // integrate |F_a - F_b| over the merged support
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut last = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - last);
        last = next;
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
    }
    total
}

/// Sum of the coordinatewise Wasserstein-1 distances, a lower bound of the
/// `l1` Wasserstein distance between the joint laws.
pub fn wasserstein1_marginals(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = a.first().map_or(0, |v| v.len());
    (0..d)
        .map(|k| {
            let ak: Vec<f64> = a.iter().map(|v| v[k]).collect();
            let bk: Vec<f64> = b.iter().map(|v| v[k]).collect();
            wasserstein1(&ak, &bk)
        })
        .sum()
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Time-weighted running averages for batch-means standard errors.
///
/// The horizon is cut into `batches` equal windows; each window's time
/// average is one batch value.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    width: f64,
    sums: Vec<Vec<f64>>,
}

impl BatchMeans {
    pub fn new(horizon: f64, batches: usize, functions: usize) -> Self {
        BatchMeans {
            width: horizon / batches as f64,
            sums: vec![vec![0.0; batches]; functions],
        }
    }

    /// Adds `values[k] * holding` over `[start, start + holding)`.
    pub fn add(&mut self, start: f64, holding: f64, values: &[f64]) {
        let batches = self.sums[0].len();
        let mut s = start;
        let end = start + holding;
        while s < end {
            let b = ((s / self.width) as usize).min(batches - 1);
            let stop = if b + 1 == batches { end } else { end.min((b + 1) as f64 * self.width) };
            let dt = stop - s;
            for (sum, v) in self.sums.iter_mut().zip(values) {
                sum[b] += v * dt;
            }
            if stop <= s {
                break;
            }
            s = stop;
        }
    }

    /// `(mean, standard error)` of each function.
    pub fn estimates(&self) -> Vec<(f64, f64)> {
        self.sums
            .iter()
            .map(|sum| {
                let avgs: Vec<f64> = sum.iter().map(|s| s / self.width).collect();
                mean_se(&avgs)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tv_of_disjoint_is_one() {
        let p = empirical_pmf(&[vec![0], vec![0]]);
        let q = empirical_pmf(&[vec![1]]);
        assert_eq!(total_variation(&p, &q), 1.0);
    }

    #[test]
    fn w1_shift() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 2.5).collect();
        assert!((wasserstein1(&a, &b) - 2.5).abs() < 1e-12);
        let c: Vec<f64> = (0..50).map(|i| 2.0 * i as f64 + 2.5).collect();
        // same law on a coarser grid
        assert!((wasserstein1(&b, &c) - 0.5).abs() < 0.1);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -0.3 * v + 2.0).collect();
        let (s, c) = linear_fit(&x, &y);
        assert!((s + 0.3).abs() < 1e-12 && (c - 2.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_of_constant() {
        let mut b = BatchMeans::new(10.0, 5, 1);
        b.add(0.0, 3.3, &[2.0]);
        b.add(3.3, 6.7, &[2.0]);
        let (m, se) = b.estimates()[0];
        assert!((m - 2.0).abs() < 1e-12 && se < 1e-12);
    }

    proptest! {
        #[test]
        fn w1_is_symmetric_and_nonnegative(a in proptest::collection::vec(0.0f64..10.0, 1..40),
                                           b in proptest::collection::vec(0.0f64..10.0, 1..40)) {
            let ab = wasserstein1(&a, &b);
            let ba = wasserstein1(&b, &a);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-9);
        }
    }
}
