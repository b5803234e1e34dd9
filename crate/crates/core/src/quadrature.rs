//! Gauss-Legendre rules and adaptive bisection.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Default relative tolerance of [`integrate`].
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default bisection depth cap of [`integrate`].
pub const MAX_DEPTH: usize = 30;

fn rule<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, out: &mut [f64], buf: &mut [f64]) {
    let (nodes, weights) = gl16();
    out.iter_mut().for_each(|v| *v = 0.0);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in nodes.iter().zip(weights) {
        f(mid + half * x, buf);
        for (o, v) in out.iter_mut().zip(buf.iter()) {
            *o += half * w * v;
        }
    }
}

/// Adaptive 16-point Gauss-Legendre integration of a vector-valued function
/// on `[a, b]`.
///
/// A panel is accepted once the whole-panel estimate and the sum over its two
/// halves differ by less than `tol` relative to the panel (in max norm) or to
/// its share of the coarse global estimate. `f(x, out)` writes
/// the integrand at `x` into `out`.
pub fn integrate<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    tol: f64,
    max_depth: usize,
) -> Result<Vec<f64>> {
    let mut total = vec![0.0; dim];
    if b <= a {
        return Ok(total);
    }
    let mut buf = vec![0.0; dim];
    let mut whole = vec![0.0; dim];
    rule(&mut f, a, b, &mut whole, &mut buf);
    let global = whole.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut stack = vec![(a, b, whole, 0usize)];
    let mut left = vec![0.0; dim];
    let mut right = vec![0.0; dim];
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        rule(&mut f, lo, mid, &mut left, &mut buf);
        rule(&mut f, mid, hi, &mut right, &mut buf);
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..dim {
            let refined = left[k] + right[k];
            diff = diff.max((refined - est[k]).abs());
            scale = scale.max(refined.abs());
        }
        // local tolerance, or the panel's share of the global one
        let share = global * (hi - lo) / (b - a);
        if diff <= tol * scale.max(share) || diff <= f64::MIN_POSITIVE || hi - lo <= f64::EPSILON * hi.abs() {
            for k in 0..dim {
                total[k] += left[k] + right[k];
            }
        } else if depth >= max_depth {
            return Err(Error::QuadratureFailure { a: lo, b: hi, depth });
        } else {
            stack.push((mid, hi, right.clone(), depth + 1));
            stack.push((lo, mid, left.clone(), depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for p in 0..32 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {p}");
        }
    }

    #[test]
    fn adaptive_exponential() {
        let v = integrate(|u, out| out[0] = (-3.0 * u).exp(), 0.0, 5.0, 1, 1e-12, 30).unwrap();
        assert!((v[0] - (1.0 - (-15.0f64).exp()) / 3.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_kink() {
        let v = integrate(|u, out| out[0] = (u - 0.3).abs(), 0.0, 1.0, 1, 1e-10, 40).unwrap();
        assert!((v[0] - (0.045 + 0.245)).abs() < 1e-10);
    }

    #[test]
    fn depth_cap_is_reported() {
        let r = integrate(|u, out| out[0] = if u < 0.3 { 0.0 } else { 1.0 }, 0.0, 1.0, 1, 1e-15, 3);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }
}
