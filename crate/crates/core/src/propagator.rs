//! Matrix exponentials of sub-generator transposes and the fundamental
//! solution `Phi(u, t)` along an environment path.

use nalgebra::{DMatrix, DVector};

use crate::envpath::{EnvPath, ReturnIndex};
use crate::error::{Error, Result};
use crate::model::Modulation;

/// Neglected Poisson tail mass per uniformization sum.
pub const UNIFORMIZATION_TAIL: f64 = 1e-16;
/// Largest `lambda * h` summed in one piece; longer steps are composed.
const MAX_RATE_TIME: f64 = 32.0;

/// `e^{A h}` and `int_0^h e^{A u} B du` for one constant segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPropagator {
    pub e: DMatrix<f64>,
    pub g: DVector<f64>,
}

/// `Phi(u, t)` and `W = int_u^t Phi(s, t) B_X(s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPropagator {
    pub phi: DMatrix<f64>,
    pub w: DVector<f64>,
    pub span: (f64, f64),
}

impl PathPropagator {
    pub fn identity(d: usize, at: f64) -> Self {
        PathPropagator {
            phi: DMatrix::identity(d, d),
            w: DVector::zeros(d),
            span: (at, at),
        }
    }

    /// Extends the span by a later segment.
    pub fn then(&mut self, seg: &SegmentPropagator, length: f64) {
        self.phi = &seg.e * &self.phi;
        self.w = &seg.e * &self.w + &seg.g;
        self.span.1 += length;
    }

    /// `[a, b]` followed by `[b, c]`.
    pub fn compose(first: &PathPropagator, second: &PathPropagator) -> PathPropagator {
        PathPropagator {
            phi: &second.phi * &first.phi,
            w: &second.phi * &first.w + &second.w,
            span: (first.span.0, second.span.1),
        }
    }
}

/// Per-cycle `(C_k, D_k) = (Phi(tau_k, tau_{k+1}), W over the same cycle)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleBlocks {
    pub blocks: Vec<(DMatrix<f64>, DVector<f64>)>,
}

fn uniformization_rate(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows()).fold(0.0f64, |m, i| m.max(-a[(i, i)]))
}

/// Poisson weights `e^{-m} m^n / n!` until the remaining tail is negligible,
/// and a bound on the mass beyond the last weight.
fn poisson_weights(m: f64) -> (Vec<f64>, f64) {
    let mut w = vec![(-m).exp()];
    loop {
        let n = w.len() - 1;
        let r = m / (n as f64 + 2.0);
        let last = w[n];
        // P(N > n) <= w_n * (m/(n+1)) / (1 - r) once r < 1
        let tail = last * (m / (n as f64 + 1.0)) / (1.0 - r);
        if r < 1.0 && tail < UNIFORMIZATION_TAIL {
            return (w, tail);
        }
        w.push(last * m / (n as f64 + 1.0));
    }
}

/// One uniformization sum with `lambda h <= MAX_RATE_TIME`.
fn uniformize(a: &DMatrix<f64>, b: Option<&DVector<f64>>, h: f64, lambda: f64) -> SegmentPropagator {
    let d = a.nrows();
    let mut p = a / lambda;
    for i in 0..d {
        p[(i, i)] += 1.0;
        // exact zero or positive; rounding may leave -0.0
        if p[(i, i)] < 0.0 {
            p[(i, i)] = 0.0;
        }
    }
    let (w, beyond) = poisson_weights(lambda * h);
    let mut power = DMatrix::<f64>::identity(d, d);
    let mut e = DMatrix::<f64>::zeros(d, d);
    let mut g = DVector::<f64>::zeros(d);
    let mut pb = b.cloned();
    // P(N > n), summed from the top to avoid cancellation
    let mut survival = vec![0.0; w.len()];
    let mut acc = beyond;
    for n in (0..w.len()).rev() {
        survival[n] = acc;
        acc += w[n];
    }
    for (n, &wn) in w.iter().enumerate() {
        e.zip_apply(&power, |acc, p| *acc += wn * p);
        if let Some(v) = pb.as_mut() {
            // int_0^h e^{A u} B du = (1/lambda) sum_n P(N > n) P^n B
            g.axpy(survival[n] / lambda, v, 1.0);
            *v = &p * &*v;
        }
        if n + 1 < w.len() {
            power = &p * &power;
        }
    }
    e.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    g.iter_mut().for_each(|v| *v = v.max(0.0));
    SegmentPropagator { e, g }
}

fn segment_impl(a: &DMatrix<f64>, b: Option<&DVector<f64>>, h: f64) -> SegmentPropagator {
    let d = a.nrows();
    if d == 1 {
        let k = -a[(0, 0)];
        let e = (-k * h).exp();
        let g = match b {
            Some(b) if k > 0.0 => b[0] * (-(-k * h).exp_m1()) / k,
            Some(b) => b[0] * h,
            None => 0.0,
        };
        return SegmentPropagator {
            e: DMatrix::from_element(1, 1, e),
            g: DVector::from_element(1, g),
        };
    }
    let lambda = uniformization_rate(a);
    if h == 0.0 || lambda == 0.0 {
        return SegmentPropagator {
            e: DMatrix::identity(d, d),
            g: b.map_or_else(|| DVector::zeros(d), |b| b * h),
        };
    }
    let pieces = (lambda * h / MAX_RATE_TIME).ceil().max(1.0);
    if pieces > 1.0 {
        let piece = uniformize(a, b, h / pieces, lambda);
        // binary powering of the affine map (E, g)
        let mut count = pieces as u64;
        let mut result: Option<SegmentPropagator> = None;
        let mut base = piece;
        while count > 0 {
            if count & 1 == 1 {
                result = Some(match result {
                    None => base.clone(),
                    Some(r) => SegmentPropagator {
                        e: &base.e * &r.e,
                        g: &base.e * &r.g + &base.g,
                    },
                });
            }
            count >>= 1;
            if count > 0 {
                base = SegmentPropagator {
                    e: &base.e * &base.e,
                    g: &base.e * &base.g + &base.g,
                };
            }
        }
        let mut out = result.expect("at least one piece");
        out.e.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        return out;
    }
    uniformize(a, b, h, lambda)
}

/// `e^{A h}` for `A` with nonnegative off-diagonals and nonpositive column
/// sums, by uniformization.
pub fn expm_subgen(a: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    segment_impl(a, None, h).e
}

/// `(e^{A h}, int_0^h e^{A u} b du)`.
///
/// The integral is the top-right column of the exponential of the block
/// matrix `[[A, b], [0, 0]] h`; its uniformization series is summed directly.
pub fn expm_with_integral(a: &DMatrix<f64>, b: &DVector<f64>, h: f64) -> SegmentPropagator {
    segment_impl(a, Some(b), h)
}

/// `G_x(h) = int_0^h e^{A(x) u} B(x) du`.
pub fn segment_g(modulation: &Modulation, x: usize, h: f64) -> DVector<f64> {
    expm_with_integral(modulation.a(x), modulation.b(x), h).g
}

pub fn segment(modulation: &Modulation, x: usize, h: f64) -> SegmentPropagator {
    expm_with_integral(modulation.a(x), modulation.b(x), h)
}

/// Per-segment propagators of a whole path, computed once.
#[derive(Debug, Clone)]
pub struct PathCache<'a> {
    modulation: &'a Modulation,
    path: &'a EnvPath,
    full: Vec<SegmentPropagator>,
}

impl<'a> PathCache<'a> {
    pub fn new(modulation: &'a Modulation, path: &'a EnvPath) -> Self {
        let full = path
            .segments()
            .iter()
            .map(|s| segment(modulation, s.state, s.holding))
            .collect();
        PathCache { modulation, path, full }
    }

    pub fn path(&self) -> &EnvPath {
        self.path
    }

    pub fn modulation(&self) -> &Modulation {
        self.modulation
    }

    /// `Phi(u, t)` and `W` over `[u, t]`.
    pub fn span(&self, u: f64, t: f64) -> Result<PathPropagator> {
        check_span(self.path, u, t)?;
        let d = self.modulation.dim();
        let mut acc = PathPropagator::identity(d, u);
        if u == t {
            return Ok(acc);
        }
        let first = self.path.segment_index_at(u).expect("u inside path");
        for (k, seg) in self.path.segments().iter().enumerate().skip(first) {
            if seg.start >= t {
                break;
            }
            let a = seg.start.max(u);
            let b = seg.end().min(t);
            if b <= a {
                continue;
            }
            if a == seg.start && b == seg.end() {
                acc.then(&self.full[k], b - a);
            } else {
                acc.then(&segment(self.modulation, seg.state, b - a), b - a);
            }
        }
        acc.span = (u, t);
        Ok(acc)
    }
}

fn check_span(path: &EnvPath, u: f64, t: f64) -> Result<()> {
    if !(0.0 <= u && u <= t && t <= path.total_time()) {
        return Err(Error::SpanOutOfRange {
            u,
            t,
            horizon: path.total_time(),
        });
    }
    Ok(())
}

/// `Phi(u, t)` and `W` over `[u, t]` along `path`.
pub fn propagate(modulation: &Modulation, path: &EnvPath, u: f64, t: f64) -> Result<PathPropagator> {
    check_span(path, u, t)?;
    let d = modulation.dim();
    let mut acc = PathPropagator::identity(d, u);
    if u == t {
        return Ok(acc);
    }
    let first = path.segment_index_at(u).expect("u inside path");
    for seg in &path.segments()[first..] {
        if seg.start >= t {
            break;
        }
        let a = seg.start.max(u);
        let b = seg.end().min(t);
        if b > a {
            acc.then(&segment(modulation, seg.state, b - a), b - a);
        }
    }
    acc.span = (u, t);
    Ok(acc)
}

/// Blocks of the first `k` return cycles.
pub fn cycle_blocks(modulation: &Modulation, path: &EnvPath, ret: &ReturnIndex, k: usize) -> Result<CycleBlocks> {
    if ret.taus.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} return times recorded, {} cycles requested",
            ret.taus.len().saturating_sub(1),
            k
        )));
    }
    let cache = PathCache::new(modulation, path);
    let blocks = ret.taus.windows(2).take(k).map(|w| {
        let p = cache.span(w[0], w[1])?;
        Ok((p.phi, p.w))
    });
    Ok(CycleBlocks {
        blocks: blocks.collect::<Result<_>>()?,
    })
}

/// `(C, D)` for one cycle given as `(state, holding)` pairs.
pub fn cycle_from_holdings(modulation: &Modulation, holdings: &[(usize, f64)]) -> (DMatrix<f64>, DVector<f64>) {
    let d = modulation.dim();
    let mut acc = PathPropagator::identity(d, 0.0);
    for &(x, h) in holdings {
        acc.then(&segment(modulation, x, h), h);
    }
    (acc.phi, acc.w)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Random sub-generator transpose with rates in `[0, scale)`.
    pub(crate) fn random_subgen<R: Rng>(rng: &mut R, d: usize, scale: f64) -> DMatrix<f64> {
        let mut a = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            let mut out = if rng.random::<f64>() < 0.7 { rng.random::<f64>() * scale } else { 0.0 };
            for j in 0..d {
                if i != j && rng.random::<f64>() < 0.6 {
                    a[(j, i)] = rng.random::<f64>() * scale;
                    out += a[(j, i)];
                }
            }
            a[(i, i)] = -out;
        }
        a
    }

    /// Plain Taylor series of `e^{A h}`, no scaling.
    fn taylor(a: &DMatrix<f64>, h: f64, terms: usize) -> DMatrix<f64> {
        let d = a.nrows();
        let mut term = DMatrix::<f64>::identity(d, d);
        let mut sum = term.clone();
        for n in 1..terms {
            term = &term * a * (h / n as f64);
            sum += &term;
        }
        sum
    }

    /// Composite Gauss-Legendre quadrature of `int_0^h e^{A u} b du`.
    fn quad_g(a: &DMatrix<f64>, b: &DVector<f64>, h: f64) -> DVector<f64> {
        let panels = 64;
        let (nodes, weights) = crate::quadrature::gauss_legendre(16);
        let mut acc = DVector::zeros(b.len());
        for p in 0..panels {
            let lo = h * p as f64 / panels as f64;
            let hi = h * (p + 1) as f64 / panels as f64;
            for (x, w) in nodes.iter().zip(&weights) {
                let u = 0.5 * (hi - lo) * x + 0.5 * (hi + lo);
                acc += taylor(a, u, 80) * b * (0.5 * (hi - lo) * w);
            }
        }
        acc
    }

    #[test]
    fn scalar_and_zero_time() {
        let a = DMatrix::from_element(1, 1, -0.7);
        assert_eq!(expm_subgen(&a, 2.0)[(0, 0)], (-1.4f64).exp());
        let a = random_subgen(&mut crate::rng::stream(1, 0), 4, 2.0);
        assert_eq!(expm_subgen(&a, 0.0), DMatrix::identity(4, 4));
    }

    #[test]
    fn matches_taylor() {
        let mut rng = crate::rng::stream(2, 0);
        for _ in 0..50 {
            let a = random_subgen(&mut rng, 4, 1.0);
            let e = expm_subgen(&a, 0.7);
            let t = taylor(&a, 0.7, 200);
            assert!((e - t).amax() < 1e-12);
        }
    }

    #[test]
    fn scalar_integral() {
        let a = DMatrix::from_element(1, 1, -2.0);
        let b = DVector::from_element(1, 3.0);
        let g = expm_with_integral(&a, &b, 0.4).g[0];
        assert!((g - 1.5 * (1.0 - (-0.8f64).exp())).abs() < 1e-15);
        let a = DMatrix::from_element(1, 1, 0.0);
        assert_eq!(expm_with_integral(&a, &b, 0.4).g[0], 3.0 * 0.4);
    }

    #[test]
    fn integral_matches_quadrature() {
        let mut rng = crate::rng::stream(3, 0);
        for _ in 0..10 {
            let a = random_subgen(&mut rng, 3, 1.5);
            let b = DVector::from_fn(3, |_, _| rng.random::<f64>() * 2.0);
            let h = 0.1 + rng.random::<f64>() * 2.0;
            let g = expm_with_integral(&a, &b, h).g;
            let q = quad_g(&a, &b, h);
            assert!((g - q).amax() < 1e-10);
        }
    }

    #[test]
    fn long_steps_are_composed() {
        let mut rng = crate::rng::stream(4, 0);
        let a = random_subgen(&mut rng, 3, 5.0);
        let b = DVector::from_element(3, 1.0);
        let whole = expm_with_integral(&a, &b, 40.0);
        let half = expm_with_integral(&a, &b, 20.0);
        let e2 = &half.e * &half.e;
        let g2 = &half.e * &half.g + &half.g;
        assert!((whole.e - e2).amax() < 1e-12);
        assert!((whole.g - g2).amax() < 1e-10);
    }

    #[test]
    fn stiff_rates_stay_substochastic() {
        let mut a = DMatrix::<f64>::zeros(2, 2);
        a[(0, 0)] = -1e4;
        a[(1, 0)] = 1e4;
        a[(1, 1)] = -1e-3;
        let e = expm_subgen(&a, 3.0);
        for j in 0..2 {
            assert!(e.column(j).sum() <= 1.0 + 1e-12);
        }
        assert!((e[(1, 0)] - (-3e-3f64).exp()).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn substochastic(seed in 0u64..10_000, d in 1usize..6, h in 0.0f64..20.0) {
            let a = random_subgen(&mut crate::rng::stream(seed, 0), d, 3.0);
            let e = expm_subgen(&a, h);
            for j in 0..d {
                let s = e.column(j).sum();
                prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
                for i in 0..d {
                    prop_assert!((0.0..=1.0).contains(&e[(i, j)]));
                }
            }
        }

        #[test]
        fn semigroup(seed in 0u64..10_000, d in 1usize..5, h1 in 0.0f64..3.0, h2 in 0.0f64..3.0) {
            let a = random_subgen(&mut crate::rng::stream(seed, 1), d, 2.0);
            let lhs = expm_subgen(&a, h1 + h2);
            let rhs = expm_subgen(&a, h2) * expm_subgen(&a, h1);
            prop_assert!((lhs - rhs).amax() < 1e-13);
        }
    }
}
