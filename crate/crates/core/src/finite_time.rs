//! Conditional law of the counts at time `t` given an environment path.
//!
//! Initial molecules of species `i` survive as `Multi(z0_i, Phi(0, t) e_i)`.
//! A burst of `m_j` molecules of species `j` born at `u` contributes
//! `Multi(m_j, Phi(u, t) e_j)`, so the bursts form independent Poisson counts
//! `N_{nu j}` indexed by the surviving configuration `nu`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;

use crate::envpath::EnvPath;
use crate::error::{Error, Result};
use crate::model::Modulation;
use crate::propagator::{expm_subgen, propagate};
use crate::quadrature;
use crate::rng::{stream, substream};

const TASK_SAMPLE_Z: u32 = 2;

/// Largest number of burst configurations enumerated per species.
pub const CONFIGURATION_CAP: u128 = 100_000;
/// Default per-species lattice cap of [`MixtureLaw::pmf_table`].
pub const DEFAULT_LATTICE_CAP: u32 = 64;

/// `|Theta_{m,d}| = C(m + d, d) - 1`.
pub fn configuration_count(m: u32, d: usize) -> u128 {
    let mut c: u128 = 1;
    for k in 1..=d as u128 {
        c = c * (m as u128 + k) / k;
    }
    c - 1
}

/// All `nu` with `1 <= sum nu <= m`, in lexicographic order.
pub fn configurations(m: u32, d: usize) -> Result<Vec<Vec<u32>>> {
    let count = configuration_count(m, d);
    if count > CONFIGURATION_CAP {
        return Err(Error::TooManyConfigurations {
            count,
            cap: CONFIGURATION_CAP,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut nu = vec![0u32; d];
    fn rec(i: usize, left: u32, nu: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == nu.len() {
            if nu.iter().any(|&v| v > 0) {
                out.push(nu.clone());
            }
            return;
        }
        for v in 0..=left {
            nu[i] = v;
            rec(i + 1, left - v, nu, out);
        }
        nu[i] = 0;
    }
    rec(0, m, &mut nu, &mut out);
    Ok(out)
}

/// Multinomial probability of `nu` from `m` trials with cell probabilities
/// `p` and an implicit remaining cell `1 - sum p`.
pub fn multinomial_pmf(m: u32, p: &[f64], nu: &[u32]) -> f64 {
    let used: u32 = nu.iter().sum();
    if used > m {
        return 0.0;
    }
    let rest = (1.0 - p.iter().sum::<f64>()).max(0.0);
    let mut coef = 1.0;
    let mut k = m;
    let mut prob = 1.0;
    for (&n, &pi) in nu.iter().zip(p) {
        coef *= binomial(k, n);
        k -= n;
        prob *= pi.powi(n as i32);
    }
    coef * prob * rest.powi((m - used) as i32)
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `g(u, t, nu, m_j)`: probability that exactly `nu` survives at `t` out of a
/// burst of species `j` born at `u`.
pub fn g_config(modulation: &Modulation, path: &EnvPath, u: f64, t: f64, j: usize, nu: &[u32]) -> Result<f64> {
    let p = propagate(modulation, path, u, t)?;
    let col: Vec<f64> = p.phi.column(j).iter().copied().collect();
    Ok(multinomial_pmf(modulation.bursts()[j], &col, nu))
}

/// Products `Phi(end_k, t)` for every segment `k` starting before `t`,
/// plus the clipped segment ends.
struct Backward {
    ends: Vec<f64>,
    after: Vec<DMatrix<f64>>,
}

impl Backward {
    fn new(modulation: &Modulation, path: &EnvPath, t: f64) -> Self {
        let segs: Vec<_> = path.segments().iter().filter(|s| s.start < t).collect();
        let d = modulation.dim();
        let mut after = vec![DMatrix::identity(d, d); segs.len()];
        let ends: Vec<f64> = segs.iter().map(|s| s.end().min(t)).collect();
        for k in (0..segs.len().saturating_sub(1)).rev() {
            let next = segs[k + 1];
            let e = expm_subgen(modulation.a(next.state), ends[k + 1] - next.start);
            after[k] = &after[k + 1] * e;
        }
        Backward { ends, after }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BurstPart {
    /// All bursts have size at most one: survivors are `Pois(W(t))`.
    Poisson(DVector<f64>),
    /// `(j, nu, intensity)` for every producing species and configuration.
    Configurations(Vec<(usize, Vec<u32>, f64)>),
}

/// Intensities `int_0^t b_j(X(u)) g(u, t, nu, m_j) du` for every producing
/// species `j` and every `nu` in `Theta_{m_j, d}`, by per-segment adaptive
/// Gauss-Legendre quadrature.
pub fn configuration_intensities(
    modulation: &Modulation,
    path: &EnvPath,
    t: f64,
    tol: f64,
) -> Result<Vec<(usize, Vec<u32>, f64)>> {
    if !(0.0..=path.total_time()).contains(&t) {
        return Err(Error::SpanOutOfRange {
            u: 0.0,
            t,
            horizon: path.total_time(),
        });
    }
    let d = modulation.dim();
    let back = Backward::new(modulation, path, t);
    let mut out = Vec::new();
    for j in 0..d {
        let m = modulation.bursts()[j];
        if m == 0 || (0..modulation.n_states()).all(|x| modulation.b(x)[j] == 0.0) {
            continue;
        }
        let configs = configurations(m, d)?;
        let mut totals = vec![0.0; configs.len()];
        for (k, seg) in path.segments().iter().filter(|s| s.start < t).enumerate() {
            let rate = modulation.b(seg.state)[j];
            if rate == 0.0 {
                continue;
            }
            let a = modulation.a(seg.state);
            let end = back.ends[k];
            let after = &back.after[k];
            let part = quadrature::integrate(
                |u, vals: &mut [f64]| {
                    let phi = after * expm_subgen(a, end - u);
                    let col: Vec<f64> = phi.column(j).iter().copied().collect();
                    for (v, nu) in vals.iter_mut().zip(&configs) {
                        *v = rate * multinomial_pmf(m, &col, nu);
                    }
                },
                seg.start,
                end,
                configs.len(),
                tol,
                quadrature::MAX_DEPTH,
            )?;
            for (tot, v) in totals.iter_mut().zip(part) {
                *tot += v;
            }
        }
        out.extend(configs.into_iter().zip(totals).map(|(nu, v)| (j, nu, v.max(0.0))));
    }
    Ok(out)
}

pub fn burst_intensities(modulation: &Modulation, path: &EnvPath, t: f64, tol: f64) -> Result<BurstPart> {
    if modulation.bursts().iter().all(|&m| m <= 1) {
        let p = propagate(modulation, path, 0.0, t)?;
        return Ok(BurstPart::Poisson(p.w));
    }
    configuration_intensities(modulation, path, t, tol).map(BurstPart::Configurations)
}

/// Exact conditional law of `Z(t)` given the environment path.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureLaw {
    /// `(Z_i(0), Phi(0, t) e_i)` for each species with initial molecules.
    pub initial_part: Vec<(u64, DVector<f64>)>,
    pub burst_part: BurstPart,
    pub cap: u32,
}

pub fn mixture_law(modulation: &Modulation, path: &EnvPath, t: f64, z0: &[u64], tol: f64) -> Result<MixtureLaw> {
    let d = modulation.dim();
    if z0.len() != d {
        return Err(Error::InvalidArgument(format!("z0 has {} entries, expected {d}", z0.len())));
    }
    let phi = propagate(modulation, path, 0.0, t)?.phi;
    let initial_part = z0
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(i, &n)| (n, phi.column(i).into_owned()))
        .collect();
    Ok(MixtureLaw {
        initial_part,
        burst_part: burst_intensities(modulation, path, t, tol)?,
        cap: DEFAULT_LATTICE_CAP,
    })
}

/// Dense table over the box `0..=zmax` (row-major, last species fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct PmfTable {
    pub zmax: Vec<u32>,
    pub values: Vec<f64>,
}

impl PmfTable {
    fn strides(zmax: &[u32]) -> Vec<usize> {
        let mut s = vec![1; zmax.len()];
        for i in (0..zmax.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * (zmax[i + 1] as usize + 1);
        }
        s
    }

    pub fn index(&self, z: &[u32]) -> Option<usize> {
        if z.len() != self.zmax.len() || z.iter().zip(&self.zmax).any(|(a, b)| a > b) {
            return None;
        }
        Some(Self::strides(&self.zmax).iter().zip(z).map(|(s, &v)| s * v as usize).sum())
    }

    pub fn get(&self, z: &[u32]) -> f64 {
        self.index(z).map_or(0.0, |k| self.values[k])
    }

    pub fn point(&self, k: usize) -> Vec<u32> {
        let strides = Self::strides(&self.zmax);
        strides
            .iter()
            .zip(&self.zmax)
            .map(|(s, &m)| ((k / s) % (m as usize + 1)) as u32)
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// In-place convolution of a box table with the law of `N * step`,
/// `N ~ Pois(lambda)`.
fn convolve_poisson(table: &mut PmfTable, step: &[u32], lambda: f64) {
    if lambda <= 0.0 {
        return;
    }
    let strides = PmfTable::strides(&table.zmax);
    let n = table.values.len();
    let shift: usize = strides.iter().zip(step).map(|(s, &v)| s * v as usize).sum();
    let reach = table
        .zmax
        .iter()
        .zip(step)
        .filter(|(_, &v)| v > 0)
        .map(|(&m, &v)| m / v)
        .min()
        .unwrap_or(0) as usize;
    let mut weights = Vec::with_capacity(reach + 1);
    let mut w = (-lambda).exp();
    for k in 0..=reach {
        weights.push(w);
        w *= lambda / (k + 1) as f64;
    }
    let old = std::mem::replace(&mut table.values, vec![0.0; n]);
    for (c, &mass) in old.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let z = table.point(c);
        for (k, &wk) in weights.iter().enumerate() {
            if z.iter().zip(step).zip(&table.zmax).any(|((&zi, &si), &mi)| zi + k as u32 * si > mi) {
                break;
            }
            table.values[c + k * shift] += mass * wk;
        }
    }
}

/// In-place convolution with `Multi(count, p)` (remaining mass is death).
fn convolve_multinomial(table: &mut PmfTable, count: u64, p: &DVector<f64>) {
    let strides = PmfTable::strides(&table.zmax);
    let n = table.values.len();
    let death = (1.0 - p.sum()).max(0.0);
    for _ in 0..count {
        let old = std::mem::replace(&mut table.values, vec![0.0; n]);
        for (c, &mass) in old.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            table.values[c] += mass * death;
            let z = table.point(c);
            for (i, &pi) in p.iter().enumerate() {
                if pi > 0.0 && z[i] < table.zmax[i] {
                    table.values[c + strides[i]] += mass * pi;
                }
            }
        }
    }
}

impl MixtureLaw {
    pub fn with_cap(mut self, cap: u32) -> Self {
        self.cap = cap;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.burst_part {
            BurstPart::Poisson(w) => w.len(),
            BurstPart::Configurations(_) => self
                .initial_part
                .first()
                .map(|(_, p)| p.len())
                .unwrap_or_else(|| self.config_dim()),
        }
    }

    fn config_dim(&self) -> usize {
        match &self.burst_part {
            BurstPart::Configurations(c) => c.first().map_or(0, |(_, nu, _)| nu.len()),
            BurstPart::Poisson(w) => w.len(),
        }
    }

    /// Probabilities of every point of the box `0..=zmax`, by convolution
    /// of all components.
    pub fn pmf_table(&self, zmax: &[u32]) -> Result<PmfTable> {
        if let Some(&big) = zmax.iter().find(|&&z| z > self.cap) {
            return Err(Error::TruncationTooSmall {
                requested: big as u64,
                cap: self.cap as u64,
            });
        }
        let size: usize = zmax.iter().map(|&m| m as usize + 1).product();
        let mut table = PmfTable {
            zmax: zmax.to_vec(),
            values: vec![0.0; size],
        };
        table.values[0] = 1.0;
        for (count, p) in &self.initial_part {
            convolve_multinomial(&mut table, *count, p);
        }
        match &self.burst_part {
            BurstPart::Poisson(w) => {
                for (i, &wi) in w.iter().enumerate() {
                    let mut step = vec![0; w.len()];
                    step[i] = 1;
                    convolve_poisson(&mut table, &step, wi);
                }
            }
            BurstPart::Configurations(cs) => {
                for (_, nu, lambda) in cs {
                    convolve_poisson(&mut table, nu, *lambda);
                }
            }
        }
        Ok(table)
    }

    /// `P(Z(t) = z | path)`.
    pub fn pmf(&self, z: &[u32]) -> Result<f64> {
        Ok(self.pmf_table(z)?.get(z))
    }

    /// Mean of `Z(t)` under the law.
    pub fn mean(&self) -> DVector<f64> {
        let d = self.dim();
        let mut m = DVector::zeros(d);
        for (n, p) in &self.initial_part {
            m += p * (*n as f64);
        }
        match &self.burst_part {
            BurstPart::Poisson(w) => m += w,
            BurstPart::Configurations(cs) => {
                for (_, nu, l) in cs {
                    for i in 0..d {
                        m[i] += nu[i] as f64 * l;
                    }
                }
            }
        }
        m
    }
}

/// `P(Z(t) = z | path)`.
pub fn pmf_z(modulation: &Modulation, path: &EnvPath, t: f64, z0: &[u64], z: &[u32], tol: f64) -> Result<f64> {
    mixture_law(modulation, path, t, z0, tol)?.pmf(z)
}

/// Exact sampler of `Z(t)` given a path, by birth-time thinning.
#[derive(Debug, Clone)]
pub struct FiniteTimeSampler<'a> {
    modulation: &'a Modulation,
    phi0: DMatrix<f64>,
    /// `(state, start, end, Phi(end, t))` for segments before `t`.
    segments: Vec<(usize, f64, f64, DMatrix<f64>)>,
    /// Per species: total birth mass and cumulative segment masses.
    births: Vec<(f64, Vec<f64>)>,
}

impl<'a> FiniteTimeSampler<'a> {
    pub fn new(modulation: &'a Modulation, path: &EnvPath, t: f64) -> Result<Self> {
        let phi0 = propagate(modulation, path, 0.0, t)?.phi;
        let back = Backward::new(modulation, path, t);
        let segments: Vec<_> = path
            .segments()
            .iter()
            .filter(|s| s.start < t)
            .zip(back.ends.iter().zip(back.after))
            .map(|(s, (&end, after))| (s.state, s.start, end, after))
            .collect();
        let births = (0..modulation.dim())
            .map(|j| {
                let mut cum = Vec::with_capacity(segments.len());
                let mut acc = 0.0;
                for &(x, a, b, _) in &segments {
                    acc += modulation.b(x)[j] * (b - a);
                    cum.push(acc);
                }
                (acc, cum)
            })
            .collect();
        Ok(FiniteTimeSampler {
            modulation,
            phi0,
            segments,
            births,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, z0: &[u64], rng: &mut R) -> Vec<u64> {
        let d = self.modulation.dim();
        let mut z = vec![0u64; d];
        for (i, &n) in z0.iter().enumerate() {
            if n > 0 {
                let col: Vec<f64> = self.phi0.column(i).iter().copied().collect();
                multinomial_into(n, &col, &mut z, rng);
            }
        }
        for j in 0..d {
            let (total, cum) = &self.births[j];
            let m = self.modulation.bursts()[j] as u64;
            if *total <= 0.0 || m == 0 {
                continue;
            }
            let count = Poisson::new(*total).expect("positive mean").sample(rng) as u64;
            for _ in 0..count {
                let target = rng.random::<f64>() * total;
                let k = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
                let (x, a, b, after) = &self.segments[k];
                let u = a + rng.random::<f64>() * (b - a);
                let phi = after * expm_subgen(self.modulation.a(*x), b - u);
                let col: Vec<f64> = phi.column(j).iter().copied().collect();
                multinomial_into(m, &col, &mut z, rng);
            }
        }
        z
    }
}

/// Adds a `Multi(n, p)` draw (remaining mass discarded) to `z`.
pub fn multinomial_into<R: Rng + ?Sized>(n: u64, p: &[f64], z: &mut [u64], rng: &mut R) {
    let mut left = n;
    let mut mass = 1.0;
    for (i, &pi) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if pi <= 0.0 {
            continue;
        }
        let q = (pi / mass).min(1.0);
        let k = if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("valid probability").sample(rng)
        };
        z[i] += k;
        left -= k;
        mass -= pi;
        if mass <= 0.0 {
            break;
        }
    }
}

/// `n` independent draws of `Z(t)` given `path`; replica `r` uses its own
/// stream of `seed`.
pub fn sample_z(modulation: &Modulation, path: &EnvPath, t: f64, z0: &[u64], seed: u64, n: usize) -> Result<Vec<Vec<u64>>> {
    let sampler = FiniteTimeSampler::new(modulation, path, t)?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|r| sampler.draw(z0, &mut stream(seed, substream(TASK_SAMPLE_Z, r))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_modulation, parse_model, validate_network};

    fn birth_death(m: u32, k1: f64, k2: f64) -> Modulation {
        let text = format!(
            "[species]\nnames = [\"S\"]\n[environment]\nstates = [\"c\"]\n\
             [[reactions]]\nequation = \"0 -> {m} S\"\nrate = {k1}\n\
             [[reactions]]\nequation = \"S -> 0\"\nrate = {k2}\n"
        );
        build_modulation(&validate_network(&parse_model(&text).unwrap()).unwrap())
    }

    fn constant_path(t: f64) -> EnvPath {
        EnvPath::from_holdings(0, &[(0, t)]).unwrap()
    }

    #[test]
    fn configuration_enumeration() {
        assert_eq!(configuration_count(3, 1), 3);
        assert_eq!(configuration_count(2, 2), 5);
        let c = configurations(2, 2).unwrap();
        assert_eq!(c.len(), 5);
        assert!(c.iter().all(|nu| (1..=2).contains(&nu.iter().sum::<u32>())));
        assert!(matches!(configurations(40, 8), Err(Error::TooManyConfigurations { .. })));
    }

    #[test]
    fn g_special_cases() {
        let m = birth_death(3, 1.0, 0.5);
        let path = constant_path(2.0);
        let p = (-0.5f64 * 1.5).exp();
        for i in 0..=3u32 {
            let g = g_config(&m, &path, 0.5, 2.0, 0, &[i]).unwrap();
            let exact = binomial(3, i) * p.powi(i as i32) * (1.0 - p).powi(3 - i as i32);
            assert!((g - exact).abs() < 1e-14);
        }
        assert!((g_config(&m, &path, 1.0, 1.0, 0, &[3]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_burst_intensity_closed_form() {
        let m = birth_death(1, 2.0, 0.7);
        let path = constant_path(3.0);
        let c = configuration_intensities(&m, &path, 3.0, 1e-10).unwrap();
        let exact = 2.0 / 0.7 * (1.0 - (-2.1f64).exp());
        assert!((c[0].2 - exact).abs() < 1e-10);
        match burst_intensities(&m, &path, 3.0, 1e-10).unwrap() {
            BurstPart::Poisson(w) => assert!((w[0] - exact).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let zero = configuration_intensities(&m, &path, 0.0, 1e-10).unwrap();
        assert_eq!(zero[0].2, 0.0);
    }

    #[test]
    fn double_burst_intensities() {
        let (k1, k2, t) = (1.5, 0.8, 2.0);
        let m = birth_death(2, k1, k2);
        let c = configuration_intensities(&m, &constant_path(t), t, 1e-11).unwrap();
        // closed forms of 2 k1 int p(1-p) and k1 int p^2, p = e^{-k2 (t-u)}
        let i1 = 2.0 * k1 * ((1.0 - (-k2 * t).exp()) / k2 - (1.0 - (-2.0 * k2 * t).exp()) / (2.0 * k2));
        let i2 = k1 * (1.0 - (-2.0 * k2 * t).exp()) / (2.0 * k2);
        assert!((c[0].2 - i1).abs() < 1e-10, "{c:?}");
        assert!((c[1].2 - i2).abs() < 1e-10);
        let law = mixture_law(&m, &constant_path(t), t, &[0], 1e-11).unwrap();
        assert!((law.pmf(&[0]).unwrap() - (-(i1 + i2)).exp()).abs() < 1e-14);
    }

    #[test]
    fn product_poisson_pmf() {
        let m = birth_death(1, 2.0, 1.0);
        let law = mixture_law(&m, &constant_path(1.0), 1.0, &[0], 1e-10).unwrap();
        let w = 2.0 * (1.0 - (-1.0f64).exp());
        for z in 0..10u32 {
            let exact = (-w).exp() * w.powi(z as i32) / (1..=z).map(|k| k as f64).product::<f64>();
            assert!((law.pmf(&[z]).unwrap() - exact).abs() < 1e-14);
        }
        assert!(matches!(law.pmf(&[65]), Err(Error::TruncationTooSmall { .. })));
    }

    #[test]
    fn empty_system_samples_zero() {
        let text = "[species]\nnames = [\"S\"]\n[environment]\nstates = [\"c\"]\n\
                    [[reactions]]\nequation = \"S -> 0\"\nrate = 1.0\n";
        let m = build_modulation(&validate_network(&parse_model(text).unwrap()).unwrap());
        let s = sample_z(&m, &constant_path(2.0), 2.0, &[0], 1, 100).unwrap();
        assert!(s.iter().all(|z| z[0] == 0));
    }

    #[test]
    fn multinomial_pmf_sums_to_one() {
        let p = [0.2, 0.3, 0.1];
        let mut total = multinomial_pmf(4, &p, &[0, 0, 0]);
        for nu in configurations(4, 3).unwrap() {
            total += multinomial_pmf(4, &p, &nu);
        }
        assert!((total - 1.0).abs() < 1e-14);
    }
}
