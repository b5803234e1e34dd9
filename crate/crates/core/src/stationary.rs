//! Stationary law as a Poisson mixture.
//!
//! Conditionally on `X = x`, the stationary counts are `Pois(w)` plus one
//! multinomial per closed component, where `(u, w)` is drawn from the mixing
//! measure `mu_x`. A draw of `mu_x` is
//! `(e^{A(x) U} Phi_inf, e^{A(x) U} W_inf + G_x(U))` with `U ~ Exp(q_x)` and
//! `W_inf` the fixed point of the recurrence `V = C V + D` over i.i.d. return
//! cycles to `x`.
//!
//! The recurrence is accumulated backwards, `V <- V + Pi D_k`,
//! `Pi <- Pi C_k`, which has the same law after `n` cycles as the forward
//! iteration and converges pathwise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Poisson};
use rayon::prelude::*;

use crate::envpath::{sample_cycle, with_cloned_singleton};
use crate::error::{Error, Result};
use crate::model::{build_modulation, stationary_env, ModulatedNetwork, Modulation};
use crate::propagator::segment;
use crate::rng::{stream, substream, StreamRng};
use crate::stats::mean_se;
use crate::structure::{check_assumption2, estimate_alpha, SpeciesPartition, Z99};

const TASK_SRE: u32 = 3;
const TASK_MOMENTS: u32 = 4;
const TASK_CERTIFICATE: u32 = 5;

/// Largest `alpha` tried before refusing a certificate.
pub const CERTIFICATE_ALPHA_MAX: usize = 4;
/// Replicas used for the alpha check inside [`error_certificate`].
const CERTIFICATE_ALPHA_REPLICAS: usize = 4000;
/// Iteration cap when the certificate picks `n`.
pub const MAX_ITERATIONS: usize = 100_000;

/// `V_n` after `n` cycles around `anchor`, with the matrix product
/// `Pi_n = C_1 ... C_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SreDraw {
    pub v: DVector<f64>,
    pub pi: DMatrix<f64>,
    pub n: usize,
    pub anchor: usize,
}

/// One draw `(u, w)` of the mixing measure and its holding time `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureAtom {
    pub u_matrix: DMatrix<f64>,
    pub w_vector: DVector<f64>,
    pub u: f64,
}

/// A network prepared for stationary sampling at one anchor.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub net: ModulatedNetwork,
    pub modulation: Modulation,
    pub partition: SpeciesPartition,
    pub anchor: usize,
}

fn species_list(net: &ModulatedNetwork, ids: &[usize]) -> String {
    ids.iter()
        .map(|&i| net.species()[i].name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Checks the conditions under which the stationary law is a Poisson mixture
/// and replaces a one-state environment by its clone pair.
pub fn prepare(net: &ModulatedNetwork, x: usize) -> Result<Prepared> {
    if x >= net.env().len() {
        return Err(Error::InvalidArgument(format!(
            "anchor {x} is not an environment state (there are {})",
            net.env().len()
        )));
    }
    let net = with_cloned_singleton(net)?;
    let pi = stationary_env(net.env())?;
    let verdict = check_assumption2(&net, &pi);
    if !verdict.satisfied {
        let bad: Vec<usize> = verdict.violations.iter().map(|v| v.0).collect();
        return Err(Error::PreconditionFailed(format!(
            "not ergodic: properly produced but not properly degraded: {}",
            species_list(&net, &bad)
        )));
    }
    if !verdict.partition.transient.is_empty() {
        return Err(Error::PreconditionFailed(format!(
            "transient species {} are absent at stationarity; remove them from the model",
            species_list(&net, &verdict.partition.transient)
        )));
    }
    let big: Vec<usize> = net
        .bursts()
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| (m > 1).then_some(i))
        .collect();
    if !big.is_empty() {
        return Err(Error::PreconditionFailed(format!(
            "burst size above one for {}; the stationary law is then not a Poisson mixture",
            species_list(&net, &big)
        )));
    }
    let modulation = build_modulation(&net);
    Ok(Prepared {
        partition: verdict.partition,
        net,
        modulation,
        anchor: x,
    })
}

impl Prepared {
    fn sre<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SreDraw> {
        let d = self.modulation.dim();
        let mut v = DVector::<f64>::zeros(d);
        let mut pi = DMatrix::identity(d, d);
        let mut cycle = Vec::new();
        for _ in 0..n {
            sample_cycle(self.net.env(), self.anchor, rng, &mut cycle)?;
            let (c, dk) = cycle_blocks_of(&self.modulation, &cycle);
            v += &pi * dk;
            pi = &pi * c;
        }
        v.iter_mut().for_each(|e| *e = e.max(0.0));
        Ok(SreDraw {
            v,
            pi,
            n,
            anchor: self.anchor,
        })
    }

    fn atom<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(MixtureAtom, SreDraw)> {
        let draw = self.sre(n, rng)?;
        let q = self.net.env().exit_rate(self.anchor);
        let u = Exp::new(q).expect("positive exit rate").sample(rng);
        let seg = segment(&self.modulation, self.anchor, u);
        let atom = MixtureAtom {
            u_matrix: &seg.e * &draw.pi,
            w_vector: (&seg.e * &draw.v + &seg.g).map(|e| e.max(0.0)),
            u,
        };
        Ok((atom, draw))
    }

    /// Representative `j(i)` of each closed component: its smallest species.
    pub fn representatives(&self) -> Vec<usize> {
        self.partition.closed_components.iter().map(|c| c[0]).collect()
    }

    /// Counts drawn from an atom: `Pois(w)` plus `Multi(n_i, u e_{j(i)})`
    /// restricted to closed component `i`.
    pub fn compose<R: Rng + ?Sized>(&self, atom: &MixtureAtom, counts: &[u64], rng: &mut R) -> Vec<u64> {
        let d = self.modulation.dim();
        let mut z = vec![0u64; d];
        for (i, &w) in atom.w_vector.iter().enumerate() {
            if w > 0.0 {
                z[i] = Poisson::new(w).expect("positive mean").sample(rng) as u64;
            }
        }
        for (comp, &n) in self.partition.closed_components.iter().zip(counts) {
            if n == 0 {
                continue;
            }
            let j = comp[0];
            let p: Vec<f64> = comp.iter().map(|&k| atom.u_matrix[(k, j)].max(0.0)).collect();
            let total: f64 = p.iter().sum();
            // sequential binomials; the last cell takes the remainder so the
            // component total is exact
            let mut local = vec![0u64; comp.len()];
            let mut left = n;
            let mut mass = total;
            for k in 0..comp.len() - 1 {
                if left == 0 || mass <= 0.0 {
                    break;
                }
                let prob = (p[k] / mass).clamp(0.0, 1.0);
                let c = Binomial::new(left, prob).expect("valid probability").sample(rng);
                local[k] = c;
                left -= c;
                mass -= p[k];
            }
            local[comp.len() - 1] += left;
            for (&k, c) in comp.iter().zip(local) {
                z[k] += c;
            }
        }
        z
    }
}

fn cycle_blocks_of(modulation: &Modulation, cycle: &[(usize, f64)]) -> (DMatrix<f64>, DVector<f64>) {
    crate::propagator::cycle_from_holdings(modulation, cycle)
}

fn replica_rng(seed: u64, task: u32, r: u64) -> StreamRng {
    stream(seed, substream(task, r))
}

/// `replicas` independent draws of `V_n`.
pub fn sre_iterates(net: &ModulatedNetwork, x: usize, n: usize, seed: u64, replicas: usize) -> Result<Vec<SreDraw>> {
    let prep = prepare(net, x)?;
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| prep.sre(n, &mut replica_rng(seed, TASK_SRE, r)))
        .collect()
}

/// `replicas` approximate draws of `mu_x`, each built from `n` cycles.
pub fn sre_sample(net: &ModulatedNetwork, x: usize, n: usize, seed: u64, replicas: usize) -> Result<Vec<MixtureAtom>> {
    let prep = prepare(net, x)?;
    sample_atoms(&prep, n, seed, replicas)
}

fn sample_atoms(prep: &Prepared, n: usize, seed: u64, replicas: usize) -> Result<Vec<MixtureAtom>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| prep.atom(n, &mut replica_rng(seed, TASK_SRE, r)).map(|p| p.0))
        .collect()
}

/// Draws of the stationary counts given `X = x`, with `counts[i]` molecules
/// in closed component `i`.
pub fn stationary_sample_z(
    net: &ModulatedNetwork,
    x: usize,
    counts: &[u64],
    n: usize,
    seed: u64,
    replicas: usize,
) -> Result<Vec<Vec<u64>>> {
    let prep = prepare(net, x)?;
    sample_z_prepared(&prep, counts, n, seed, replicas)
}

pub fn sample_z_prepared(prep: &Prepared, counts: &[u64], n: usize, seed: u64, replicas: usize) -> Result<Vec<Vec<u64>>> {
    let h = prep.partition.h();
    if counts.len() != h {
        return Err(Error::InvalidArgument(format!(
            "{} component counts given, the network has {h} closed components",
            counts.len()
        )));
    }
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, TASK_SRE, r);
            let (atom, _) = prep.atom(n, &mut rng)?;
            Ok(prep.compose(&atom, counts, &mut rng))
        })
        .collect()
}

/// Largest spread between the columns of `u` belonging to one closed
/// component. In the limit those columns coincide.
pub fn closed_column_spread(partition: &SpeciesPartition, u: &DMatrix<f64>) -> f64 {
    let mut spread = 0.0f64;
    for comp in &partition.closed_components {
        let j = comp[0];
        for &k in &comp[1..] {
            for row in 0..u.nrows() {
                spread = spread.max((u[(row, k)] - u[(row, j)]).abs());
            }
        }
    }
    spread
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentMethod {
    /// Recursion on the cycle fixed point, with the holding time mixed in
    /// analytically. Unbiased.
    #[default]
    Exact,
    /// Recursion with the holding time folded into every cycle's increment.
    Corollary,
    /// Monte Carlo over mixture atoms; works for any dimension.
    Atoms,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    pub q_max: u32,
    /// Cycles per anchor (recursions) or atoms per anchor (`Atoms`).
    pub samples: usize,
    /// Cycles per atom for `Atoms`.
    pub iterations: usize,
    pub batches: usize,
    pub method: MomentMethod,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            q_max: 3,
            samples: 100_000,
            iterations: 200,
            batches: 20,
            method: MomentMethod::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub q: u32,
    pub species: usize,
    pub value: f64,
    pub se: f64,
}

/// Stationary factorial moments `m_q = E[Z!/(Z-q)!]`, one row per `q` and
/// species, with `m_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialMoments {
    pub rows: Vec<MomentRow>,
    /// `per_anchor[x][q]` for species 0.
    pub per_anchor: Vec<Vec<f64>>,
}

impl FactorialMoments {
    pub fn get(&self, q: u32, species: usize) -> Option<MomentRow> {
        self.rows.iter().copied().find(|r| r.q == q && r.species == species)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(k: u32) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Scalar cycle statistics at one anchor.
struct ScalarCycles {
    c: Vec<f64>,
    d: Vec<f64>,
    /// Holding times drawn independently of the cycle, used by `Corollary`.
    u: Vec<f64>,
}

/// `E[s^i (1 - s)^k] (b/kappa)^k` with `s = e^{-kappa U}`, `U ~ Exp(q)`, i.e.
/// `E[e^{-i kappa U} G(U)^k]`.
fn holding_mix(i: u32, k: u32, kappa: f64, b: f64, q: f64) -> f64 {
    if kappa == 0.0 {
        if i > 0 && k == 0 {
            return 1.0;
        }
        return b.powi(k as i32) * factorial(k) / q.powi(k as i32);
    }
    // s ~ Beta(q/kappa, 1)
    let a = q / kappa;
    let beta = a * factorial(k) / (0..=k).map(|l| a + (i + l) as f64).product::<f64>();
    beta * (b / kappa).powi(k as i32)
}

fn scalar_moments(cyc: &ScalarCycles, range: std::ops::Range<usize>, q_max: u32, kappa: f64, b: f64, q: f64, method: MomentMethod) -> Vec<f64> {
    let n = range.len() as f64;
    let (cs, ds, us) = (&cyc.c[range.clone()], &cyc.d[range.clone()], &cyc.u[range]);
    let tilde: Vec<f64> = match method {
        MomentMethod::Corollary => cs
            .iter()
            .zip(ds)
            .zip(us)
            .map(|((&c, &d), &u)| {
                let s = (-kappa * u).exp();
                let g = if kappa > 0.0 { b / kappa * (1.0 - s) } else { b * u };
                (1.0 - c) * g + s * d
            })
            .collect(),
        _ => ds.to_vec(),
    };
    let joint = |i: u32, k: u32| -> f64 {
        cs.iter()
            .zip(&tilde)
            .map(|(&c, &d)| c.powi(i as i32) * d.powi(k as i32))
            .sum::<f64>()
            / n
    };
    let mut m = vec![1.0; q_max as usize + 1];
    for qq in 1..=q_max {
        let num: f64 = (0..qq).map(|i| binomial(qq, i) * joint(i, qq - i) * m[i as usize]).sum();
        m[qq as usize] = num / (1.0 - joint(qq, 0));
    }
    if method == MomentMethod::Corollary {
        return m;
    }
    (0..=q_max)
        .map(|qq| {
            (0..=qq)
                .map(|i| binomial(qq, i) * holding_mix(i, qq - i, kappa, b, q) * m[i as usize])
                .sum()
        })
        .collect()
}

fn anchor_weights(net: &ModulatedNetwork, pi: &[f64]) -> Result<Vec<(usize, f64)>> {
    if pi.len() != net.env().len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} environment states",
            pi.len(),
            net.env().len()
        )));
    }
    // a cloned singleton is represented by its first clone
    Ok(pi.iter().copied().enumerate().filter(|&(_, w)| w > 0.0).collect())
}

/// Stationary factorial moments weighted by `pi` over the environment.
pub fn factorial_moments(net: &ModulatedNetwork, pi: &[f64], opts: &MomentOptions, seed: u64) -> Result<FactorialMoments> {
    let anchors = anchor_weights(net, pi)?;
    let d = net.dim();
    if opts.samples < 2 * opts.batches.max(1) {
        return Err(Error::InvalidArgument("need at least two samples per batch".into()));
    }
    if opts.method != MomentMethod::Atoms && d != 1 {
        return Err(Error::InvalidArgument(
            "the moment recursion needs a single species; use the atom method".into(),
        ));
    }
    let mut per_anchor = Vec::new();
    let q_len = opts.q_max as usize + 1;
    let batches = opts.batches.max(1);
    // [batch][species][q], weighted sums over anchors
    let mut batch_sum = vec![vec![vec![0.0; q_len]; d]; batches];
    let mut full = vec![vec![0.0; q_len]; d];
    for &(x, weight) in &anchors {
        let prep = prepare(net, x)?;
        if opts.method == MomentMethod::Atoms {
            let atoms = sample_atoms(&prep, opts.iterations, seed ^ ((x as u64) << 32), opts.samples)?;
            let size = atoms.len() / batches;
            for s in 0..d {
                for qq in 0..q_len {
                    let vals: Vec<f64> = atoms.iter().map(|a| a.w_vector[s].powi(qq as i32)).collect();
                    full[s][qq] += weight * vals.iter().sum::<f64>() / vals.len() as f64;
                    for (b, sum) in batch_sum.iter_mut().enumerate() {
                        let chunk = &vals[b * size..(b + 1) * size];
                        sum[s][qq] += weight * chunk.iter().sum::<f64>() / size as f64;
                    }
                }
            }
            per_anchor.push(
                (0..q_len)
                    .map(|qq| atoms.iter().map(|a| a.w_vector[0].powi(qq as i32)).sum::<f64>() / atoms.len() as f64)
                    .collect(),
            );
            continue;
        }
        let cyc = scalar_cycles(&prep, opts.samples, seed, x)?;
        let kappa = -prep.modulation.a(x)[(0, 0)];
        let b = prep.modulation.b(x)[0];
        let q = prep.net.env().exit_rate(x);
        for qq in 1..=opts.q_max {
            let powers: Vec<f64> = cyc.c.iter().map(|c| c.powi(qq as i32)).collect();
            let (mean, se) = mean_se(&powers);
            let ucb = mean + Z99 * se;
            if ucb >= 1.0 {
                return Err(Error::UnstableDenominator { q: qq, ucb });
            }
        }
        let m = scalar_moments(&cyc, 0..opts.samples, opts.q_max, kappa, b, q, opts.method);
        for qq in 0..q_len {
            full[0][qq] += weight * m[qq];
        }
        let size = opts.samples / batches;
        for (bi, sum) in batch_sum.iter_mut().enumerate() {
            let mb = scalar_moments(&cyc, bi * size..(bi + 1) * size, opts.q_max, kappa, b, q, opts.method);
            for qq in 0..q_len {
                sum[0][qq] += weight * mb[qq];
            }
        }
        per_anchor.push(m);
    }
    let mut rows = Vec::new();
    for qq in 0..q_len {
        for s in 0..d {
            let vals: Vec<f64> = batch_sum.iter().map(|b| b[s][qq]).collect();
            let se = if qq == 0 || batches < 2 { 0.0 } else { mean_se(&vals).1 };
            rows.push(MomentRow {
                q: qq as u32,
                species: s,
                value: if qq == 0 { 1.0 } else { full[s][qq] },
                se,
            });
        }
    }
    Ok(FactorialMoments { rows, per_anchor })
}

fn scalar_cycles(prep: &Prepared, n: usize, seed: u64, x: usize) -> Result<ScalarCycles> {
    let q = prep.net.env().exit_rate(x);
    let base = x as u64 * n as u64;
    let rows: Vec<(f64, f64, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, TASK_MOMENTS, base + r);
            let mut cycle = Vec::new();
            sample_cycle(prep.net.env(), x, &mut rng, &mut cycle)?;
            let (c, d) = cycle_blocks_of(&prep.modulation, &cycle);
            let u = Exp::new(q).expect("positive exit rate").sample(&mut rng);
            Ok((c[(0, 0)], d[0], u))
        })
        .collect::<Result<_>>()?;
    Ok(ScalarCycles {
        c: rows.iter().map(|r| r.0).collect(),
        d: rows.iter().map(|r| r.1).collect(),
        u: rows.iter().map(|r| r.2).collect(),
    })
}

/// Error bound `W1(law(V*_n), mu_x) <= M e^{-r n}` estimated by Monte Carlo.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCertificate {
    pub anchor: usize,
    /// Estimate of `int ||w||_1 mu_x(dw)`.
    pub m_hat: f64,
    pub m_se: f64,
    /// `-ln` of the mean of `||C||_1` over cycles.
    pub r_hat: f64,
    /// 95% interval for `r` from the normal interval of the mean.
    pub r_ci: (f64, f64),
    /// Cycles per atom used for `m_hat`.
    pub iterations: usize,
}

impl ErrorCertificate {
    /// `M e^{-r n}`, or `None` when `r_hat` is not positive.
    pub fn bound(&self, n: usize) -> Option<f64> {
        (self.r_hat > 0.0).then(|| self.m_hat * (-self.r_hat * n as f64).exp())
    }

    /// Smallest `n` with `bound(n) < eps`.
    pub fn iterations_for(&self, eps: f64) -> Option<usize> {
        if self.r_hat <= 0.0 || eps.is_nan() || eps <= 0.0 {
            return None;
        }
        if self.m_hat < eps {
            return Some(1);
        }
        let n = ((self.m_hat / eps).ln() / self.r_hat).floor() as usize + 1;
        Some(n.clamp(1, MAX_ITERATIONS))
    }
}

fn matrix_norm1(c: &DMatrix<f64>) -> f64 {
    (0..c.ncols()).map(|j| c.column(j).sum()).fold(0.0, f64::max)
}

/// Estimates `M` and `r` at anchor `x`. Refused unless the contraction test
/// passes at `alpha = 1`.
pub fn error_certificate(net: &ModulatedNetwork, x: usize, seed: u64, replicas: usize) -> Result<ErrorCertificate> {
    let prep = prepare(net, x)?;
    if replicas < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicas".into()));
    }
    let found = match estimate_alpha(net, x, CERTIFICATE_ALPHA_MAX, CERTIFICATE_ALPHA_REPLICAS, seed) {
        Ok(report) => report.alpha,
        Err(Error::BudgetExhausted { .. }) => None,
        Err(e) => return Err(e),
    };
    match found {
        Some(1) => {}
        Some(a) => return Err(Error::AlphaNotOne { found: a.to_string() }),
        None => {
            return Err(Error::AlphaNotOne {
                found: format!("none up to {CERTIFICATE_ALPHA_MAX}"),
            })
        }
    }
    let norms: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, TASK_CERTIFICATE, r);
            let mut cycle = Vec::new();
            sample_cycle(prep.net.env(), x, &mut rng, &mut cycle)?;
            Ok(matrix_norm1(&cycle_blocks_of(&prep.modulation, &cycle).0))
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_se(&norms);
    let r_hat = -mean.ln();
    let hi = mean - 1.96 * se;
    let r_ci = (-(mean + 1.96 * se).ln(), if hi > 0.0 { -hi.ln() } else { f64::INFINITY });
    if r_hat <= 0.0 || !r_hat.is_finite() {
        return Ok(ErrorCertificate {
            anchor: x,
            m_hat: f64::NAN,
            m_se: f64::NAN,
            r_hat,
            r_ci,
            iterations: 0,
        });
    }
    // enough cycles that the truncated tail is far below the bound's scale
    let iterations = ((1e6f64).ln() / r_hat).ceil().clamp(1.0, MAX_ITERATIONS as f64) as usize;
    let atoms = sample_atoms(&prep, iterations, seed ^ 0x9e37_79b9, replicas)?;
    let sizes: Vec<f64> = atoms.iter().map(|a| a.w_vector.sum()).collect();
    let (m_hat, m_se) = mean_se(&sizes);
    Ok(ErrorCertificate {
        anchor: x,
        m_hat,
        m_se,
        r_hat,
        r_ci,
        iterations,
    })
}
