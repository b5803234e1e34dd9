//! Command-line front end.
//!
//! Every subcommand writes CSV (one or more header-led tables separated by a
//! blank line) to stdout or `--output`. Notes, including the effective seed
//! of stochastic subcommands, go to stderr. Exit codes: 0 success, 1 model
//! rejected, 2 numerical failure, 64 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::envpath::{simulate_env, EnvPath, ReturnIndex};
use crate::error::{Error, Result};
use crate::finite_time::{mixture_law, sample_z, FiniteTimeSampler, DEFAULT_LATTICE_CAP};
use crate::model::{build_modulation, parse_model, stationary_env, validate_network, ModulatedNetwork};
use crate::oracle::{
    build_joint_generator, default_caps, stationary_pmf, stationary_residual, transient_pmf, JointPmf,
    TruncatedJointSpace,
};
use crate::propagator::propagate;
use crate::rng::{stream, substream, DEFAULT_SEED};
use crate::stationary::{
    error_certificate, factorial_moments, prepare, sample_z_prepared, MomentMethod, MomentOptions, Prepared,
};
use crate::stats::{empirical_pmf, mean_var, total_variation};
use crate::structure::{alpha_table, check_assumption2};
use crate::fixtures;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

const TASK_CLI_PATH: u32 = 6;
const TASK_CLI_COMPARE: u32 = 7;

/// Cycles per stationary draw when neither `--n` nor `--eps` is given.
pub const DEFAULT_STATIONARY_N: usize = 100;
/// Smallest per-species cap chosen by the pilot run.
pub const CAP_FLOOR: u32 = 10;

pub const GRAMMAR: &str = r#"Model files are TOML:

  description = "optional"
  [species]
  names = ["S1", "S2"]
  [environment]
  states = ["off", "on"]
  generator = [[-1.0, 1.0], [2.0, -2.0]]
  # or: transitions = [{ from = "off", to = "on", rate = 1.0 }, ...]
  # optional: pi = [...], mass_coverage = 0.9999
  [[reactions]]
  equation = "0 -> 2 S1"          # 0 -> m S, S -> 0, S -> S'
  rate = { off = 0.0, on = 4.0 }  # or a number, or a list per state

A model argument of the form fixtures/<name> loads a built-in model
(see `envnet fixtures list`).
"#;

#[derive(Parser, Debug)]
#[command(name = "envnet", version, about = "Reaction networks in a Markov-modulated environment")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "ENVNET_THREADS")]
    threads: Option<usize>,
    /// Write CSV to this file instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Species partition, ergodicity verdict and the alpha search.
    Check(CheckArgs),
    /// Simulate environment paths.
    SimulateEnv(SimulateEnvArgs),
    /// Propagator Phi(u, t) and W(u, t) along a given path.
    Phi(PhiArgs),
    /// Law of Z(t) given an environment path.
    FiniteTime(FiniteTimeArgs),
    /// Samples from the stationary law conditional on the anchor state.
    Stationary(StationaryArgs),
    /// Stationary factorial moments.
    Moments(MomentArgs),
    /// Truncated master-equation solution.
    Oracle(OracleArgs),
    /// Total variation between the sampler and the master-equation oracle.
    Compare(CompareArgs),
    /// Built-in models.
    #[command(subcommand)]
    Fixtures(FixtureCommand),
}

#[derive(Args, Debug)]
struct CheckArgs {
    model: String,
    /// Also run the Monte Carlo alpha search.
    #[arg(long)]
    alpha: bool,
    /// Anchor state for the alpha search (default: first state).
    #[arg(long)]
    anchor: Option<String>,
    #[arg(long, default_value_t = 4)]
    alpha_max: usize,
    #[arg(long, default_value_t = 10_000)]
    replicas: usize,
}

#[derive(Args, Debug)]
struct SimulateEnvArgs {
    model: String,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    replicas: usize,
    /// Append the return times to this state.
    #[arg(long)]
    returns: Option<String>,
}

#[derive(Args, Debug)]
struct PhiArgs {
    model: String,
    /// CSV with `state` and `holding` columns, as written by simulate-env.
    #[arg(long)]
    path: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    from: f64,
    #[arg(long)]
    to: f64,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mode").required(true).args(["sample", "pmf"])))]
struct FiniteTimeArgs {
    model: String,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    x0: Option<String>,
    /// Initial counts, comma separated (default: zeros).
    #[arg(long, value_delimiter = ',')]
    z0: Vec<u64>,
    /// Use this path instead of simulating one.
    #[arg(long)]
    path: Option<PathBuf>,
    /// Draw this many samples and print their histogram.
    #[arg(long)]
    sample: Option<usize>,
    /// Print the pmf on the box 0..=zmax (one value, or one per species).
    #[arg(long, value_delimiter = ',')]
    pmf: Option<Vec<u32>>,
    #[arg(long, default_value_t = crate::quadrature::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args, Debug)]
struct StationaryArgs {
    model: String,
    #[arg(long)]
    anchor: Option<String>,
    /// Cycles per draw.
    #[arg(long, conflicts_with = "eps")]
    n: Option<usize>,
    /// Choose the cycle count from the error certificate.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Molecule totals of the closed components, comma separated.
    #[arg(long, value_delimiter = ',')]
    components: Vec<u64>,
    /// Print the error certificate and its bound table.
    #[arg(long)]
    certificate: bool,
    /// Replicas for the certificate estimates.
    #[arg(long, default_value_t = 10_000)]
    replicas: usize,
    /// Print only the summary table.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Exact,
    Corollary,
    Atoms,
}

#[derive(Args, Debug)]
struct MomentArgs {
    model: String,
    #[arg(long, default_value_t = 3)]
    q_max: u32,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 20)]
    batches: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("when").required(true).args(["t", "stationary"])))]
struct OracleArgs {
    model: String,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    stationary: bool,
    /// Per-species caps (one value, or one per species). Default: from a pilot run.
    #[arg(long, value_delimiter = ',')]
    cap: Vec<u32>,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, value_delimiter = ',')]
    z0: Vec<u64>,
    /// Largest stationary mass allowed on the lattice boundary.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000.0)]
    pilot_horizon: f64,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("when").required(true).args(["t", "stationary"])))]
struct CompareArgs {
    model: String,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    stationary: bool,
    /// Restrict the stationary comparison to one anchor.
    #[arg(long)]
    anchor: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    replicas: usize,
    /// Cycles per stationary draw.
    #[arg(long, default_value_t = DEFAULT_STATIONARY_N)]
    n: usize,
    #[arg(long, value_delimiter = ',')]
    cap: Vec<u32>,
    #[arg(long)]
    x0: Option<String>,
    /// Initial counts; for closed components they fix the conserved totals.
    #[arg(long, value_delimiter = ',')]
    z0: Vec<u64>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000.0)]
    pilot_horizon: f64,
}

#[derive(Subcommand, Debug)]
enum FixtureCommand {
    /// Names and expected verdicts.
    List,
    /// Print a model file.
    Show {
        name: String,
        /// Print the expected-results sidecar instead.
        #[arg(long)]
        expected: bool,
    },
}

#[derive(Default)]
struct Ctx {
    out: Vec<u8>,
    notes: Vec<String>,
    seed_noted: bool,
}

impl Ctx {
    fn table<R, S>(&mut self, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<S>>,
        S: AsRef<[u8]>,
    {
        if !self.out.is_empty() {
            self.out.push(b'\n');
        }
        let mut w = csv::Writer::from_writer(&mut self.out);
        w.write_record(header).map_err(std::io::Error::from)?;
        for row in rows {
            w.write_record(&row).map_err(std::io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn seed(&mut self, seed: u64) {
        if !self.seed_noted {
            self.seed_noted = true;
            self.note(format!("seed: {seed}"));
        }
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn fmt(x: f64) -> String {
    let a = x.abs();
    if x != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Violation(_) | Error::Parse(_) | Error::PreconditionFailed(_) | Error::AbsorbingState(_) => EXIT_REJECTED,
        Error::InvalidArgument(_) | Error::Io(_) | Error::SpanOutOfRange { .. } => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}\n{GRAMMAR}");
                    EXIT_USAGE
                }
            };
        }
    };
    let mut ctx = Ctx::default();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &mut ctx)),
            Err(e) => Err(Error::InvalidArgument(e.to_string())),
        },
        None => dispatch(&cli, &mut ctx),
    };
    for n in &ctx.notes {
        let _ = writeln!(err, "{n}");
    }
    let written = match &cli.output {
        Some(p) => std::fs::write(p, &ctx.out),
        None => out.write_all(&ctx.out).and_then(|_| out.flush()),
    };
    match (result, written) {
        (Err(e), _) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, Error::Parse(_)) {
                let _ = write!(err, "{GRAMMAR}");
            }
            exit_code(&e)
        }
        (Ok(()), Err(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
        (Ok(()), Ok(())) => EXIT_OK,
    }
}

fn dispatch(cli: &Cli, ctx: &mut Ctx) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Check(a) => check(ctx, a, seed),
        Command::SimulateEnv(a) => simulate(ctx, a, seed),
        Command::Phi(a) => phi(ctx, a),
        Command::FiniteTime(a) => finite_time(ctx, a, seed),
        Command::Stationary(a) => stationary(ctx, a, seed),
        Command::Moments(a) => moments(ctx, a, seed),
        Command::Oracle(a) => oracle(ctx, a, seed),
        Command::Compare(a) => compare(ctx, a, seed),
        Command::Fixtures(c) => fixture_cmd(ctx, c),
    }
}

/// Reads a model file, falling back to the built-in fixtures for
/// `fixtures/<name>`.
pub fn load_model(arg: &str) -> Result<ModulatedNetwork> {
    let text = match std::fs::read_to_string(arg) {
        Ok(t) => t,
        Err(e) => {
            let name = arg.strip_prefix("fixtures/").map(|n| n.trim_end_matches(".toml"));
            match name.and_then(fixtures::get) {
                Some(f) => f.model.to_string(),
                None => return Err(Error::InvalidArgument(format!("cannot open model `{arg}`: {e}"))),
            }
        }
    };
    validate_network(&parse_model(&text)?)
}

fn state(net: &ModulatedNetwork, key: &Option<String>) -> Result<usize> {
    key.as_deref().map_or(Ok(0), |k| net.env().resolve(k))
}

fn initial_counts(net: &ModulatedNetwork, z0: &[u64]) -> Result<Vec<u64>> {
    match z0.len() {
        0 => Ok(vec![0; net.dim()]),
        n if n == net.dim() => Ok(z0.to_vec()),
        n => Err(Error::InvalidArgument(format!("--z0 has {n} entries, expected {}", net.dim()))),
    }
}

fn per_species(values: &[u32], d: usize, what: &str) -> Result<Vec<u32>> {
    match values.len() {
        1 => Ok(vec![values[0]; d]),
        n if n == d => Ok(values.to_vec()),
        n => Err(Error::InvalidArgument(format!("{what} has {n} entries, expected 1 or {d}"))),
    }
}

fn species_names(net: &ModulatedNetwork) -> Vec<&str> {
    net.species().iter().map(|s| s.name.as_str()).collect()
}

/// Reads a path CSV. Only the first replica is used; reading stops at the
/// first row whose width differs from the header.
pub fn read_path(net: &ModulatedNetwork, file: &Path) -> Result<EnvPath> {
    let bad = |e: csv::Error| Error::InvalidArgument(format!("path file {}: {e}", file.display()));
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(file).map_err(bad)?;
    let headers = rdr.headers().map_err(bad)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (si, hi) = match (col("state"), col("holding")) {
        (Some(s), Some(h)) => (s, h),
        _ => return Err(Error::InvalidArgument("path file needs `state` and `holding` columns".into())),
    };
    let ri = col("replica");
    let mut first = None;
    let mut holdings = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        if rec.len() != headers.len() {
            break;
        }
        if let Some(ri) = ri {
            let r = rec[ri].to_string();
            match &first {
                None => first = Some(r),
                Some(f) if *f != r => continue,
                _ => {}
            }
        }
        let x = net.env().resolve(rec[si].trim())?;
        let h: f64 = rec[hi]
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad holding time `{}`", &rec[hi])))?;
        holdings.push((x, h));
    }
    let Some(&(x0, _)) = holdings.first() else {
        return Err(Error::InvalidArgument("path file has no segments".into()));
    };
    EnvPath::from_holdings(x0, &holdings)
}

fn check(ctx: &mut Ctx, a: &CheckArgs, seed: u64) -> Result<()> {
    let net = load_model(&a.model)?;
    let pi = stationary_env(net.env())?;
    let v = check_assumption2(&net, &pi);
    let p = &v.partition;
    let names = species_names(&net);
    let rows = (0..net.dim()).map(|i| {
        let (class, comp) = match p.component_of(i) {
            Some(k) => ("closed", (k + 1).to_string()),
            None if p.produced.contains(&i) => ("produced", String::new()),
            None => ("transient", String::new()),
        };
        vec![names[i].to_string(), class.to_string(), comp]
    });
    ctx.table(&["species", "class", "component"], rows)?;
    let verdict = if v.satisfied { "satisfied" } else { "violated" };
    ctx.table(
        &["property", "value"],
        vec![
            vec!["assumption2".to_string(), verdict.to_string()],
            vec!["mean_production".to_string(), fmt(v.mean_production)],
            vec!["closed_components".to_string(), p.h().to_string()],
        ],
    )?;
    if !v.violations.is_empty() {
        let rows = v.violations.iter().map(|(i, r)| vec![names[*i].to_string(), r.clone()]);
        ctx.table(&["species", "violation"], rows)?;
    }
    ctx.note(format!("Assumption 2: {verdict}"));
    if a.alpha {
        ctx.seed(seed);
        let x = state(&net, &a.anchor)?;
        let report = alpha_table(&net, x, a.alpha_max, a.replicas, seed)?;
        let rows = report
            .table
            .iter()
            .map(|r| vec![r.alpha.to_string(), fmt(r.estimate), fmt(r.ucb99)]);
        ctx.table(&["alpha", "estimate", "ucb99"], rows)?;
        let chosen = report.alpha.map_or("none".to_string(), |a| a.to_string());
        ctx.table(
            &["anchor", "alpha"],
            vec![vec![net.env().state_name(x).to_string(), chosen]],
        )?;
        if let Some(n) = &report.note {
            ctx.note(n.clone());
        }
    }
    Ok(())
}

fn simulate(ctx: &mut Ctx, a: &SimulateEnvArgs, seed: u64) -> Result<()> {
    let net = load_model(&a.model)?;
    let x0 = state(&net, &a.x0)?;
    ctx.seed(seed);
    let env = net.env();
    let paths: Vec<EnvPath> = (0..a.replicas as u64)
        .into_par_iter()
        .map(|r| simulate_env(env, x0, a.horizon, &mut stream(seed, substream(TASK_CLI_PATH, r))))
        .collect::<Result<_>>()?;
    let rows = paths.iter().enumerate().flat_map(|(r, p)| {
        p.segments().iter().map(move |s| {
            vec![r.to_string(), fmt(s.start), env.state_name(s.state).to_string(), fmt(s.holding)]
        })
    });
    ctx.table(&["replica", "t_start", "state", "holding"], rows)?;
    if let Some(key) = &a.returns {
        let x = env.resolve(key)?;
        let rows = paths.iter().enumerate().flat_map(|(r, p)| {
            ReturnIndex::of(p, x)
                .taus
                .into_iter()
                .enumerate()
                .map(move |(k, tau)| vec![r.to_string(), k.to_string(), fmt(tau)])
        });
        ctx.table(&["replica", "k", "tau"], rows)?;
    }
    Ok(())
}

fn phi(ctx: &mut Ctx, a: &PhiArgs) -> Result<()> {
    let net = load_model(&a.model)?;
    let path = read_path(&net, &a.path)?;
    let p = propagate(&build_modulation(&net), &path, a.from, a.to)?;
    let names = species_names(&net);
    let mut header = vec!["species".to_string()];
    header.extend(names.iter().map(|n| format!("from_{n}")));
    header.push("w".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let d = net.dim();
    let rows = (0..d).map(|i| {
        let mut row = vec![names[i].to_string()];
        row.extend((0..d).map(|j| fmt(p.phi[(i, j)])));
        row.push(fmt(p.w[i]));
        row
    });
    ctx.table(&header, rows)
}

fn with_columns<'a>(names: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    names.iter().chain(extra).copied().collect()
}

fn histogram(ctx: &mut Ctx, net: &ModulatedNetwork, samples: &[Vec<u64>]) -> Result<()> {
    let mut counts: BTreeMap<&[u64], usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.as_slice()).or_default() += 1;
    }
    let n = samples.len() as f64;
    let rows = counts.iter().map(|(z, &c)| {
        let mut row: Vec<String> = z.iter().map(u64::to_string).collect();
        row.push(c.to_string());
        row.push(fmt(c as f64 / n));
        row
    });
    ctx.table(&with_columns(&species_names(net), &["count", "freq"]), rows)
}

fn finite_time(ctx: &mut Ctx, a: &FiniteTimeArgs, seed: u64) -> Result<()> {
    let net = load_model(&a.model)?;
    let m = build_modulation(&net);
    let z0 = initial_counts(&net, &a.z0)?;
    let path = match &a.path {
        Some(p) => read_path(&net, p)?,
        None => {
            ctx.seed(seed);
            let x0 = state(&net, &a.x0)?;
            simulate_env(net.env(), x0, a.t, &mut stream(seed, substream(TASK_CLI_PATH, 0)))?
        }
    };
    if let Some(zmax) = &a.pmf {
        let zmax = per_species(zmax, net.dim(), "--pmf")?;
        let cap = zmax.iter().copied().max().unwrap_or(0).max(DEFAULT_LATTICE_CAP);
        let table = mixture_law(&m, &path, a.t, &z0, a.tol)?.with_cap(cap).pmf_table(&zmax)?;
        let rows = (0..table.values.len()).map(|k| {
            let mut row: Vec<String> = table.point(k).iter().map(u32::to_string).collect();
            row.push(fmt(table.values[k]));
            row
        });
        ctx.table(&with_columns(&species_names(&net), &["p"]), rows)?;
        ctx.table(&["quantity", "value"], vec![vec!["mass_in_box".to_string(), fmt(table.total())]])?;
    }
    if let Some(n) = a.sample {
        ctx.seed(seed);
        let samples = sample_z(&m, &path, a.t, &z0, seed, n)?;
        histogram(ctx, &net, &samples)?;
    }
    Ok(())
}

fn closed_totals(prep: &Prepared, given: &[u64]) -> Result<Vec<u64>> {
    let h = prep.partition.h();
    if given.len() != h {
        return Err(Error::InvalidArgument(format!(
            "model has {h} closed components; --components has {} entries",
            given.len()
        )));
    }
    Ok(given.to_vec())
}

fn summary(ctx: &mut Ctx, net: &ModulatedNetwork, samples: &[Vec<u64>]) -> Result<()> {
    let names = species_names(net);
    let rows = (0..net.dim()).map(|i| {
        let v: Vec<f64> = samples.iter().map(|s| s[i] as f64).collect();
        let (mean, var) = mean_var(&v);
        let n = v.len() as f64;
        let f2 = v.iter().map(|z| z * (z - 1.0)).sum::<f64>() / n;
        let f3 = v.iter().map(|z| z * (z - 1.0) * (z - 2.0)).sum::<f64>() / n;
        vec![names[i].to_string(), fmt(mean), fmt(var), fmt(f2), fmt(f3)]
    });
    ctx.table(&["species", "mean", "variance", "fact2", "fact3"], rows)
}

const BOUND_GRID: [usize; 10] = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000];

fn stationary(ctx: &mut Ctx, a: &StationaryArgs, seed: u64) -> Result<()> {
    let net = load_model(&a.model)?;
    let x = state(&net, &a.anchor)?;
    let prep = prepare(&net, x)?;
    let counts = closed_totals(&prep, &a.components)?;
    ctx.seed(seed);
    let mut n = a.n;
    if a.certificate || a.eps.is_some() {
        let c = error_certificate(&net, x, seed, a.replicas)?;
        ctx.table(
            &["anchor", "m_hat", "m_se", "r_hat", "r_low", "r_high", "iterations"],
            vec![vec![
                net.env().state_name(x).to_string(),
                fmt(c.m_hat),
                fmt(c.m_se),
                fmt(c.r_hat),
                fmt(c.r_ci.0),
                fmt(c.r_ci.1),
                c.iterations.to_string(),
            ]],
        )?;
        let rows = BOUND_GRID
            .iter()
            .map(|&k| vec![k.to_string(), c.bound(k).map_or("nan".into(), fmt)]);
        ctx.table(&["n", "bound"], rows)?;
        if let Some(eps) = a.eps {
            let k = c
                .iterations_for(eps)
                .ok_or_else(|| Error::PreconditionFailed("certificate rate is not positive".into()))?;
            ctx.table(&["eps", "n"], vec![vec![fmt(eps), k.to_string()]])?;
            n = Some(k);
        }
    }
    let n = n.unwrap_or_else(|| {
        ctx.note(format!("using n = {DEFAULT_STATIONARY_N} cycles"));
        DEFAULT_STATIONARY_N
    });
    if a.samples > 0 {
        let samples = sample_z_prepared(&prep, &counts, n, seed, a.samples)?;
        if !a.summary_only {
            let rows = samples.iter().map(|s| s.iter().map(u64::to_string).collect::<Vec<_>>());
            ctx.table(&species_names(&net), rows)?;
        }
        summary(ctx, &net, &samples)?;
    }
    Ok(())
}

fn moments(ctx: &mut Ctx, a: &MomentArgs, seed: u64) -> Result<()> {
    let net = load_model(&a.model)?;
    let pi = stationary_env(net.env())?;
    ctx.seed(seed);
    let opts = MomentOptions {
        q_max: a.q_max,
        samples: a.samples,
        iterations: a.iterations,
        batches: a.batches,
        method: match a.method {
            MethodArg::Exact => MomentMethod::Exact,
            MethodArg::Corollary => MomentMethod::Corollary,
            MethodArg::Atoms => MomentMethod::Atoms,
        },
    };
    let fm = factorial_moments(&net, &pi, &opts, seed)?;
    let names = species_names(&net);
    let rows = fm
        .rows
        .iter()
        .map(|r| vec![r.q.to_string(), names[r.species].to_string(), fmt(r.value), fmt(r.se)]);
    ctx.table(&["q", "species", "value", "se"], rows)
}

fn lattice(ctx: &mut Ctx, net: &ModulatedNetwork, caps: &[u32], x0: usize, z0: &[u64], pilot: f64, seed: u64) -> Result<TruncatedJointSpace> {
    let caps = if caps.is_empty() {
        ctx.seed(seed);
        default_caps(net, x0, z0, pilot, seed, CAP_FLOOR)?
    } else {
        per_species(caps, net.dim(), "--cap")?
    };
    ctx.note(format!(
        "caps: {}",
        caps.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
    ));
    TruncatedJointSpace::new(net.env().len(), &caps)
}

fn oracle(ctx: &mut Ctx, a: &OracleArgs, seed: u64) -> Result<()> {
    let net = load_model(&a.model)?;
    let x0 = state(&net, &a.x0)?;
    let z0 = initial_counts(&net, &a.z0)?;
    let space = lattice(ctx, &net, &a.cap, x0, &z0, a.pilot_horizon, seed)?;
    let gen = build_joint_generator(&net, &space)?;
    let pmf = match a.t {
        Some(t) => transient_pmf(&gen, x0, &z0, t)?,
        None => stationary_pmf(&gen, x0, &z0, a.tol)?,
    };
    let rows = pmf.pmf.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(k, &p)| {
        let (x, z) = space.state(k);
        let mut row = vec![net.env().state_name(x).to_string()];
        row.extend(z.iter().map(u64::to_string));
        row.push(fmt(p));
        row
    });
    ctx.table(&with_columns(&["env"], &with_columns(&species_names(&net), &["p"])), rows)?;
    let mut q = vec![vec!["overflow".to_string(), fmt(pmf.overflow)]];
    if a.stationary {
        q.push(vec!["residual".to_string(), fmt(stationary_residual(&gen, &pmf))]);
    }
    ctx.table(&["quantity", "value"], q)
}

fn as_map(pmf: &JointPmf, values: &[f64]) -> BTreeMap<Vec<u64>, f64> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| (pmf.point(k), p))
        .collect()
}

fn compare(ctx: &mut Ctx, a: &CompareArgs, seed: u64) -> Result<()> {
    let net = load_model(&a.model)?;
    let x0 = state(&net, &a.x0)?;
    let z0 = initial_counts(&net, &a.z0)?;
    let space = lattice(ctx, &net, &a.cap, x0, &z0, a.pilot_horizon, seed)?;
    let gen = build_joint_generator(&net, &space)?;
    ctx.seed(seed);
    let header = ["mode", "state", "samples", "tv", "overflow"];
    if let Some(t) = a.t {
        let exact = transient_pmf(&gen, x0, &z0, t)?;
        let reference = as_map(&exact, &exact.z_marginal());
        let m = build_modulation(&net);
        let env = net.env();
        let samples: Vec<Vec<u64>> = (0..a.replicas as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, substream(TASK_CLI_COMPARE, r));
                let path = simulate_env(env, x0, t, &mut rng)?;
                Ok(FiniteTimeSampler::new(&m, &path, t)?.draw(&z0, &mut rng))
            })
            .collect::<Result<_>>()?;
        let tv = total_variation(&empirical_pmf(&samples), &reference);
        return ctx.table(
            &header,
            vec![vec![
                "finite-time".to_string(),
                String::new(),
                a.replicas.to_string(),
                fmt(tv),
                fmt(exact.overflow),
            ]],
        );
    }
    let exact = stationary_pmf(&gen, x0, &z0, a.tol)?;
    let anchors: Vec<usize> = match &a.anchor {
        Some(k) => vec![net.env().resolve(k)?],
        None => (0..net.env().len()).collect(),
    };
    let mut rows = Vec::new();
    for x in anchors {
        let prep = prepare(&net, x)?;
        let totals: Vec<u64> = prep
            .partition
            .closed_components
            .iter()
            .map(|c| c.iter().map(|&i| z0[i]).sum())
            .collect();
        let samples = sample_z_prepared(&prep, &totals, a.n, seed, a.replicas)?;
        let tv = total_variation(&empirical_pmf(&samples), &as_map(&exact, &exact.conditional(x)));
        rows.push(vec![
            "stationary".to_string(),
            net.env().state_name(x).to_string(),
            a.replicas.to_string(),
            fmt(tv),
            fmt(exact.overflow),
        ]);
    }
    ctx.table(&header, rows)
}

fn fixture_cmd(ctx: &mut Ctx, c: &FixtureCommand) -> Result<()> {
    match c {
        FixtureCommand::List => {
            let rows = fixtures::FIXTURES
                .iter()
                .map(|f| Ok(vec![f.name.to_string(), f.expected()?.verdict]))
                .collect::<Result<Vec<_>>>()?;
            ctx.table(&["name", "verdict"], rows)
        }
        FixtureCommand::Show { name, expected } => {
            let f = fixtures::get(name).ok_or_else(|| Error::InvalidArgument(format!("no fixture named `{name}`")))?;
            ctx.out.extend_from_slice(if *expected { f.expected } else { f.model }.as_bytes());
            Ok(())
        }
    }
}
