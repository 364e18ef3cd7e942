//! The `pinning` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
//! 3 verification failure.

pub mod suites;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::{Environment, Geometry};
use crate::error::Error;
use crate::gff::{self, GffInstance, GffState};
use crate::psi;
use crate::rng::{self, Purpose};
use crate::sampler::sample_path;
use crate::solver::PinningInstance;
use crate::walk::{ReturnProbTable, WalkKernel};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_VERIFICATION: u8 = 3;

/// Column header of `pinning sweep`.
pub const SWEEP_HEADER: &str = "family,N,eta,seed,density,logZ,expected_contacts,contact_fraction";

#[derive(Debug, Parser)]
#[command(name = "pinning", version, about = "Pinned polymers and interfaces in diluted environments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an environment and write it as JSON.
    GenEnv(GenEnvArgs),
    /// Solve the polymer model exactly and write a JSON summary.
    Solve(SolveArgs),
    /// Sample polymer paths; writes the first trajectory as CSV.
    Sample(SampleArgs),
    /// Contact fraction over a grid of N and η.
    Sweep(SweepArgs),
    /// Run a property suite; exits with 3 if any check fails.
    Verify(VerifyArgs),
    /// Evaluate Ψ and Ψ_per on a gap vector.
    Psi(PsiArgs),
    /// Run the Gibbs sampler of the pinned interface.
    Gff(GffArgs),
    /// Export the return probabilities of the reference walk.
    Returns(ReturnsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Bernoulli,
    Periodic,
    Block,
    Vanishing,
}

impl EnvKind {
    fn name(self) -> &'static str {
        match self {
            EnvKind::Bernoulli => "bernoulli",
            EnvKind::Periodic => "periodic",
            EnvKind::Block => "block",
            EnvKind::Vanishing => "vanishing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryArg {
    Segment,
    Square,
}

impl From<GeometryArg> for Geometry {
    fn from(g: GeometryArg) -> Self {
        match g {
            GeometryArg::Segment => Geometry::Segment,
            GeometryArg::Square => Geometry::Square,
        }
    }
}

/// Family parameters shared by `gen-env`, `sweep` and `gff`.
#[derive(Debug, Clone, Args)]
pub struct FamilyArgs {
    /// Site density (bernoulli).
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    /// Spacing of the ones (periodic).
    #[arg(long, default_value_t = 2)]
    pub gap: usize,
    /// Densities of the three thirds (block).
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.0, 0.8])]
    pub profile: Vec<f64>,
}

impl FamilyArgs {
    fn build(&self, kind: EnvKind, n: usize, geometry: Geometry, seed: u64) -> crate::Result<Environment> {
        let segment_only = |kind: EnvKind| {
            if geometry != Geometry::Segment {
                Err(Error::Geometry(format!("the {} family lives on a segment", kind.name())))
            } else {
                Ok(())
            }
        };
        match kind {
            EnvKind::Bernoulli => Environment::bernoulli(n, geometry, self.density, seed),
            EnvKind::Periodic => Environment::periodic(n, geometry, self.gap),
            EnvKind::Block => {
                segment_only(kind)?;
                let thirds: [f64; 3] = self
                    .profile
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::invalid("--profile takes three densities"))?;
                Environment::block(n, thirds, seed)
            }
            EnvKind::Vanishing => {
                segment_only(kind)?;
                Environment::vanishing(n)
            }
        }
    }
}

#[derive(Debug, Args)]
pub struct GenEnvArgs {
    #[arg(long, value_enum)]
    pub kind: EnvKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = GeometryArg::Segment)]
    pub geometry: GeometryArg,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Environment JSON written by `gen-env`.
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub eta: f64,
    /// Transverse dimension of the walk, 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Summary JSON; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-site CSV `j,t_j,mu_j`.
    #[arg(long)]
    pub marginals: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub eta: f64,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trajectory CSV of the first sample; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pinned set of the first sample, one site per line.
    #[arg(long)]
    pub pinned: Option<PathBuf>,
    /// JSON with the sample mean of the contact count and the exact value.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub env_family: EnvKind,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub eta_list: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Environments per grid point; replica `r` uses seed `seed + r`.
    #[arg(long, default_value_t = 1)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Worker threads; all cores if omitted.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Prepend a `# generated at <unix time>` line.
    #[arg(long)]
    pub timestamp: bool,
    /// Output CSV; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    DpOracle,
    Identity,
    Psi,
    Gff,
    Cells,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random pairs per (m, r) in the convexity check.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Report JSON; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PsiArgs {
    /// Gaps Δ_1..Δ_m.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gaps: Vec<f64>,
    #[arg(long)]
    pub r: usize,
    /// Also run the minimiser of Ψ_per from the given gaps.
    #[arg(long)]
    pub minimize: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GffArgs {
    /// Environment JSON on a square; `--kind` is used if omitted.
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EnvKind::Bernoulli)]
    pub kind: EnvKind,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub eta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary JSON; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Final heights as an N x N CSV grid.
    #[arg(long)]
    pub heights: Option<PathBuf>,
    /// Final pinned mask as an N x N CSV grid of 0/1.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReturnsArgs {
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long)]
    pub max: usize,
    /// CSV `k,p_k`; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Why a command did not succeed, with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Verification(_) => EXIT_VERIFICATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) | Error::NotConverged { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Outcome {
    match cli.command {
        Command::GenEnv(a) => gen_env(a),
        Command::Solve(a) => solve(a),
        Command::Sample(a) => sample(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
        Command::Psi(a) => psi_cmd(a),
        Command::Gff(a) => gff_cmd(a),
        Command::Returns(a) => returns(a),
    }
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Outcome {
    let mut out = sink(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn require_finite(what: &str, values: &[f64]) -> Outcome {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("non-finite {what}")))
    }
}

fn load_segment(path: &Path) -> std::result::Result<Environment, Failure> {
    let env = Environment::load(path)?;
    env.require(Geometry::Segment)?;
    Ok(env)
}

fn gen_env(a: GenEnvArgs) -> Outcome {
    let env = a.family.build(a.kind, a.n, a.geometry.into(), a.seed)?;
    let mut out = sink(a.out.as_deref())?;
    writeln!(out, "{}", env.to_json()?)?;
    out.flush()?;
    Ok(())
}

fn solve(a: SolveArgs) -> Outcome {
    let env = load_segment(&a.env)?;
    let kernel = WalkKernel::lazy(a.dim)?;
    let table = kernel.return_probabilities(env.n());
    let sol = PinningInstance::new(&env, kernel, a.eta)?.solve(&table)?;
    require_finite("log Z", &[sol.log_z, sol.expected_contacts])?;
    if let Some(path) = a.marginals.as_deref() {
        let mut out = sink(Some(path))?;
        sol.write_csv(&mut out)?;
        out.flush()?;
    }
    write_json(a.out.as_deref(), &sol.summary(env.density()))
}

#[derive(Serialize)]
struct SampleSummary {
    #[serde(rename = "N")]
    n: usize,
    eta: f64,
    samples: usize,
    seed: u64,
    mean_contacts: f64,
    stderr: f64,
    expected_contacts: f64,
}

fn sample(a: SampleArgs) -> Outcome {
    let env = load_segment(&a.env)?;
    let kernel = WalkKernel::lazy(a.dim)?;
    let table = kernel.return_probabilities(env.n());
    let instance = PinningInstance::new(&env, kernel, a.eta)?;
    let mut rng = rng::substream(a.seed, Purpose::Bridge, 0, 0);
    let samples = sample_path(&instance, &table, a.samples, &mut rng)?;
    let first = &samples.trajectories[0];
    let mut out = sink(a.out.as_deref())?;
    first.write_csv(&mut out)?;
    out.flush()?;
    if let Some(path) = a.pinned.as_deref() {
        let mut out = sink(Some(path))?;
        first.write_pinned(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = a.summary.as_deref() {
        let exact = instance.solve(&table)?.expected_contacts;
        write_json(
            Some(path),
            &SampleSummary {
                n: env.n(),
                eta: a.eta,
                samples: a.samples,
                seed: a.seed,
                mean_contacts: samples.mean_contacts,
                stderr: samples.stderr,
                expected_contacts: exact,
            },
        )?;
    }
    Ok(())
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub family: EnvKind,
    pub n: usize,
    pub eta: f64,
    pub seed: u64,
    pub density: f64,
    pub log_z: f64,
    pub expected_contacts: f64,
    pub contact_fraction: f64,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.family.name(),
            self.n,
            self.eta,
            self.seed,
            self.density,
            self.log_z,
            self.expected_contacts,
            self.contact_fraction
        )
    }
}

/// Solves every `(N, η, replica)` point; rows sorted by `N`, then `η`, then seed.
pub fn sweep_rows(a: &SweepArgs) -> std::result::Result<Vec<SweepRow>, Failure> {
    if a.n_list.is_empty() || a.eta_list.is_empty() {
        return Err(Failure::Usage("empty --n-list or --eta-list".into()));
    }
    if a.replicas == 0 {
        return Err(Failure::Usage("--replicas must be at least 1".into()));
    }
    let kernel = WalkKernel::lazy(a.dim)?;
    let mut ns = a.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut etas = a.eta_list.clone();
    if etas.iter().any(|e| !e.is_finite()) {
        return Err(Failure::Usage("non-finite η".into()));
    }
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let table = ReturnProbTable::new(kernel.dimension(), *ns.last().unwrap());
    let mut grid = Vec::new();
    for &n in &ns {
        for &eta in &etas {
            for r in 0..a.replicas {
                grid.push((n, eta, a.seed.wrapping_add(r)));
            }
        }
    }
    let compute = || -> std::result::Result<Vec<SweepRow>, Failure> {
        grid.par_iter()
            .map(|&(n, eta, seed)| {
                let env = a.family.build(a.env_family, n, Geometry::Segment, seed)?;
                let sol = PinningInstance::new(&env, kernel, eta)?.solve(&table)?;
                require_finite("log Z", &[sol.log_z, sol.expected_contacts])?;
                Ok(SweepRow {
                    family: a.env_family,
                    n,
                    eta,
                    seed,
                    density: env.density(),
                    log_z: sol.log_z,
                    expected_contacts: sol.expected_contacts,
                    contact_fraction: sol.contact_fraction(),
                })
            })
            .collect()
    };
    match a.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Failure::Usage(e.to_string()))?
            .install(compute),
        None => compute(),
    }
}

fn sweep(a: SweepArgs) -> Outcome {
    let rows = sweep_rows(&a)?;
    let mut out = sink(a.out.as_deref())?;
    if a.timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(out, "# generated at {secs}")?;
    }
    writeln!(out, "{SWEEP_HEADER}")?;
    for row in &rows {
        writeln!(out, "{}", row.to_csv())?;
    }
    out.flush()?;
    Ok(())
}

fn verify(a: VerifyArgs) -> Outcome {
    let report = match a.suite {
        Suite::DpOracle => suites::dp_oracle(a.seed)?,
        Suite::Identity => suites::identity(a.seed)?,
        Suite::Psi => suites::psi_suite(a.seed, a.trials)?,
        Suite::Gff => suites::gff_suite(a.seed)?,
        Suite::Cells => suites::cells(a.seed, 1000)?,
    };
    write_json(a.out.as_deref(), &report)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Verification(format!("suite {} failed", report.suite)))
    }
}

#[derive(Serialize)]
struct PsiReport {
    m: usize,
    r: usize,
    psi: f64,
    psi_per: f64,
    uniform_psi_per: f64,
    minimizer: Option<Vec<f64>>,
    minimum: Option<f64>,
}

fn psi_cmd(a: PsiArgs) -> Outcome {
    let m = a.gaps.len();
    let budget: f64 = a.gaps.iter().sum();
    let g = psi::GapVector::new(a.gaps, budget)?;
    let chain = psi::compare_psi_psiper(&g, a.r)?;
    let (minimizer, minimum) = if a.minimize {
        let min = psi::minimize_psi_per(a.r, &g, f64::INFINITY)?;
        (Some(min.point.gaps().to_vec()), Some(min.value))
    } else {
        (None, None)
    };
    write_json(
        a.out.as_deref(),
        &PsiReport {
            m,
            r: a.r,
            psi: chain.psi,
            psi_per: chain.psi_per,
            uniform_psi_per: chain.uniform_psi_per,
            minimizer,
            minimum,
        },
    )
}

#[derive(Serialize)]
struct GffSummary {
    #[serde(rename = "N")]
    n: usize,
    eta: f64,
    density: f64,
    sweeps: usize,
    burnin: usize,
    seed: u64,
    pinned_fraction: f64,
    stderr: f64,
}

fn gff_cmd(a: GffArgs) -> Outcome {
    let env = match a.env.as_deref() {
        Some(path) => Environment::load(path)?,
        None => a.family.build(a.kind, a.n, Geometry::Square, a.seed)?,
    };
    let instance = GffInstance::new(env, a.eta)?;
    if a.sweeps <= a.burnin {
        return Err(Failure::Usage("--sweeps must exceed --burnin".into()));
    }
    let mut rng = rng::substream(a.seed, Purpose::Gibbs, 0, 0);
    let mut state = GffState::flat(instance.n());
    let volume = (instance.n() * instance.n()) as f64;
    let mut series = Vec::with_capacity(a.sweeps - a.burnin);
    for s in 0..a.sweeps {
        gff::gibbs_sweep(&instance, &mut state, &mut rng);
        if s >= a.burnin {
            series.push(state.pinned_count() as f64 / volume);
        }
    }
    require_finite("heights", &state.heights)?;
    let est = gff::batch_means(&series);
    if let Some(path) = a.heights.as_deref() {
        let mut out = sink(Some(path))?;
        state.write_heights_csv(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = a.mask.as_deref() {
        let mut out = sink(Some(path))?;
        state.write_mask_csv(&mut out)?;
        out.flush()?;
    }
    write_json(
        a.out.as_deref(),
        &GffSummary {
            n: instance.n(),
            eta: a.eta,
            density: instance.env().density(),
            sweeps: a.sweeps,
            burnin: a.burnin,
            seed: a.seed,
            pinned_fraction: est.mean,
            stderr: est.stderr,
        },
    )
}

fn returns(a: ReturnsArgs) -> Outcome {
    let kernel = WalkKernel::lazy(a.dim)?;
    let table = kernel.return_probabilities(a.max);
    let mut out = sink(a.out.as_deref())?;
    writeln!(out, "k,p_k")?;
    for (k, p) in table.as_slice().iter().enumerate() {
        writeln!(out, "{k},{p}")?;
    }
    out.flush()?;
    Ok(())
}
