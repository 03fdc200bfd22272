//! Front end for the `hopf-hj` binary: JSON run configs, single-point and grid
//! evaluation, trajectory export, timing runs and the verification suites.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use hopf_hj::batch::{
    benchmark_general, benchmark_quadratic, evaluate_grid, reference_problem, write_grid_csv, write_trajectory_csv,
    BenchMode, BenchStats, GridRequest, ReferenceCost,
};
use hopf_hj::hopf_solver::{optimal_trajectory, solve, uniform_times, AdmmConfig, ProblemDescriptor, ProblemSpec};
use hopf_hj::initial_costs::InitialCostSpec;
use hopf_hj::HjError;
use serde::{Deserialize, Serialize};

pub mod verify;

pub use verify::{run_suite, CheckOutcome, Suite};

#[derive(Debug, Parser)]
#[command(name = "hopf-hj", version, about = "Grid-free solver for HJ equations with piecewise affine potentials")]
pub struct Args {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output path; overrides `output_path` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid evaluation (default: all logical cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress progress and summary messages.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required for every query except `benchmark` and `verify`.
    #[serde(default)]
    pub problem: Option<ProblemDescriptor>,
    pub query: Query,
    #[serde(default)]
    pub admm: AdmmConfig,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub on_nonconvergence: OnNonConvergence,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnNonConvergence {
    #[default]
    Fail,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Query {
    SinglePoint {
        x: Vec<f64>,
        t: f64,
    },
    Grid(GridRequest),
    Trajectory {
        x: Vec<f64>,
        t: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    Benchmark {
        dims: Vec<usize>,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default = "default_mode")]
        mode: BenchMode,
        #[serde(default = "default_family")]
        cost: ReferenceCost,
    },
    Verify {
        suite: Suite,
    },
}

fn default_samples() -> usize {
    101
}

fn default_points() -> usize {
    102_400
}

fn default_mode() -> BenchMode {
    BenchMode::Tolerance
}

fn default_family() -> ReferenceCost {
    ReferenceCost::Quadratic
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::NotConverged(_) | CliError::Verification(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<HjError> for CliError {
    fn from(e: HjError) -> Self {
        match e {
            HjError::NewtonNotConverged { .. } | HjError::DescentNotConverged(_) | HjError::Internal(_) => {
                CliError::NotConverged(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

/// What a run produced, for the caller to report.
#[derive(Debug, Clone, PartialEq)]
pub enum RunSummary {
    Single(SinglePointReport),
    Files(Vec<PathBuf>),
    Printed,
    Benchmark(Vec<BenchStats>),
    Verify(Vec<CheckOutcome>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinglePointReport {
    pub value: f64,
    pub p_star: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub branch: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn problem(cfg: &RunConfig) -> Result<ProblemSpec, CliError> {
    let desc = cfg
        .problem
        .clone()
        .ok_or_else(|| CliError::Config("this query needs a `problem`".into()))?;
    Ok(ProblemSpec::from_descriptor(desc)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

/// Writes through `f` to `path`, or to stdout when no path is set.
fn emit<F>(path: Option<&Path>, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

/// `{stem}_t{k}.{ext}` next to `base`.
pub fn grid_file_name(base: &Path, k: usize) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "grid".into());
    let ext = base.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    base.with_file_name(format!("{stem}_t{k}.{ext}"))
}

fn check_converged(cfg: &RunConfig, bad: usize, what: &str, quiet: bool) -> Result<(), CliError> {
    if bad == 0 {
        return Ok(());
    }
    let msg = format!("{bad} {what} hit the ADMM iteration limit ({})", cfg.admm.max_iter);
    match cfg.on_nonconvergence {
        OnNonConvergence::Fail => Err(CliError::NotConverged(msg)),
        OnNonConvergence::Warn => {
            if !quiet {
                eprintln!("warning: {msg}");
            }
            Ok(())
        }
    }
}

/// Runs one configuration. Grid evaluation uses the current rayon pool.
pub fn run(cfg: &RunConfig, quiet: bool) -> Result<RunSummary, CliError> {
    cfg.admm.validate()?;
    let out = cfg.output_path.as_deref();
    match &cfg.query {
        Query::SinglePoint { x, t } => {
            let spec = problem(cfg)?;
            let r = solve(x, *t, &spec, &cfg.admm)?;
            check_converged(cfg, usize::from(!r.converged), "point", quiet)?;
            let report = SinglePointReport {
                value: r.value,
                p_star: r.p_star,
                iterations: r.iterations,
                converged: r.converged,
                branch: r.branch,
            };
            let text = serde_json::to_string(&report).map_err(|e| CliError::Config(e.to_string()))?;
            emit(out, |w| writeln!(w, "{text}"))?;
            Ok(RunSummary::Single(report))
        }
        Query::Grid(req) => {
            let spec = problem(cfg)?;
            let base = out.ok_or_else(|| CliError::Config("grid queries need an output path".into()))?;
            let slices = evaluate_grid(&spec, req, &cfg.admm)?;
            let bad = slices.iter().flatten().filter(|p| !p.converged).count();
            check_converged(cfg, bad, "grid points", quiet)?;
            let with_branch = matches!(spec.cost(), InitialCostSpec::MinOfQuadratics { .. });
            let mut files = Vec::with_capacity(slices.len());
            for (k, slice) in slices.iter().enumerate() {
                let path = grid_file_name(base, k);
                emit(Some(&path), |w| write_grid_csv(w, req.axes, slice, with_branch))?;
                files.push(path);
            }
            Ok(RunSummary::Files(files))
        }
        Query::Trajectory { x, t, samples } => {
            let spec = problem(cfg)?;
            if *samples < 2 {
                return Err(CliError::Config("trajectory needs at least 2 samples".into()));
            }
            if !(*t > 0.0) {
                return Err(CliError::Config("trajectory needs t > 0".into()));
            }
            let r = solve(x, *t, &spec, &cfg.admm)?;
            check_converged(cfg, usize::from(!r.converged), "point", quiet)?;
            let sample = optimal_trajectory(x, *t, &r, &spec, &uniform_times(*t, *samples))?;
            emit(out, |w| write_trajectory_csv(w, &sample))?;
            Ok(match out {
                Some(p) => RunSummary::Files(vec![p.to_path_buf()]),
                None => RunSummary::Printed,
            })
        }
        Query::Benchmark { dims, points, mode, cost } => {
            if dims.is_empty() || dims.contains(&0) {
                return Err(CliError::Config("benchmark dims must be non-empty and positive".into()));
            }
            let mut rows = Vec::with_capacity(dims.len());
            for &n in dims {
                let spec = reference_problem(n, *cost)?;
                let stats = match cost {
                    ReferenceCost::Quadratic => benchmark_quadratic(&spec, *points, *mode, cfg.seed)?,
                    _ => benchmark_general(&spec, *points, &cfg.admm, cfg.seed)?,
                };
                if !quiet {
                    eprintln!("n={n}: mean {:.1} ns, median {:.1} ns", stats.mean_ns, stats.median_ns);
                }
                rows.push(stats);
            }
            emit(out, |w| {
                writeln!(w, "n,points,mean_ns,median_ns")?;
                for s in &rows {
                    writeln!(w, "{},{},{:.3},{:.3}", s.n, s.points, s.mean_ns, s.median_ns)?;
                }
                Ok(())
            })?;
            Ok(RunSummary::Benchmark(rows))
        }
        Query::Verify { suite } => {
            let outcomes = run_suite(*suite, cfg.seed);
            emit(out, |w| {
                for o in &outcomes {
                    match &o.failure {
                        None => writeln!(w, "PASS {}", o.name)?,
                        Some(why) => writeln!(w, "FAIL {}: {why}", o.name)?,
                    }
                }
                Ok(())
            })?;
            let failed: Vec<&str> = outcomes.iter().filter(|o| o.failure.is_some()).map(|o| o.name.as_str()).collect();
            if !failed.is_empty() {
                return Err(CliError::Verification(failed.join(", ")));
            }
            Ok(RunSummary::Verify(outcomes))
        }
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_args(&args) {
        Ok(summary) => {
            if !args.quiet {
                report(&summary);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run_args(args: &Args) -> Result<RunSummary, CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output_path = Some(out.clone());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| run(&cfg, args.quiet))
}

fn report(summary: &RunSummary) {
    match summary {
        RunSummary::Files(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
        RunSummary::Verify(outcomes) => eprintln!("{} checks passed", outcomes.len()),
        RunSummary::Single(_) | RunSummary::Printed | RunSummary::Benchmark(_) => {}
    }
}
