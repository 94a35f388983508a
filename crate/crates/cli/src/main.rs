#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semimarkov::bayes::{concentration_curve, feasibility_search, CurveConfig, DirichletSmkPrior, EpsRule};
use semimarkov::hypothesis::{draw_block_indices, error_study, evaluate, Alternative};
use semimarkov::kernel::{io as kio, validate_assumptions};
use semimarkov::simulate::{sample_trajectory, Init, Trajectory};
use semimarkov::verify::{identity_suite, stationarity_suite};
use semimarkov::{Error, Kernel};

use config::{plan_with_default_epsilon, GridConfig, NetConfig};

/// Overrides the directory for outputs written without an explicit path.
const OUT_DIR_ENV: &str = "SEMIMARKOV_OUT_DIR";

#[derive(Parser)]
#[command(name = "semimarkov", version, about = "Semi-Markov kernels: validation, simulation, Hellinger tests and posterior studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check ergodicity, finite mean sojourn and non-degenerate sojourns.
    Validate {
        kernel: PathBuf,
        /// Exit with status 3 when an assumption fails.
        #[arg(long)]
        strict: bool,
    },
    /// Sample a trajectory of `n` jumps.
    Simulate {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `stationary`, or comma-separated initial state probabilities.
        #[arg(long, default_value = "stationary")]
        init: String,
        /// Output CSV; `-` for stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Hellinger test on one trajectory.
    Test(TestArgs),
    /// Empirical type-I/type-II rates over a TOML grid.
    Power {
        #[arg(long)]
        grid: PathBuf,
        /// Overrides the grid's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior concentration curve and prior-mass feasibility under a Dirichlet prior.
    Posterior(PosteriorArgs),
    /// Randomized identity and stationarity checks.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
    },
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    null: PathBuf,
    /// Alternative kernel file.
    #[arg(long, conflicts_with = "net", required_unless_present = "net")]
    alt: Option<PathBuf>,
    /// Use the alternative kernel itself rather than the ball around it.
    #[arg(long, requires = "alt")]
    simple: bool,
    /// TOML net description.
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    /// Defaults to the smallest `d_{ν*}` separation.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    l: usize,
    /// Trajectory CSV to test; otherwise `n` jumps are simulated.
    #[arg(long, conflicts_with_all = ["n", "truth"])]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Kernel generating the simulated path (default: the null).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PosteriorArgs {
    #[arg(long)]
    q0: PathBuf,
    /// Common concentration of every cell.
    #[arg(long, conflicts_with = "concentration_file", default_value_t = 1.0)]
    concentration: f64,
    /// JSON array `[x][y][k]` of concentrations.
    #[arg(long)]
    concentration_file: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    n_grid: Vec<usize>,
    /// `sqrt-log` or `power:<p>`.
    #[arg(long, default_value = "sqrt-log")]
    eps_rule: String,
    #[arg(long, value_delimiter = ',', default_value = "2,5,10")]
    m: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    replications: usize,
    #[arg(long, default_value_t = 1000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Block lengths `k,l` for `ν*`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    blocks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1,2,4,8")]
    c_grid: Vec<f64>,
    /// Sieve floor `δ_n = n^(-p)`.
    #[arg(long, default_value_t = 2.0)]
    floor_power: f64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

struct Failure {
    status: u8,
    code: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse(_)
            | Error::Io(_)
            | Error::StateSpace(_)
            | Error::InvalidKernel(_)
            | Error::InvalidParameter(_)
            | Error::Mismatch(_) => 2,
            _ => 3,
        };
        Failure { status, code: e.code(), message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { status: 2, code: "E_CONFIG", message: message.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn default_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Error::Io(format!("{}: {e}", path.display())).into()
}

/// Opens `out`, `<default dir>/<name>` when unset, or stdout for `-`.
fn sink(out: Option<&Path>, name: &str) -> CliResult<(Box<dyn Write>, Option<PathBuf>)> {
    let path = match out {
        Some(p) if p == Path::new("-") => return Ok((Box::new(io::stdout().lock()), None)),
        Some(p) => p.to_path_buf(),
        None => default_dir().join(name),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    let f = File::create(&path).map_err(|e| io_failure(&path, e))?;
    Ok((Box::new(BufWriter::new(f)), Some(path)))
}

fn finish(mut w: Box<dyn Write>, path: Option<PathBuf>) -> CliResult<()> {
    w.flush().map_err(|e| Failure::from(Error::from(e)))?;
    if let Some(p) = path {
        println!("wrote: {}", p.display());
    }
    Ok(())
}

fn load_kernel(path: &Path) -> CliResult<Kernel> {
    let (k, report) = kio::load(path)?;
    for a in &report.adjustments {
        eprintln!("note: {}: row {} renormalised from sum {:.17e}", path.display(), a.state, a.original_sum);
    }
    Ok(k)
}

fn parse_init(s: &str) -> CliResult<Init> {
    if s == "stationary" {
        return Ok(Init::Stationary);
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Init::Distribution)
        .map_err(|_| config_error(format!("--init {s:?}: expected `stationary` or comma-separated probabilities")))
}

fn validate(kernel: &Path, strict: bool) -> CliResult<()> {
    let k = load_kernel(kernel)?;
    let report = validate_assumptions(&k);
    print!("{report}");
    if strict && !report.all_satisfied() {
        return Err(Failure { status: 3, code: "E_ASSUMPTION", message: "standing assumptions violated".into() });
    }
    Ok(())
}

fn simulate(kernel: &Path, n: usize, seed: u64, init: &str, out: Option<&Path>) -> CliResult<()> {
    let k = load_kernel(kernel)?;
    let traj = sample_trajectory(&k, n, &parse_init(init)?, seed)?;
    let (w, path) = sink(out, "trajectory.csv")?;
    let mut w = w;
    traj.write_csv(&mut w)?;
    finish(w, path)
}

fn test(a: &TestArgs) -> CliResult<()> {
    let q0 = load_kernel(&a.null)?;
    let alt = match (&a.alt, &a.net) {
        (Some(p), _) if a.simple => Alternative::Simple(load_kernel(p)?),
        (Some(p), _) => Alternative::Ball(load_kernel(p)?),
        (None, Some(net)) => NetConfig::load(net)?.build(&q0, a.k, a.l)?,
        (None, None) => return Err(config_error("one of --alt or --net is required")),
    };
    let plan = plan_with_default_epsilon(q0.clone(), alt, a.lambda, a.xi, a.epsilon, a.k, a.l, a.seed)?;
    let traj = match (&a.trajectory, a.n) {
        (Some(p), _) => {
            let f = File::open(p).map_err(|e| io_failure(p, e))?;
            Trajectory::read_csv(f, q0.states())?
        }
        (None, Some(n)) => {
            let truth = match &a.truth {
                Some(p) => load_kernel(p)?,
                None => q0,
            };
            sample_trajectory(&truth, n, &Init::Stationary, a.seed)?
        }
        (None, None) => return Err(config_error("one of --trajectory or --n is required")),
    };
    let n = traj.n();
    let blocks = draw_block_indices(n, plan.params.k, plan.offset, a.seed)?;
    let out = evaluate(&traj, &plan, &blocks)?;
    let sep = plan.separations.iter().copied().fold(f64::INFINITY, f64::min);
    println!("decision: {}", if out.reject_null { "reject" } else { "accept" });
    println!("statistic: {:.17e}", out.statistic);
    println!("n: {n}");
    println!("n_blocks: {}", out.n_blocks);
    println!("kappa: {}", out.kappa);
    println!("lambda: {}", plan.params.lambda);
    println!("xi: {}", plan.params.xi);
    println!("epsilon: {:.17e}", plan.params.epsilon);
    println!("separation: {sep:.17e}");
    println!("test_kernels: {}", plan.test_kernels.len());
    println!("type_one_bound: {:.17e}", plan.type_one_bound(n));
    println!("type_two_bound: {:.17e}", plan.type_two_bound(n));
    match out.rejecting_index {
        Some(i) => println!("rejecting_index: {i}"),
        None => println!("rejecting_index: none"),
    }
    if let Some(s) = out.infinite_at {
        println!("infinite_at: {s}");
    }
    Ok(())
}

fn power(grid: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<()> {
    let g = GridConfig::load(grid)?;
    let seed = seed.or(g.seed).unwrap_or(0);
    let cells = g.study_cells(seed)?;
    let study = error_study(&cells, g.replications, seed)?;
    for s in &study.skipped {
        eprintln!("note: skipped cell {} at n = {}: {}", s.cell, s.n, s.reason);
    }
    let (mut w, path) = sink(out, "error_study.csv")?;
    study.write_csv(&mut w)?;
    finish(w, path)
}

fn posterior(a: &PosteriorArgs) -> CliResult<()> {
    let q0 = load_kernel(&a.q0)?;
    let Kernel::Discrete(d0) = &q0 else {
        return Err(Error::Unsupported("posterior studies need a discrete q0".into()).into());
    };
    let prior = match &a.concentration_file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
            let nested: Vec<Vec<Vec<f64>>> =
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
            let flat = nested.into_iter().flatten().flatten().collect();
            DirichletSmkPrior::new(d0.states().clone(), d0.k_max(), flat)?
        }
        None => DirichletSmkPrior::uniform(d0.states().clone(), d0.k_max(), a.concentration)?,
    };
    let eps_rule = EpsRule::parse(&a.eps_rule)?;
    if a.n_grid.is_empty() || a.m.is_empty() {
        return Err(config_error("--n-grid and --m must be non-empty"));
    }
    let cfg = CurveConfig {
        n_grid: a.n_grid.clone(),
        eps_rule,
        m_values: a.m.clone(),
        replications: a.replications,
        mc_samples: a.mc_samples,
        block_lengths: a.blocks.as_ref().map(|b| (b[0], b[1])),
    };
    let curve = concentration_curve(d0, &prior, &cfg, a.seed)?;
    let feas = feasibility_search(&prior, d0, &a.n_grid, eps_rule, &a.c_grid, a.floor_power, a.mc_samples, a.seed)?;
    let dir = a.out_dir.clone().unwrap_or_else(default_dir);
    let (mut w, path) = sink(Some(&dir.join("concentration_curve.csv")), "")?;
    curve.write_csv(&mut w)?;
    finish(w, path)?;
    let (mut w, path) = sink(Some(&dir.join("feasibility.csv")), "")?;
    feas.write_csv(&mut w)?;
    finish(w, path)?;
    println!("block_lengths: {},{}", curve.k, curve.l);
    let c: Vec<String> = feas.feasible.iter().map(|c| c.to_string()).collect();
    println!("feasible_c: [{}]", c.join(", "));
    Ok(())
}

fn verify(seed: u64, draws: usize) -> CliResult<()> {
    let ids = identity_suite(seed, draws)?;
    let st = stationarity_suite(seed, draws);
    println!("seed: {seed}");
    print!("{ids}{st}");
    let total = ids.violations.len() + st.failures.len();
    println!("total_violations: {total}");
    if total > 0 {
        return Err(Failure { status: 3, code: "E_VERIFY", message: format!("{total} violations") });
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate { kernel, strict } => validate(&kernel, strict),
        Command::Simulate { kernel, n, seed, init, out } => simulate(&kernel, n, seed, &init, out.as_deref()),
        Command::Test(a) => test(&a),
        Command::Power { grid, seed, out } => power(&grid, seed, out.as_deref()),
        Command::Posterior(a) => posterior(&a),
        Command::Verify { seed, draws } => verify(seed, draws),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.code, f.message);
            ExitCode::from(f.status)
        }
    }
}
