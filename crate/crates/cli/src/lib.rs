//! Command-line front end: search, sample, bench, validate, bound-check and
//! respace.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage or configuration
//! error, 3 numerical divergence.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use solver_forge::bound::{bound_check, BoundMode};
use solver_forge::fields::{named_problem, oracle_trajectory, Problem, Trajectory};
use solver_forge::registry::{self, LoadedSchedule, Provenance};
use solver_forge::rng::{normal_batch, Domain, SeedStream};
use solver_forge::schedules::{NoiseSchedule, RespaceFamily};
use solver_forge::search::{
    alignment_loss, reference_trajectory, run_search, SearchConfig,
};
use solver_forge::solvers::{sample_schedule, Baseline, OrderCap, SolverSchedule};
use solver_forge::{Error, Scheduler, SchedulerKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "solver-forge", version, about = "Search and benchmark few-step ODE samplers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search a solver schedule for a problem.
    Search(SearchArgs),
    /// Sample trajectories with a baseline solver or a schedule file.
    Sample(SampleArgs),
    /// Endpoint and trajectory RMSE of solvers against a many-step oracle.
    Bench(BenchArgs),
    /// Validate schedule files or the bundled published tables.
    Validate(ValidateArgs),
    /// Check the velocity-error bound under bounded perturbations.
    BoundCheck(BoundArgs),
    /// Print a respaced time grid.
    Respace(RespaceArgs),
}

#[derive(Debug, Args)]
pub struct SchedulerArgs {
    /// rf or vp; defaults to the problem's own.
    #[arg(long)]
    pub scheduler: Option<SchedulerKind>,
    #[arg(long, default_value_t = 0.1)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub beta_max: f64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value = "gmm2d")]
    pub problem: String,
    #[command(flatten)]
    pub sched: SchedulerArgs,
    #[arg(long, default_value_t = 10)]
    pub nfe: usize,
    #[arg(long, default_value_t = 100)]
    pub ref_steps: usize,
    #[arg(long, default_value_t = 512)]
    pub batch: usize,
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on how many previous evaluations a row may use.
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Apply --max-order only to this many final rows.
    #[arg(long, requires = "max_order")]
    pub cap_rows: Option<usize>,
    /// Held-out samples for the improvement factor.
    #[arg(long, default_value_t = 256)]
    pub eval_samples: usize,
    #[arg(long)]
    pub model_tag: Option<String>,
    /// Schedule file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to the schedule path with `.loss.csv`.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, default_value = "gmm2d")]
    pub problem: String,
    #[command(flatten)]
    pub sched: SchedulerArgs,
    /// Baseline solver name or schedule (`path.toml`, `paper:TAG:NFE`).
    #[arg(long, default_value = "euler")]
    pub solver: String,
    #[arg(long, default_value_t = 10)]
    pub nfe: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "gmm2d")]
    pub problem: String,
    #[command(flatten)]
    pub sched: SchedulerArgs,
    /// Comma-separated: euler, heun, ab2..ab4, dpm2m, schedule files, or
    /// `paper:TAG` for the published table at each NFE.
    #[arg(long)]
    pub solvers: Option<String>,
    /// `5-10` or `5,8,10`.
    #[arg(long, default_value = "5-10")]
    pub nfe_range: String,
    #[arg(long, default_value_t = 100_000)]
    pub oracle_steps: usize,
    /// Comma-separated seeds; each draws its own held-out set.
    #[arg(long, default_value = "0")]
    pub seeds: String,
    /// Held-out starting points per seed.
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
    /// Fill the wall_time column (makes output non-deterministic).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "file")]
    pub files: Vec<PathBuf>,
    #[arg(long)]
    pub paper_tables: bool,
    /// Machine-readable CSV report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub eta: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// `path.toml` or `paper:TAG:NFE`.
    #[arg(long, default_value = "paper:sit-xl-2:10")]
    pub schedule: String,
    #[arg(long, default_value = "gmm2d")]
    pub problem: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// full or frozen.
    #[arg(long, default_value = "full")]
    pub mode: BoundMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RespaceArgs {
    #[arg(long)]
    pub family: RespaceFamily,
    #[arg(long)]
    pub nfe: usize,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. } | Error::NonFiniteGradient(_) | Error::Singularity(_) => EXIT_DIVERGED,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Search(a) => cmd_search(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::BoundCheck(a) => cmd_bound_check(&a),
        Command::Respace(a) => cmd_respace(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn resolve(problem: &str, args: &SchedulerArgs) -> Result<(Problem, Scheduler), Failure> {
    let p = named_problem(problem)?;
    let kind = args.sched_kind(&p);
    let scheduler = match kind {
        SchedulerKind::RectifiedFlow => Scheduler::RectifiedFlow,
        SchedulerKind::VpLinear => Scheduler::vp(NoiseSchedule::vp_linear(args.beta_min, args.beta_max)?)?,
    };
    p.field.check_compatible(&scheduler, p.dim)?;
    Ok((p, scheduler))
}

impl SchedulerArgs {
    fn sched_kind(&self, p: &Problem) -> SchedulerKind {
        self.scheduler.unwrap_or(p.kind)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// `path.toml` or `paper:TAG:NFE`.
pub fn load_schedule_arg(arg: &str) -> Result<LoadedSchedule, Failure> {
    if let Some(rest) = arg.strip_prefix("paper:") {
        let (tag, nfe) = rest
            .rsplit_once(':')
            .ok_or_else(|| Failure::usage(format!("expected paper:TAG:NFE, got {arg}")))?;
        let nfe: usize = nfe
            .parse()
            .map_err(|_| Failure::usage(format!("bad NFE in {arg}")))?;
        return Ok(registry::paper_table(tag, nfe)?);
    }
    Ok(registry::load_schedule(arg)?)
}

fn cmd_search(a: &SearchArgs) -> CmdResult {
    let (p, scheduler) = resolve(&a.problem, &a.sched)?;
    let order_cap = match (a.max_order, a.cap_rows) {
        (None, _) => OrderCap::none(),
        (Some(0), _) => return Err(Failure::usage("--max-order must be at least 1")),
        (Some(k), None) => OrderCap::uniform(a.nfe, k),
        (Some(k), Some(rows)) => OrderCap::tail(a.nfe, rows, k),
    };
    let cfg = SearchConfig {
        nfe: a.nfe,
        ref_steps: a.ref_steps,
        batch: a.batch,
        iterations: a.iters,
        lr: a.lr,
        seed: a.seed,
        order_cap: order_cap.clone(),
        ..SearchConfig::default()
    };
    cfg.validate()?;
    if a.eval_samples == 0 {
        return Err(Failure::usage("--eval-samples must be at least 1"));
    }
    let outcome = run_search(&p.field, &scheduler, p.dim, &cfg)?;

    let tag = a.model_tag.clone().unwrap_or_else(|| p.name.to_string());
    let noise = match scheduler {
        Scheduler::Vp { noise, .. } => Some(noise),
        Scheduler::RectifiedFlow => None,
    };
    registry::save_schedule(
        &outcome.schedule,
        &tag,
        noise.as_ref(),
        &Provenance::searched(cfg.hash(), a.seed),
        &a.out,
    )?;
    let loss_path = a.loss_csv.clone().unwrap_or_else(|| a.out.with_extension("loss.csv"));
    std::fs::write(&loss_path, outcome.history_csv())?;

    let euler = SolverSchedule::euler(a.nfe, scheduler.kind(), order_cap)?;
    let x0s = normal_batch(
        &mut SeedStream::new(a.seed).stream(Domain::Evaluation, 0),
        a.eval_samples,
        p.dim,
    );
    let losses: Vec<(f64, f64)> = x0s
        .par_iter()
        .map(|x0| {
            let reference = reference_trajectory(&p.field, &scheduler, x0, a.ref_steps)?;
            let base = sample_schedule(&p.field, &scheduler, x0, &euler)?;
            let found = sample_schedule(&p.field, &scheduler, x0, &outcome.schedule)?;
            Ok((
                alignment_loss(&base, &reference, &cfg).total,
                alignment_loss(&found, &reference, &cfg).total,
            ))
        })
        .collect::<Result<_, Error>>()?;
    let euler_loss: f64 = losses.iter().map(|l| l.0).sum::<f64>() / losses.len() as f64;
    let found_loss: f64 = losses.iter().map(|l| l.1).sum::<f64>() / losses.len() as f64;
    let factor = if found_loss == euler_loss { 1.0 } else { euler_loss / found_loss };

    match outcome.best_loss {
        Some(l) => println!("final loss: {l:e}"),
        None => println!("final loss: n/a (no iterations)"),
    }
    println!("held-out loss: euler {euler_loss:e}, searched {found_loss:e}");
    println!("improvement factor vs euler: {factor:.6}");
    println!("schedule: {}", a.out.display());
    println!("loss history: {}", loss_path.display());
    if outcome.diverged {
        eprintln!(
            "warning: search diverged ({}); kept the best schedule seen",
            outcome.diagnostic.as_deref().unwrap_or("non-finite values")
        );
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

/// A solver column in a bench or sample run.
#[derive(Debug, Clone)]
enum SolverSpec {
    Baseline(Baseline),
    File { name: String, loaded: Box<LoadedSchedule> },
    PaperFamily(String),
}

impl SolverSpec {
    fn parse(s: &str) -> Result<Self, Failure> {
        if let Some(tag) = s.strip_prefix("paper:") {
            if tag.contains(':') {
                let loaded = load_schedule_arg(s)?;
                return Ok(SolverSpec::File {
                    name: s.to_string(),
                    loaded: Box::new(loaded),
                });
            }
            if !registry::MODEL_TAGS.contains(&tag) {
                return Err(Failure::usage(format!("unknown model tag {tag}")));
            }
            return Ok(SolverSpec::PaperFamily(tag.to_string()));
        }
        if s.ends_with(".toml") || Path::new(s).is_file() {
            let loaded = load_schedule_arg(s)?;
            let name = Path::new(s)
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| s.to_string());
            return Ok(SolverSpec::File {
                name,
                loaded: Box::new(loaded),
            });
        }
        s.parse::<Baseline>()
            .map(SolverSpec::Baseline)
            .map_err(|_| Failure::usage(format!("unknown solver {s:?}")))
    }
}

/// A solver at a fixed NFE.
#[derive(Debug, Clone)]
enum Cell {
    Baseline(Baseline),
    Schedule(SolverSchedule),
}

impl Cell {
    fn sample(&self, p: &Problem, scheduler: &Scheduler, x0: &[f64], nfe: usize) -> Result<Trajectory, Error> {
        match self {
            Cell::Baseline(b) => b.sample(&p.field, scheduler, x0, nfe),
            Cell::Schedule(s) => sample_schedule(&p.field, scheduler, x0, s),
        }
    }
}

fn parse_nfe_range(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || Failure::usage(format!("bad --nfe-range {s:?}"));
    let out: Vec<usize> = if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Failure> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Failure::usage(format!("bad seed {v:?}")))
        })
        .collect()
}

/// `(label, nfe, cell)` for every requested combination, in output order.
fn bench_cells(
    specs: &[(String, SolverSpec)],
    nfes: &[usize],
    scheduler: &Scheduler,
) -> Result<Vec<(String, usize, Cell)>, Failure> {
    let mut cells = Vec::new();
    for (label, spec) in specs {
        match spec {
            SolverSpec::Baseline(b) => {
                if !b.supports(scheduler.kind()) {
                    return Err(Failure::usage(format!(
                        "{b} does not run under the {} scheduler",
                        scheduler.kind()
                    )));
                }
                for &n in nfes {
                    cells.push((label.clone(), n, Cell::Baseline(*b)));
                }
            }
            SolverSpec::File { loaded, .. } => {
                loaded.check_scheduler(scheduler)?;
                cells.push((label.clone(), loaded.schedule.nfe(), Cell::Schedule(loaded.schedule.clone())));
            }
            SolverSpec::PaperFamily(tag) => {
                for &n in nfes {
                    if let Ok(loaded) = registry::paper_table(tag, n) {
                        loaded.check_scheduler(scheduler)?;
                        cells.push((label.clone(), n, Cell::Schedule(loaded.schedule)));
                    }
                }
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Default)]
struct CellErrors {
    endpoint: f64,
    endpoint_count: usize,
    path: f64,
    path_count: usize,
}

fn cmd_bench(a: &BenchArgs) -> CmdResult {
    let (p, scheduler) = resolve(&a.problem, &a.sched)?;
    let default = match scheduler.kind() {
        SchedulerKind::RectifiedFlow => "euler,heun,ab2,ab4",
        SchedulerKind::VpLinear => "euler,dpm2m",
    };
    let list = a.solvers.as_deref().unwrap_or(default);
    let specs: Vec<(String, SolverSpec)> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let spec = SolverSpec::parse(s)?;
            let label = match &spec {
                SolverSpec::Baseline(b) => b.to_string(),
                SolverSpec::File { name, .. } => name.clone(),
                SolverSpec::PaperFamily(tag) => format!("paper:{tag}"),
            };
            Ok((label, spec))
        })
        .collect::<Result<_, Failure>>()?;
    let nfes = parse_nfe_range(&a.nfe_range)?;
    let seeds = parse_seeds(&a.seeds)?;
    if a.samples == 0 || a.oracle_steps == 0 {
        return Err(Failure::usage("--samples and --oracle-steps must be positive"));
    }
    let cells = bench_cells(&specs, &nfes, &scheduler)?;

    let mut csv = String::from("problem,scheduler,solver,nfe,seed,endpoint_rmse,trajectory_rmse,wall_time\n");
    for &seed in &seeds {
        let x0s = normal_batch(
            &mut SeedStream::new(seed).stream(Domain::Evaluation, 0),
            a.samples,
            p.dim,
        );
        let start = Instant::now();
        // one oracle trajectory per sample, shared by every cell
        let per_sample: Vec<Vec<CellErrors>> = x0s
            .par_iter()
            .map(|x0| {
                let oracle = oracle_trajectory(&p.field, &scheduler, x0, a.oracle_steps)?;
                cells
                    .iter()
                    .map(|(_, nfe, cell)| {
                        let tr = cell.sample(&p, &scheduler, x0, *nfe)?;
                        let mut e = CellErrors::default();
                        for (u, v) in tr.endpoint().iter().zip(oracle.endpoint()) {
                            e.endpoint += (u - v) * (u - v);
                            e.endpoint_count += 1;
                        }
                        for (t, x) in tr.times.iter().zip(&tr.states).skip(1) {
                            for (u, v) in x.iter().zip(oracle.interpolate(*t)) {
                                e.path += (u - v) * (u - v);
                                e.path_count += 1;
                            }
                        }
                        Ok(e)
                    })
                    .collect::<Result<Vec<_>, Error>>()
            })
            .collect::<Result<_, Error>>()?;
        let elapsed = start.elapsed().as_secs_f64();
        for (k, (label, nfe, _)) in cells.iter().enumerate() {
            let mut total = CellErrors::default();
            for s in &per_sample {
                total.endpoint += s[k].endpoint;
                total.endpoint_count += s[k].endpoint_count;
                total.path += s[k].path;
                total.path_count += s[k].path_count;
            }
            let ep = (total.endpoint / total.endpoint_count as f64).sqrt();
            let tp = (total.path / total.path_count.max(1) as f64).sqrt();
            let wall = if a.timing { format!("{:.6}", elapsed / cells.len() as f64) } else { String::new() };
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{:e},{:e},{}",
                p.name,
                scheduler.kind(),
                label,
                nfe,
                seed,
                ep,
                tp,
                wall
            );
        }
    }
    write_output(a.out.as_deref(), &csv)?;
    Ok(EXIT_OK)
}

fn cmd_sample(a: &SampleArgs) -> CmdResult {
    let (p, scheduler) = resolve(&a.problem, &a.sched)?;
    let cell = match SolverSpec::parse(&a.solver)? {
        SolverSpec::Baseline(b) => Cell::Baseline(b),
        SolverSpec::File { loaded, .. } => {
            loaded.check_scheduler(&scheduler)?;
            Cell::Schedule(loaded.schedule)
        }
        SolverSpec::PaperFamily(tag) => {
            let loaded = registry::paper_table(&tag, a.nfe)?;
            loaded.check_scheduler(&scheduler)?;
            Cell::Schedule(loaded.schedule)
        }
    };
    let x0s = normal_batch(
        &mut SeedStream::new(a.seed).stream(Domain::Evaluation, 0),
        a.samples,
        p.dim,
    );
    let mut csv = String::from("sample,step,t");
    for d in 0..p.dim {
        let _ = write!(csv, ",x{d}");
    }
    csv.push('\n');
    for (k, x0) in x0s.iter().enumerate() {
        let tr = cell.sample(&p, &scheduler, x0, a.nfe)?;
        for (i, (t, x)) in tr.times.iter().zip(&tr.states).enumerate() {
            let _ = write!(csv, "{k},{i},{t:e}");
            for v in x {
                let _ = write!(csv, ",{v:e}");
            }
            csv.push('\n');
        }
    }
    write_output(a.out.as_deref(), &csv)?;
    Ok(EXIT_OK)
}

fn cmd_validate(a: &ValidateArgs) -> CmdResult {
    if a.files.is_empty() && !a.paper_tables {
        return Err(Failure::usage("pass --paper-tables or at least one --file"));
    }
    let mut reports = Vec::new();
    if a.paper_tables {
        reports.extend(registry::validate_paper_tables());
    }
    for f in &a.files {
        reports.push(registry::validate_file(f)?);
    }
    let mut csv = String::from(
        "name,model_tag,nfe,delta_sum,delta_sum_deviation,max_abs_coeff,capped_tail_rows,max_row_sum_error,status,error\n",
    );
    for r in &reports {
        match &r.error {
            None => println!(
                "PASS {}: nfe {}, delta sum {:.6} (off by {:.1e}), max |c| {}, capped tail rows {}, row-sum error {:.1e}",
                r.name, r.nfe, r.delta_sum, r.delta_sum_deviation, r.max_abs_coeff, r.capped_tail_rows, r.max_row_sum_error
            ),
            Some(e) => println!("FAIL {}: {e}", r.name),
        }
        let _ = writeln!(
            csv,
            "{},{},{},{:e},{:e},{:e},{},{:e},{},\"{}\"",
            r.name,
            r.model_tag,
            r.nfe,
            r.delta_sum,
            r.delta_sum_deviation,
            r.max_abs_coeff,
            r.capped_tail_rows,
            r.max_row_sum_error,
            if r.passed() { "pass" } else { "fail" },
            r.error.as_deref().unwrap_or("").replace('"', "'")
        );
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} pass", reports.len());
    if let Some(path) = &a.report {
        std::fs::write(path, csv)?;
    }
    Ok(if passed == reports.len() { EXIT_OK } else { EXIT_VALIDATION })
}

fn cmd_bound_check(a: &BoundArgs) -> CmdResult {
    if !(a.eta >= 0.0 && a.eta.is_finite()) {
        return Err(Failure::usage("--eta must be nonnegative"));
    }
    let p = named_problem(&a.problem)?;
    let loaded = load_schedule_arg(&a.schedule)?;
    let trials = bound_check(&p.field, &loaded.schedule, p.dim, a.eta, a.trials, a.seed, a.mode)?;
    let mut csv = String::from("trial,deviation,bound,holds\n");
    for t in &trials {
        let _ = writeln!(csv, "{},{:e},{:e},{}", t.trial, t.deviation, t.bound, t.holds());
    }
    if let Some(path) = &a.out {
        std::fs::write(path, &csv)?;
    }
    let violations = trials.iter().filter(|t| !t.holds()).count();
    let worst = trials.iter().map(|t| t.deviation).fold(0.0, f64::max);
    let bound = trials.first().map_or(0.0, |t| t.bound);
    println!("bound: {bound:e}");
    println!("max deviation: {worst:e}");
    println!("violations: {violations}/{}", trials.len());
    Ok(if violations == 0 { EXIT_OK } else { EXIT_VALIDATION })
}

fn cmd_respace(a: &RespaceArgs) -> CmdResult {
    if a.nfe == 0 {
        return Err(Failure::usage("--nfe must be at least 1"));
    }
    for t in a.family.polynomial().grid(a.nfe) {
        println!("{t}");
    }
    Ok(EXIT_OK)
}
