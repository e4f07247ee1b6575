//! `saddlerl` command-line interface.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error, 3 invalid
//! input file, 4 I/O error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use saddlerl::bench::{self, SweepSpec};
use saddlerl::features::{self, FeatureConfig};
use saddlerl::io::{self as files, MetricsRow, PolicyDocument};
use saddlerl::solver::{self, CheckpointRecord, Checkpoints, SolverConfig, StepSize};
use saddlerl::verify::{self, CheckReport, SuiteConfig};
use saddlerl::{Error, Policy, TabularMdp};

#[derive(Parser, Debug)]
#[command(name = "saddlerl", version, about = "Saddle-point mirror descent for tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run tabular mirror descent on an MDP file.
    Solve(SolveArgs),
    /// Run mirror descent over a linear basis.
    Features(FeaturesArgs),
    /// Check the saddle-point identities on an MDP or the built-in suite.
    Verify(VerifyArgs),
    /// Run a seed sweep described by a JSON spec.
    Bench(BenchArgs),
    /// Write a generated MDP file.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// MDP file (JSON).
    #[arg(long)]
    mdp: PathBuf,
    /// Number of rounds N.
    #[arg(long)]
    steps: usize,
    /// Step size: "auto" or a positive number.
    #[arg(long, default_value = "auto")]
    eta: StepSize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// "pow2" or a comma-separated list of rounds; N is always included.
    #[arg(long, default_value = "pow2")]
    checkpoints: Checkpoints,
    /// Evaluate the running average against exact oracles at checkpoints.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    oracle_eval: bool,
    /// Metrics CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Policy document path; defaults to `<out>.policy.json` when --out is set.
    #[arg(long)]
    policy_out: Option<PathBuf>,
    /// Record wall-clock times in `elapsed_ms` (otherwise 0).
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Basis file, "tabular", or "state-aggregation:k".
    #[arg(long)]
    basis: String,
    /// Radius scale C_v of the value-parameter ball.
    #[arg(long, default_value_t = 1.0)]
    cv: f64,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct VerifyTarget {
    /// Check one MDP file.
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// Run a named suite.
    #[arg(long, value_enum)]
    suite: Option<Suite>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Suite {
    Standard,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    target: VerifyTarget,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Random points per MDP.
    #[arg(long, default_value_t = 20)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Sweep spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Metrics CSV path; overrides the spec's `output`; stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Counterexample,
    Random,
    Gridworld,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 5)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 2)]
    branching: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    height: usize,
    #[arg(long, default_value_t = 0.0)]
    slip: f64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 4,
            Error::Parse(_)
            | Error::InvalidMdp(_)
            | Error::InvalidBasis(_)
            | Error::Dimension(_)
            | Error::IndexOutOfRange { .. } => 3,
            Error::InvalidArgument(_) | Error::GuardExceeded { .. } => 2,
            Error::Numerical(_) | Error::InsufficientData(_) => 1,
        };
        Self::new(code, e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::new(4, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Features(a) => cmd_features(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn load_mdp(path: &Path) -> Result<TabularMdp, Failure> {
    files::load_mdp(path).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn check_steps(steps: usize) -> CmdResult {
    if steps == 0 {
        return Err(Failure::new(2, "--steps must be at least 1"));
    }
    Ok(())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CmdResult {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::new(4, format!("{}: {e}", p.display()))),
        None => {
            io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn metrics_rows(run_id: &str, seed: u64, records: &[CheckpointRecord], timing: bool) -> Vec<MetricsRow> {
    records
        .iter()
        .map(|r| MetricsRow {
            run_id: run_id.to_string(),
            seed,
            n: r.n,
            eta: r.eta,
            value_gap: r.value_gap.unwrap_or(f64::NAN),
            residual_cert: r.residual_certificate.unwrap_or(f64::NAN),
            queries: r.queries,
            elapsed_ms: if timing { r.wall_time_ms } else { 0.0 },
        })
        .collect()
}

fn eta_comment(step_size: StepSize, eta: f64) -> String {
    match step_size {
        StepSize::Auto => format!("eta = {} (auto)", files::format_float(eta)),
        StepSize::Fixed(_) => format!("eta = {}", files::format_float(eta)),
    }
}

fn write_run(args: &RunArgs, comments: &[String], rows: &[MetricsRow], policy: Option<&Policy>) -> CmdResult {
    let mut csv = Vec::new();
    files::write_metrics_csv(&mut csv, comments, rows)?;
    write_output(args.out.as_deref(), &csv)?;
    let policy_path = args.policy_out.clone().or_else(|| {
        args.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".policy.json");
            PathBuf::from(s)
        })
    });
    if let (Some(path), Some(pi)) = (policy_path, policy) {
        write_output(Some(&path), PolicyDocument::from_policy(pi).to_json().as_bytes())?;
    }
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> CmdResult {
    let args = a.run;
    check_steps(args.steps)?;
    let mdp = load_mdp(&args.mdp)?;
    let cfg = SolverConfig {
        step_size: args.eta,
        checkpoints: args.checkpoints.clone(),
        eval_with_oracle: args.oracle_eval,
        ..SolverConfig::new(args.steps, args.seed)
    };
    let out = solver::run(&mdp, &cfg)?;
    let comments = vec![
        format!("solve steps = {} seed = {}", args.steps, args.seed),
        eta_comment(args.eta, out.metrics.eta),
    ];
    let rows = metrics_rows("solve", args.seed, &out.metrics.checkpoints, args.timing);
    write_run(&args, &comments, &rows, Some(&out.policy))
}

fn cmd_features(a: FeaturesArgs) -> CmdResult {
    let args = a.run;
    check_steps(args.steps)?;
    if !(a.cv > 0.0 && a.cv.is_finite()) {
        return Err(Failure::new(2, "--cv must be positive"));
    }
    let mdp = load_mdp(&args.mdp)?;
    let basis = features::resolve_basis(&a.basis, &mdp).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", a.basis, f.message);
        f
    })?;
    let cfg = FeatureConfig {
        step_size: args.eta,
        checkpoints: args.checkpoints.clone(),
        eval_with_oracle: args.oracle_eval,
        ..FeatureConfig::new(args.steps, args.seed, a.cv)
    };
    let out = features::run_features(&mdp, &basis, &cfg)?;
    let comments = vec![
        format!(
            "features steps = {} seed = {} c_v = {} d_v = {} d_mu = {}",
            args.steps,
            args.seed,
            a.cv,
            basis.d_v(),
            basis.d_mu()
        ),
        eta_comment(args.eta, out.eta),
    ];
    let rows = metrics_rows("features", args.seed, &out.checkpoints, args.timing);
    write_run(&args, &comments, &rows, out.policy.as_ref())
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    if !(a.tol > 0.0) {
        return Err(Failure::new(2, "--tol must be positive"));
    }
    let reports: Vec<CheckReport> = match (&a.target.mdp, a.target.suite) {
        (Some(path), _) => {
            let mdp = load_mdp(path)?;
            verify::check_mdp(&mdp, a.points.max(1), a.seed, a.tol)?
        }
        (None, Some(Suite::Standard)) => {
            let cfg = SuiteConfig { seed: a.seed, ..SuiteConfig::default() };
            verify::standard_suite(&cfg, a.tol)?
        }
        (None, None) => unreachable!("clap requires one target"),
    };
    let mut stdout = io::stdout().lock();
    for r in &reports {
        writeln!(stdout, "{r}")?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    writeln!(stdout, "{} checks, {} failed (tol = {:e})", reports.len(), failed, a.tol)?;
    if failed > 0 {
        return Err(Failure::new(1, ""));
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let text = fs::read_to_string(&a.spec).map_err(|e| Failure::new(4, format!("{}: {e}", a.spec.display())))?;
    let spec: SweepSpec =
        serde_json::from_str(&text).map_err(|e| Failure::new(3, format!("{}: {e}", a.spec.display())))?;
    spec.check().map_err(|e| Failure::new(3, format!("{}: {e}", a.spec.display())))?;
    let rows = bench::run_sweep(&spec, a.workers).map_err(|e| match e {
        Error::InvalidArgument(m) => Failure::new(3, m),
        other => other.into(),
    })?;
    let mut csv = Vec::new();
    files::write_metrics_csv(&mut csv, &[], &rows)?;
    let out = a.out.or_else(|| spec.output.as_ref().map(PathBuf::from));
    write_output(out.as_deref(), &csv)?;
    if let Ok(fit) = bench::rate_fit(&rows) {
        eprintln!(
            "rate fit: slope = {:.4} +/- {:.4} over {} step counts",
            fit.slope,
            fit.slope_std_error,
            fit.points.len()
        );
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let mdp = match a.kind {
        Kind::Counterexample => {
            if !(0.0..1.0).contains(&a.gamma) {
                return Err(Failure::new(2, "--gamma must lie in [0, 1)"));
            }
            bench::gen_counterexample(a.gamma).mdp
        }
        Kind::Random => bench::gen_random_mdp(a.states, a.actions, a.branching, a.gamma, a.seed)
            .map_err(|e| Failure::new(2, e.to_string()))?,
        Kind::Gridworld => bench::gen_gridworld(a.width, a.height, a.slip, a.gamma)
            .map_err(|e| Failure::new(2, e.to_string()))?,
    };
    write_output(a.out.as_deref(), files::mdp_to_json(&mdp).as_bytes())
}
