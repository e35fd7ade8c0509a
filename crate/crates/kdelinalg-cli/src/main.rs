//! `kdelinalg` — benchmark harness for the kdelinalg library.
//!
//! Usage shape: `kdelinalg <command> [--input PATH | --gen SPEC] --eps E
//! --backend B --seed S --trials T [--oracle] [--strict] [--out PATH]`.
//!
//! The experiment commands (`mvp`, `matmul`, `quadform`, `topeig`, `sum`,
//! `estimator`) run `--trials` independent trials of one estimator on one
//! dataset and emit a JSON report: per-trial estimate, oracle comparison
//! (when `--oracle` is given and the dataset is within the oracle cap),
//! relative error, pass/fail against the command's contract, wall time,
//! and density-query work, plus aggregate success rate and medians. `gen`
//! materializes a synthetic dataset in the point file format, and
//! `adversary` runs the noisy-power-method counterexamples.
//!
//! Determinism: a report depends only on the configuration and `--seed`
//! (trial `t` uses the derived stream `(seed, t)`, probe vectors the
//! reserved stream `(seed, u64::MAX)`, and `--gen` the seed itself), so
//! two identical invocations produce byte-identical reports except for
//! wall-time fields.
//!
//! The exact oracles cost `O(n^2)` kernel evaluations and refuse datasets
//! larger than the cap (default 5000 points); set `KDELINALG_ORACLE_CAP`
//! to override.
//!
//! Exit codes: 0 on success, 1 on runtime errors (unreadable or ragged
//! input, capacity, invalid arguments), 2 on command-line usage errors,
//! and 3 when `--strict` is set and at least one trial fails its contract.

mod exec;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kdelinalg::{
    adversary_iteration_lb_check, adversary_signed_noise_demo, adversary_stagnation_check,
    format_points, generate, parse_gen_spec, read_points, signed_noise_required_delta, Error,
    GenKind, GenSpec, KdeBackend, KernelSpec, PointSet, Result, DEFAULT_ORACLE_CAP,
};

use exec::Experiment;
use report::{AdversaryReport, ExperimentReport, KernelEcho};

/// The `dp` generator places points in `R^n`, so its dataset is `n^2`
/// floats; cap it where the quadratic footprint is still comfortable.
const DP_GEN_CAP: usize = 10_000;

#[derive(Parser)]
#[command(
    name = "kdelinalg",
    version,
    about = "Benchmark harness for KDE-driven sublinear kernel linear algebra",
    after_help = "Exit codes: 0 success, 1 runtime error, 2 usage error, \
                  3 contract violation under --strict."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the matrix-vector product K y for a non-negative probe y
    Mvp(ExperimentArgs),
    /// Estimate K A column by column for a non-negative probe matrix A
    Matmul(MatmulArgs),
    /// Estimate the quadratic form v' K v for a non-negative probe v
    Quadform(ExperimentArgs),
    /// Estimate the top eigenpair of K by noisy power iteration
    Topeig(ExperimentArgs),
    /// Estimate the kernel-matrix entry sum s(K)
    Sum(ExperimentArgs),
    /// Draw the one-shot sampling-lemma estimator Z for s(K)
    Estimator(EstimatorArgs),
    /// Generate a synthetic dataset in the point file format
    Gen(GenArgs),
    /// Run the noisy-power-method adversary constructions
    Adversary(AdversaryArgs),
}

/// Dataset source: exactly one of `--input` / `--gen`.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct DataArgs {
    /// Point file: one point per line, whitespace- or comma-separated
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Generator spec `kind:key=value,...`; kinds: identical, separated,
    /// gaussian_blobs, dp
    #[arg(long, value_name = "SPEC")]
    gen: Option<String>,
}

#[derive(Args)]
struct KernelArgs {
    /// Kernel family: gaussian, exponential, laplacian, rational_quadratic
    #[arg(long, default_value = "gaussian", value_name = "FAMILY")]
    kernel: String,
    /// Kernel scale parameter s
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Exponent beta (rational_quadratic only)
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

impl KernelArgs {
    fn build(&self) -> Result<KernelSpec> {
        match self.kernel.as_str() {
            "gaussian" => KernelSpec::gaussian(self.scale),
            "exponential" => KernelSpec::exponential(self.scale),
            "laplacian" => KernelSpec::laplacian(self.scale),
            "rational_quadratic" | "rational-quadratic" => {
                KernelSpec::rational_quadratic(self.scale, self.beta)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel family '{other}' (expected gaussian, exponential, \
                 laplacian, rational_quadratic)"
            ))),
        }
    }

    fn echo(&self) -> KernelEcho {
        let rational = matches!(self.kernel.as_str(), "rational_quadratic" | "rational-quadratic");
        KernelEcho {
            family: if rational {
                "rational_quadratic".to_string()
            } else {
                self.kernel.clone()
            },
            scale: self.scale,
            beta: rational.then_some(self.beta),
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Relative accuracy target, in (0, 1)
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Density-oracle backend: exact or sampling
    #[arg(long, default_value = "sampling")]
    backend: String,
    /// Master seed; trial t runs on the derived stream (seed, t)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of independent trials
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    trials: u32,
    /// Score every trial against the exact quadratic-cost oracle
    #[arg(long)]
    oracle: bool,
    /// Exit with code 3 if any trial fails its contract (implies --oracle)
    #[arg(long)]
    strict: bool,
    /// Write the JSON report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatmulArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Number of random non-negative columns in the probe matrix A
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    cols: u32,
}

#[derive(Args)]
struct EstimatorArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Bernoulli inclusion probability; default min(4 / (eps^2 sqrt n), 1)
    #[arg(long)]
    q: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec `kind:key=value,...`; kinds: identical, separated,
    /// gaussian_blobs, dp
    #[arg(long, value_name = "SPEC")]
    gen: String,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Seed for the generator draw
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the points here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AdversaryArgs {
    /// Construction: stagnation, iteration-lb, or signed-noise
    #[arg(long, value_name = "MODE")]
    mode: String,
    /// Instance size n
    #[arg(long)]
    n: u64,
    /// Oracle accuracy eps (stagnation and iteration-lb modes)
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Noise budget delta
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Write the JSON report here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Mvp(args) => experiment("mvp", &args, |exp| exec::run_mvp(exp)),
        Command::Matmul(args) => experiment("matmul", &args.common, |exp| {
            exec::run_matmul(exp, args.cols)
        }),
        Command::Quadform(args) => experiment("quadform", &args, |exp| exec::run_quadform(exp)),
        Command::Topeig(args) => experiment("topeig", &args, |exp| exec::run_topeig(exp)),
        Command::Sum(args) => experiment("sum", &args, |exp| exec::run_sum(exp)),
        Command::Estimator(args) => experiment("estimator", &args.common, |exp| {
            exec::run_estimator(exp, args.q)
        }),
        Command::Gen(args) => run_gen(&args),
        Command::Adversary(args) => run_adversary(&args),
    }
}

/// Shared driver for the six experiment commands: load data, cap-check the
/// oracle, run the trials, emit the report, map `--strict` failures to the
/// exit code.
fn experiment(
    command: &str,
    args: &ExperimentArgs,
    run: impl FnOnce(&Experiment) -> Result<Vec<report::TrialReport>>,
) -> Result<ExitCode> {
    let spec = args.kernel.build()?;
    let backend: KdeBackend = args.backend.parse()?;
    let (pts, input_path, gen_spec) = load_points(&args.data, &spec, args.seed)?;
    let oracle = args.oracle || args.strict;
    let cap = oracle_cap()?;
    if oracle && pts.len() > cap {
        return Err(Error::CapacityExceeded { n: pts.len(), cap });
    }
    let exp = Experiment {
        spec: &spec,
        pts: &pts,
        eps: args.eps,
        backend,
        seed: args.seed,
        trials: args.trials,
        oracle,
    };
    let trial_reports = run(&exp)?;
    let aggregate = report::aggregate(&trial_reports);
    let strict_violation = args.strict && trial_reports.iter().any(|t| t.pass == Some(false));
    let rep = ExperimentReport {
        command: command.to_string(),
        kernel: args.kernel.echo(),
        eps: args.eps,
        backend: match backend {
            KdeBackend::Exact => "exact".to_string(),
            KdeBackend::Sampling => "sampling".to_string(),
        },
        seed: args.seed,
        trials: args.trials,
        n: pts.len(),
        dim: pts.dim(),
        input_path,
        gen_spec,
        oracle_enabled: oracle,
        oracle_cap: cap,
        contract: contract_text(command).to_string(),
        trial_reports,
        aggregate,
    };
    emit_json(args.out.as_deref(), &rep)?;
    Ok(if strict_violation {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn run_gen(args: &GenArgs) -> Result<ExitCode> {
    let spec = args.kernel.build()?;
    let gen_spec = parse_gen_checked(&args.gen)?;
    let pts = generate(&gen_spec, &spec, args.seed)?;
    emit_text(args.out.as_deref(), &format_points(&pts))?;
    Ok(ExitCode::SUCCESS)
}

fn run_adversary(args: &AdversaryArgs) -> Result<ExitCode> {
    let mut rep = AdversaryReport {
        command: "adversary".to_string(),
        mode: args.mode.clone(),
        n: args.n,
        eps: args.eps,
        delta: args.delta,
        legal: None,
        ratio: None,
        tail_eigenvalue: None,
        rayleigh: None,
        lambda1: None,
        stagnation_steps: None,
        signed_inner: None,
        required_delta: None,
    };
    let n_usize = usize::try_from(args.n)
        .map_err(|_| Error::InvalidArgument(format!("n = {} does not fit usize", args.n)))?;
    match args.mode.as_str() {
        "stagnation" => {
            let check = adversary_stagnation_check(n_usize, args.eps, args.delta)?;
            rep.legal = Some(check.legal);
            rep.ratio = Some(check.ratio);
            rep.tail_eigenvalue = Some(check.tail_eigenvalue);
            rep.rayleigh = Some(check.rayleigh);
            rep.lambda1 = Some(check.lambda1);
        }
        "iteration-lb" => {
            rep.stagnation_steps = Some(adversary_iteration_lb_check(args.n, args.eps, args.delta)?);
        }
        "signed-noise" => {
            rep.signed_inner = Some(adversary_signed_noise_demo(n_usize, args.delta)?);
            rep.required_delta = Some(signed_noise_required_delta(n_usize)?);
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown adversary mode '{other}' (expected stagnation, iteration-lb, \
                 signed-noise)"
            )))
        }
    }
    emit_json(args.out.as_deref(), &rep)?;
    Ok(ExitCode::SUCCESS)
}

/// Loads the dataset and returns it with the config-echo strings.
fn load_points(
    data: &DataArgs,
    kernel: &KernelSpec,
    seed: u64,
) -> Result<(PointSet, Option<String>, Option<String>)> {
    match (&data.input, &data.gen) {
        (Some(path), None) => Ok((
            read_points(path)?,
            Some(path.display().to_string()),
            None,
        )),
        (None, Some(text)) => {
            let spec = parse_gen_checked(text)?;
            Ok((generate(&spec, kernel, seed)?, None, Some(text.clone())))
        }
        // clap's group guarantees exactly one source.
        _ => unreachable!("argument group enforces one of --input/--gen"),
    }
}

fn parse_gen_checked(text: &str) -> Result<GenSpec> {
    let spec = parse_gen_spec(text)?;
    if spec.kind == GenKind::Dp && spec.n > DP_GEN_CAP {
        return Err(Error::InvalidArgument(format!(
            "dp generator is capped at n = {DP_GEN_CAP} (its points live in R^n)"
        )));
    }
    Ok(spec)
}

fn contract_text(command: &str) -> &'static str {
    match command {
        "mvp" => "||z - K y||_2 <= eps ||K y||_2 and z >= K y - 1e-12 entrywise",
        "matmul" => "||Z - K A||_F <= eps ||K A||_F and Z >= K A - 1e-12 entrywise",
        "quadform" => "(1 - 1e-12) v'Kv <= estimate <= (1 + 10 eps) v'Kv",
        "topeig" => {
            "u'Ku >= (1 - 5 eps/8) lambda_1 and (1 - eps/2) lambda_1 <= lambda <= \
             (1 + eps/8) lambda_1"
        }
        "sum" => "|estimate - s(K)| <= eps s(K)",
        "estimator" => "|Z - s(K)| <= eps s(K)",
        other => unreachable!("no contract for command {other}"),
    }
}

/// The oracle size cap: `KDELINALG_ORACLE_CAP` when set, else the library
/// default.
fn oracle_cap() -> Result<usize> {
    match std::env::var("KDELINALG_ORACLE_CAP") {
        Ok(text) => text.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!(
                "KDELINALG_ORACLE_CAP must be a positive integer, got '{text}'"
            ))
        }),
        Err(_) => Ok(DEFAULT_ORACLE_CAP),
    }
}

fn emit_json(out: Option<&Path>, report: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).expect("report serialization");
    text.push('\n');
    emit_text(out, &text)
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
