//! `sqmf`: generate data, factorize, evaluate and benchmark from the shell.
//!
//! Exit codes: 0 success, 2 bad arguments or configuration, 3 numerical
//! failure (rank deficiency, singular systems), 4 I/O or file format errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sqmf::bench::{aggregate, run_cell, write_accuracy_csv, write_table_csv, BenchConfig, DataSpec};
use sqmf::factorize::{run, Factorization, HalfSteps, Method, QnmfOptions};
use sqmf::io::{read_json, read_planes_csv, read_qmat, read_real_csv, write_atomic, write_json, write_qmat, write_real_csv};
use sqmf::metrics::{evaluate, selection_consistent, EvalReport, Truth};
use sqmf::nnls::{ConvergenceTrace, NnlsOptions};
use sqmf::qspa::SelectionResult;
use sqmf::synth::{bundle_from_ground_truth, gen_same_intensity, gen_separable, SynthConfig};
use sqmf::nalgebra::DMatrix;
use sqmf::{QuaternionMatrix, SqmfError};

#[derive(Parser)]
#[command(name = "sqmf", version, about = "Separable quaternion matrix factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set with ground truth.
    Synth(SynthArgs),
    /// Factorize a quaternion matrix.
    Factorize(FactorizeArgs),
    /// Score a factorization, optionally against ground truth.
    Eval(EvalArgs),
    /// Run methods over noise levels and seeds and tabulate the mean scores.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    /// `W* H*` with `H* = [I, U]` up to column order.
    Separable,
    /// Ten sources, four of which repeat another source's intensity.
    SameIntensity,
    /// Intensity sources and activations read from `--w0` and `--h0`.
    GroundTruth,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Sqmf,
    SpaStar,
    Qnmf,
    Imqnmf,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Sqmf => Method::Sqmf,
            MethodArg::SpaStar => Method::SpaStar,
            MethodArg::Qnmf => Method::Qnmf,
            MethodArg::Imqnmf => Method::Imqnmf,
        }
    }
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct SolverArgs {
    /// Floor of the hierarchical solver.
    #[arg(long, default_value_t = 1e-12)]
    xi: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Relative-change stopping threshold.
    #[arg(long, default_value_t = 1e-4)]
    eps0: f64,
    /// Random restarts of the alternating methods.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
}

impl SolverArgs {
    fn nnls(&self) -> NnlsOptions {
        NnlsOptions {
            xi: self.xi,
            max_iter: self.max_iter,
            eps0: self.eps0,
            record_trace: true,
        }
    }
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "separable")]
    kind: Kind,
    /// Spectral bands.
    #[arg(long, default_value_t = 30)]
    m: usize,
    /// Pixels.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Sources (fixed at 10 for same-intensity data).
    #[arg(long, default_value_t = 5)]
    r: usize,
    /// Intensity sources, one per column (ground-truth data).
    #[arg(long)]
    w0: Option<PathBuf>,
    /// Activations, one row per source (ground-truth data).
    #[arg(long)]
    h0: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    gen: GenArgs,
    /// Noise level `||N|| / ||M*||`.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Degree of polarization of the sources.
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct FactorizeArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    r: usize,
    /// QMAT input.
    #[arg(long, default_value = "m.qmat", conflicts_with = "planes")]
    input: PathBuf,
    /// Read the input from three or four plane CSV files (S0,S1,S2[,S3]).
    #[arg(long, value_delimiter = ',')]
    planes: Option<Vec<PathBuf>>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Seed of the random restarts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for w.qmat, h.csv and trace.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// QMAT data the factorization was computed from.
    #[arg(long, default_value = "m.qmat")]
    input: PathBuf,
    /// Directory holding w.qmat, h.csv and trace.json.
    #[arg(long, default_value = ".")]
    factors: PathBuf,
    /// Directory holding wstar.qmat, hstar.csv and kstar.json. Defaults to the
    /// input's directory when those files are present there.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Ignore ground truth even if present.
    #[arg(long, conflicts_with = "truth")]
    no_truth: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write the CSV row to a file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sqmf,spa-star,qnmf,imqnmf")]
    methods: Vec<MethodArg>,
    #[arg(long = "eps", value_delimiter = ',', default_value = "0,0.05,0.1")]
    eps_levels: Vec<f64>,
    /// Number of seeds, used as 0..N unless `--seed-list` is given.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Aggregated table.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    /// Per-seed selection accuracy.
    #[arg(long, default_value = "accuracy.csv")]
    accuracy_out: PathBuf,
    /// Write NA in the time column so the table is byte-reproducible.
    #[arg(long)]
    omit_time: bool,
}

/// Everything written next to a factorization.
#[derive(Serialize, Deserialize)]
struct RunRecord {
    method: Method,
    rank: usize,
    objective: f64,
    time_s: f64,
    selection: Option<SelectionResult>,
    trace: ConvergenceTrace,
    half_steps: Vec<HalfSteps>,
    restarts: usize,
    failures: usize,
    input: PathBuf,
    seed: u64,
    solver: SolverArgs,
}

enum CliError {
    Config(String),
    Core(SqmfError),
}

impl From<SqmfError> for CliError {
    fn from(e: SqmfError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(SqmfError::Io(_) | SqmfError::Format { .. }) => 4,
            CliError::Core(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Factorize(a) => factorize(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = match &e {
                CliError::Config(m) => m.clone(),
                CliError::Core(c) => c.to_string(),
            };
            eprintln!("error: {msg}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn ground_truth_inputs(gen: &GenArgs) -> CliResult<(DMatrix<f64>, DMatrix<f64>)> {
    match (&gen.w0, &gen.h0) {
        (Some(w), Some(h)) => Ok((read_real_csv(w)?, read_real_csv(h)?)),
        _ => Err(CliError::Config("ground-truth data needs both --w0 and --h0".into())),
    }
}

fn data_spec(gen: &GenArgs) -> CliResult<DataSpec> {
    Ok(match gen.kind {
        Kind::Separable => DataSpec::Separable { m: gen.m, n: gen.n, r: gen.r },
        Kind::SameIntensity => DataSpec::SameIntensity { m: gen.m, n: gen.n },
        Kind::GroundTruth => {
            let (w0, h0) = ground_truth_inputs(gen)?;
            DataSpec::GroundTruth { w0, h0 }
        }
    })
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let mut cfg = SynthConfig::new(a.gen.m, a.gen.n, a.gen.r).with_seed(a.seed).with_eps(a.eps);
    cfg.phi = a.phi;
    let bundle = match a.gen.kind {
        Kind::Separable => gen_separable(&cfg)?,
        Kind::SameIntensity => {
            cfg.r = 10;
            gen_same_intensity(&cfg)?
        }
        Kind::GroundTruth => {
            let (w0, h0) = ground_truth_inputs(&a.gen)?;
            bundle_from_ground_truth(&w0, &h0, cfg)?
        }
    };
    std::fs::create_dir_all(&a.out).map_err(SqmfError::from)?;
    write_qmat(a.out.join("m.qmat"), &bundle.m)?;
    write_qmat(a.out.join("mstar.qmat"), &bundle.mstar)?;
    write_qmat(a.out.join("wstar.qmat"), &bundle.wstar)?;
    write_real_csv(a.out.join("hstar.csv"), &bundle.hstar)?;
    write_json(a.out.join("kstar.json"), &bundle.kstar)?;
    write_json(a.out.join("synth.json"), &bundle.config)?;
    println!(
        "wrote {}x{} matrix with {} sources to {} (measured eps {:.6})",
        bundle.m.rows(),
        bundle.m.cols(),
        bundle.wstar.cols(),
        a.out.display(),
        bundle.measured_eps()
    );
    Ok(())
}

fn load_input(input: &Path, planes: Option<&[PathBuf]>) -> CliResult<QuaternionMatrix> {
    Ok(match planes {
        Some([s0, s1, s2]) => read_planes_csv(s0, s1, s2, None)?,
        Some([s0, s1, s2, s3]) => read_planes_csv(s0, s1, s2, Some(s3))?,
        Some(_) => return Err(CliError::Config("--planes takes three or four files".into())),
        None => read_qmat(input)?,
    })
}

fn factorize(a: FactorizeArgs) -> CliResult<()> {
    let m = load_input(&a.input, a.planes.as_deref())?;
    let method: Method = a.method.into();
    let mut opts = QnmfOptions::new(a.r);
    opts.nnls = a.solver.nnls();
    opts.restarts = a.solver.restarts;
    opts.seed = a.seed;
    let start = Instant::now();
    let f: Factorization = run(&m, method, &opts)?;
    let time_s = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(&a.out).map_err(SqmfError::from)?;
    write_qmat(a.out.join("w.qmat"), &f.w)?;
    write_real_csv(a.out.join("h.csv"), &f.h)?;
    let objective = f.objective(&m)?;
    let record = RunRecord {
        method,
        rank: a.r,
        objective,
        time_s,
        selection: f.selection.clone(),
        trace: f.trace.clone(),
        half_steps: f.half_steps.clone(),
        restarts: f.restarts,
        failures: f.failures,
        input: a.input.clone(),
        seed: a.seed,
        solver: a.solver.clone(),
    };
    write_json(a.out.join("trace.json"), &record)?;
    if let Some(sel) = &f.selection {
        println!("selected columns: {:?}", sel.indices);
    }
    println!("{method}: objective {objective:.6e}, {} restart failures, {time_s:.3} s", f.failures);
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let m = read_qmat(&a.input)?;
    let w = read_qmat(a.factors.join("w.qmat"))?;
    let h = read_real_csv(a.factors.join("h.csv"))?;
    let record: RunRecord = read_json(a.factors.join("trace.json"))?;
    let f = Factorization {
        method: record.method,
        w,
        h,
        trace: record.trace,
        selection: record.selection,
        half_steps: record.half_steps,
        restarts: record.restarts,
        failures: record.failures,
    };

    let truth_dir = if a.no_truth {
        None
    } else {
        a.truth.clone().or_else(|| {
            let dir = a.input.parent().map(Path::to_path_buf).unwrap_or_default();
            let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
            (dir.join("wstar.qmat").exists() && dir.join("hstar.csv").exists()).then_some(dir)
        })
    };
    let truth_data = match &truth_dir {
        Some(dir) => {
            let wstar = read_qmat(dir.join("wstar.qmat"))?;
            let hstar = read_real_csv(dir.join("hstar.csv"))?;
            let kpath = dir.join("kstar.json");
            let kstar: Option<Vec<usize>> = if kpath.exists() { Some(read_json(kpath)?) } else { None };
            Some((wstar, hstar, kstar))
        }
        None => None,
    };
    let truth = truth_data.as_ref().map(|(w, h, k)| Truth {
        wstar: w,
        hstar: h,
        kstar: k.as_deref(),
    });
    let mut report: EvalReport = evaluate(&m, &f, truth, record.time_s)?;
    if let Some(cfg) = truth_dir.as_ref().map(|d| d.join("synth.json")).filter(|p| p.exists()) {
        let cfg: SynthConfig = read_json(cfg)?;
        report.eps = Some(cfg.eps);
    }
    if let Some(sel) = &f.selection {
        if !selection_consistent(&m, &f.w, &sel.indices) {
            eprintln!("warning: W is not a copy of the selected columns {:?}", sel.indices);
        }
    }

    let mut out = Vec::new();
    EvalReport::write_csv(std::slice::from_ref(&report), &mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    if let Some(p) = &a.csv {
        write_atomic(p, &out)?;
    }
    if let Some(p) = &a.json {
        write_json(p, &report)?;
    }
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("SQMF_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("SQMF_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(CliError::Config("SQMF_THREADS must be at least 1".into()));
        }
        // Ignored if the pool is already running, which only happens in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult<()> {
    configure_threads()?;
    let mut cfg = BenchConfig::new(data_spec(&a.gen)?);
    cfg.methods = a.methods.iter().map(|&m| m.into()).collect();
    cfg.eps = a.eps_levels.clone();
    cfg.seeds = a.seed_list.clone().unwrap_or_else(|| (0..a.seeds).collect());
    cfg.nnls = a.solver.nnls();
    cfg.restarts = a.solver.restarts;
    if cfg.methods.is_empty() || cfg.eps.is_empty() || cfg.seeds.is_empty() {
        return Err(CliError::Config("bench needs at least one method, noise level and seed".into()));
    }

    let per_cell: Vec<_> = cfg.cells().into_par_iter().map(|(eps, seed)| run_cell(&cfg, eps, seed)).collect();
    let mut cells = Vec::new();
    for c in per_cell {
        cells.extend(c?);
    }
    let rows = aggregate(&cfg, &cells);

    let mut table = Vec::new();
    write_table_csv(&rows, a.omit_time, &mut table)?;
    write_atomic(&a.out, &table)?;
    let mut acc = Vec::new();
    write_accuracy_csv(&cells, &mut acc)?;
    write_atomic(&a.accuracy_out, &acc)?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}
