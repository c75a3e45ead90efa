//! Benchmark protocol: for every noise level and seed, generate a bundle,
//! run every method and score it against the ground truth; then average the
//! scores over seeds.
//!
//! Each `(method, eps, seed)` cell is independent, so callers may evaluate
//! [`BenchConfig::cells`] in any order or in parallel and pass the results to
//! [`aggregate`].

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::factorize::{run, Method, QnmfOptions};
use crate::metrics::{csv_io, evaluate, EvalReport, Truth};
use crate::nnls::NnlsOptions;
use crate::synth::{bundle_from_ground_truth, gen_same_intensity, gen_separable, SynthBundle, SynthConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Separable { m: usize, n: usize, r: usize },
    /// The ten-source construction with repeated intensities.
    SameIntensity { m: usize, n: usize },
    /// User-supplied intensity sources and activations.
    GroundTruth { w0: DMatrix<f64>, h0: DMatrix<f64> },
}

impl DataSpec {
    pub fn rank(&self) -> usize {
        match self {
            DataSpec::Separable { r, .. } => *r,
            DataSpec::SameIntensity { .. } => 10,
            DataSpec::GroundTruth { w0, .. } => w0.ncols(),
        }
    }

    pub fn generate(&self, eps: f64, seed: u64) -> Result<SynthBundle> {
        match self {
            DataSpec::Separable { m, n, r } => gen_separable(&SynthConfig::new(*m, *n, *r).with_seed(seed).with_eps(eps)),
            DataSpec::SameIntensity { m, n } => gen_same_intensity(&SynthConfig::new(*m, *n, 10).with_seed(seed).with_eps(eps)),
            DataSpec::GroundTruth { w0, h0 } => bundle_from_ground_truth(w0, h0, SynthConfig::new(0, 0, 0).with_seed(seed).with_eps(eps)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub data: DataSpec,
    pub methods: Vec<Method>,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub nnls: NnlsOptions,
    pub restarts: usize,
}

impl BenchConfig {
    pub fn new(data: DataSpec) -> Self {
        BenchConfig {
            data,
            methods: Method::ALL.to_vec(),
            eps: vec![0.0, 0.05, 0.1],
            seeds: (0..10).collect(),
            nnls: NnlsOptions::default(),
            restarts: 10,
        }
    }

    /// Every `(eps, seed)` pair, in table order.
    pub fn cells(&self) -> Vec<(f64, u64)> {
        self.eps.iter().flat_map(|&e| self.seeds.iter().map(move |&s| (e, s))).collect()
    }

    fn qnmf_options(&self, seed: u64) -> QnmfOptions {
        let mut o = QnmfOptions::new(self.data.rank());
        o.nnls = self.nnls;
        o.restarts = self.restarts;
        o.seed = seed;
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub eps: f64,
    pub seed: u64,
    pub report: Option<EvalReport>,
    pub restart_failures: usize,
    pub error: Option<String>,
}

/// Generates the bundle for `(eps, seed)` once and runs every method on it.
pub fn run_cell(cfg: &BenchConfig, eps: f64, seed: u64) -> Result<Vec<CellResult>> {
    let bundle = cfg.data.generate(eps, seed)?;
    let opts = cfg.qnmf_options(seed);
    let truth = Truth {
        wstar: &bundle.wstar,
        hstar: &bundle.hstar,
        kstar: Some(&bundle.kstar),
    };
    let mut out = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let start = Instant::now();
        let result = run(&bundle.m, method, &opts);
        let elapsed = start.elapsed().as_secs_f64();
        let cell = match result {
            Ok(f) => {
                let mut report = evaluate(&bundle.m, &f, Some(truth), elapsed)?;
                report.eps = Some(eps);
                CellResult {
                    method,
                    eps,
                    seed,
                    report: Some(report),
                    restart_failures: f.failures,
                    error: None,
                }
            }
            Err(e) if e.is_numeric() => CellResult {
                method,
                eps,
                seed,
                report: None,
                restart_failures: match e {
                    crate::SqmfError::ConvergenceFailure { failures, .. } => failures,
                    _ => 0,
                },
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        out.push(cell);
    }
    Ok(out)
}

/// Mean scores over the successful runs of one `(method, eps)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: Method,
    pub eps: f64,
    pub appro: Option<f64>,
    pub app_s: [Option<f64>; 4],
    pub app_w: Option<f64>,
    pub app_h: Option<f64>,
    pub time_s: Option<f64>,
    pub runs: usize,
    pub failed_runs: usize,
    pub restart_failures: usize,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Rows follow the order of `methods` then `eps`.
pub fn aggregate(cfg: &BenchConfig, cells: &[CellResult]) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for &eps in &cfg.eps {
            let group: Vec<&CellResult> = cells.iter().filter(|c| c.method == method && c.eps == eps).collect();
            let ok: Vec<&EvalReport> = group.iter().filter_map(|c| c.report.as_ref()).collect();
            rows.push(TableRow {
                method,
                eps,
                appro: mean(ok.iter().map(|r| Some(r.appro))),
                app_s: std::array::from_fn(|l| mean(ok.iter().map(|r| r.app_s[l]))),
                app_w: mean(ok.iter().map(|r| r.app_w)),
                app_h: mean(ok.iter().map(|r| r.app_h)),
                time_s: mean(ok.iter().map(|r| Some(r.time_s))),
                runs: group.len(),
                failed_runs: group.len() - ok.len(),
                restart_failures: group.iter().map(|c| c.restart_failures).sum(),
            });
        }
    }
    rows
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

pub const TABLE_HEADER: [&str; 13] = [
    "method", "eps", "Appro", "app-s0", "app-s1", "app-s2", "app-s3", "appW", "appH", "time", "runs", "failed_runs", "restart_failures",
];

/// With `omit_time` the time column holds `NA`, making the output a pure
/// function of the configuration.
pub fn write_table_csv<W: Write>(rows: &[TableRow], omit_time: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER).map_err(csv_io)?;
    for r in rows {
        let mut rec = vec![r.method.to_string(), format!("{:.6}", r.eps), cell(r.appro)];
        rec.extend(r.app_s.iter().map(|v| cell(*v)));
        rec.push(cell(r.app_w));
        rec.push(cell(r.app_h));
        rec.push(if omit_time { "NA".into() } else { cell(r.time_s) });
        rec.push(r.runs.to_string());
        rec.push(r.failed_runs.to_string());
        rec.push(r.restart_failures.to_string());
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-seed selection accuracy of the column-selecting methods; failed runs
/// are written as `NA`.
pub fn write_accuracy_csv<W: Write>(cells: &[CellResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "eps", "seed", "accuracy"]).map_err(csv_io)?;
    let mut sorted: Vec<&CellResult> = cells.iter().filter(|c| c.method.is_selection()).collect();
    let rank = |m: Method| Method::ALL.iter().position(|&x| x == m);
    sorted.sort_by(|a, b| (rank(a.method), a.eps, a.seed).partial_cmp(&(rank(b.method), b.eps, b.seed)).expect("finite eps"));
    for c in sorted {
        let acc = c.report.as_ref().and_then(|r| r.accuracy);
        w.write_record([c.method.to_string(), format!("{:.6}", c.eps), c.seed.to_string(), cell(acc)]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell sequentially.
pub fn run_bench(cfg: &BenchConfig) -> Result<(Vec<TableRow>, Vec<CellResult>)> {
    let mut cells = Vec::new();
    for (eps, seed) in cfg.cells() {
        cells.extend(run_cell(cfg, eps, seed)?);
    }
    Ok((aggregate(cfg, &cells), cells))
}
