//! Batch experiments: build kernels, run one method per seed, round with
//! k-means, score against the truth and write every artifact with a hashed
//! manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::amanpl::{amanpl_run, AmanplConfig};
use crate::baselines::{self, AdmmOptions, AdmmTrace, AmaOptions, AmaTrace};
use crate::error::{Result, SscError};
use crate::evalsynth::{kmeans, nmi, synth1, synth2, KmeansOptions};
use crate::graph::{gaussian_kernel, kernel_family, load_matrix, normalized_laplacian, DataMatrix, KernelFamily, LoadOptions, DEFAULT_DELTAS, DEFAULT_NEIGHBORS};
use crate::io::{read_labels, write_matrix};
use crate::manpl::{manpl_run, objective_ssc, ManplConfig, RunTrace};
use crate::stiefel::StiefelPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sc")]
    Sc,
    #[serde(rename = "ssc-cadmm")]
    SscCadmm,
    #[serde(rename = "ssc-nadmm")]
    SscNadmm,
    #[serde(rename = "ssc-manpl")]
    SscManpl,
    #[serde(rename = "mkssc-ama-cadmm")]
    AmaCadmm,
    #[serde(rename = "mkssc-ama-nadmm")]
    AmaNadmm,
    #[serde(rename = "mkssc-amanpl")]
    Amanpl,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Sc,
        Method::SscCadmm,
        Method::SscNadmm,
        Method::SscManpl,
        Method::AmaCadmm,
        Method::AmaNadmm,
        Method::Amanpl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sc => "sc",
            Method::SscCadmm => "ssc-cadmm",
            Method::SscNadmm => "ssc-nadmm",
            Method::SscManpl => "ssc-manpl",
            Method::AmaCadmm => "mkssc-ama-cadmm",
            Method::AmaNadmm => "mkssc-ama-nadmm",
            Method::Amanpl => "mkssc-amanpl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SscError::Config(format!("unknown method {s:?}")))
    }

    pub fn multi_kernel(self) -> bool {
        matches!(self, Method::AmaCadmm | Method::AmaNadmm | Method::Amanpl)
    }

    /// Parameter names the method accepts.
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            Method::Sc => &[],
            Method::SscCadmm => &["lambda", "mu"],
            Method::SscNadmm => &["lambda", "sigma", "mu"],
            Method::SscManpl => &["lambda", "t", "gamma"],
            Method::AmaCadmm => &["lambda", "rho", "mu"],
            Method::AmaNadmm => &["lambda", "rho", "sigma", "mu"],
            Method::Amanpl => &["lambda", "rho", "t", "gamma"],
        }
    }

    /// Default `λ` per method.
    pub fn default_lambda(self) -> f64 {
        match self {
            Method::Sc => 0.0,
            Method::SscCadmm | Method::SscNadmm | Method::AmaCadmm | Method::AmaNadmm => 1e-4,
            Method::SscManpl => 1e-3,
            Method::Amanpl => 5e-3,
        }
    }

    pub fn default_rho(self) -> f64 {
        match self {
            Method::Amanpl => 1.0,
            _ => 0.2,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Optional method parameters; unset values take the per-method defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl MethodParams {
    fn set(&self) -> Vec<(&'static str, f64)> {
        [
            ("lambda", self.lambda),
            ("rho", self.rho),
            ("sigma", self.sigma),
            ("mu", self.mu),
            ("t", self.t),
            ("gamma", self.gamma),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synth1 {
        n: usize,
        p: usize,
        c: usize,
        #[serde(default = "synth1_noise")]
        noise: f64,
    },
    Synth2 {
        n: usize,
        p: usize,
        c: usize,
        #[serde(default = "synth2_dims")]
        d: usize,
        #[serde(default = "synth2_noise")]
        noise: f64,
    },
    File {
        path: PathBuf,
        /// Separate ground-truth file; otherwise labels come from the data.
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        load: LoadOptions,
    },
}

fn synth1_noise() -> f64 {
    0.3
}

fn synth2_dims() -> usize {
    20
}

fn synth2_noise() -> f64 {
    0.2
}

impl DataSource {
    /// Generated data depends on the seed; file data does not.
    pub fn load(&self, seed: u64) -> Result<DataMatrix> {
        match self {
            DataSource::Synth1 { n, p, c, noise } => synth1(*n, *p, *c, *noise, seed),
            DataSource::Synth2 { n, p, c, d, noise } => synth2(*n, *p, *c, *d, *noise, seed),
            DataSource::File { path, labels, load } => {
                let data = load_matrix(path, load)?;
                match labels {
                    Some(lp) => DataMatrix::new(data.features().clone(), Some(read_labels(lp)?)),
                    None => Ok(data),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelGrid {
    pub deltas: Vec<f64>,
    pub neighbors: Vec<usize>,
    /// `(δ, m)` of the one kernel used by single-kernel methods.
    pub single: (f64, usize),
}

impl Default for KernelGrid {
    fn default() -> Self {
        Self {
            deltas: DEFAULT_DELTAS.to_vec(),
            neighbors: DEFAULT_NEIGHBORS.to_vec(),
            single: (2.0, 15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub method: Method,
    /// Number of clusters.
    pub c: usize,
    #[serde(default)]
    pub params: MethodParams,
    #[serde(default)]
    pub kernels: KernelGrid,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Outer stopping threshold on the objective change.
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub kmeans: KmeansOptions,
    /// Write `|UUᵀ|` (or `|P|`) heatmaps per seed.
    #[serde(default)]
    pub heatmaps: bool,
    /// Record wall-clock times. Off by default so reports are reproducible
    /// byte for byte.
    #[serde(default)]
    pub timing: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_stop_tol() -> f64 {
    1e-5
}

impl ExperimentConfig {
    pub fn new(data: DataSource, method: Method, c: usize) -> Self {
        Self {
            data,
            method,
            c,
            params: MethodParams::default(),
            kernels: KernelGrid::default(),
            seeds: default_seeds(),
            output_dir: None,
            stop_tol: default_stop_tol(),
            max_iters: None,
            kmeans: KmeansOptions::default(),
            heatmaps: false,
            timing: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let allowed = self.method.parameters();
        for (name, value) in self.params.set() {
            if !allowed.contains(&name) {
                return Err(SscError::Config(format!(
                    "parameter {name} does not apply to {} (accepted: {})",
                    self.method,
                    if allowed.is_empty() { "none".to_string() } else { allowed.join(", ") }
                )));
            }
            if !value.is_finite() {
                return Err(SscError::Config(format!("parameter {name} must be finite")));
            }
        }
        let p = &self.params;
        let positive = [("rho", p.rho), ("sigma", p.sigma), ("mu", p.mu), ("t", p.t)];
        for (name, v) in positive {
            if let Some(v) = v {
                if v <= 0.0 {
                    return Err(SscError::Config(format!("{name} must be > 0, got {v}")));
                }
            }
        }
        if p.lambda.is_some_and(|l| l < 0.0) {
            return Err(SscError::Config("lambda must be >= 0".into()));
        }
        if p.gamma.is_some_and(|g| !(g > 0.0 && g < 1.0)) {
            return Err(SscError::Config("gamma must lie in (0, 1)".into()));
        }
        if self.c == 0 {
            return Err(SscError::Config("c must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(SscError::Config("seeds must not be empty".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(SscError::Config("stop_tol must be >= 0".into()));
        }
        if self.max_iters == Some(0) {
            return Err(SscError::Config("max_iters must be positive".into()));
        }
        let k = &self.kernels;
        if k.deltas.is_empty() || k.neighbors.is_empty() {
            return Err(SscError::Config("kernel grid must not be empty".into()));
        }
        if k.deltas.iter().chain([&k.single.0]).any(|d| !(*d > 0.0)) || k.neighbors.iter().chain([&k.single.1]).any(|&m| m == 0) {
            return Err(SscError::Config("kernel bandwidths and neighbor counts must be positive".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(SscError::Config("seeds must be distinct".into()));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda.unwrap_or(self.method.default_lambda())
    }

    pub fn rho(&self) -> f64 {
        self.params.rho.unwrap_or(self.method.default_rho())
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma.unwrap_or(1e-2)
    }

    pub fn mu(&self) -> f64 {
        self.params.mu.unwrap_or(1.0)
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma.unwrap_or(0.5)
    }

    fn admm(&self) -> AdmmOptions {
        let mut o = AdmmOptions {
            mu: self.mu(),
            stop_tol: self.stop_tol,
            ..AdmmOptions::default()
        };
        if let Some(m) = self.max_iters {
            o.max_iters = m;
        }
        o
    }

    fn ama(&self) -> AmaOptions {
        let mut o = AmaOptions {
            rho: self.rho(),
            stop_tol: self.stop_tol,
            admm: self.admm(),
            ..AmaOptions::default()
        };
        if let Some(m) = self.max_iters {
            o.max_outer = m;
        }
        o
    }

    fn manpl(&self, seed: u64) -> ManplConfig {
        let mut o = ManplConfig {
            lambda: self.lambda(),
            t: self.params.t,
            gamma: self.gamma(),
            stop_tol: self.stop_tol,
            seed,
            record_timing: self.timing,
            ..ManplConfig::default()
        };
        if let Some(m) = self.max_iters {
            o.max_iters = m;
        }
        o
    }

    fn amanpl(&self, seed: u64) -> AmanplConfig {
        let mut o = AmanplConfig {
            lambda: self.lambda(),
            rho: self.rho(),
            t: self.params.t,
            gamma: self.gamma(),
            stop_tol: self.stop_tol,
            seed,
            record_timing: self.timing,
            ..AmanplConfig::default()
        };
        if let Some(m) = self.max_iters {
            o.max_iters = m;
        }
        o
    }
}

/// What one method run leaves behind.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub u: StiefelPoint,
    /// `UUᵀ`, or the relaxed `P` for the Fantope and splitting methods.
    pub heat: DMatrix<f64>,
    pub objective: f64,
    /// `‖Vᵏ/t‖_F` for the manifold methods, the last primal residual for ADMM.
    pub stationarity: f64,
    pub iterations: usize,
    pub weights: Option<Vec<f64>>,
    pub trace_csv: String,
}

fn admm_trace_csv(trace: &AdmmTrace) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &trace.records {
        w.serialize(r).map_err(|e| SscError::Config(e.to_string()))?;
    }
    csv_string(w)
}

fn ama_trace_csv(trace: &AmaTrace) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let t = trace.initial_weights.len();
    let mut header = vec!["iteration".to_string(), "objective".into(), "admm_iters".into()];
    header.extend((1..=t).map(|i| format!("w{i}")));
    w.write_record(&header).map_err(|e| SscError::Config(e.to_string()))?;
    for r in &trace.records {
        let mut row = vec![r.iteration.to_string(), r.objective.to_string(), r.admm_iters.to_string()];
        row.extend(r.weights.iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(|e| SscError::Config(e.to_string()))?;
    }
    csv_string(w)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| SscError::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| SscError::Config(e.to_string()))
}

fn manpl_trace_csv(trace: &RunTrace) -> Result<String> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| SscError::Config(e.to_string()))
}

/// Single kernel for the one-kernel methods.
pub fn single_laplacian(x: &DataMatrix, grid: &KernelGrid) -> Result<DMatrix<f64>> {
    let (delta, m) = grid.single;
    Ok(normalized_laplacian(&gaussian_kernel(x, delta, m)?)?.matrix().clone())
}

/// Runs the configured method on one data set.
pub fn run_method(config: &ExperimentConfig, x: &DataMatrix, seed: u64) -> Result<MethodOutput> {
    let c = config.c;
    let lambda = config.lambda();
    if config.method.multi_kernel() {
        let family = kernel_family(x, &config.kernels.deltas, &config.kernels.neighbors)?;
        run_multi(config, &family, seed)
    } else {
        let l = single_laplacian(x, &config.kernels)?;
        match config.method {
            Method::Sc => {
                let u = baselines::sc_run(&l, c)?;
                let objective = objective_ssc(&u, &l, 0.0)?;
                Ok(MethodOutput {
                    heat: u.gram(),
                    u,
                    objective,
                    stationarity: 0.0,
                    iterations: 0,
                    weights: None,
                    trace_csv: String::new(),
                })
            }
            Method::SscCadmm => {
                let r = baselines::cadmm_run(&l, c, lambda, &config.admm())?;
                let last = r.trace.records.last().map_or(0.0, |x| x.primal_residual);
                Ok(MethodOutput {
                    objective: baselines::convex_objective(r.fantope.matrix(), &l, lambda),
                    heat: r.fantope.into_matrix(),
                    u: r.u,
                    stationarity: last,
                    iterations: r.trace.iterations(),
                    weights: None,
                    trace_csv: admm_trace_csv(&r.trace)?,
                })
            }
            Method::SscNadmm => {
                let r = baselines::nadmm_run(&l, c, lambda, config.sigma(), &config.admm())?;
                let uut = r.state.u.gram();
                Ok(MethodOutput {
                    objective: baselines::smoothed_objective(&uut, &uut, &l, lambda, config.sigma())?,
                    stationarity: r.state.feasibility_gap(),
                    heat: r.state.p,
                    u: r.state.u,
                    iterations: r.trace.iterations(),
                    weights: None,
                    trace_csv: admm_trace_csv(&r.trace)?,
                })
            }
            Method::SscManpl => {
                let (u, trace) = manpl_run(&l, c, &config.manpl(seed))?;
                Ok(MethodOutput {
                    heat: u.gram(),
                    u,
                    objective: trace.final_objective,
                    stationarity: trace.final_stationarity(),
                    iterations: trace.iterations(),
                    weights: None,
                    trace_csv: manpl_trace_csv(&trace)?,
                })
            }
            _ => unreachable!("multi-kernel methods handled above"),
        }
    }
}

fn run_multi(config: &ExperimentConfig, family: &KernelFamily, seed: u64) -> Result<MethodOutput> {
    let (c, lambda) = (config.c, config.lambda());
    match config.method {
        Method::AmaCadmm => {
            let r = baselines::ama_cadmm_run(family, c, lambda, &config.ama())?;
            Ok(MethodOutput {
                objective: r.trace.records.last().map_or(f64::NAN, |x| x.objective),
                stationarity: 0.0,
                iterations: r.trace.iterations(),
                weights: Some(r.weights.as_slice().to_vec()),
                trace_csv: ama_trace_csv(&r.trace)?,
                heat: r.fantope.into_matrix(),
                u: r.u,
            })
        }
        Method::AmaNadmm => {
            let r = baselines::ama_nadmm_run(family, c, lambda, config.sigma(), &config.ama())?;
            Ok(MethodOutput {
                objective: r.trace.records.last().map_or(f64::NAN, |x| x.objective),
                stationarity: r.state.feasibility_gap(),
                iterations: r.trace.iterations(),
                weights: Some(r.weights.as_slice().to_vec()),
                trace_csv: ama_trace_csv(&r.trace)?,
                heat: r.state.p,
                u: r.u,
            })
        }
        Method::Amanpl => {
            let (u, w, trace) = amanpl_run(family, c, &config.amanpl(seed))?;
            Ok(MethodOutput {
                heat: u.gram(),
                u,
                objective: trace.final_objective,
                stationarity: trace.final_stationarity(),
                iterations: trace.iterations(),
                weights: Some(w.as_slice().to_vec()),
                trace_csv: manpl_trace_csv(&trace)?,
            })
        }
        m => Err(SscError::Config(format!("{m} is a single-kernel method"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub nmi: Option<f64>,
    pub objective: Option<f64>,
    pub stationarity: Option<f64>,
    pub iterations: Option<usize>,
    pub weights: Option<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    pub c: usize,
    pub lambda: f64,
    pub seeds: Vec<SeedReport>,
    /// Over the successful seeds that have ground truth.
    pub nmi_mean: Option<f64>,
    pub nmi_sd: Option<f64>,
    pub failures: usize,
}

impl Report {
    pub fn any_failed(&self) -> bool {
        self.failures > 0
    }
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_sd(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

struct SeedRun {
    report: SeedReport,
    output: Option<MethodOutput>,
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> SeedRun {
    let clock = Instant::now();
    let attempt = (|| -> Result<(MethodOutput, Vec<usize>, Option<f64>)> {
        let x = config.data.load(seed)?;
        let out = run_method(config, &x, seed)?;
        let km = kmeans(out.u.matrix(), config.c, seed, &config.kmeans)?;
        let score = match x.labels() {
            Some(truth) => Some(nmi(&km.labels, truth)?),
            None => None,
        };
        Ok((out, km.labels, score))
    })();
    let wall = config.timing.then(|| clock.elapsed().as_secs_f64());
    match attempt {
        Ok((out, labels, score)) => SeedRun {
            report: SeedReport {
                seed,
                ok: true,
                error: None,
                nmi: score,
                objective: Some(out.objective),
                stationarity: Some(out.stationarity),
                iterations: Some(out.iterations),
                weights: out.weights.clone(),
                labels: Some(labels),
                wall_seconds: wall,
            },
            output: Some(out),
        },
        Err(e) => SeedRun {
            report: SeedReport {
                seed,
                ok: false,
                error: Some(e.to_string()),
                nmi: None,
                objective: None,
                stationarity: None,
                iterations: None,
                weights: None,
                labels: None,
                wall_seconds: wall,
            },
            output: None,
        },
    }
}

/// Runs every seed. Per-seed failures are recorded in the report, not
/// returned; only an invalid configuration or an unwritable output
/// directory is an error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let runs: Vec<SeedRun> = config.seeds.par_iter().map(|&s| run_seed(config, s)).collect();
    let scores: Vec<f64> = runs.iter().filter_map(|r| r.report.nmi).collect();
    let stats = mean_sd(&scores);
    let report = Report {
        method: config.method,
        c: config.c,
        lambda: config.lambda(),
        failures: runs.iter().filter(|r| !r.report.ok).count(),
        nmi_mean: stats.map(|s| s.0),
        nmi_sd: stats.map(|s| s.1),
        seeds: runs.iter().map(|r| r.report.clone()).collect(),
    };
    if let Some(dir) = &config.output_dir {
        write_artifacts(dir, config, &report, &runs)?;
    }
    Ok(report)
}

fn write_artifacts(dir: &Path, config: &ExperimentConfig, report: &Report, runs: &[SeedRun]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<PathBuf> = Vec::new();
    let mut put = |rel: PathBuf, bytes: &[u8]| -> Result<()> {
        let full = dir.join(&rel);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&full, bytes)?;
        files.push(rel);
        Ok(())
    };
    put("config.json".into(), serde_json::to_string_pretty(config)?.as_bytes())?;
    put("report.json".into(), serde_json::to_string_pretty(report)?.as_bytes())?;
    put("nmi.csv".into(), nmi_table(report).as_bytes())?;
    for run in runs {
        let Some(out) = &run.output else { continue };
        let seed_dir = PathBuf::from(format!("seed-{}", run.report.seed));
        let mut buf = Vec::new();
        write_matrix(&mut buf, out.u.matrix())?;
        put(seed_dir.join("embedding.csv"), &buf)?;
        if let Some(labels) = &run.report.labels {
            let text: String = std::iter::once("label".to_string()).chain(labels.iter().map(|l| l.to_string())).collect::<Vec<_>>().join("\n") + "\n";
            put(seed_dir.join("labels.csv"), text.as_bytes())?;
        }
        if !out.trace_csv.is_empty() {
            put(seed_dir.join("trace.csv"), out.trace_csv.as_bytes())?;
        }
        if config.heatmaps {
            let scaled = heatmap_matrix(&out.heat);
            put(seed_dir.join("heatmap.csv"), &heatmap_bytes(&scaled, HeatmapFormat::Csv)?)?;
            put(seed_dir.join("heatmap.pgm"), &heatmap_bytes(&scaled, HeatmapFormat::Pgm)?)?;
        }
    }
    write_manifest(dir, &files)
}

fn nmi_table(report: &Report) -> String {
    let mut s = String::from("seed,ok,nmi,objective,iterations\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.seeds {
        s += &format!(
            "{},{},{},{},{}\n",
            r.seed,
            r.ok,
            opt(r.nmi),
            opt(r.objective),
            r.iterations.map(|i| i.to_string()).unwrap_or_default()
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `manifest.json` listing `files` (relative to `dir`) with hashes.
pub fn write_manifest(dir: &Path, files: &[PathBuf]) -> Result<()> {
    let mut entries = Vec::with_capacity(files.len());
    for rel in files {
        let bytes = fs::read(dir.join(rel))?;
        entries.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&entries)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapFormat {
    Csv,
    Pgm,
}

impl HeatmapFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "pgm" => Ok(Self::Pgm),
            _ => Err(SscError::Config(format!("unknown heatmap format {s:?}"))),
        }
    }
}

/// `|M|` scaled to `[0, 1]` by its largest entry. A zero matrix stays zero.
pub fn heatmap_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let abs = m.abs();
    let max = abs.max();
    if max > 0.0 {
        abs / max
    } else {
        abs
    }
}

fn heatmap_bytes(scaled: &DMatrix<f64>, format: HeatmapFormat) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match format {
        HeatmapFormat::Csv => write_matrix(&mut out, scaled)?,
        HeatmapFormat::Pgm => {
            write!(out, "P5\n{} {}\n255\n", scaled.ncols(), scaled.nrows())?;
            for i in 0..scaled.nrows() {
                for j in 0..scaled.ncols() {
                    out.push((scaled[(i, j)] * 255.0).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    Ok(out)
}

/// Heatmap of `|UUᵀ|` for an embedding `U`.
pub fn emit_embedding_heatmap(u: &DMatrix<f64>, path: impl AsRef<Path>, format: HeatmapFormat) -> Result<()> {
    emit_heatmap(&(u * u.transpose()), path, format)
}

/// Writes `|M|` scaled by its max-abs entry; rows of the image are rows of `M`.
pub fn emit_heatmap(m: &DMatrix<f64>, path: impl AsRef<Path>, format: HeatmapFormat) -> Result<()> {
    if m.is_empty() || m.iter().any(|v| !v.is_finite()) {
        return Err(SscError::InvalidParameter("heatmap needs a non-empty finite matrix".into()));
    }
    fs::write(path, heatmap_bytes(&heatmap_matrix(m), format)?)?;
    Ok(())
}
