use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssc_core::evalsynth::{nmi, synth1, synth2};
use ssc_core::experiment::{emit_embedding_heatmap, emit_heatmap, run_experiment, write_manifest, DataSource, ExperimentConfig, HeatmapFormat, Method, Report};
use ssc_core::graph::{kernel_family, load_matrix, LoadOptions, Orientation};
use ssc_core::io::{read_labels, read_matrix_csv, write_matrix_csv, write_vector_csv};
use ssc_core::{Result, SscError};

#[derive(Parser)]
#[command(name = "ssc", version, about = "Sparse spectral clustering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set (features as columns) and its labels.
    Synth(SynthArgs),
    /// Build the Gaussian kernel family and write its Laplacians.
    Kernels(KernelArgs),
    /// Run one method over a list of seeds.
    Cluster(ClusterArgs),
    /// NMI between predicted and true labels.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Render |UUᵀ| (or |P|) from a CSV matrix.
    Heatmap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "pgm")]
        format: String,
        /// Treat the input as an embedding U and render |UUᵀ|; otherwise render |input|.
        #[arg(long)]
        embedding: bool,
    },
    /// NMI table of several methods on a synthetic generator.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Synth1,
    Synth2,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: Generator,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 250)]
    p: usize,
    #[arg(long, default_value_t = 5)]
    c: usize,
    /// Latent dimension (synth2).
    #[arg(long, default_value_t = 20)]
    d: usize,
    /// Noise level; defaults to 0.3 for synth1 and 0.2 for synth2.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct LoadArgs {
    /// Each CSV row is a sample (default: each column).
    #[arg(long)]
    samples_in_rows: bool,
    #[arg(long)]
    header: bool,
    /// The last column holds integer labels (needs --samples-in-rows).
    #[arg(long)]
    label_column: bool,
    /// log2(x + 1) before anything else.
    #[arg(long)]
    log: bool,
    /// Keep only the most variable rows (genes).
    #[arg(long)]
    top_genes: Option<usize>,
}

impl LoadArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            orientation: if self.samples_in_rows { Orientation::SamplesInRows } else { Orientation::SamplesInColumns },
            has_header: self.header,
            label_column: self.label_column,
            log_transform: self.log,
            top_variance_genes: self.top_genes,
        }
    }
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    load: LoadArgs,
    #[arg(long, value_delimiter = ',', default_values_t = ssc_core::graph::DEFAULT_DELTAS)]
    deltas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = ssc_core::graph::DEFAULT_NEIGHBORS)]
    neighbors: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    /// JSON experiment configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    load: LoadArgs,
    #[arg(long, value_enum)]
    generator: Option<Generator>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    neighbors: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    stop_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    heatmaps: bool,
    /// Record wall-clock times (reports are then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "synth1")]
    generator: Generator,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 250)]
    p: usize,
    #[arg(long, default_value_t = 5)]
    c: usize,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_values_t = ["sc".to_string(), "mkssc-ama-cadmm".into(), "mkssc-ama-nadmm".into(), "mkssc-amanpl".into()])]
    methods: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when some seed failed.
fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Kernels(a) => kernels(a).map(|_| true),
        Command::Cluster(a) => {
            let cfg = cluster_config(a)?;
            let report = run_experiment(&cfg)?;
            print_report(&report);
            Ok(!report.any_failed())
        }
        Command::Eval { pred, truth } => {
            let (a, b) = (read_labels(pred)?, read_labels(truth)?);
            println!("nmi {:.6}", nmi(&a, &b)?);
            Ok(true)
        }
        Command::Heatmap { input, out, format, embedding } => {
            let m = read_matrix_csv(input)?;
            let f = HeatmapFormat::parse(&format)?;
            if embedding {
                emit_embedding_heatmap(&m, out, f)?;
            } else {
                emit_heatmap(&m, out, f)?;
            }
            Ok(true)
        }
        Command::Bench(a) => bench(a),
    }
}

fn generator_source(g: Generator, n: usize, p: usize, c: usize, d: Option<usize>, noise: Option<f64>) -> DataSource {
    match g {
        Generator::Synth1 => DataSource::Synth1 { n, p, c, noise: noise.unwrap_or(0.3) },
        Generator::Synth2 => DataSource::Synth2 {
            n,
            p,
            c,
            d: d.unwrap_or(20),
            noise: noise.unwrap_or(0.2),
        },
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let x = match a.kind {
        Generator::Synth1 => synth1(a.n, a.p, a.c, a.noise.unwrap_or(0.3), a.seed)?,
        Generator::Synth2 => synth2(a.n, a.p, a.c, a.d, a.noise.unwrap_or(0.2), a.seed)?,
    };
    write_matrix_csv(&a.out, x.features())?;
    if let (Some(path), Some(labels)) = (a.labels, x.labels()) {
        write_vector_csv(path, "label", labels)?;
    }
    Ok(())
}

fn kernels(a: KernelArgs) -> Result<()> {
    let x = load_matrix(&a.data, &a.load.options())?;
    let family = kernel_family(&x, &a.deltas, &a.neighbors)?;
    std::fs::create_dir_all(&a.out)?;
    let mut files = Vec::new();
    let mut grid = Vec::new();
    for (i, (lap, &(delta, m))) in family.laplacians().iter().zip(family.grid()).enumerate() {
        let name = PathBuf::from(format!("laplacian-{i:02}.csv"));
        write_matrix_csv(a.out.join(&name), lap.matrix())?;
        grid.push(serde_json::json!({"file": name, "delta": delta, "neighbors": m}));
        files.push(name);
    }
    std::fs::write(a.out.join("grid.json"), serde_json::to_string_pretty(&grid)?)?;
    files.push("grid.json".into());
    write_manifest(&a.out, &files)?;
    println!("{} kernels written to {}", family.len(), a.out.display());
    Ok(())
}

fn cluster_config(a: ClusterArgs) -> Result<ExperimentConfig> {
    let base = match &a.config {
        Some(path) => Some(serde_json::from_str::<ExperimentConfig>(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let data = if let Some(path) = a.data.clone() {
        DataSource::File {
            path,
            labels: a.truth.clone(),
            load: a.load.options(),
        }
    } else if let Some(g) = a.generator {
        let c = a.c.or(base.as_ref().map(|b| b.c)).unwrap_or(5);
        generator_source(g, a.n.unwrap_or(100), a.p.unwrap_or(250), c, a.d, a.noise)
    } else {
        base.as_ref().map(|b| b.data.clone()).ok_or_else(|| SscError::Config("no data: pass --config, --data or --generator".into()))?
    };
    let method = match (&a.method, &base) {
        (Some(m), _) => Method::parse(m)?,
        (None, Some(b)) => b.method,
        (None, None) => return Err(SscError::Config("no method given".into())),
    };
    let c = a.c.or(base.as_ref().map(|b| b.c)).ok_or_else(|| SscError::Config("no cluster count given".into()))?;
    let mut cfg = base.unwrap_or_else(|| ExperimentConfig::new(data.clone(), method, c));
    cfg.data = data;
    cfg.method = method;
    cfg.c = c;
    let p = &mut cfg.params;
    for (slot, v) in [
        (&mut p.lambda, a.lambda),
        (&mut p.rho, a.rho),
        (&mut p.sigma, a.sigma),
        (&mut p.mu, a.mu),
        (&mut p.t, a.t),
        (&mut p.gamma, a.gamma),
    ] {
        if v.is_some() {
            *slot = v;
        }
    }
    if let Some(d) = a.deltas {
        cfg.kernels.deltas = d;
    }
    if let Some(m) = a.neighbors {
        cfg.kernels.neighbors = m;
    }
    if let Some(s) = a.seeds {
        cfg.seeds = s;
    }
    if let Some(t) = a.stop_tol {
        cfg.stop_tol = t;
    }
    if a.max_iters.is_some() {
        cfg.max_iters = a.max_iters;
    }
    if a.out.is_some() {
        cfg.output_dir = a.out;
    }
    cfg.heatmaps |= a.heatmaps;
    cfg.timing |= a.timing;
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(r: &Report) {
    for s in &r.seeds {
        match (&s.error, s.nmi) {
            (Some(e), _) => println!("seed {}: FAILED {e}", s.seed),
            (None, Some(v)) => println!("seed {}: nmi {v:.4}", s.seed),
            (None, None) => println!("seed {}: ok (no ground truth)", s.seed),
        }
    }
    if let (Some(m), Some(sd)) = (r.nmi_mean, r.nmi_sd) {
        println!("{}: nmi {m:.4} ({sd:.1e}) over {} seeds", r.method, r.seeds.len() - r.failures);
    }
    if r.failures > 0 {
        println!("{} of {} seeds failed", r.failures, r.seeds.len());
    }
}

fn bench(a: BenchArgs) -> Result<bool> {
    let n = a.n.unwrap_or(match a.generator {
        Generator::Synth1 => 100,
        Generator::Synth2 => 200,
    });
    let data = generator_source(a.generator, n, a.p, a.c, None, None);
    let mut ok = true;
    println!("method,nmi_mean,nmi_sd,failures,seconds");
    for name in &a.methods {
        let mut cfg = ExperimentConfig::new(data.clone(), Method::parse(name)?, a.c);
        cfg.seeds = (0..a.seeds).collect();
        cfg.output_dir = a.out.as_deref().map(|d: &Path| d.join(name));
        let clock = Instant::now();
        let r = run_experiment(&cfg)?;
        let secs = clock.elapsed().as_secs_f64();
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        println!("{name},{},{},{},{secs:.1}", fmt(r.nmi_mean), fmt(r.nmi_sd), r.failures);
        ok &= !r.any_failed();
    }
    Ok(ok)
}
