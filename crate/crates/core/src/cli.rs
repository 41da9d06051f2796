//! Command-line front end. Every command writes its results plus a
//! `meta.json` (configuration and SHA-256 of each input file) under `--out`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::dataset::{
    biased_classification, format_float, format_matrix, load_dataset, load_unlabeled, write_dataset, BiasedTaskParams,
    DatasetBundle, EDGES_FILE, FEATURES_FILE, LABELS_FILE, SENS_FILE,
};
use crate::error::{Error, Result};
use crate::graph::normalized_adjacency;
use crate::propagation::{propagate, FmpConfig, Scheme};
use crate::selfcheck::{run_self_check, SelfCheckOptions};
use crate::sweep::{bias_rows_to_csv, hyper_rows_to_csv, run_bias_sweep, run_hyper_sweep, Covariance, HyperSweepSpec};
use crate::sweep::{SweepParam, SweepSpec};
use crate::synth::{sample_gmm_features, sample_sbm, SbmParams};
use crate::training::{evaluate, split_nodes, train, MlpParams, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "fmp", version, about = "Fair message passing on graphs")]
pub struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps and sparse kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic graph with sensitive attribute, features and labels.
    Generate(GenerateArgs),
    /// Run a propagation scheme and record per-iteration energies.
    Propagate(PropagateArgs),
    /// DP change of one GCN aggregation across random-graph settings.
    BiasSweep(BiasSweepArgs),
    /// Train FMP models over a (λ_s, λ_f) grid.
    HyperSweep(HyperSweepArgs),
    /// Train one model and report test metrics.
    Train(TrainArgs),
    /// Score a saved model on a dataset split.
    Eval(EvalArgs),
    /// Gradient, prox, collapse and scaling checks.
    SelfCheck(SelfCheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Two-component Gaussian features; the label is the component.
    Gmm,
    /// Labels correlated with the sensitive group.
    Classify,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovArg {
    Identity,
    Diagonal12,
}

impl From<CovArg> for Covariance {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Identity => Covariance::Identity,
            CovArg::Diagonal12 => Covariance::Diagonal12,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GraphArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub rho_d: f64,
    #[arg(long, default_value_t = 0.95)]
    pub eps_sens: f64,
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
}

impl GraphArgs {
    fn params(&self) -> Result<SbmParams> {
        SbmParams::new(self.n, self.rho_d, self.eps_sens, self.c)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = Task::Gmm)]
    pub task: Task,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value_t = CovArg::Identity)]
    pub covariance: CovArg,
    /// Classify task: `P(y=1|s=±1) = 0.5 ± label_bias`.
    #[arg(long, default_value_t = 0.2)]
    pub label_bias: f64,
    /// Classify task: feature dimension.
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PropagateArgs {
    /// Directory with edges.txt, features.csv and sens.txt.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_s: f64,
    #[arg(long, default_value_t = 10.0)]
    pub lambda_f: f64,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value = "fmp")]
    pub scheme: Scheme,
}

#[derive(Debug, Args, Serialize)]
pub struct BiasSweepArgs {
    #[arg(long, default_value = "eps_sens")]
    pub param: SweepParam,
    /// Comma-separated grid; defaults depend on the parameter.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value_t = CovArg::Identity)]
    pub covariance: CovArg,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Dataset directory; a synthetic biased task is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML or JSON file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_f: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dp_reg_weight: Option<f64>,
    /// Do not backpropagate through the FMP dual variable.
    #[arg(long)]
    pub detach_dual: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct HyperSweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    pub lambda_s_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_f_grid: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `params.json` written by `train`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, value_enum, default_value_t = MaskArg::Test)]
    pub mask: MaskArg,
}

#[derive(Debug, Args, Serialize)]
pub struct SelfCheckArgs {
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// Parses `std::env::args`, runs the command, and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command. Returns the exit code on success paths (self-check
/// reports failures as 1 without an error value).
pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidParameter("--threads must be positive".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Propagate(a) => propagate_cmd(cli, a),
        Command::BiasSweep(a) => bias_sweep(cli, a),
        Command::HyperSweep(a) => hyper_sweep(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::SelfCheck(a) => self_check(cli, a),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes `meta.json` with the command name, its settings, and the content
/// hash of every input file.
fn write_meta(cli: &Cli, command: &str, config: serde_json::Value, inputs: &[PathBuf], extra: serde_json::Value) -> Result<()> {
    let mut hashes = serde_json::Map::new();
    for p in inputs {
        hashes.insert(p.display().to_string(), json!(sha256_file(p)?));
    }
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cli.seed,
        "config": config,
        "inputs_sha256": hashes,
        "results": extra,
    });
    fs::write(cli.out.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn dataset_inputs(dir: &Path, with_labels: bool) -> Vec<PathBuf> {
    let mut files = vec![EDGES_FILE, FEATURES_FILE, SENS_FILE];
    if with_labels {
        files.push(LABELS_FILE);
    }
    files.into_iter().map(|f| dir.join(f)).collect()
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<i32> {
    let p = a.graph.params()?;
    let bundle = match a.task {
        Task::Gmm => {
            let (graph, sens) = sample_sbm(&p, cli.seed)?;
            let gmm = Covariance::from(a.covariance).gmm(p.c);
            let features = sample_gmm_features(&gmm, &sens, crate::rng::derive_seed(cli.seed, 1))?;
            let labels = sens.groups().iter().map(|&s| usize::from(s < 0)).collect();
            DatasetBundle::new(graph, features, labels, sens, serde_json::Value::Null)?
        }
        Task::Classify => {
            let params = BiasedTaskParams {
                n: p.n,
                rho_d: p.rho_d,
                eps_sens: p.eps_sens,
                c: p.c,
                label_bias: a.label_bias,
                dim: a.dim,
                ..Default::default()
            };
            biased_classification(&params, cli.seed)?
        }
    };
    write_dataset(&bundle, &cli.out)?;
    let summary = bundle.summary();
    write_meta(
        cli,
        "generate",
        serde_json::to_value(a)?,
        &[],
        json!({ "density": bundle.graph.density(), "summary": summary }),
    )?;
    println!(
        "wrote {} nodes, {} edges to {} (density {:.3e}, sensitive homophily {})",
        summary.nodes,
        summary.edges,
        cli.out.display(),
        bundle.graph.density(),
        summary.sensitive_homophily.map_or("n/a".into(), |h| format!("{h:.4}"))
    );
    Ok(0)
}

fn propagate_cmd(cli: &Cli, a: &PropagateArgs) -> Result<i32> {
    let (graph, x, sens) = load_unlabeled(&a.data)?;
    let adj = normalized_adjacency(&graph);
    let cfg = FmpConfig::new(a.lambda_s, a.lambda_f, a.iters)?;
    let (f, traj) = propagate(a.scheme, x.view(), &adj, &sens, &cfg)?;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("propagation produced non-finite values".into()));
    }
    fs::write(cli.out.join("features.csv"), format_matrix(&f))?;
    let mut csv = String::from("iter,h_s,h_f,u_linf\n");
    for (k, r) in traj.records.iter().enumerate() {
        csv.push_str(&format!("{},{},{},{}\n", k + 1, format_float(r.h_s), format_float(r.h_f), format_float(r.u_linf())));
    }
    fs::write(cli.out.join("energy.csv"), csv)?;
    write_meta(cli, "propagate", serde_json::to_value(a)?, &dataset_inputs(&a.data, false), json!({ "iterations": traj.records.len() }))?;
    println!("{} propagation, {} steps -> {}", a.scheme, traj.records.len(), cli.out.display());
    Ok(0)
}

fn bias_sweep(cli: &Cli, a: &BiasSweepArgs) -> Result<i32> {
    let mut spec = SweepSpec::new(a.param);
    if !a.values.is_empty() {
        spec.values = a.values.clone();
    }
    spec.fixed = SbmParams { n: a.graph.n, rho_d: a.graph.rho_d, eps_sens: a.graph.eps_sens, c: a.graph.c };
    spec.covariance = a.covariance.into();
    spec.seeds = a.seeds;
    spec.base_seed = cli.seed;
    let rows = run_bias_sweep(&spec)?;
    fs::write(cli.out.join("bias_sweep.csv"), bias_rows_to_csv(&rows))?;
    write_meta(cli, "bias-sweep", serde_json::to_value(&spec)?, &[], json!({ "rows": rows.len() }))?;
    println!("{} rows -> {}", rows.len(), cli.out.join("bias_sweep.csv").display());
    Ok(0)
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    }
}

fn resolve_model(cli: &Cli, m: &ModelArgs) -> Result<(TrainConfig, DatasetBundle, Vec<PathBuf>)> {
    let mut cfg = match &m.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    cfg.seed = cli.seed;
    if let Some(s) = m.scheme {
        cfg.scheme = s;
    }
    if let Some(v) = m.lambda_s {
        cfg.fmp.lambda_s = v;
    }
    if let Some(v) = m.lambda_f {
        cfg.fmp.lambda_f = v;
    }
    if let Some(v) = m.iters {
        cfg.fmp.iterations = v;
    }
    if let Some(v) = m.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = m.lr {
        cfg.lr = v;
    }
    if let Some(v) = m.dp_reg_weight {
        cfg.dp_reg_weight = v;
    }
    cfg.detach_dual |= m.detach_dual;
    cfg.validate()?;
    let mut inputs: Vec<PathBuf> = m.config.iter().cloned().collect();
    let data = match &m.data {
        Some(dir) => {
            inputs.extend(dataset_inputs(dir, true));
            let d = load_dataset(dir)?;
            let s = d.summary();
            eprintln!(
                "loaded {} nodes, {} edges; label homophily {}, sensitive homophily {}",
                s.nodes,
                s.edges,
                s.label_homophily.map_or("n/a".into(), |h| format!("{h:.4}")),
                s.sensitive_homophily.map_or("n/a".into(), |h| format!("{h:.4}"))
            );
            d
        }
        None => biased_classification(&BiasedTaskParams::default(), cli.seed)?,
    };
    Ok((cfg, data, inputs))
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<i32> {
    let (cfg, data, inputs) = resolve_model(cli, &a.model)?;
    let out = train(&cfg, &data)?;
    fs::write(cli.out.join("metrics.json"), serde_json::to_string_pretty(&out.test)?)?;
    fs::write(cli.out.join("params.json"), serde_json::to_string(&out.params)?)?;
    let mut csv = String::from("epoch,train_loss,val_acc,val_dp\n");
    for r in &out.log {
        csv.push_str(&format!("{},{},{},{}\n", r.epoch, format_float(r.train_loss), format_float(r.val_acc), format_float(r.val_dp)));
    }
    fs::write(cli.out.join("log.csv"), csv)?;
    write_meta(cli, "train", serde_json::to_value(cfg)?, &inputs, json!({ "best_epoch": out.best_epoch, "val": out.val, "test": out.test }))?;
    println!(
        "{}: test acc {:.4}, dp {:.4}, eo {} (best epoch {})",
        cfg.scheme,
        out.test.accuracy,
        out.test.dp,
        out.test.eo.map_or("n/a".into(), |v| format!("{v:.4}")),
        out.best_epoch
    );
    Ok(0)
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<i32> {
    let (cfg, data, mut inputs) = resolve_model(cli, &a.model)?;
    let text = fs::read_to_string(&a.params).map_err(|_| Error::MissingFile(a.params.clone()))?;
    let params: MlpParams = serde_json::from_str(&text)?;
    inputs.push(a.params.clone());
    let split = split_nodes(data.len(), cfg.split, crate::rng::derive_seed(cfg.seed, 0));
    let mask = match a.mask {
        MaskArg::Train => split.train,
        MaskArg::Val => split.val,
        MaskArg::Test => split.test,
        MaskArg::All => vec![true; data.len()],
    };
    let adj = normalized_adjacency(&data.graph);
    let m = evaluate(&params, &data, &adj, &cfg, &mask)?;
    fs::write(cli.out.join("metrics.json"), serde_json::to_string_pretty(&m)?)?;
    write_meta(cli, "eval", serde_json::to_value(cfg)?, &inputs, json!({ "metrics": m }))?;
    println!("{}", serde_json::to_string(&m)?);
    Ok(0)
}

fn hyper_sweep(cli: &Cli, a: &HyperSweepArgs) -> Result<i32> {
    let (cfg, data, inputs) = resolve_model(cli, &a.model)?;
    let mut spec = HyperSweepSpec { seeds: a.seeds, train: cfg, ..Default::default() };
    if !a.lambda_s_grid.is_empty() {
        spec.lambda_s = a.lambda_s_grid.clone();
    }
    if !a.lambda_f_grid.is_empty() {
        spec.lambda_f = a.lambda_f_grid.clone();
    }
    let rows = run_hyper_sweep(&spec, &data)?;
    fs::write(cli.out.join("hyper_sweep.csv"), hyper_rows_to_csv(&rows))?;
    write_meta(cli, "hyper-sweep", serde_json::to_value(&spec)?, &inputs, json!({ "rows": rows.len() }))?;
    println!("{} rows -> {}", rows.len(), cli.out.join("hyper_sweep.csv").display());
    Ok(0)
}

fn self_check(cli: &Cli, a: &SelfCheckArgs) -> Result<i32> {
    let report = run_self_check(&SelfCheckOptions {
        seed: cli.seed,
        inject_gradient_fault: a.inject_fault,
        timing_sizes: None,
    })?;
    for item in &report.items {
        println!("[{}] {}: {}", if item.passed { "PASS" } else { "FAIL" }, item.name, item.detail);
    }
    println!("{:>8} {:>14} {:>14}", "n", "fast (µs)", "oracle (µs)");
    for t in &report.timings {
        println!("{:>8} {:>14.2} {:>14.1}", t.n, t.fast_us, t.oracle_us);
    }
    fs::write(cli.out.join("self_check.json"), serde_json::to_string_pretty(&report)?)?;
    write_meta(cli, "self-check", serde_json::to_value(a)?, &[], json!({ "passed": report.passed() }))?;
    Ok(if report.passed() { 0 } else { 1 })
}
