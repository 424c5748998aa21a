//! Command-line verbs: thin drivers over the core modules.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use lasso_core::corpus::{generate_corpus, load_cloud, load_record, Corpus, CorpusSpec, SelectionRecord, Split};
use lasso_core::eval::{confusion, evaluate, BucketScheme, Method};
use lasso_core::geometry::cylinder_selection;
use lasso_core::network::{Checkpoint, NetworkConfig};
use lasso_core::predict::predict_selection;
use lasso_core::training::{train_corpus, TrainConfig};

use crate::api::{router, AppState, LoadedModel, SelectMethod};

#[derive(Debug, Parser)]
#[command(name = "lasso", version, about = "Lasso selection for 3D point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of scenes and annotations.
    Generate(GenerateArgs),
    /// Drop records that fail the cleaning rule and rewrite the manifest.
    Clean(CorpusArgs),
    /// Train a network on a corpus.
    Train(TrainArgs),
    /// Evaluate a selection method on a corpus split.
    Eval(EvalArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Run one record from files and print its metrics.
    Select(SelectArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long, alias = "records", env = "LASSO_CORPUS")]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML corpus spec; omitted fields keep their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "LASSO_CORPUS")]
    pub corpus: PathBuf,
    /// Directory for metrics.jsonl, final.json and best.json.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with optional `[network]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Lassonet,
    Cylinder,
}

impl From<MethodArg> for SelectMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lassonet => SelectMethod::Lassonet,
            MethodArg::Cylinder => SelectMethod::Cylinder,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BucketArg {
    /// One bucket per part count; five equal target-fraction ranges.
    Auto,
    /// Fixed 1% target-fraction steps.
    Percent,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, env = "LASSO_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Lassonet)]
    pub method: MethodArg,
    #[arg(long, env = "LASSO_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = BucketArg::Auto)]
    pub buckets: BucketArg,
    /// Directory for records.tsv, summary.json and plot.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "LASSO_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, env = "LASSO_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "LASSO_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "LASSO_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "LASSO_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Cloud text file.
    #[arg(long)]
    pub cloud: PathBuf,
    /// Selection record JSON file.
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Lassonet)]
    pub method: MethodArg,
    #[arg(long, env = "LASSO_MODEL")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    network: Option<NetworkConfig>,
    #[serde(default)]
    train: Option<TrainConfig>,
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let ckpt = Checkpoint::load(path)?;
    Ok(LoadedModel::from_checkpoint(&ckpt)?)
}

fn require_model(path: Option<&PathBuf>, method: MethodArg) -> Result<Option<LoadedModel>> {
    match (method, path) {
        (MethodArg::Lassonet, None) => bail!("method lassonet needs --model"),
        (_, Some(p)) => Ok(Some(load_model(p)?)),
        (_, None) => Ok(None),
    }
}

fn print(v: serde_json::Value) {
    println!("{v}");
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Clean(a) => {
            let mut corpus = Corpus::load(&a.corpus)?;
            let (kept, dropped) = corpus.clean()?;
            print(json!({ "kept": kept, "dropped": dropped }));
            Ok(())
        }
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
        Command::Select(a) => select(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            CorpusSpec::from_toml(&text)?
        }
        None => CorpusSpec::default(),
    };
    let m = generate_corpus(&spec, a.count, a.seed, &a.out)?;
    let stats = m.stats.unwrap_or_default();
    print(json!({
        "corpus_id": m.corpus_id,
        "clouds": m.clouds.len(),
        "records": m.records.len(),
        "pass_rate": stats.pass_rate(),
    }));
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<TrainFile>(&text).map_err(|e| lasso_core::Error::InvalidConfig(e.to_string()))?
        }
        None => TrainFile::default(),
    };
    let network = file.network.unwrap_or_default();
    network.validate()?;
    let mut cfg = file.train.unwrap_or_default();
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let corpus = Corpus::load(&a.corpus)?;
    let start = Instant::now();
    let outcome = train_corpus(&corpus, network, &cfg, &a.out)?;
    let last = outcome.metrics.last().expect("at least one epoch");
    print(json!({
        "epochs": outcome.metrics.len(),
        "train_dJ": last.train_d_j,
        "test_dJ": last.test_d_j,
        "best_epoch": outcome.best_epoch,
        "seconds": start.elapsed().as_secs_f64(),
        "out": a.out,
    }));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let model = require_model(a.model.as_ref(), a.method)?;
    let records: Vec<&SelectionRecord> = match a.split {
        SplitArg::Train => corpus.records_in(Split::Train),
        SplitArg::Test => corpus.records_in(Split::Test),
        SplitArg::All => corpus.records.iter().collect(),
    };
    let method = match (a.method, &model) {
        (MethodArg::Lassonet, Some(m)) => Method::Network(&m.network),
        _ => Method::Cylinder,
    };
    let scheme = match a.buckets {
        BucketArg::Auto => BucketScheme::default(),
        BucketArg::Percent => BucketScheme::percent_fractions(),
    };
    let report = evaluate(method, &records, &corpus.clouds, &scheme);
    if let Some(out) = &a.out {
        report.write(out)?;
    }
    let all = report.aggregates.iter().find(|g| g.grouping == "all");
    print(json!({
        "method": method.name(),
        "records": records.len(),
        "failures": report.failures,
        "mean_dJ": all.map(|g| g.mean_d_j),
        "mean_F1": all.map(|g| g.mean_f1),
        "mean_latency_ms": all.map(|g| g.mean_latency_ms),
    }));
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let corpus = Corpus::load(&a.corpus)?;
    let model = match &a.model {
        Some(p) => Some(load_model(p)?),
        None => None,
    };
    let state = AppState::new(corpus.clouds, model);
    let threads = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(threads)
        .max_blocking_threads(threads)
        .enable_all()
        .build()?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .context("invalid --host/--port")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let local = listener.local_addr()?;
        print(json!({ "listening": local.to_string(), "threads": threads }));
        tracing::info!(%local, "serving");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn select(a: SelectArgs) -> Result<()> {
    let cloud = load_cloud(&a.cloud)?;
    let record = load_record(&a.record)?;
    if record.cloud_id != cloud.id {
        return Err(lasso_core::Error::UnknownCloud(record.cloud_id).into());
    }
    let model = require_model(a.model.as_ref(), a.method)?;
    let target = record.target_indices(&cloud)?;
    let start = Instant::now();
    let selected = match &model {
        Some(m) if a.method == MethodArg::Lassonet => {
            predict_selection(&cloud.points, &record.camera, &record.lasso, &m.network)?.selected
        }
        _ => cylinder_selection(&cloud.points, &record.camera, &record.lasso),
    };
    let timing_ms = start.elapsed().as_secs_f64() * 1e3;
    let c = confusion(&selected, &target);
    print(json!({
        "record": record.id,
        "method": SelectMethod::from(a.method),
        "selected": selected.len(),
        "target": target.len(),
        "dJ": c.jaccard_distance(),
        "F1": c.f1(),
        "timing_ms": timing_ms,
    }));
    Ok(())
}

/// Machine-readable error line for a failed verb.
pub fn error_line(e: &anyhow::Error) -> String {
    let (kind, message) = match e.downcast_ref::<lasso_core::Error>() {
        Some(core) => (core.kind(), core.to_string()),
        None => ("Error", format!("{e:#}")),
    };
    json!({ "error": kind, "message": message }).to_string()
}
