//! `modex` command-line interface.
//!
//! Exit codes: 0 on success, 2 for usage errors, 1 for everything else. On
//! failure a single JSON object `{"kind": ..., "message": ...}` goes to
//! stderr.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use modex::attribution::{attribute_node, TokenAttribution};
use modex::config::PipelineConfig;
use modex::gat::{read_checkpoint, write_checkpoint, Mode};
use modex::graph::derive_tweet_labels;
use modex::graphlime::explain_node_expanding;
use modex::pipeline::{prepare, stratified_splits, Bundle, PreparedData};
use modex::report::{render_report, Engagement, NodeReport};
use modex::synth::{synth_generate, SignalPlacement, SynthSpec};
use modex::train::{run_ablation, train, RunReport};
use modex::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CHECKPOINT_FILE: &str = "model.ckpt";
const HISTORY_FILE: &str = "history.json";
const RUN_REPORT_FILE: &str = "run_report.json";
const RUN_TABLE_FILE: &str = "run_report.txt";
const EXPLANATIONS_DIR: &str = "explanations";
const REPORT_DIR: &str = "report";
/// How far `explain` widens a neighborhood that is too small.
const EXTRA_HOPS: usize = 2;

#[derive(Debug, Parser)]
#[command(name = "modex", version, about = "Explainable multimodal misinformation classification")]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set epochs=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate raw graph files and write a normalized bundle.
    Ingest(IngestArgs),
    /// Generate a planted-signal benchmark bundle.
    Synth(SynthArgs),
    /// Train one model and write its checkpoint and loss history.
    Train(TrainArgs),
    /// Run the feature ablation over modes and seeds.
    Evaluate(EvaluateArgs),
    /// Explain predictions for the given nodes.
    Explain(ExplainArgs),
    /// Render HTML pages from explanation and evaluation outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Split assignment; when absent a stratified 50/20/30 split is drawn.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Seed for the generated split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of tweets.
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value = "both")]
    signal: SignalPlacement,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random retweets per tweet.
    #[arg(long)]
    density: Option<f64>,
    /// Probability that a tweet is misinformation.
    #[arg(long)]
    balance: Option<f64>,
    /// Token embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "graph,text,multi")]
    modes: Vec<Mode>,
    /// Defaults to the configured seeds (0 to 4).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Node ids to explain; repeatable or comma separated.
    #[arg(long = "node", value_delimiter = ',', required = true)]
    nodes: Vec<String>,
    #[arg(long)]
    hops: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding `explanations/` and optionally `run_report.json`.
    #[arg(long)]
    from: PathBuf,
    /// Defaults to `<from>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(Error),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

impl Failure {
    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Domain(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => m.clone(),
            Failure::Domain(e) => e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = serde_json::json!({ "kind": f.kind(), "message": f.message() });
            eprintln!("{body}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => PipelineConfig::default(),
    };
    for pair in &cli.overrides {
        config.set_pair(pair).map_err(|e| Failure::Usage(format!("--set {pair}: {e}")))?;
    }
    match cli.command {
        Command::Ingest(args) => ingest(args, &config),
        Command::Synth(args) => synth(args),
        Command::Train(args) => train_cmd(args, config),
        Command::Evaluate(args) => evaluate(args, &config),
        Command::Explain(args) => explain(args, &config),
        Command::Report(args) => report(args),
    }
}

fn required(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| configured.clone())
        .ok_or_else(|| Failure::Usage(format!("--{name} is required (or set {name} in the config)")))
}

fn output_dir(flag: Option<PathBuf>, config: &PipelineConfig) -> PathBuf {
    flag.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn announce(path: &Path) {
    println!("{}", path.display());
}

fn ingest(args: IngestArgs, config: &PipelineConfig) -> Result<(), Failure> {
    let nodes = required(args.nodes, &config.nodes, "nodes")?;
    let edges = required(args.edges, &config.edges, "edges")?;
    let splits = args.splits.or_else(|| config.splits.clone());
    let embeddings = args.embeddings.or_else(|| config.embeddings.clone());
    let out = required(args.out, &config.output_dir, "out")?;

    let mut bundle = Bundle::load_files(&nodes, &edges, splits.as_deref(), embeddings.as_deref())?;
    if splits.is_none() {
        let labels = derive_tweet_labels(&bundle.graph, config.prepare.conflict_policy);
        let labeled: Vec<(&str, _)> = labels.iter().map(|(id, l)| (id.as_str(), *l)).collect();
        bundle.splits = stratified_splits(&labeled, &mut ChaCha8Rng::seed_from_u64(args.split_seed));
    }
    // building features surfaces dimension and reference problems before anything is written
    prepare(&bundle, &config.prepare)?;
    bundle.write(&out)?;
    announce(&out);
    Ok(())
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        tweets: args.nodes,
        placement: args.signal,
        seed: args.seed,
        density: args.density.unwrap_or(defaults.density),
        balance: args.balance.unwrap_or(defaults.balance),
        dim: args.dim.unwrap_or(defaults.dim),
        ..defaults
    };
    let generated = synth_generate(&spec)?;
    generated.bundle.write(&args.out)?;
    write_json(&args.out.join("planted.json"), &generated.planted)?;
    announce(&args.out);
    Ok(())
}

fn load_prepared(bundle: &Path, config: &PipelineConfig) -> Result<PreparedData, Failure> {
    Ok(prepare(&Bundle::load(bundle)?, &config.prepare)?)
}

fn train_cmd(args: TrainArgs, mut config: PipelineConfig) -> Result<(), Failure> {
    if let Some(mode) = args.mode {
        config.train.mode = mode;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    let out = output_dir(args.out, &config);
    let data = load_prepared(&args.bundle, &config)?;
    let (model, history) = train(&data.graph, &data.features, &config.train)?;
    fs::create_dir_all(&out)?;
    let checkpoint = config.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let mut w = BufWriter::new(File::create(&checkpoint)?);
    write_checkpoint(&model, &mut w)?;
    w.flush()?;
    announce(&checkpoint);
    let history_path = out.join(HISTORY_FILE);
    write_json(&history_path, &history)?;
    announce(&history_path);
    Ok(())
}

fn evaluate(args: EvaluateArgs, config: &PipelineConfig) -> Result<(), Failure> {
    let seeds = args.seeds.unwrap_or_else(|| config.seeds.clone());
    if args.modes.is_empty() || seeds.is_empty() {
        return Err(Failure::Usage("--modes and --seeds must not be empty".into()));
    }
    let out = output_dir(args.out, config);
    let data = load_prepared(&args.bundle, config)?;
    let run = run_ablation(&data.graph, &data.features, &args.modes, &seeds, &config.train)?;
    fs::create_dir_all(&out)?;
    let json = out.join(RUN_REPORT_FILE);
    write_json(&json, &run)?;
    fs::write(out.join(RUN_TABLE_FILE), run.to_table())?;
    print!("{}", run.to_table());
    announce(&json);
    Ok(())
}

fn explain(args: ExplainArgs, config: &PipelineConfig) -> Result<(), Failure> {
    let checkpoint = required(args.checkpoint, &config.checkpoint, "checkpoint")?;
    let mut explainer = config.explainer;
    if let Some(hops) = args.hops {
        explainer.hops = hops;
    }
    let out = output_dir(args.out, config).join(EXPLANATIONS_DIR);

    let mut data = load_prepared(&args.bundle, config)?;
    // unknown ids fail before any training-sized work happens
    let indices = args
        .nodes
        .iter()
        .map(|id| data.node_index(id).ok_or_else(|| Error::UnknownNode(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let model = read_checkpoint(BufReader::new(File::open(&checkpoint)?))?;
    model.populate_multimodal(&mut data.features)?;

    fs::create_dir_all(&out)?;
    for (id, &node) in args.nodes.iter().zip(&indices) {
        let explanation = explain_node_expanding(
            &model,
            &data.graph,
            &data.features,
            node,
            &explainer,
            explainer.hops + EXTRA_HOPS,
        )?;
        let attribution = if model.mode.uses_text() && data.features.text_tokens[node].is_some() {
            attribute_node(&model, &data.graph, &data.features, node, config.ig_steps)?
        } else {
            TokenAttribution::empty(id.clone(), config.ig_steps)
        };
        let tweet = data
            .hetero
            .index_of(id)
            .and_then(|i| data.hetero.node(i).tweet())
            .ok_or_else(|| Error::UnknownNode(id.clone()))?;
        let report = NodeReport {
            node_id: id.clone(),
            text: tweet.text.clone(),
            metadata: Engagement {
                replies: tweet.reply_count,
                quotes: tweet.quote_count,
                retweets: tweet.retweet_count,
            },
            explanation,
            attribution,
        };
        let path = out.join(format!("{id}.json"));
        write_json(&path, &report)?;
        announce(&path);
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let dir = args.from.join(EXPLANATIONS_DIR);
    let mut reports: BTreeMap<String, NodeReport> = BTreeMap::new();
    if dir.is_dir() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let r: NodeReport = serde_json::from_reader(BufReader::new(File::open(&path)?))?;
                reports.insert(r.node_id.clone(), r);
            }
        }
    }
    let run_path = args.from.join(RUN_REPORT_FILE);
    let run: Option<RunReport> = if run_path.exists() {
        Some(serde_json::from_reader(BufReader::new(File::open(&run_path)?))?)
    } else {
        None
    };
    if reports.is_empty() && run.is_none() {
        return Err(Failure::Usage(format!(
            "{} holds neither {EXPLANATIONS_DIR}/ nor {RUN_REPORT_FILE}",
            args.from.display()
        )));
    }
    let out = args.out.unwrap_or_else(|| args.from.join(REPORT_DIR));
    let reports: Vec<NodeReport> = reports.into_values().collect();
    for path in render_report(&reports, run.as_ref(), &out)? {
        announce(&path);
    }
    Ok(())
}
